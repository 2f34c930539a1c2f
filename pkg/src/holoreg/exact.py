"""Ground-truth simulator: N discrete spins, one cavity mode and a CPB.

States live in the space of at most ``max_excitations`` (1 or 2) quanta,
shared between cavity photons, the CPB and individual spin flips. The
generator conserves the excitation number, so each excitation block is
propagated on its own. Frame: rotating at the cavity frequency.

Ideal echo pulses flip every spin. Rather than leaving the sector, the
state is then stored in the toggling frame of the inverted ensemble: the
listed spins are the ones pointing *down* and their detunings change sign.
The spin-cavity exchange is dropped while inverted (the ensemble is far
from resonance); windows on the spins are rejected in that frame.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, expm
from scipy.optimize import curve_fit
from scipy.sparse.linalg import expm_multiply

from .modes import RegisterLayout, mode_vector
from .physical import (
    DEFAULT_CONSTANTS,
    DeviceParams,
    EnsembleGeometry,
    PhysicalConstants,
    collective_rabi,
)
from .schedule import (
    CpbDrive,
    EchoPulse,
    FrameShift,
    GradientLimitError,
    GradientPulse,
    Measure,
    PulseSchedule,
    ResonanceWindow,
    Wait,
)

DENSE_LIMIT = 1500
NORM_TOL = 1e-9
LEAK_LIMIT = 1e-3


class TruncationError(RuntimeError):
    """Amplitude would leave the represented excitation sector."""


# --------------------------------------------------------------------------
# basis


@dataclass(frozen=True, eq=False)
class _Block:
    n: int
    offset: int
    keys: tuple  # (photons, cpb, spins) per state, lexicographic
    photons: np.ndarray
    cpb: np.ndarray
    spin_slots: np.ndarray  # (dim, n) spin indices, -1 padded
    index: dict

    @property
    def dim(self) -> int:
        return len(self.keys)

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.dim)


def _block_keys(n: int, n_spins: int) -> list:
    keys = []
    for photons in range(n + 1):
        for cpb in (0, 1):
            k = n - photons - cpb
            if k < 0 or k > n_spins:
                continue
            for spins in itertools.combinations(range(n_spins), k):
                keys.append((photons, cpb, spins))
    keys.sort()
    return keys


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """All states with at most ``max_excitations`` quanta, ordered by block."""

    n_spins: int
    max_excitations: int = 1
    blocks: tuple = field(init=False)

    def __post_init__(self):
        if self.max_excitations not in (1, 2):
            raise ValueError("max_excitations must be 1 or 2")
        if self.n_spins < 1:
            raise ValueError("need at least one spin")
        blocks, offset = [], 0
        for n in range(self.max_excitations + 1):
            keys = _block_keys(n, self.n_spins)
            slots = np.full((len(keys), max(n, 1)), -1, dtype=np.int64)
            for i, (_, _, spins) in enumerate(keys):
                slots[i, : len(spins)] = spins
            block = _Block(
                n=n,
                offset=offset,
                keys=tuple(keys),
                photons=np.array([k[0] for k in keys]),
                cpb=np.array([k[1] for k in keys]),
                spin_slots=slots,
                index={k: i for i, k in enumerate(keys)},
            )
            blocks.append(block)
            offset += block.dim
        object.__setattr__(self, "blocks", tuple(blocks))
        self._build_transitions()

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    def block_dim(self, n: int) -> int:
        return self.blocks[n].dim

    def index_of(self, photons: int, cpb: int, spins: Sequence[int] = ()) -> int:
        key = (photons, cpb, tuple(sorted(spins)))
        n = photons + cpb + len(key[2])
        if n > self.max_excitations:
            raise KeyError(f"{key} is outside the {self.max_excitations}-excitation sector")
        block = self.blocks[n]
        return block.offset + block.index[key]

    def _build_transitions(self):
        # within-block exchange edges (spin<->photon, cpb<->photon) and
        # the sigma_minus lowering edges between neighbouring blocks
        spin_edges, cpb_edges, lower = [], [], [None]
        for block in self.blocks:
            se, ce = [], []
            for i, (p, c, spins) in enumerate(block.keys):
                for q in spins:
                    rest = tuple(s for s in spins if s != q)
                    j = block.index[(p + 1, c, rest)]
                    se.append((i, j, q, np.sqrt(p + 1)))
                if c == 1:
                    j = block.index[(p + 1, 0, spins)]
                    ce.append((i, j, np.sqrt(p + 1)))
            spin_edges.append(_edge_arrays(se, 4))
            cpb_edges.append(_edge_arrays(ce, 3))
            if block.n > 0:
                below = self.blocks[block.n - 1]
                le = []
                for i, (p, c, spins) in enumerate(block.keys):
                    for q in spins:
                        rest = tuple(s for s in spins if s != q)
                        le.append((below.index[(p, c, rest)], i, q, 1.0))
                lower.append(_edge_arrays(le, 4))
        object.__setattr__(self, "_spin_edges", tuple(spin_edges))
        object.__setattr__(self, "_cpb_edges", tuple(cpb_edges))
        object.__setattr__(self, "_lower_edges", tuple(lower))
        pairs = []
        for block in self.blocks:
            for i, (p, c, spins) in enumerate(block.keys):
                if c == 0:
                    key = (p, 1, spins)
                    n_up = block.n + 1
                    j = (
                        self.blocks[n_up].offset + self.blocks[n_up].index[key]
                        if n_up <= self.max_excitations
                        else -1
                    )
                    pairs.append((block.offset + i, j))
        object.__setattr__(self, "_cpb_pairs", np.array(pairs, dtype=np.int64))


def _edge_arrays(edges, width):
    if not edges:
        return tuple(np.zeros(0, dtype=float if k == width - 1 else np.int64) for k in range(width))
    cols = list(zip(*edges))
    return tuple(
        np.array(col, dtype=float if k == width - 1 else np.int64) for k, col in enumerate(cols)
    )


# --------------------------------------------------------------------------
# system and state


@dataclass(frozen=True, eq=False)
class ExactSystem:
    """Everything the generator needs besides the schedule.

    ``idle_detuning`` is the spin-cavity detuning outside resonance windows
    (default 100 x collective rate); ``static_offsets`` are per-spin
    inhomogeneous detunings present at all times.
    """

    geom: EnsembleGeometry
    device: DeviceParams
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    idle_detuning: Optional[float] = None
    cpb_idle_detuning: Optional[float] = None
    static_offsets: Optional[np.ndarray] = None
    ramp_steps: int = 64
    max_delta_B: Optional[float] = None

    def __post_init__(self):
        if self.idle_detuning is None:
            object.__setattr__(self, "idle_detuning", 100.0 * collective_rabi(self.geom))
        if self.cpb_idle_detuning is None:
            object.__setattr__(self, "cpb_idle_detuning", self.device.delta_cpb)
        if self.static_offsets is None:
            offsets = np.zeros(self.geom.n_spins)
        else:
            offsets = np.array(self.static_offsets, dtype=float)
            if offsets.shape != (self.geom.n_spins,):
                raise ValueError("static_offsets needs one value per spin")
        offsets.setflags(write=False)
        object.__setattr__(self, "static_offsets", offsets)
        if self.max_delta_B is None:
            object.__setattr__(self, "max_delta_B", self.device.max_delta_B)

    @property
    def collective_rate(self) -> float:
        return collective_rabi(self.geom)


@dataclass(frozen=True, eq=False)
class SectorState:
    basis: SectorBasis
    amplitudes: np.ndarray
    norm_deficit: float = 0.0
    leaked: float = 0.0
    inverted: bool = False
    global_phase: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"amplitude vector has shape {amps.shape}, basis dim {self.basis.dim}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def block(self, n: int) -> np.ndarray:
        return self.amplitudes[self.basis.blocks[n].slice]

    def probability_conserved(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm + self.norm_deficit + self.leaked - 1.0) < tol

    def overlap(self, other: "SectorState") -> complex:
        return complex(np.vdot(other.amplitudes, self.amplitudes))


def vacuum_state(basis: SectorBasis) -> SectorState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(0, 0)] = 1.0
    return SectorState(basis, amps)


def fock_state(basis: SectorBasis, photons: int = 0, cpb: int = 0, spins: Sequence[int] = ()) -> SectorState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(photons, cpb, spins)] = 1.0
    return SectorState(basis, amps)


def cavity_qubit_state(basis: SectorBasis, alpha: complex, beta: complex) -> SectorState:
    """alpha |vac> + beta |1 photon>."""
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(0, 0)] = alpha
    amps[basis.index_of(1, 0)] = beta
    return SectorState(basis, _normalise(amps))


def cpb_qubit_state(basis: SectorBasis, alpha: complex, beta: complex) -> SectorState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(0, 0)] = alpha
    amps[basis.index_of(0, 1)] = beta
    return SectorState(basis, _normalise(amps))


def spin_wave_vector(basis: SectorBasis, geom: EnsembleGeometry, k: float) -> np.ndarray:
    """Full-basis vector of |psi_1(k)>."""
    block = basis.blocks[1]
    vec = np.zeros(basis.dim, dtype=complex)
    vec[block.offset : block.offset + geom.n_spins] = mode_vector(geom, k).coefficients
    return vec


def mode_qubit_state(
    basis: SectorBasis, geom: EnsembleGeometry, k: float, alpha: complex = 0.0, beta: complex = 1.0
) -> SectorState:
    """alpha |vac> + beta |psi_1(k)>; the default is the bare spin wave."""
    amps = beta * spin_wave_vector(basis, geom, k)
    amps[basis.index_of(0, 0)] += alpha
    return SectorState(basis, _normalise(amps))


def _normalise(amps: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ValueError("zero state")
    return amps / norm


# --------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class HamiltonianTerms:
    """Piecewise-constant generator of one time step."""

    spin_detuning: np.ndarray
    cpb_detuning: float
    cpb_coupling: complex
    couple_spins: bool
    kappa: float


def _idle_terms(system: ExactSystem, inverted: bool) -> HamiltonianTerms:
    return HamiltonianTerms(
        spin_detuning=system.idle_detuning + system.static_offsets,
        cpb_detuning=system.cpb_idle_detuning,
        cpb_coupling=complex(system.device.g_cpb),
        couple_spins=not inverted,
        kappa=system.device.kappa,
    )


def segment_terms(seg, system: ExactSystem, inverted: bool = False) -> list:
    """Split a schedule segment into (duration, HamiltonianTerms) steps."""
    base = _idle_terms(system, inverted)
    if isinstance(seg, Wait) or isinstance(seg, CpbDrive):
        return [(seg.duration, base)]
    if isinstance(seg, GradientPulse):
        if seg.duration == 0:
            if seg.delta_k != 0:
                raise ValueError("a gradient pulse with nonzero k needs a nonzero duration")
            return []
        c, L = system.constants, system.geom.length
        delta_B = seg.delta_B
        if delta_B == 0 and seg.delta_k != 0:
            delta_B = -seg.delta_k * L * c.hbar / (c.m0 * seg.duration)
        if abs(delta_B) > system.max_delta_B * (1 + 1e-12):
            raise GradientLimitError(
                f"gradient pulse needs |dB| = {abs(delta_B):.4g} T, limit {system.max_delta_B:.4g} T"
            )
        slope = c.m0 * delta_B / (L * c.hbar)
        return [(seg.duration, replace(base, spin_detuning=base.spin_detuning + slope * system.geom.positions))]
    if isinstance(seg, ResonanceWindow):
        if seg.target == "cpb":
            g = system.device.g_cpb * np.exp(1j * seg.phase)
            return [(seg.duration, replace(base, cpb_detuning=seg.detuning, cpb_coupling=g))]
        if inverted:
            raise ValueError("spin resonance window while the ensemble is inverted")
        if seg.profile == "square":
            return [(seg.duration, replace(base, spin_detuning=seg.detuning + system.static_offsets))]
        m = system.ramp_steps
        dt = seg.duration / m
        mids = seg.ramp_span * (1.0 - 2.0 * (np.arange(m) + 0.5) / m)
        return [
            (dt, replace(base, spin_detuning=seg.detuning + d + system.static_offsets)) for d in mids
        ]
    raise TypeError(f"segment {seg!r} has no generator")


def block_hamiltonian(
    basis: SectorBasis, n: int, terms: HamiltonianTerms, geom: EnsembleGeometry, inverted: bool = False
) -> sp.csr_matrix:
    block = basis.blocks[n]
    delta = np.asarray(terms.spin_detuning, dtype=float)
    slots = block.spin_slots
    padded = np.concatenate([delta, [0.0]])
    spin_energy = padded[slots].sum(axis=1) if n > 0 else np.zeros(block.dim)
    if inverted:
        spin_energy = -spin_energy
    diag = (
        spin_energy
        + terms.cpb_detuning * block.cpb
        - 0.5j * terms.kappa * block.photons
    )
    H = sp.diags(diag.astype(complex), format="csr")
    if terms.couple_spins and not inverted:
        rows, cols, spins, fac = basis._spin_edges[n]
        if rows.size:
            vals = geom.couplings[spins] * fac
            C = sp.csr_matrix((vals, (rows, cols)), shape=(block.dim, block.dim))
            H = H + C + C.conj().T
    if terms.cpb_coupling != 0:
        rows, cols, fac = basis._cpb_edges[n]
        if rows.size:
            C = sp.csr_matrix((terms.cpb_coupling * fac, (rows, cols)), shape=(block.dim, block.dim))
            H = H + C + C.conj().T
    return H.tocsr()


def _propagate_block(H: sp.csr_matrix, vec: np.ndarray, t: float, hermitian: bool) -> np.ndarray:
    if t == 0 or not np.any(vec):
        return vec
    dim = H.shape[0]
    if dim <= DENSE_LIMIT:
        Hd = H.toarray()
        if hermitian:
            w, V = eigh(Hd)
            return V @ (np.exp(-1j * w * t) * (V.conj().T @ vec))
        return expm(-1j * t * Hd) @ vec
    return expm_multiply(-1j * t * H, vec)


def _global_energy(terms: HamiltonianTerms, inverted: bool) -> float:
    # energy of the all-up reference in the inverted frame
    return float(np.sum(terms.spin_detuning)) if inverted else 0.0


def propagate(state: SectorState, terms: HamiltonianTerms, duration: float, geom: EnsembleGeometry) -> SectorState:
    """Evolve under one constant generator; tracks decay into norm_deficit."""
    if duration < 0:
        raise ValueError("negative duration")
    if duration == 0:
        return state
    amps = np.array(state.amplitudes)
    before = state.norm
    hermitian = terms.kappa == 0
    for block in state.basis.blocks:
        v = amps[block.slice]
        if not np.any(v):
            continue
        H = block_hamiltonian(state.basis, block.n, terms, geom, state.inverted)
        amps[block.slice] = _propagate_block(H, v, duration, hermitian)
    after = float(np.vdot(amps, amps).real)
    deficit = state.norm_deficit + max(before - after, 0.0) if not hermitian else state.norm_deficit
    return replace(
        state,
        amplitudes=amps,
        norm_deficit=deficit,
        global_phase=state.global_phase - _global_energy(terms, state.inverted) * duration,
        time=state.time + duration,
    )


def energy(state: SectorState, terms: HamiltonianTerms, geom: EnsembleGeometry) -> float:
    """<H> of the Hermitian part of the generator (per hbar)."""
    total = 0.0
    hermitian_terms = replace(terms, kappa=0.0)
    for block in state.basis.blocks:
        v = state.amplitudes[block.slice]
        if np.any(v):
            H = block_hamiltonian(state.basis, block.n, hermitian_terms, geom, state.inverted)
            total += float(np.vdot(v, H @ v).real)
    return total


# --------------------------------------------------------------------------
# instantaneous operations


def _number_of(state: SectorState, target: str) -> np.ndarray:
    out = np.zeros(state.basis.dim)
    for block in state.basis.blocks:
        if target == "cavity":
            out[block.slice] = block.photons
        elif target == "cpb":
            out[block.slice] = block.cpb
        else:
            out[block.slice] = block.n - block.photons - block.cpb
    return out


def apply_frame_shift(state: SectorState, target: str, phase: float) -> SectorState:
    amps = state.amplitudes * np.exp(1j * phase * _number_of(state, target))
    return replace(state, amplitudes=amps)


def cpb_rotation(nx: float, ny: float, nz: float, angle: float) -> np.ndarray:
    """exp(-i angle/2 n.sigma) in the (|g>, |e>) = (|0>, |1>) basis."""
    n = np.array([nx, ny, nz], dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        return np.eye(2, dtype=complex)
    nx, ny, nz = n / norm
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array(
        [[c - 1j * s * nz, -1j * s * (nx - 1j * ny)], [-1j * s * (nx + 1j * ny), c + 1j * s * nz]]
    )


def apply_cpb_unitary(state: SectorState, U: np.ndarray, tol: float = LEAK_LIMIT) -> SectorState:
    """Rotate the CPB; amplitude pushed above the sector cap is dropped into
    ``leaked`` (an error if the running total exceeds ``tol``)."""
    amps = np.array(state.amplitudes)
    out = np.array(amps)
    pairs = state.basis._cpb_pairs
    g_idx, e_idx = pairs[:, 0], pairs[:, 1]
    inside = e_idx >= 0
    a_g = amps[g_idx]
    a_e = np.where(inside, amps[np.where(inside, e_idx, 0)], 0.0)
    new_g = U[0, 0] * a_g + U[0, 1] * a_e
    new_e = U[1, 0] * a_g + U[1, 1] * a_e
    lost = float(np.sum(np.abs(new_e[~inside]) ** 2))
    if state.leaked + lost > tol:
        raise TruncationError(
            f"CPB rotation pushes {lost:.2e} of the norm out of the {state.basis.max_excitations}-excitation sector"
        )
    out[g_idx] = new_g
    out[e_idx[inside]] = new_e[inside]
    return replace(state, amplitudes=out, leaked=state.leaked + lost)


def apply_perfect_echo(state: SectorState, phase: float = 0.0) -> SectorState:
    """Rotate every spin by exactly pi about (cos phase, sin phase, 0).

    The stored spin configuration is reinterpreted (excited set <-> hole
    set); the relative phase e^{+-2i phase n} and the common factor
    (-i e^{-+i phase})^N are applied here.
    """
    N = state.basis.n_spins
    n_spins = _number_of(state, "spins")
    sign = -1.0 if state.inverted else 1.0
    # non-inverted -> inverted: (-i)^N e^{-i phase N} e^{2i phase n}
    amps = state.amplitudes * np.exp(2j * sign * phase * n_spins)
    common = N * (-0.5 * np.pi - sign * phase)
    return replace(
        state,
        amplitudes=amps,
        inverted=not state.inverted,
        global_phase=float(np.mod(state.global_phase + common, 2 * np.pi)),
    )


# --------------------------------------------------------------------------
# evolution driver


def evolve(
    state: SectorState,
    schedule: PulseSchedule,
    system: ExactSystem,
    log: Optional[list] = None,
) -> SectorState:
    """Run ``schedule`` segment by segment.

    ``log`` (if given) receives one record per Measure segment with the
    excited-state probability of its target.
    """
    if abs(state.norm + state.norm_deficit + state.leaked - 1.0) > 1e-6:
        raise ValueError("initial state is not normalised")
    for i, seg in enumerate(schedule):
        if seg.duration < 0:
            raise ValueError(f"segment {i} has negative duration")
        if isinstance(seg, FrameShift):
            state = apply_frame_shift(state, seg.target, seg.phase)
            continue
        if isinstance(seg, Measure):
            if log is not None:
                n = _number_of(state, seg.target)
                p = float(np.sum(np.abs(state.amplitudes) ** 2 * (n > 0)))
                log.append({"segment": i, "target": seg.target, "label": seg.label, "p_excited": p})
            continue
        if isinstance(seg, EchoPulse):
            if seg.error != 0:
                raise ValueError(
                    "imperfect echo pulses leave the bounded-excitation sector; "
                    "use noise.echo_error_injection"
                )
            state = apply_perfect_echo(state, seg.phase)
            if seg.duration > 0:
                state = propagate(state, _idle_terms(system, state.inverted), seg.duration, system.geom)
            continue
        if isinstance(seg, CpbDrive):
            state = apply_cpb_unitary(state, cpb_rotation(seg.nx, seg.ny, seg.nz, seg.angle))
        for dt, terms in segment_terms(seg, system, state.inverted):
            state = propagate(state, terms, dt, system.geom)
    return state


# --------------------------------------------------------------------------
# observables


def lowering_matrix(basis: SectorBasis, geom: EnsembleGeometry, k: float, n: int) -> sp.csr_matrix:
    """Matrix of b(k) from block n to block n - 1."""
    if n < 1:
        raise ValueError("b(k) annihilates the vacuum block")
    rows, cols, spins, _ = basis._lower_edges[n]
    c = mode_vector(geom, k).coefficients
    shape = (basis.blocks[n - 1].dim, basis.blocks[n].dim)
    return sp.csr_matrix((np.conj(c[spins]), (rows, cols)), shape=shape)


def mode_occupation(state: SectorState, geom: EnsembleGeometry, k: float) -> float:
    """<b^dagger(k) b(k)> = || b(k) psi ||^2."""
    if state.inverted:
        raise ValueError("mode occupations are defined in the polarised frame only")
    total = 0.0
    for n in range(1, state.basis.max_excitations + 1):
        v = state.block(n)
        if np.any(v):
            w = lowering_matrix(state.basis, geom, k, n) @ v
            total += float(np.vdot(w, w).real)
    return total


def cavity_population(state: SectorState) -> float:
    n = _number_of(state, "cavity")
    return float(np.sum(np.abs(state.amplitudes) ** 2 * n))


def reduced_qubit(state: SectorState, target: str = "cavity") -> np.ndarray:
    """Amplitudes (a0, a1) of the target in the product with the vacuum elsewhere."""
    basis = state.basis
    idx1 = basis.index_of(1, 0) if target == "cavity" else basis.index_of(0, 1)
    return np.array([state.amplitudes[basis.index_of(0, 0)], state.amplitudes[idx1]])


def qubit_fidelity(state: SectorState, alpha: complex, beta: complex, target: str = "cavity") -> float:
    """|<target qubit (alpha, beta)| state>|^2 with everything else empty."""
    ideal = np.array([alpha, beta], dtype=complex)
    ideal /= np.linalg.norm(ideal)
    return float(abs(np.vdot(ideal, reduced_qubit(state, target))) ** 2)


# --------------------------------------------------------------------------
# canned experiments


def cavity_decay_check(
    geom: EnsembleGeometry,
    device: DeviceParams,
    duration: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    spin_detuning: Optional[float] = None,
) -> float:
    """Probability that a single photon survives ``duration`` with the spins far detuned."""
    if device.kappa < 0:
        raise ValueError("kappa must be non-negative")
    if spin_detuning is None:
        spin_detuning = 1e6 * collective_rabi(geom)
    system = ExactSystem(geom, device, constants, idle_detuning=spin_detuning)
    basis = SectorBasis(geom.n_spins, 1)
    state = evolve(fock_state(basis, photons=1), PulseSchedule((Wait(duration),)), system)
    return state.norm


def resonant_spectrum(geom: EnsembleGeometry, detuning: float = 0.0):
    """Eigen-decomposition of the single-excitation spin + cavity block."""
    N = geom.n_spins
    H = np.zeros((N + 1, N + 1), dtype=complex)
    H[np.arange(N), np.arange(N)] = detuning
    H[:N, N] = geom.couplings
    H[N, :N] = np.conj(geom.couplings)
    return eigh(H)


def vacuum_rabi_trace(geom: EnsembleGeometry, times: np.ndarray, detuning: float = 0.0) -> np.ndarray:
    """Cavity population after starting from one photon, spins on resonance."""
    w, V = resonant_spectrum(geom, detuning)
    c0 = V.conj().T[:, -1]  # overlap of each eigenvector with the photon state
    amps = V[-1, :][None, :] * np.exp(-1j * np.outer(times, w)) * c0[None, :]
    return np.abs(amps.sum(axis=1)) ** 2


def fit_exchange_frequency(times: np.ndarray, population: np.ndarray) -> float:
    """Fit P(t) = cos^2(Omega t) and return Omega.

    The starting value comes from a zero-padded FFT peak (P oscillates at 2 Omega).
    """
    times = np.asarray(times, dtype=float)
    dt = times[1] - times[0]
    y = np.asarray(population) - np.mean(population)
    nfft = 16 * len(y)
    spec = np.abs(np.fft.rfft(y, nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    guess = np.pi * freqs[np.argmax(spec[1:]) + 1]  # 2 Omega = 2 pi f

    def model(t, omega):
        return np.cos(omega * t) ** 2

    popt, _ = curve_fit(model, times, population, p0=[guess], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(popt[0])


def two_excitation_cavity_trace(geom: EnsembleGeometry, times: np.ndarray) -> np.ndarray:
    """<n_cav>(t) from two photons, resonant spins, exact two-excitation block."""
    basis = SectorBasis(geom.n_spins, 2)
    block = basis.blocks[2]
    terms = HamiltonianTerms(
        spin_detuning=np.zeros(geom.n_spins), cpb_detuning=0.0, cpb_coupling=0.0, couple_spins=True, kappa=0.0
    )
    H = block_hamiltonian(basis, 2, terms, geom)
    v0 = np.zeros(block.dim, dtype=complex)
    v0[block.index[(2, 0, ())]] = 1.0
    times = np.asarray(times, dtype=float)
    if not np.allclose(np.diff(times), times[1] - times[0]) or times[0] != 0:
        raise ValueError("times must be an evenly spaced grid starting at 0")
    traj = expm_multiply(-1j * H, v0, start=0.0, stop=times[-1], num=len(times), endpoint=True)
    return (np.abs(traj) ** 2) @ block.photons


def bosonic_two_excitation_trace(rate: float, times: np.ndarray) -> np.ndarray:
    """Same observable for two coupled harmonic oscillators."""
    r2 = np.sqrt(2.0) * rate
    H = np.array([[0, r2, 0], [r2, 0, r2], [0, r2, 0]], dtype=float)
    w, V = eigh(H)
    v0 = np.array([1.0, 0.0, 0.0])
    amps = (V @ (np.exp(-1j * np.outer(w, times)) * (V.T @ v0)[:, None])).T
    return (np.abs(amps) ** 2) @ np.array([2.0, 1.0, 0.0])


def swap_protocol_exact(
    state: SectorState,
    mode_index: int,
    layout: RegisterLayout,
    system: ExactSystem,
    profile: str = "square",
    direction: str = "store",
) -> SectorState:
    """Swap the cavity with register mode ``mode_index`` via (-k), window, (+k)."""
    from .protocols import swap_schedule

    k = layout.wavenumbers(system.geom.length)[mode_index]
    sched = swap_schedule(k, system, profile=profile)
    return evolve(state, sched, system)
