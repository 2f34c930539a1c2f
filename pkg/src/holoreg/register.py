"""Register engine: k-modes as independent truncated oscillators.

The state is a product of density matrices over groups of subsystems
('m0', 'm1', ... for register modes, 'cav', 'cpb'). Groups merge only
when an operation entangles them, so untouched modes cost nothing.

A mode/cavity swap is an exact SWAP. Without crosstalk it is applied as a
relabelling of the two subsystems. With a Gram matrix S attached, 'm<i>'
are the orthonormal modes S^(-1/2)-combined from the physical waves, the
cavity swaps with the physical wave k_i, and physical_occupation reads
b(k_i)^dagger b(k_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache, reduce
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares

from .exact import TruncationError, cpb_rotation
from .physical import DeviceParams, EnsembleGeometry, collective_rabi

LEAK_TOL = 1e-4


class CalibrationError(RuntimeError):
    pass


class ProgramError(RuntimeError):
    """An op failed; ``index`` is its position in the program."""

    def __init__(self, index: int, kind: str, cause: Exception):
        super().__init__(f"op {index} ({kind}) failed: {cause}")
        self.index = index
        self.kind = kind
        self.cause = cause


# --------------------------------------------------------------------------
# state


@dataclass(frozen=True, eq=False)
class _Group:
    names: tuple
    dims: tuple
    rho: np.ndarray


def mode_name(i: int) -> str:
    return f"m{i}"


@dataclass(frozen=True, eq=False)
class RegisterState:
    n_modes: int
    cutoff: int = 3
    groups: tuple = ()
    gram: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("need at least one register mode")
        if self.cutoff < 2:
            raise ValueError("Fock cutoff must be at least 2")
        if self.gram is not None:
            g = np.array(self.gram, dtype=complex)
            if g.shape != (self.n_modes, self.n_modes):
                raise ValueError("gram matrix does not match the number of modes")
            object.__setattr__(self, "gram", g)
        if not self.groups:
            groups = [_Group((mode_name(i),), (self.cutoff,), _ket_dm(self.cutoff, 0)) for i in range(self.n_modes)]
            groups.append(_Group(("cav",), (self.cutoff,), _ket_dm(self.cutoff, 0)))
            groups.append(_Group(("cpb",), (2,), _ket_dm(2, 0)))
            object.__setattr__(self, "groups", tuple(groups))

    @property
    def names(self) -> list:
        return [n for g in self.groups for n in g.names]

    def dim_of(self, name: str) -> int:
        return 2 if name == "cpb" else self.cutoff

    def _locate(self, name: str) -> int:
        for gi, g in enumerate(self.groups):
            if name in g.names:
                return gi
        raise KeyError(f"no subsystem {name!r}")

    def trace(self) -> float:
        return float(np.prod([np.trace(g.rho).real for g in self.groups]))


def _ket_dm(dim: int, level: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[level, level] = 1.0
    return rho


def _as_density(value, dim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=complex)
    if arr.ndim == 1:
        if arr.size > dim:
            raise ValueError(f"state vector longer than the local dimension {dim}")
        v = np.zeros(dim, dtype=complex)
        v[: arr.size] = arr
        return np.outer(v, v.conj())
    if arr.shape[0] > dim:
        raise ValueError(f"density matrix larger than the local dimension {dim}")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[: arr.shape[0], : arr.shape[1]] = arr
    return rho


def product_state(
    n_modes: int, cutoff: int = 3, locals: Optional[dict] = None, gram=None
) -> RegisterState:
    """Product state; ``locals`` maps subsystem names to kets or density matrices."""
    state = RegisterState(n_modes, cutoff, gram=gram)
    groups = list(state.groups)
    for name, value in (locals or {}).items():
        gi = state._locate(name)
        groups[gi] = _Group((name,), (state.dim_of(name),), _as_density(value, state.dim_of(name)))
    return replace(state, groups=tuple(groups))


def joint_state(state: RegisterState, names: Sequence[str], value) -> RegisterState:
    """Replace ``names`` by a single (possibly entangled) joint state."""
    names = tuple(names)
    dims = tuple(state.dim_of(n) for n in names)
    D = int(np.prod(dims))
    rho = np.asarray(value, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if rho.shape != (D, D):
        raise ValueError(f"joint state has shape {rho.shape}, expected {(D, D)}")
    keep = []
    for g in state.groups:
        if set(g.names) & set(names):
            if not set(g.names) <= set(names):
                raise ValueError("joint_state must replace whole groups")
        else:
            keep.append(g)
    keep.append(_Group(names, dims, rho))
    return replace(state, groups=tuple(keep))


def _merge(state: RegisterState, names: Sequence[str]) -> tuple:
    """Return (state, group index) with all ``names`` in one group."""
    idx = sorted({state._locate(n) for n in names})
    if len(idx) == 1:
        return state, idx[0]
    parts = [state.groups[i] for i in idx]
    merged = _Group(
        names=sum((g.names for g in parts), ()),
        dims=sum((g.dims for g in parts), ()),
        rho=reduce(np.kron, [g.rho for g in parts]),
    )
    rest = [g for i, g in enumerate(state.groups) if i not in idx]
    return replace(state, groups=tuple(rest + [merged])), len(rest)


def _apply_left(tensor, dims, axes, op):
    s = len(axes)
    t = np.moveaxis(tensor, axes, range(s))
    shape = t.shape
    t = (op @ t.reshape(op.shape[1], -1)).reshape(shape)
    return np.moveaxis(t, range(s), axes)


def _apply_kraus_group(group: _Group, sub: Sequence[str], kraus: Sequence[np.ndarray]) -> _Group:
    m = len(group.dims)
    ket = [group.names.index(n) for n in sub]
    bra = [m + a for a in ket]
    T = group.rho.reshape(group.dims + group.dims)
    out = np.zeros_like(T)
    for K in kraus:
        X = _apply_left(T, group.dims, ket, K)
        X = _apply_left(X, group.dims, bra, K.conj())
        out += X
    D = group.rho.shape[0]
    return replace(group, rho=out.reshape(D, D))


def _apply_superop_group(group: _Group, sub: Sequence[str], S: np.ndarray) -> _Group:
    """S acts on the row-major vec of the reduced operator on ``sub``."""
    m = len(group.dims)
    ket = [group.names.index(n) for n in sub]
    axes = ket + [m + a for a in ket]
    T = group.rho.reshape(group.dims + group.dims)
    T = _apply_left(T, group.dims, axes, S)
    D = group.rho.shape[0]
    return replace(group, rho=T.reshape(D, D))


def apply_kraus(state: RegisterState, names: Sequence[str], kraus: Sequence[np.ndarray]) -> RegisterState:
    state, gi = _merge(state, names)
    groups = list(state.groups)
    groups[gi] = _apply_kraus_group(groups[gi], names, kraus)
    return replace(state, groups=tuple(groups))


def apply_unitary(state: RegisterState, names: Sequence[str], U: np.ndarray) -> RegisterState:
    return apply_kraus(state, names, [U])


def apply_superop(state: RegisterState, names: Sequence[str], S: np.ndarray) -> RegisterState:
    state, gi = _merge(state, names)
    groups = list(state.groups)
    groups[gi] = _apply_superop_group(groups[gi], names, S)
    return replace(state, groups=tuple(groups))


def reduced_density(state: RegisterState, names: Sequence[str]) -> np.ndarray:
    """Reduced density matrix of ``names`` in the order given."""
    names = list(names)
    factors, order = [], []
    for g in state.groups:
        keep = [n for n in g.names if n in names]
        if not keep:
            continue
        m = len(g.dims)
        T = g.rho.reshape(g.dims + g.dims)
        labels = list(range(2 * m))
        traced = [i for i, n in enumerate(g.names) if n not in keep]
        for i in traced:
            labels[m + i] = labels[i]
        out = [i for i, n in enumerate(g.names) if n in keep]
        out_labels = out + [m + i for i in out]
        r = np.einsum(T, labels, out_labels)
        d = int(np.prod([g.dims[i] for i in out]))
        factors.append(r.reshape(d, d))
        order.extend(g.names[i] for i in out)
    missing = set(names) - set(order)
    if missing:
        raise KeyError(f"unknown subsystems {sorted(missing)}")
    rho = reduce(np.kron, factors)
    dims = [state.dim_of(n) for n in order]
    perm = [order.index(n) for n in names]
    k = len(order)
    T = rho.reshape(dims + dims).transpose(perm + [k + p for p in perm])
    D = int(np.prod(dims))
    return T.reshape(D, D)


def occupation(state: RegisterState, name: str) -> float:
    rho = reduced_density(state, [name])
    return float(np.real(np.diag(rho) @ np.arange(rho.shape[0])))


def top_level_population(state: RegisterState, name: str) -> float:
    if name == "cpb":
        return 0.0
    rho = reduced_density(state, [name])
    return float(rho[-1, -1].real)


def max_leakage(state: RegisterState) -> float:
    return max(top_level_population(state, n) for n in state.names if n != "cpb")


def check_truncation(state: RegisterState, tol: float = LEAK_TOL) -> None:
    leak = max_leakage(state)
    if leak > tol:
        raise TruncationError(f"top Fock level holds {leak:.2e} > {tol:.0e}")


def fidelity_with(state: RegisterState, names: Sequence[str], psi: np.ndarray) -> float:
    rho = reduced_density(state, names)
    psi = np.asarray(psi, dtype=complex)
    return float(np.vdot(psi, rho @ psi).real)


def qubit_ket(names: Sequence[str], amplitudes: dict, dims: Sequence[int]) -> np.ndarray:
    """Ket over ``names`` from {occupation tuple: amplitude}."""
    psi = np.zeros(int(np.prod(dims)), dtype=complex)
    for occ, amp in amplitudes.items():
        psi[np.ravel_multi_index(occ, dims)] = amp
    return psi / np.linalg.norm(psi)


# --------------------------------------------------------------------------
# operators


def lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim)).astype(complex)


def _lindblad(H: np.ndarray, collapse: Sequence[np.ndarray]) -> np.ndarray:
    """Row-major superoperator: vec(A rho B) = (A kron B^T) vec(rho)."""
    d = H.shape[0]
    I = np.eye(d)
    L = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for c in collapse:
        cdc = c.conj().T @ c
        L += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, I) - 0.5 * np.kron(I, cdc.T)
    return L


def damping_kraus(dim: int, eta: float) -> list:
    """Exact amplitude-damping Kraus set, survival amplitude^2 = eta."""
    ops = []
    for l in range(dim):
        K = np.zeros((dim, dim), dtype=complex)
        for n in range(l, dim):
            K[n - l, n] = math.sqrt(math.comb(n, l) * eta ** (n - l) * (1 - eta) ** l)
        ops.append(K)
    return ops


# --------------------------------------------------------------------------
# hardware and gates


@dataclass(frozen=True)
class RegisterHardware:
    """Rates the register engine needs (rad/s)."""

    g_cpb: float = 1.0
    kappa: float = 0.0
    collective_rate: float = 1.0
    cpb_t1: Optional[float] = None
    cpb_t2: Optional[float] = None
    mode_dephasing: float = 0.0
    leak_tol: float = LEAK_TOL

    def __post_init__(self):
        if not self.g_cpb > 0:
            raise ValueError("g_cpb must be positive for CPB gates")
        if self.kappa < 0 or self.mode_dephasing < 0:
            raise ValueError("rates must be non-negative")

    @classmethod
    def from_device(cls, device: DeviceParams, geom: EnsembleGeometry, **kw) -> "RegisterHardware":
        return cls(
            g_cpb=device.g_cpb,
            kappa=device.kappa,
            collective_rate=collective_rabi(geom),
            cpb_t1=device.cpb_t1,
            cpb_t2=device.cpb_t2,
            **kw,
        )

    def cpb_collapse(self) -> list:
        ops = []
        sm = np.array([[0, 1], [0, 0]], dtype=complex)
        if self.cpb_t1:
            ops.append(np.sqrt(1.0 / self.cpb_t1) * sm)
        if self.cpb_t2:
            rate = 1.0 / self.cpb_t2 - (0.5 / self.cpb_t1 if self.cpb_t1 else 0.0)
            if rate > 0:
                ops.append(np.sqrt(rate / 2) * np.diag([1.0, -1.0]).astype(complex))
        return ops


def gram_sqrt(gram: np.ndarray) -> np.ndarray:
    """V = S^(1/2): physical wave i is sum_m V[m, i] e_m over orthonormal modes e_m."""
    vals, vecs = np.linalg.eigh(gram)
    if vals.min() < -1e-9:
        raise ValueError("gram matrix is not positive semidefinite")
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T


def _physical_wave(state: RegisterState, i: int, tol: float = 1e-15) -> tuple:
    """(mode indices, coefficients) of wave i over the orthonormal register modes."""
    if state.gram is None:
        return [i], np.ones(1, dtype=complex)
    col = gram_sqrt(state.gram)[:, i]
    involved = [i] + [j for j in range(state.n_modes) if j != i and abs(col[j]) > tol]
    return involved, col[involved]


def _embed(op: np.ndarray, slot: int, dims: Sequence[int]) -> np.ndarray:
    mats = [np.eye(d) for d in dims]
    mats[slot] = op
    return reduce(np.kron, mats)


def _wave_lowering(d: int, coeffs: np.ndarray, offset: int, dims: Sequence[int]) -> np.ndarray:
    """b = sum_m conj(v_m) a_m on the subsystems starting at ``offset``."""
    return sum(np.conj(v) * _embed(lowering(d), offset + s, dims) for s, v in enumerate(coeffs))


def swap_mode_cavity(state: RegisterState, i: int, max_partners: int = 7) -> RegisterState:
    """Exchange the cavity with register mode ``i``.

    With a Gram matrix the register modes are the symmetrically
    orthonormalised waves and the cavity swaps with the physical wave k_i,
    which overlaps its neighbours. The exchange is a real SWAP, so applying
    it twice is the identity.
    """
    if not 0 <= i < state.n_modes:
        raise IndexError(f"mode {i} not in the register")
    involved, v = _physical_wave(state, i)
    if len(involved) == 1:
        a, b = "cav", mode_name(i)
        groups = []
        for g in state.groups:
            names = tuple(b if n == a else a if n == b else n for n in g.names)
            groups.append(replace(g, names=names))
        return replace(state, groups=tuple(groups))
    if len(involved) - 1 > max_partners:
        raise ValueError(f"crosstalk couples mode {i} to {len(involved) - 1} modes; limit {max_partners}")
    names = ["cav"] + [mode_name(j) for j in involved]
    d = state.cutoff
    dims = [d] * len(names)
    c = _embed(lowering(d), 0, dims)
    b = _wave_lowering(d, v, 1, dims)
    H = c.conj().T @ b
    H = H + H.conj().T
    # e^{-i pi H / 2} maps c -> -i b; the number phase removes the -i
    U = expm(-0.5j * np.pi * (H - c.conj().T @ c - b.conj().T @ b))
    out = apply_unitary(state, names, U)
    check_truncation(out)
    return out


def physical_occupation(state: RegisterState, i: int) -> float:
    """<b(k_i)^dagger b(k_i)> of the physical wave i (mode occupation without a Gram)."""
    involved, v = _physical_wave(state, i)
    if len(involved) == 1:
        return occupation(state, mode_name(i))
    names = [mode_name(j) for j in involved]
    dims = [state.cutoff] * len(names)
    b = _wave_lowering(state.cutoff, v, 0, dims)
    rho = reduced_density(state, names)
    return float(np.trace(rho @ b.conj().T @ b).real)


def _jc_hamiltonian(d: int, g: complex, detuning: float = 0.0) -> np.ndarray:
    """CPB (x) cavity: detuning |e><e| + g sigma+ a + h.c."""
    sp_ = np.array([[0, 0], [1, 0]], dtype=complex)  # |e><g|
    a = lowering(d)
    H = detuning * np.kron(np.diag([0.0, 1.0]), np.eye(d)) + g * np.kron(sp_, a)
    return H + np.conj(g) * np.kron(sp_, a).conj().T


def cpb_swap(state: RegisterState, hw: Optional[RegisterHardware] = None) -> RegisterState:
    """Resonant pi/2 CPB-cavity exchange plus frame correction.

    Exact SWAP on the one-excitation manifold; other manifolds evolve
    under the same Jaynes-Cummings pulse.
    """
    d = state.cutoff
    H = _jc_hamiltonian(d, 1.0)
    U = expm(-0.5j * np.pi * H)
    n_tot = np.kron(np.diag([0.0, 1.0]), np.eye(d)) + np.kron(np.eye(2), number(d))
    U = np.diag(np.exp(0.5j * np.pi * np.diag(n_tot))) @ U
    out = apply_unitary(state, ["cpb", "cav"], U)
    check_truncation(out, hw.leak_tol if hw else LEAK_TOL)
    return out


def cpb_one_qubit(state: RegisterState, axis: Sequence[float], angle: float) -> RegisterState:
    return apply_unitary(state, ["cpb"], cpb_rotation(*axis, angle))


HADAMARD = ((1 / np.sqrt(2), 0.0, 1 / np.sqrt(2)), np.pi)
PAULI_X = ((1.0, 0.0, 0.0), np.pi)


@dataclass(frozen=True)
class CzCalibration:
    """Two detuned CPB-cavity segments giving a conditional pi phase.

    Per segment: coupling area g*t and detuning area delta*t (radians);
    ``phases`` are the coupling phases of the two segments;
    ``local_phases`` (cavity, cpb) are the virtual-Z corrections.
    """

    coupling_area: float
    detuning_area: float
    phases: tuple
    local_phases: tuple
    residual: float

    def segment_time(self, g_cpb: float) -> float:
        return self.coupling_area / g_cpb

    def gate_time(self, g_cpb: float) -> float:
        return 2 * self.segment_time(g_cpb)

    def detuning(self, g_cpb: float) -> float:
        return self.detuning_area / self.segment_time(g_cpb)


def _manifold_blocks(phi2: float, gt: float, dt: float):
    U1 = np.eye(2, dtype=complex)
    U2 = np.eye(2, dtype=complex)
    for phi in (0.0, phi2):
        for n, U in ((1, U1), (2, U2)):
            g = np.sqrt(n) * gt * np.exp(1j * phi)
            # basis (|g, n>, |e, n-1>)
            H = np.array([[0, np.conj(g)], [g, dt]])
            U[:] = expm(-1j * H) @ U
    return U1, U2


@lru_cache(maxsize=None)
def calibrate_conditional_phase(phi_guess: float = -2.2323408588290006, tol: float = 1e-6) -> CzCalibration:
    """Find the second-segment phase that closes both manifolds.

    Each segment has g t = pi sqrt(3/8) and delta t = pi, so the
    two-excitation manifold makes a full cycle per segment; the relative
    coupling phase is solved so the one-excitation manifold closes too.
    """
    gt = np.pi * np.sqrt(3.0 / 8.0)
    dt = np.pi

    def resid(x):
        U1, U2 = _manifold_blocks(x[0], gt, dt)
        cond = U2[1, 1] / (U1[0, 0] * U1[1, 1])
        return np.array([U1[0, 1].real, U1[0, 1].imag, (cond + 1).real, (cond + 1).imag])

    sol = least_squares(resid, [phi_guess], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    res = float(np.linalg.norm(resid(sol.x)))
    if res > tol:
        raise CalibrationError(f"conditional-phase calibration residual {res:.2e} > {tol:.0e}")
    U1, _ = _manifold_blocks(sol.x[0], gt, dt)
    cav_phase = -float(np.angle(U1[0, 0]))  # |g,1>
    cpb_phase = -float(np.angle(U1[1, 1]))  # |e,0>
    return CzCalibration(gt, dt, (0.0, float(sol.x[0])), (cav_phase, cpb_phase), res)


def cz_generator_superops(hw: RegisterHardware, d: int, cal: CzCalibration) -> list:
    """One propagator (unitary or superoperator) per calibrated segment."""
    t = cal.segment_time(hw.g_cpb)
    delta = cal.detuning(hw.g_cpb)
    collapse = []
    if hw.kappa > 0:
        collapse.append(np.sqrt(hw.kappa) * np.kron(np.eye(2), lowering(d)))
    collapse += [np.kron(c, np.eye(d)) for c in hw.cpb_collapse()]
    out = []
    for phi in cal.phases:
        H = _jc_hamiltonian(d, hw.g_cpb * np.exp(1j * phi), delta)
        if collapse:
            out.append(("super", expm(_lindblad(H, collapse) * t)))
        else:
            out.append(("unitary", expm(-1j * H * t)))
    return out


def cpb_cavity_conditional_phase(
    state: RegisterState, hw: RegisterHardware, cal: Optional[CzCalibration] = None
) -> RegisterState:
    """Controlled-Z between the CPB and the cavity's {0, 1} photon qubit."""
    cal = cal or calibrate_conditional_phase()
    d = state.cutoff
    names = ["cpb", "cav"]
    for kind, P in cz_generator_superops(hw, d, cal):
        state = apply_unitary(state, names, P) if kind == "unitary" else apply_superop(state, names, P)
    cav_phase, cpb_phase = cal.local_phases
    state = apply_unitary(state, ["cav"], np.diag(np.exp(1j * cav_phase * np.arange(d))))
    state = apply_unitary(state, ["cpb"], np.diag(np.exp(1j * cpb_phase * np.arange(2))))
    check_truncation(state, hw.leak_tol)
    return state


def wait(state: RegisterState, hw: RegisterHardware, duration: float) -> RegisterState:
    """Idle: cavity decay, CPB relaxation and mode dephasing."""
    if duration < 0:
        raise ValueError("negative wait")
    if duration == 0:
        return state
    if hw.kappa > 0:
        state = apply_kraus(state, ["cav"], damping_kraus(state.cutoff, math.exp(-hw.kappa * duration)))
    cpb_c = hw.cpb_collapse()
    if cpb_c:
        S = expm(_lindblad(np.zeros((2, 2), dtype=complex), cpb_c) * duration)
        state = apply_superop(state, ["cpb"], S)
    if hw.mode_dephasing > 0:
        state = dephase_modes(state, hw.mode_dephasing, duration)
    return state


def dephase_modes(state: RegisterState, rate: float, duration: float, modes: Optional[Sequence[int]] = None) -> RegisterState:
    """Pure dephasing: coherence between n and m damped by e^{-rate t (n-m)^2}."""
    if rate < 0:
        raise ValueError("dephasing rate must be non-negative")
    if rate == 0 or duration == 0:
        return state
    d = state.cutoff
    n = np.arange(d)
    damp = np.exp(-rate * duration * (n[:, None] - n[None, :]) ** 2)
    S = np.diag(damp.reshape(-1)).astype(complex)
    for i in modes if modes is not None else range(state.n_modes):
        state = apply_superop(state, [mode_name(i)], S)
    return state


def measure_cpb(state: RegisterState) -> tuple:
    """Non-selective projective readout of the CPB; returns (state, P(e))."""
    p = float(reduced_density(state, ["cpb"])[1, 1].real)
    P0 = np.diag([1.0, 0.0]).astype(complex)
    P1 = np.diag([0.0, 1.0]).astype(complex)
    return apply_kraus(state, ["cpb"], [P0, P1]), p


def predicted_cooling_cycles(initial: float, ratio: float, kappa: float, t_wait: float) -> int:
    if initial <= 0:
        return 0
    return max(1, math.ceil(math.log(1.0 / ratio) / (kappa * t_wait)))


def cool_mode(
    state: RegisterState,
    i: int,
    hw: RegisterHardware,
    ratio: float = 1e-6,
    wait_time: Optional[float] = None,
    max_cycles: int = 100,
) -> tuple:
    """Swap mode i into the lossy cavity and back until it is cold.

    Returns (state, cycles). The cavity is assumed empty at the start.
    """
    if not hw.kappa > 0:
        raise ValueError("cooling needs cavity decay (kappa > 0)")
    t_wait = 10.0 / hw.kappa if wait_time is None else wait_time
    name = mode_name(i)
    start = occupation(state, name)
    if start == 0:
        return state, 0
    cycles = 0
    while occupation(state, name) >= ratio * start:
        if cycles >= max_cycles:
            raise RuntimeError(f"mode {i} not cooled after {max_cycles} cycles")
        state = swap_mode_cavity(state, i)
        state = apply_kraus(state, ["cav"], damping_kraus(state.cutoff, math.exp(-hw.kappa * t_wait)))
        state = swap_mode_cavity(state, i)
        cycles += 1
    return state, cycles


def thermal_populations(p: float, cutoff: int) -> np.ndarray:
    """Truncated geometric distribution whose mean is exactly ``p``."""
    if not 0 <= p < 1:
        raise ValueError("thermal occupation must satisfy 0 <= p < 1")
    n = np.arange(cutoff)
    if p == 0:
        return (n == 0).astype(float)
    if p >= (cutoff - 1) / 2:
        raise ValueError(f"mean occupation {p} too large for cutoff {cutoff}")

    def mean(x):
        w = x**n
        return float(w @ n / w.sum())

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean(mid) < p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    w = x**n
    return w / w.sum()


# --------------------------------------------------------------------------
# programs


GATE_KINDS = ("write", "swap", "cpb_swap", "one_qubit", "two_qubit", "cz", "cool", "read", "wait")


@dataclass(frozen=True)
class GateOp:
    kind: str
    modes: tuple = ()
    axis: tuple = (0.0, 0.0, 1.0)
    angle: float = 0.0
    duration: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        need = {"write": 1, "swap": 1, "cool": 1, "read": 1, "two_qubit": 2}.get(self.kind, 0)
        if len(self.modes) != need:
            raise ValueError(f"{self.kind} takes {need} mode(s), got {len(self.modes)}")
        if self.kind == "two_qubit" and self.modes[0] == self.modes[1]:
            raise ValueError("two_qubit needs two distinct modes")
        if self.duration < 0:
            raise ValueError("negative duration")


def expand_two_qubit(i: int, j: int) -> list:
    """Control i to the CPB, target j to the cavity, CZ, then unwind."""
    fwd = [GateOp("swap", (i,)), GateOp("cpb_swap"), GateOp("swap", (j,))]
    return fwd + [GateOp("cz")] + [GateOp("swap", (j,)), GateOp("cpb_swap"), GateOp("swap", (i,))]


@dataclass
class RunResult:
    state: RegisterState
    log: list = field(default_factory=list)
    readouts: dict = field(default_factory=dict)


def apply_gate(state: RegisterState, op: GateOp, hw: RegisterHardware) -> tuple:
    """Apply one op; returns (state, extra log fields)."""
    extra = {}
    for m in op.modes:
        if not 0 <= m < state.n_modes:
            raise IndexError(f"mode {m} not in the register")
    if op.kind in ("write", "swap"):
        state = swap_mode_cavity(state, op.modes[0])
    elif op.kind == "cpb_swap":
        state = cpb_swap(state, hw)
    elif op.kind == "one_qubit":
        state = cpb_one_qubit(state, op.axis, op.angle)
    elif op.kind == "cz":
        state = cpb_cavity_conditional_phase(state, hw)
    elif op.kind == "two_qubit":
        for sub in expand_two_qubit(*op.modes):
            state, _ = apply_gate(state, sub, hw)
    elif op.kind == "cool":
        state, cycles = cool_mode(state, op.modes[0], hw)
        extra["cycles"] = cycles
    elif op.kind == "read":
        i = op.modes[0]
        state = swap_mode_cavity(state, i)
        state = cpb_swap(state, hw)
        state, p = measure_cpb(state)
        state = cpb_swap(state, hw)
        state = swap_mode_cavity(state, i)
        extra["p_excited"] = p
    elif op.kind == "wait":
        state = wait(state, hw, op.duration)
    return state, extra


def run_program(state: RegisterState, ops: Sequence[GateOp], hw: RegisterHardware) -> RunResult:
    """Apply ``ops`` in order, logging occupations after each one."""
    result = RunResult(state)
    for idx, op in enumerate(ops):
        try:
            state, extra = apply_gate(state, op, hw)
        except Exception as exc:
            raise ProgramError(idx, op.kind, exc) from exc
        entry = {
            "index": idx,
            "kind": op.kind,
            "modes": list(op.modes),
            "occupations": {n: occupation(state, n) for n in sorted(state.names)},
            "max_top_level": max_leakage(state),
        }
        entry.update(extra)
        if "p_excited" in extra:
            result.readouts[op.label or f"read{idx}"] = extra["p_excited"]
        result.log.append(entry)
    result.state = state
    return result


# --------------------------------------------------------------------------
# process fidelity


def choi_matrix(channel: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    """J = sum_ij |i><j| (x) channel(|i><j|), normalised to trace 1."""
    J = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1.0
            J += np.kron(E, channel(E))
    return J / d


def process_fidelity(channel: Callable[[np.ndarray], np.ndarray], U: np.ndarray) -> float:
    """Overlap of the channel's Choi state with that of the unitary U."""
    d = U.shape[0]
    J = choi_matrix(channel, d)
    phi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        phi += np.kron(e, U[:, i])
    phi /= np.sqrt(d)
    return float(np.vdot(phi, J @ phi).real)


def embed_qubits(rho: np.ndarray, n_qubits: int, cutoff: int) -> np.ndarray:
    """Embed a 2^n x 2^n operator into the {0, 1} levels of n cutoff-level systems."""
    idx = [np.ravel_multi_index(bits, (cutoff,) * n_qubits) for bits in np.ndindex(*(2,) * n_qubits)]
    D = cutoff**n_qubits
    out = np.zeros((D, D), dtype=complex)
    out[np.ix_(idx, idx)] = rho
    return out


def restrict_qubits(rho: np.ndarray, n_qubits: int, cutoff: int) -> np.ndarray:
    idx = [np.ravel_multi_index(bits, (cutoff,) * n_qubits) for bits in np.ndindex(*(2,) * n_qubits)]
    return rho[np.ix_(idx, idx)]


def program_channel(
    ops: Sequence[GateOp], hw: RegisterHardware, modes: Sequence[int], n_modes: int, cutoff: int = 3, gram=None
) -> Callable[[np.ndarray], np.ndarray]:
    """The program as a linear map on the qubit subspace of ``modes``."""
    names = [mode_name(m) for m in modes]
    k = len(modes)

    def channel(E: np.ndarray) -> np.ndarray:
        state = joint_state(RegisterState(n_modes, cutoff, gram=gram), names, embed_qubits(E, k, cutoff))
        for op in ops:
            state, _ = apply_gate(state, op, hw)
        return restrict_qubits(reduced_density(state, names), k, cutoff)

    return channel


CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def cpb_cavity_cz_fidelity(hw: RegisterHardware, cutoff: int = 3) -> float:
    """Process fidelity of the CPB-cavity gate alone (qubit order: cpb, cavity)."""
    def channel(E):
        state = joint_state(RegisterState(1, cutoff), ["cpb", "cav"], _embed_cpb_cav(E, cutoff))
        state = cpb_cavity_conditional_phase(state, hw)
        rho = reduced_density(state, ["cpb", "cav"])
        idx = [0, 1, cutoff, cutoff + 1]
        return rho[np.ix_(idx, idx)]

    return process_fidelity(channel, CZ)


def _embed_cpb_cav(E: np.ndarray, cutoff: int) -> np.ndarray:
    idx = [0, 1, cutoff, cutoff + 1]
    out = np.zeros((2 * cutoff, 2 * cutoff), dtype=complex)
    out[np.ix_(idx, idx)] = E
    return out
