"""Error mechanisms and Monte Carlo scaling measurements.

Covers thermal mode occupation, finite polarisation, imperfect echo
pulses (classical Bloch vectors), pure dephasing in both engines and a
small log-log sweep driver.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import bloch
from .exact import SectorState, fit_exchange_frequency, vacuum_rabi_trace
from .modes import RegisterLayout, gram_matrix, mode_vector, select_register_modes, winding_numbers
from .physical import (
    DEFAULT_CONSTANTS,
    TWO_PI,
    EnsembleGeometry,
    EnsembleSpec,
    PhysicalConstants,
    build_ensemble,
    collective_rabi,
    thermal_probability,
)
from .register import RegisterState, dephase_modes, mode_name, product_state, reduced_density, thermal_populations

DIPOLAR_BROADENING = TWO_PI * 50e3


@dataclass(frozen=True)
class NoiseConfig:
    """Noise parameters; give either ``temperature`` (K) or ``p`` directly."""

    temperature: Optional[float] = None
    p: Optional[float] = None
    sigma_inh: float = 0.0
    gamma_dd: float = DIPOLAR_BROADENING
    eps1: float = 0.0
    eps2: float = 0.0
    shots: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_inh", "gamma_dd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("eps1", "eps2"):
            if not abs(getattr(self, name)) < 0.5:
                raise ValueError(f"|{name}| must be below 0.5")
        if self.temperature is not None and not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.p is not None and not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        if self.shots < 1:
            raise ValueError("need at least one shot")

    def excitation_probability(self, omega: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
        if self.p is not None:
            return self.p
        if self.temperature is None:
            return 0.0
        return thermal_probability(constants, omega, self.temperature)


# --------------------------------------------------------------------------
# thermal and finite polarisation


def thermal_register_state(layout, p: float, cutoff: int = 3) -> RegisterState:
    """Every register mode in a truncated thermal state with mean occupation p."""
    n_modes = layout.n_modes if isinstance(layout, RegisterLayout) else int(layout)
    if p >= 1:
        raise ValueError("thermal occupation p must be below 1")
    if p > 1e-2:
        warnings.warn(f"p = {p} is not small; the bosonic mode picture degrades", stacklevel=2)
    pops = thermal_populations(p, cutoff)
    rho = np.diag(pops).astype(complex)
    return product_state(n_modes, cutoff, {mode_name(i): rho for i in range(n_modes)})


def sample_occupations(state: RegisterState, modes: Sequence[int], shots: int, rng: np.random.Generator) -> np.ndarray:
    """Joint Fock-number samples (shots x len(modes)) from the reduced state."""
    names = [mode_name(i) for i in modes]
    probs = np.clip(np.diag(reduced_density(state, names)).real, 0, None)
    probs /= probs.sum()
    flat = rng.choice(probs.size, size=shots, p=probs)
    return np.stack(np.unravel_index(flat, (state.cutoff,) * len(modes)), axis=1)


def finite_polarization_commutator(
    geom: EnsembleGeometry, excited: Sequence[int], k_i: float, k_j: float
) -> complex:
    """<[b(k_i), b^dagger(k_j)]> with the listed spins excited.

    sum_q w_q e^{i (k_j - k_i) z_q} s_q, s_q = +1 for ground and -1 for
    excited spins; reduces to M(k_j - k_i) for a fully polarised sample.
    """
    sign = np.ones(geom.n_spins)
    idx = np.asarray(list(excited), dtype=int)
    if idx.size:
        if idx.min() < 0 or idx.max() >= geom.n_spins:
            raise IndexError("excited spin index out of range")
        sign[idx] = -1.0
    return complex(np.sum(geom.weights * sign * np.exp(1j * (k_j - k_i) * geom.positions)))


def random_excited_set(n_spins: int, p: float, rng: np.random.Generator) -> np.ndarray:
    return np.flatnonzero(rng.random(n_spins) < p)


# --------------------------------------------------------------------------
# echo imperfections


@dataclass
class EchoGains:
    k0: float
    inhomogeneous: float
    register: np.ndarray
    windings: tuple = ()
    note: str = "inhomogeneous mode normalised to unit norm before projection"


def echo_pair_bloch(
    geom: EnsembleGeometry,
    eps1: float,
    eps2: float,
    detunings: np.ndarray,
    T: float,
    drive_phase: float = 0.0,
) -> np.ndarray:
    """Bloch vectors after pulse(eps1), free precession for T, pulse(eps2).

    The pulse area follows the cavity profile around pi: theta_q =
    pi (1 + eps a_q) with a_q = |g_q| / g_bar and axis phase arg g_q.
    """
    a, phase = bloch.drive_profile(geom)
    phase = phase + drive_phase
    s = bloch.polarized(geom.n_spins)
    s = bloch.rotate(s, np.pi * (1 + eps1 * a), phase)
    s = bloch.precess(s, np.asarray(detunings) * T)
    s = bloch.rotate(s, np.pi * (1 + eps2 * a), phase)
    return s


def echo_error_injection(
    geom: EnsembleGeometry,
    layout: RegisterLayout,
    eps1: float,
    eps2: float,
    detunings: np.ndarray,
    T: float = 1.0,
    drive_phase: float = 0.0,
) -> EchoGains:
    """Excitation deposited by an imperfect echo pair, classical approximation.

    The inhomogeneous mode is the k = 0 mode carrying the phases
    e^{i delta_q T} picked up in the first interval.
    """
    detunings = np.asarray(detunings, dtype=float)
    if detunings.shape != (geom.n_spins,):
        raise ValueError("need one detuning per spin")
    s = echo_pair_bloch(geom, eps1, eps2, detunings, T, drive_phase)
    c0 = bloch.k_mode(geom, 0.0)
    inh = c0 * np.exp(1j * detunings * T)
    inh /= np.linalg.norm(inh)
    ks = layout.wavenumbers(geom.length)
    reg = np.array([bloch.mode_occupation_product(s, bloch.k_mode(geom, k)) for k in ks])
    return EchoGains(
        k0=bloch.mode_occupation_product(s, c0),
        inhomogeneous=bloch.mode_occupation_product(s, inh),
        register=reg,
        windings=tuple(layout.winding),
    )


def expected_k0_gain(n_spins: int, eps2: float) -> float:
    """Small-eps prediction for a uniform ensemble: N (pi eps / 2)^2."""
    return n_spins * (np.pi * eps2 / 2) ** 2


# --------------------------------------------------------------------------
# dephasing


@singledispatch
def dephasing_channel(state, rate: float, duration: float, rng=None):
    raise TypeError(f"no dephasing model for {type(state).__name__}")


@dephasing_channel.register
def _(state: RegisterState, rate: float, duration: float, rng=None) -> RegisterState:
    if rate < 0:
        raise ValueError("dephasing rate must be non-negative")
    return dephase_modes(state, rate, duration)


@dephasing_channel.register
def _(state: SectorState, rate: float, duration: float, rng=None) -> SectorState:
    """One Monte Carlo shot: Gaussian phase per spin with variance 2 rate t."""
    if rate < 0:
        raise ValueError("dephasing rate must be non-negative")
    if rate == 0 or duration == 0:
        return state
    if rng is None:
        raise ValueError("exact-engine dephasing needs an rng")
    phi = rng.normal(0.0, math.sqrt(2 * rate * duration), size=state.basis.n_spins)
    padded = np.concatenate([phi, [0.0]])
    amps = np.array(state.amplitudes)
    for block in state.basis.blocks:
        if block.n == 0:
            continue
        total = padded[block.spin_slots].sum(axis=1)
        amps[block.slice] *= np.exp(-1j * total)
    return SectorState(
        state.basis, amps, state.norm_deficit, state.leaked, state.inverted, state.global_phase, state.time
    )


@dataclass
class EchoRefocusResult:
    fidelity: float
    control_fidelity: float
    sigma_t: float
    n_spins: int


def static_echo_refocus(
    system,
    k: float,
    T: float,
    alpha: complex = 0.0,
    beta: complex = 1.0,
) -> EchoRefocusResult:
    """Stored qubit under static inhomogeneity, with and without a Hahn pair.

    The echo run is Wait(T), pi, Wait(T), pi; the control waits 2T. Both
    use the static offsets already in ``system``; perfect pulses only.
    """
    from .exact import SectorBasis, evolve, mode_qubit_state
    from .schedule import EchoPulse, PulseSchedule, Wait

    basis = SectorBasis(system.geom.n_spins, 1)
    start = mode_qubit_state(basis, system.geom, k, alpha, beta)
    echo = PulseSchedule((Wait(T), EchoPulse(0.0), Wait(T), EchoPulse(0.0)))
    control = PulseSchedule((Wait(2 * T),))

    def fid(state):
        return float(abs(np.vdot(start.amplitudes, state.amplitudes)) ** 2)

    sigma = float(np.std(system.static_offsets))
    return EchoRefocusResult(
        fidelity=fid(evolve(start, echo, system)),
        control_fidelity=fid(evolve(start, control, system)),
        sigma_t=sigma * T,
        n_spins=system.geom.n_spins,
    )


def coherence_half_life(rate: float) -> float:
    """Time for e^{-rate t} to fall to one half."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    return math.log(2) / rate


# --------------------------------------------------------------------------
# scaling sweeps


@dataclass
class SweepResult:
    name: str
    variable: str
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float
    shots: int

    def records(self) -> list:
        return [
            {"variable": self.variable, "value": float(x), "statistic": float(y), "stderr": float(e)}
            for x, y, e in zip(self.grid, self.values, self.stderr)
        ]


@dataclass(frozen=True)
class ScalingExperiment:
    name: str
    variable: str
    run: Callable  # (value, rng) -> float
    statistic: str = "mean"  # or "rms"
    expected_slope: Optional[float] = None
    default_grid: tuple = ()
    default_shots: int = 1


def rabi_vs_n(n: float, rng) -> float:
    geom = build_ensemble(EnsembleSpec(int(n), 1.0, g_bar=1.0))
    G = collective_rabi(geom)
    t = np.linspace(0.0, 10 * np.pi / G, 1001)
    return fit_exchange_frequency(t, vacuum_rabi_trace(geom, t))


def overlap_vs_n(n: float, rng, count: int = 8, scheme: str = "stride3") -> float:
    """Mean squared off-diagonal Gram entry of a randomly doped sample."""
    geom = build_ensemble(EnsembleSpec(int(n), 1.0, placement="uniform-random"), seed=int(rng.integers(2**63)))
    ks = TWO_PI * np.asarray(winding_numbers(count, scheme), dtype=float)
    G = gram_matrix(geom, ks)
    off = G[~np.eye(count, dtype=bool)]
    return float(np.mean(np.abs(off) ** 2))


def echo_gain_vs_eps(eps: float, rng, n_spins: int = 1000, sigma_t: float = 5.0, winding: int = 3) -> float:
    """Register-mode gain from an echo pair with eps1 = eps2 = eps."""
    geom = build_ensemble(EnsembleSpec(n_spins, 1.0, placement="uniform-random"), seed=int(rng.integers(2**63)))
    det = rng.normal(0.0, sigma_t, size=n_spins)
    s = echo_pair_bloch(geom, eps, eps, det, 1.0)
    return bloch.mode_occupation_product(s, mode_vector(geom, TWO_PI * winding).coefficients)


EXPERIMENTS = {
    "rabi-vs-N": ScalingExperiment("rabi-vs-N", "N", rabi_vs_n, "mean", 0.5, (4, 16, 64, 256), 1),
    "overlap-vs-N": ScalingExperiment("overlap-vs-N", "N", overlap_vs_n, "rms", -0.5, (100, 1000, 10000, 100000), 50),
    "echo-gain-vs-eps": ScalingExperiment(
        "echo-gain-vs-eps", "eps", echo_gain_vs_eps, "mean", 2.0, (0.01, 0.02, 0.04, 0.06, 0.08, 0.1), 100
    ),
}


def _shot(args):
    name, point, shot, value, seed = args
    rng = np.random.default_rng([seed, point, shot])
    return EXPERIMENTS[name].run(value, rng)


def _run_generic(run, tasks):
    out = []
    for point, shot, value, seed in tasks:
        out.append(run(value, np.random.default_rng([seed, point, shot])))
    return out


def scaling_sweep(
    experiment,
    grid: Optional[Sequence[float]] = None,
    shots: Optional[int] = None,
    seed: int = 0,
    jobs: int = 1,
) -> SweepResult:
    """Run ``experiment`` over ``grid`` and fit a log-log slope.

    ``experiment`` is a registered name or a ScalingExperiment. Shot i at
    grid point j draws from default_rng([seed, j, i]), so results do not
    depend on ``jobs``.
    """
    exp = EXPERIMENTS[experiment] if isinstance(experiment, str) else experiment
    grid = np.asarray(exp.default_grid if grid is None else grid, dtype=float)
    shots = exp.default_shots if shots is None else int(shots)
    if grid.ndim != 1 or grid.size < 4:
        raise ValueError("a scaling sweep needs at least 4 grid points")
    if np.any(grid <= 0) or np.unique(grid).size != grid.size:
        raise ValueError("grid values must be positive and distinct")
    if shots < 1:
        raise ValueError("need at least one shot")
    tasks = [(j, i, float(v), seed) for j, v in enumerate(grid) for i in range(shots)]
    if jobs > 1 and isinstance(experiment, str):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(_shot, [(exp.name, j, i, v, s) for j, i, v, s in tasks], chunksize=8))
    else:
        flat = _run_generic(exp.run, tasks)
    samples = np.asarray(flat, dtype=float).reshape(grid.size, shots)
    mean = samples.mean(axis=1)
    sem = samples.std(axis=1, ddof=1) / np.sqrt(shots) if shots > 1 else np.zeros(grid.size)
    if exp.statistic == "rms":
        values = np.sqrt(mean)
        err = 0.5 * sem / np.where(values > 0, values, 1)
    else:
        values, err = mean, sem
    if np.any(values <= 0):
        raise ValueError("log-log fit needs positive statistics")
    fit = stats.linregress(np.log(grid), np.log(values))
    return SweepResult(exp.name, exp.variable, grid, values, err, float(fit.slope), float(fit.stderr), float(fit.intercept), shots)
