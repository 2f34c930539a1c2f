"""Physical constants, device parameters and ensemble geometry.

Every frequency is an angular frequency in rad/s and every time is in
seconds. Report layers convert to Hz where they need to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import constants as sc
from scipy.special import expit

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = sc.hbar
    mu_B: float = sc.physical_constants["Bohr magneton"][0]
    k_B: float = sc.k
    g_factor: float = 2.0023

    def __post_init__(self):
        for name in ("hbar", "mu_B", "k_B", "g_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def m0(self) -> float:
        """Spin magnetic moment g·mu_B in J/T."""
        return self.g_factor * self.mu_B


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class DeviceParams:
    """Cavity, bias field and CPB settings of one device.

    ``max_delta_B`` is the largest field difference (T) the gradient coils
    can put across the sample; gradient pulse durations follow from it.
    """

    omega_c: float
    L: float
    kappa: float = 0.0
    B_bias: float = 0.18
    g_cpb: float = 0.0
    delta_cpb: float = 0.0
    cpb_t1: Optional[float] = None
    cpb_t2: Optional[float] = None
    max_delta_B: float = 1e-3

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ValueError("omega_c must be positive")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.B_bias < 0:
            raise ValueError("B_bias must be non-negative")
        if not self.max_delta_B > 0:
            raise ValueError("max_delta_B must be positive")
        for name in ("cpb_t1", "cpb_t2"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive when given")


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EnsembleGeometry:
    """Spin positions along the cavity and their complex couplings g_q."""

    positions: np.ndarray
    couplings: np.ndarray
    length: float
    g_bar: float = field(init=False)
    n_spins: int = field(init=False)

    def __post_init__(self):
        pos = _readonly(self.positions, float)
        cpl = _readonly(self.couplings, complex)
        if pos.ndim != 1 or cpl.ndim != 1:
            raise ValueError("positions and couplings must be 1-D")
        if pos.size != cpl.size:
            raise ValueError(
                f"{pos.size} positions but {cpl.size} couplings"
            )
        if pos.size == 0:
            raise ValueError("an ensemble needs at least one spin")
        if not self.length > 0:
            raise ValueError("length must be positive")
        if pos.min() < 0 or pos.max() > self.length:
            raise ValueError("positions must lie in [0, L]")
        weights = np.abs(cpl) ** 2
        if not weights.sum() > 0:
            raise ValueError("at least one spin must couple to the cavity")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "couplings", cpl)
        object.__setattr__(self, "n_spins", int(pos.size))
        object.__setattr__(self, "g_bar", float(np.sqrt(weights.mean())))

    @property
    def weights(self) -> np.ndarray:
        """Normalised coupling weights |g_q|^2 / (N g_bar^2); they sum to 1."""
        w = np.abs(self.couplings) ** 2
        return w / w.sum()


PROFILES = ("uniform", "cavity-mode", "table")
PLACEMENTS = ("grid", "uniform-random")


@dataclass(frozen=True)
class EnsembleSpec:
    """Recipe for :func:`build_ensemble`.

    ``g_bar`` fixes the rms coupling for the ``uniform`` and ``cavity-mode``
    profiles. The ``table`` profile takes its couplings verbatim.
    """

    n_spins: int
    length: float
    profile: str = "uniform"
    placement: str = "grid"
    g_bar: float = 1.0
    table: Optional[Sequence[complex]] = None

    def __post_init__(self):
        if self.n_spins < 1:
            raise ValueError("n_spins must be at least 1")
        if self.profile not in PROFILES:
            raise ValueError(
                f"unknown coupling profile {self.profile!r}; expected one of {PROFILES}"
            )
        if self.placement not in PLACEMENTS:
            raise ValueError(
                f"unknown placement {self.placement!r}; expected one of {PLACEMENTS}"
            )
        if self.profile == "table":
            if self.table is None or len(self.table) != self.n_spins:
                raise ValueError("table profile needs exactly n_spins couplings")
        elif not self.g_bar > 0:
            raise ValueError("g_bar must be positive")


def build_ensemble(spec: EnsembleSpec, seed: Optional[int] = None) -> EnsembleGeometry:
    """Place ``spec.n_spins`` spins and assign their couplings.

    The grid placement puts spins at cell midpoints (j + 1/2) L / N. The
    cavity-mode profile is the standing wave g(z) ∝ sin(2πz/L) of a
    full-wavelength resonator.
    """
    n, L = spec.n_spins, spec.length
    if spec.placement == "grid":
        z = (np.arange(n) + 0.5) * (L / n)
    else:
        z = np.random.default_rng(seed).uniform(0.0, L, size=n)

    if spec.profile == "uniform":
        g = np.full(n, spec.g_bar, dtype=complex)
    elif spec.profile == "cavity-mode":
        shape = np.sin(TWO_PI * z / L)
        rms = np.sqrt(np.mean(shape**2))
        if rms == 0:
            raise ValueError("all spins sit on cavity nodes")
        g = (spec.g_bar / rms) * shape.astype(complex)
    else:
        g = np.asarray(spec.table, dtype=complex)
    return EnsembleGeometry(positions=z, couplings=g, length=L)


def larmor_frequency(constants: PhysicalConstants, B: float) -> float:
    """Spin precession frequency m0 B / hbar (rad/s)."""
    if B < 0:
        raise ValueError("bias field must be non-negative")
    return constants.m0 * B / constants.hbar


def collective_rabi(geom: EnsembleGeometry) -> float:
    """Collective exchange rate sqrt(N) g_bar = sqrt(sum |g_q|^2)."""
    if geom.n_spins < 1:
        raise ValueError("empty ensemble")
    return float(np.sqrt(np.sum(np.abs(geom.couplings) ** 2)))


def thermal_probability(constants: PhysicalConstants, omega: float, T: float) -> float:
    """Excited-state population of a two-level system in equilibrium at T."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    if not omega > 0:
        raise ValueError("omega must be positive")
    x = constants.hbar * omega / (constants.k_B * T)
    return float(expit(-x))
