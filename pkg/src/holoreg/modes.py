"""Spin-wave mode algebra: overlaps, Gram matrices and register selection.

A mode with wavenumber k has coefficients c_q = (g_q / g_bar) e^{ikz_q} / sqrt(N)
on the single-flip states. Two modes k_i, k_j commute up to the overlap
M(k_j - k_i) in the fully polarised limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .physical import EnsembleGeometry, PhysicalConstants, TWO_PI

SCHEMES = ("stride3", "dense")


@dataclass(frozen=True, eq=False)
class ModeVector:
    k: float
    coefficients: np.ndarray


def mode_vector(geom: EnsembleGeometry, k: float) -> ModeVector:
    c = geom.couplings / geom.g_bar * np.exp(1j * k * geom.positions) / np.sqrt(geom.n_spins)
    c.setflags(write=False)
    return ModeVector(k=float(k), coefficients=c)


def mode_matrix(geom: EnsembleGeometry, wavenumbers: Sequence[float]) -> np.ndarray:
    """Columns are the coefficient vectors of the given modes (N x n)."""
    ks = np.asarray(wavenumbers, dtype=float)
    phases = np.exp(1j * np.outer(geom.positions, ks))
    return (geom.couplings / (geom.g_bar * np.sqrt(geom.n_spins)))[:, None] * phases


def mode_overlap(geom: EnsembleGeometry, delta_k):
    """Discrete overlap M(dk) = sum_q e^{i dk z_q} |g_q|^2 / (N g_bar^2).

    Accepts a scalar or an array of wavenumber differences.
    """
    w = geom.weights
    dk = np.asarray(delta_k, dtype=float)
    if dk.ndim == 0:
        return complex(np.dot(w, np.exp(1j * float(dk) * geom.positions)))
    out = np.empty(dk.shape, dtype=complex)
    # one pass per value keeps memory at O(N) for million-spin ensembles
    for idx, value in np.ndenumerate(dk):
        out[idx] = np.dot(w, np.exp(1j * value * geom.positions))
    return out


def centered_overlap(geom: EnsembleGeometry, delta_k):
    """Overlap with positions measured from the sample centre.

    This strips the trivial phase e^{i dk L/2} that comes from putting the
    origin at one end of the sample; for a symmetric profile the result is
    real in the continuum limit.
    """
    dk = np.asarray(delta_k, dtype=float)
    return mode_overlap(geom, delta_k) * np.exp(-0.5j * dk * geom.length)


def continuum_overlap(delta_w):
    """Closed-form N -> infinity overlap for the sin(2πz/L) profile.

    M = sinc(π dw) / (1 - (dw/2)^2), with the removable points dw = ±2
    filled by their limit -1/2.
    """
    x = np.abs(np.asarray(delta_w, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        near_zero = np.sinc(x) / (1.0 - 0.25 * x * x)
        # same function rewritten around x = 2 so no 0/0 appears there
        elsewhere = -4.0 * np.sinc(2.0 - x) / (x * (2.0 + x))
    out = np.where(x < 1.0, near_zero, elsewhere)
    return float(out) if out.ndim == 0 else out


def winding_numbers(count: int, scheme: str = "stride3") -> list[int]:
    if count < 1:
        raise ValueError("a register needs at least one mode")
    if scheme == "stride3":
        return [3 * n for n in range(count)]
    if scheme == "dense":
        out = [0]
        m = 1
        while len(out) < count:
            out.extend([4 * m - 1, 4 * m])
            m += 1
        return out[:count]
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass(frozen=True, eq=False)
class RegisterLayout:
    """Chosen register modes (as winding numbers) and their overlap matrix."""

    winding: tuple
    gram: np.ndarray
    crosstalk_budget: float = 1e-12
    discrete: bool = field(default=False)

    def __post_init__(self):
        w = tuple(float(x) for x in self.winding)
        gram = np.array(self.gram, dtype=complex)
        gram.setflags(write=False)
        n = len(w)
        if n == 0:
            raise ValueError("empty register layout")
        if gram.shape != (n, n):
            raise ValueError(f"gram has shape {gram.shape}, expected {(n, n)}")
        if not np.allclose(gram, gram.conj().T, atol=1e-12, rtol=0):
            raise ValueError("gram matrix is not Hermitian")
        if not np.allclose(np.diag(gram), 1.0, atol=1e-9, rtol=0):
            raise ValueError("gram matrix must have unit diagonal")
        if self.max_crosstalk > self.crosstalk_budget:
            raise ValueError(
                f"off-diagonal overlap {self.max_crosstalk:.3e} exceeds the "
                f"crosstalk budget {self.crosstalk_budget:.3e}"
            )
        object.__setattr__(self, "winding", w)
        object.__setattr__(self, "gram", gram)

    @property
    def n_modes(self) -> int:
        return len(self.winding)

    @property
    def max_crosstalk(self) -> float:
        g = np.asarray(self.gram)
        off = g - np.diag(np.diag(g))
        return float(np.abs(off).max()) if off.size else 0.0

    def wavenumbers(self, length: float) -> np.ndarray:
        return TWO_PI * np.asarray(self.winding) / length

    def to_dict(self) -> dict:
        g = np.asarray(self.gram)
        return {
            "winding_numbers": list(self.winding),
            "gram_real": g.real.tolist(),
            "gram_imag": g.imag.tolist(),
            "crosstalk_budget": self.crosstalk_budget,
            "max_crosstalk": self.max_crosstalk,
            "discrete": self.discrete,
        }


def select_register_modes(
    count: int,
    scheme: str = "stride3",
    n_spins: int | None = None,
    crosstalk_budget: float = 1e-12,
) -> RegisterLayout:
    """Pick ``count`` register modes whose continuum overlaps all vanish.

    When ``n_spins`` is given the selection is checked against aliasing on a
    discrete lattice: no winding number may reach N/2.
    """
    w = winding_numbers(count, scheme)
    if n_spins is not None and max(w) >= n_spins / 2:
        raise ValueError(
            f"winding number {max(w)} aliases on a {n_spins}-spin lattice "
            f"(must stay below N/2 = {n_spins / 2:g})"
        )
    dw = np.subtract.outer(w, w).T  # entry (i, j) = w_j - w_i
    gram = continuum_overlap(dw.astype(float)).astype(complex)
    return RegisterLayout(winding=tuple(w), gram=gram, crosstalk_budget=crosstalk_budget)


def gram_matrix(geom: EnsembleGeometry, wavenumbers: Sequence[float]) -> np.ndarray:
    """Pairwise overlaps; entry (i, j) is M(k_j - k_i)."""
    if len(wavenumbers) == 0:
        raise ValueError("need at least one wavenumber")
    C = mode_matrix(geom, wavenumbers)
    G = C.conj().T @ C
    return 0.5 * (G + G.conj().T)


def layout_for_geometry(
    layout: RegisterLayout, geom: EnsembleGeometry, crosstalk_budget: float | None = None
) -> RegisterLayout:
    """Same modes, with the Gram matrix of the actual discrete ensemble."""
    if max(layout.winding) >= geom.n_spins / 2:
        raise ValueError("register winding numbers alias on this ensemble")
    gram = gram_matrix(geom, layout.wavenumbers(geom.length))
    if crosstalk_budget is None:
        off = gram - np.diag(np.diag(gram))
        crosstalk_budget = float(np.abs(off).max()) if off.size else 0.0
    return RegisterLayout(
        winding=layout.winding, gram=gram, crosstalk_budget=crosstalk_budget, discrete=True
    )


@dataclass(frozen=True)
class GradientPulseParams:
    delta_B: float  # field difference across the sample, T
    gradient: float  # T/m
    duration: float


def gradient_pulse_params(
    constants: PhysicalConstants, L: float, target_k: float, tau: float
) -> GradientPulseParams:
    """Field step needed to imprint e^{i k z} in a pulse of length ``tau``.

    Follows k = -m0 dB tau / (L hbar); a (k)-pulse shifts every stored
    wavenumber by +k.
    """
    if not tau > 0:
        raise ValueError("gradient pulse duration must be positive")
    delta_B = -target_k * L * constants.hbar / (constants.m0 * tau)
    return GradientPulseParams(delta_B=delta_B, gradient=delta_B / L, duration=tau)


def gradient_pulse_duration(
    constants: PhysicalConstants, L: float, target_k: float, max_delta_B: float
) -> float:
    """Shortest pulse reaching ``target_k`` without exceeding ``max_delta_B``."""
    if not max_delta_B > 0:
        raise ValueError("max_delta_B must be positive")
    return abs(target_k) * L * constants.hbar / (constants.m0 * max_delta_B)
