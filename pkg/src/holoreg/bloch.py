"""Classical (product-state) spin ensemble as an array of Bloch vectors.

Convention: s = (<sx>, <sy>, <sz>) with the ground state at sz = -1, so
<sigma_minus> = (sx - i sy)/2 and free precession at detuning delta
multiplies it by e^{-i delta t}.
"""

from __future__ import annotations

import numpy as np

from .modes import mode_vector
from .physical import EnsembleGeometry


def polarized(n: int) -> np.ndarray:
    s = np.zeros((n, 3))
    s[:, 2] = -1.0
    return s


def rotate(s: np.ndarray, angle, phase) -> np.ndarray:
    """Rotate each vector by ``angle`` about (cos phase, sin phase, 0)."""
    angle = np.broadcast_to(np.asarray(angle, dtype=float), s.shape[:1])
    phase = np.broadcast_to(np.asarray(phase, dtype=float), s.shape[:1])
    n = np.stack([np.cos(phase), np.sin(phase), np.zeros_like(phase)], axis=1)
    c, sn = np.cos(angle)[:, None], np.sin(angle)[:, None]
    dot = np.sum(n * s, axis=1)[:, None]
    return s * c + np.cross(n, s) * sn + n * dot * (1 - c)


def precess(s: np.ndarray, phase) -> np.ndarray:
    """sigma_minus -> e^{-i phase} sigma_minus (rotation about z)."""
    m = sigma_minus(s) * np.exp(-1j * np.asarray(phase))
    out = s.copy()
    out[:, 0] = 2 * m.real
    out[:, 1] = -2 * m.imag
    return out


def sigma_minus(s: np.ndarray) -> np.ndarray:
    return 0.5 * (s[:, 0] - 1j * s[:, 1])


def excited_population(s: np.ndarray) -> np.ndarray:
    return 0.5 * (1 + s[:, 2])


def mode_amplitude(s: np.ndarray, coefficients: np.ndarray) -> complex:
    """<b> = sum_q conj(c_q) <sigma_minus_q>."""
    return complex(np.vdot(coefficients, sigma_minus(s)))


def mode_occupation_product(s: np.ndarray, coefficients: np.ndarray) -> float:
    """<b^dagger b> for a product state of spins.

    |<b>|^2 plus the single-spin variance term sum |c_q|^2 (p_q - |<sigma_minus_q>|^2).
    """
    sm = sigma_minus(s)
    coherent = abs(np.vdot(coefficients, sm)) ** 2
    incoherent = np.sum(np.abs(coefficients) ** 2 * (excited_population(s) - np.abs(sm) ** 2))
    return float(coherent + incoherent)


def drive_profile(geom: EnsembleGeometry):
    """Relative pulse area and axis phase for a drive shaped like the cavity mode."""
    return np.abs(geom.couplings) / geom.g_bar, np.angle(geom.couplings)


def k_mode(geom: EnsembleGeometry, k: float) -> np.ndarray:
    return mode_vector(geom, k).coefficients
