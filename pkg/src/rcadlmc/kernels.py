"""Markov transition kernels for overdamped and underdamped Langevin sampling.

The underdamped kernel samples the exact Gaussian transition of

    dX = V dt,  dV = -2V dt - gamma F dt + sqrt(4 gamma) dB

over one step of length h with the drift F frozen at the start of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnderdampedState",
    "UnderdampedMoments",
    "IndefiniteCovarianceError",
    "overdamped_step",
    "transition_covariance",
    "transition_mean_coefficients",
    "covariance_factor",
    "underdamped_moments",
    "underdamped_step",
]

# below this h the cov_xx series is used instead of the closed form
_SERIES_H = 0.1
_DET_TOL = 1e-15


class IndefiniteCovarianceError(ArithmeticError):
    pass


@dataclass
class UnderdampedState:
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class UnderdampedMoments:
    """Mean and isotropic per-coordinate 2x2 covariance of one underdamped step."""

    mean_x: np.ndarray
    mean_v: np.ndarray
    cov_xx: float
    cov_vv: float
    cov_xv: float

    @property
    def det(self) -> float:
        return self.cov_xx * self.cov_vv - self.cov_xv**2


def overdamped_step(x, flux, h: float, noise):
    """Euler-Maruyama update x - h * flux + sqrt(2h) * noise."""
    return np.asarray(x) - h * np.asarray(flux) + math.sqrt(2.0 * h) * np.asarray(noise)


def _cov_xx_series(h: float) -> float:
    # h + expm1(-2h) - expm1(-4h)/4 = sum_{k>=3} [(-2)^k - (-4)^k / 4] h^k / k!
    total, k, term2, term4, fact = 0.0, 1, 1.0, 1.0, 1.0
    while k < 40:
        term2 *= -2.0 * h
        term4 *= -4.0 * h
        fact *= k
        if k >= 3:
            inc = (term2 - 0.25 * term4) / fact
            total += inc
            if abs(inc) <= 1e-18 * abs(total):
                break
        k += 1
    return total


def transition_covariance(h: float, gamma: float):
    """Per-coordinate covariance scalars ``(cov_xx, cov_xv, cov_vv)``.

    cov_xx = gamma [h - 3/4 - e^{-4h}/4 + e^{-2h}],
    cov_vv = gamma [1 - e^{-4h}],
    cov_xv = gamma/2 [1 + e^{-4h} - 2 e^{-2h}] = gamma/2 (1 - e^{-2h})^2.
    """
    e2 = math.expm1(-2.0 * h)
    e4 = math.expm1(-4.0 * h)
    if h < _SERIES_H:
        cxx = gamma * _cov_xx_series(h)
    else:
        cxx = gamma * (h + e2 - 0.25 * e4)
    cvv = -gamma * e4
    cxv = 0.5 * gamma * e2 * e2
    return cxx, cxv, cvv


def transition_mean_coefficients(h: float, gamma: float):
    """Coefficients of the conditional mean.

    Returns ``(a, b, e, c)`` with E[x'] = x + a v - b F and E[v'] = e v - c F.
    """
    one_minus = -math.expm1(-2.0 * h)
    a = 0.5 * one_minus
    # h - a = h^2 - 2h^3/3 + ...; the series avoids cancellation at small h
    b = 0.5 * gamma * (_h_minus_a(h) if h < _SERIES_H else h - a)
    e = 1.0 - one_minus
    c = 0.5 * gamma * one_minus
    return a, b, e, c


def _h_minus_a(h: float) -> float:
    # h - (1 - e^{-2h})/2 = sum_{k>=2} (-2h)^k / (2 k!)
    total, term, fact = 0.0, 1.0, 1.0
    for k in range(1, 40):
        term *= -2.0 * h
        fact *= k
        if k >= 2:
            inc = term / (2.0 * fact)
            total += inc
            if abs(inc) <= 1e-18 * abs(total):
                break
    return total


def covariance_factor(cov_xx: float, cov_xv: float, cov_vv: float):
    """Lower-triangular square root ``(a, b, c)`` of [[cxx, cxv], [cxv, cvv]].

    x-noise = a z1, v-noise = b z1 + c z2. Raises if the determinant is
    below -1e-15; tiny negative determinants are clamped to zero.
    """
    det = cov_xx * cov_vv - cov_xv * cov_xv
    if det < -_DET_TOL or cov_xx < -_DET_TOL or cov_vv < -_DET_TOL:
        raise IndefiniteCovarianceError(
            f"transition covariance is indefinite: cxx={cov_xx!r}, cxv={cov_xv!r}, "
            f"cvv={cov_vv!r}, det={det!r}"
        )
    if cov_xx <= 0.0:
        return 0.0, 0.0, math.sqrt(max(cov_vv, 0.0))
    a = math.sqrt(cov_xx)
    b = cov_xv / a
    c = math.sqrt(max(det, 0.0) / cov_xx)
    return a, b, c


def underdamped_moments(state: UnderdampedState, flux, h: float, gamma: float) -> UnderdampedMoments:
    """Conditional mean and covariance of the next underdamped state."""
    a, b, e, c = transition_mean_coefficients(h, gamma)
    x, v, flux = np.asarray(state.x), np.asarray(state.v), np.asarray(flux)
    cxx, cxv, cvv = transition_covariance(h, gamma)
    return UnderdampedMoments(
        mean_x=x + a * v - b * flux,
        mean_v=e * v - c * flux,
        cov_xx=cxx,
        cov_vv=cvv,
        cov_xv=cxv,
    )


def underdamped_step(state: UnderdampedState, flux, h: float, gamma: float, noise) -> UnderdampedState:
    """Draw the next state; ``noise`` has shape ``(..., 2d)``.

    Coordinate i uses ``noise[..., i]`` and ``noise[..., d + i]``.
    """
    mom = underdamped_moments(state, flux, h, gamma)
    fa, fb, fc = covariance_factor(mom.cov_xx, mom.cov_xv, mom.cov_vv)
    noise = np.asarray(noise)
    d = mom.mean_x.shape[-1]
    z1, z2 = noise[..., :d], noise[..., d:]
    return UnderdampedState(x=mom.mean_x + fa * z1, v=mom.mean_v + fb * z1 + fc * z2)
