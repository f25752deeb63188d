"""Exact second-moment recursion for every sampler on isotropic Gaussian targets.

With f(x) = |x - m|^2 / (2 s^2) each sampler is, coordinate by coordinate,
a linear map of the state (z, v, g) with z = x - m, chosen at random by
the coordinate draw and followed by additive Gaussian noise. Coordinate i
is selected with probability 1/d independently of the state, so the
per-coordinate means and raw second moments obey an exact affine
recursion::

    mean'  = sum_k p_k A_k mean
    S'     = sum_k p_k A_k S A_k^T + Q

where the A_k are the "selected" and "not selected" maps. Finite
differences are exact on quadratics, so the recursion covers both gradient
modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import transition_covariance, transition_mean_coefficients
from .model import KernelParams, TargetModel
from .samplers import InitialDistribution, SamplerKind

__all__ = [
    "MomentTrajectory",
    "UnstableChainError",
    "transition_maps",
    "gaussian_chain_moment_propagation",
    "stationary_moments",
    "plateau_reached",
]

# per-coordinate state layout
_Z, _V, _G = 0, 1, 2


class UnstableChainError(ArithmeticError):
    """The second-moment recursion has spectral radius >= 1."""


def _gaussian_params(target: TargetModel):
    if target.name != "gaussian":
        raise ValueError(f"moment propagation needs a Gaussian target, got {target.name!r}")
    return np.asarray(target.params["mean"], dtype=float), 1.0 / target.params["var"]


def _active(kind: SamplerKind):
    idx = [_Z]
    if kind.underdamped:
        idx.append(_V)
    if kind.estimator == "rcad":
        idx.append(_G)
    return idx


def transition_maps(kind: SamplerKind, d: int, params: KernelParams, precision: float = 1.0):
    """Branch maps ``[(p_k, A_k)]`` and noise covariance ``Q`` on (z, v, g).

    ``precision`` is 1/s^2, so the gradient is ``precision * z``.
    """
    kind = SamplerKind.parse(str(kind))
    h, k = params.h, precision

    if kind.underdamped:
        a, b, e, c = transition_mean_coefficients(h, params.gamma)
        cxx, cxv, cvv = transition_covariance(h, params.gamma)
        Q = np.array([[cxx, cxv, 0.0], [cxv, cvv, 0.0], [0.0, 0.0, 0.0]])

        def step(fz, fg, g_row):
            # flux F = fz * z + fg * g
            return np.array(
                [
                    [1.0 - b * fz, a, -b * fg],
                    [-c * fz, e, -c * fg],
                    g_row,
                ]
            )
    else:
        Q = np.diag([2.0 * h, 0.0, 0.0])

        def step(fz, fg, g_row):
            return np.array([[1.0 - h * fz, 0.0, -h * fg], [0.0, 1.0, 0.0], g_row])

    keep_g = [0.0, 0.0, 1.0]
    p = 1.0 / d
    if kind.estimator == "full":
        return [(1.0, step(k, 0.0, keep_g))], Q
    if kind.estimator == "rcd":
        return [(p, step(d * k, 0.0, keep_g)), (1.0 - p, step(0.0, 0.0, keep_g))], Q
    # selected: F = g + d (k z - g), g' = k z; otherwise F = g, g' = g
    refresh = [k, 0.0, 0.0]
    return [(p, step(d * k, -(d - 1.0), refresh)), (1.0 - p, step(0.0, 1.0, keep_g))], Q


def _spectral_radius(maps, idx):
    n = len(idx)
    T = sum(pk * np.kron(A[np.ix_(idx, idx)], A[np.ix_(idx, idx)]) for pk, A in maps)
    return float(np.max(np.abs(np.linalg.eigvals(T)))) if n else 0.0


@dataclass
class MomentTrajectory:
    """Per-coordinate moments at steps 0..M (arrays of shape ``(M + 1, d)``).

    ``second_*`` are raw moments E[x_i^2], E[v_i^2], E[x_i v_i].
    """

    kind: SamplerKind
    params: KernelParams
    mean_x: np.ndarray
    second_x: np.ndarray
    mean_v: np.ndarray | None
    second_v: np.ndarray | None
    cross_xv: np.ndarray | None
    spectral_radius: float

    @property
    def steps(self) -> int:
        return self.mean_x.shape[0] - 1

    @property
    def var_x(self) -> np.ndarray:
        return self.second_x - self.mean_x**2

    @property
    def sq_norm_x(self) -> np.ndarray:
        """E|x^m|^2 for every m."""
        return self.second_x.sum(axis=1)

    @property
    def sq_norm_v(self) -> np.ndarray:
        return self.second_v.sum(axis=1)

    @property
    def sq_norm_w(self) -> np.ndarray:
        """E|x^m + v^m|^2 for every m."""
        return (self.second_x + self.second_v + 2.0 * self.cross_xv).sum(axis=1)


def _initial_moments(target, kind, init: InitialDistribution):
    mean_t, prec = _gaussian_params(target)
    d = target.dim
    mu = np.zeros((d, 3))
    S = np.zeros((d, 3, 3))
    mz = init.mean_x - mean_t
    mu[:, _Z] = mz
    S[:, _Z, _Z] = mz**2 + init.std_x**2
    if kind.underdamped:
        mu[:, _V] = init.mean_v
        S[:, _V, _V] = init.mean_v**2 + init.std_v**2
        S[:, _Z, _V] = S[:, _V, _Z] = mz * init.mean_v
    if kind.estimator == "rcad":
        # g0 = grad f(x0) = prec * z0
        mu[:, _G] = prec * mu[:, _Z]
        S[:, _G, _G] = prec**2 * S[:, _Z, _Z]
        S[:, _Z, _G] = S[:, _G, _Z] = prec * S[:, _Z, _Z]
        S[:, _V, _G] = S[:, _G, _V] = prec * S[:, _Z, _V]
    return mean_t, mu, S


def gaussian_chain_moment_propagation(
    target: TargetModel,
    kind,
    params: KernelParams,
    steps: int,
    init: InitialDistribution = InitialDistribution(),
) -> MomentTrajectory:
    """Exact moment trajectory of ``kind`` on a Gaussian target for ``steps`` steps."""
    kind = SamplerKind.parse(str(kind))
    mean_t, mu, S = _initial_moments(target, kind, init)
    _, prec = _gaussian_params(target)
    d = target.dim
    maps, Q = transition_maps(kind, d, params, prec)
    A_bar = sum(pk * A for pk, A in maps)
    rho = _spectral_radius(maps, _active(kind))

    # coordinates whose (target mean, init) agree share moments; propagate once
    uniq, inverse = np.unique(np.column_stack([mu[:, _Z], S[:, _Z, _Z]]), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    first = np.array([np.flatnonzero(inverse == u)[0] for u in range(len(uniq))])
    mus = np.empty((steps + 1, len(first), 3))
    Ss = np.empty((steps + 1, len(first), 3, 3))
    mus[0], Ss[0] = mu[first], S[first]
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(1, steps + 1):
            mus[m] = mus[m - 1] @ A_bar.T
            S_new = np.broadcast_to(Q, Ss[m - 1].shape).copy()
            for pk, A in maps:
                S_new += pk * (A @ Ss[m - 1] @ A.T)
            Ss[m] = S_new
    mus, Ss = mus[:, inverse], Ss[:, inverse]

    mz, szz = mus[:, :, _Z], Ss[:, :, _Z, _Z]
    mean_x = mz + mean_t
    second_x = szz + 2.0 * mean_t * mz + mean_t**2
    mean_v = second_v = cross = None
    if kind.underdamped:
        mean_v = mus[:, :, _V]
        second_v = Ss[:, :, _V, _V]
        cross = Ss[:, :, _Z, _V] + mean_t * mean_v
    return MomentTrajectory(kind, params, mean_x, second_x, mean_v, second_v, cross, rho)


def stationary_moments(target: TargetModel, kind, params: KernelParams) -> dict:
    """Fixed point of the recursion: E x_i^2 per coordinate, E v_i^2 and E x_i v_i.

    Raises UnstableChainError when no stationary second moments exist.
    """
    kind = SamplerKind.parse(str(kind))
    mean_t, prec = _gaussian_params(target)
    maps, Q = transition_maps(kind, target.dim, params, prec)
    idx = _active(kind)
    rho = _spectral_radius(maps, idx)
    if rho >= 1.0:
        raise UnstableChainError(f"{kind} at h={params.h} is unstable (spectral radius {rho:.6g})")
    n = len(idx)
    T = sum(pk * np.kron(A[np.ix_(idx, idx)], A[np.ix_(idx, idx)]) for pk, A in maps)
    S = np.linalg.solve(np.eye(n * n) - T, Q[np.ix_(idx, idx)].reshape(-1)).reshape(n, n)
    # stationary mean of z is 0, so E x^2 = S_zz + m^2
    out = {"second_x": S[0, 0] + mean_t**2, "var_x": S[0, 0], "spectral_radius": rho}
    if kind.underdamped:
        out["second_v"] = S[1, 1]
        out["cross_xv"] = S[0, 1]
    return out


def plateau_reached(values, rel_change: float = 0.01, window: float = 0.1) -> bool:
    """True if ``values`` moved by at most ``rel_change`` (relative) over its trailing ``window`` fraction."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2 or not np.all(np.isfinite(values)):
        return False
    start = values[max(0, n - 1 - max(1, int(round(window * (n - 1)))))]
    end = values[-1]
    return bool(abs(end - start) <= rel_change * abs(end))
