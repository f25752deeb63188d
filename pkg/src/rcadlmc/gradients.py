"""Finite-difference gradient surrogates: full, RCD and RCAD.

One "evaluation" is one centered difference along one coordinate (two
potential evaluations). Every routine accepts a single point of shape
``(d,)`` or a batch of shape ``(n, d)``; coordinate arguments are then
scalars or integer arrays of shape ``(n,)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TargetModel

__all__ = [
    "EvalCounter",
    "GradMemory",
    "FluxResult",
    "central_difference",
    "full_gradient_fd",
    "rcd_estimate",
    "rcad_init",
    "rcad_flux",
    "rcad_error_variance_enumerated",
]


@dataclass
class EvalCounter:
    count: int = 0

    def add(self, n: int = 1) -> None:
        self.count += n


@dataclass
class GradMemory:
    """Stale-gradient memory ``g`` of one chain (or a batch of chains)."""

    g: np.ndarray
    evals: int = 0


@dataclass
class FluxResult:
    flux: np.ndarray
    memory: GradMemory
    coord: object


def _tick(counter, n=1):
    if counter is not None:
        counter.add(n)


def _take(a, idx):
    idx = np.asarray(idx)
    if idx.ndim == 0:
        return a[..., int(idx)]
    return np.take_along_axis(a, idx[..., None], axis=-1)[..., 0]


def _put(a, idx, values):
    idx = np.asarray(idx)
    if idx.ndim == 0:
        a[..., int(idx)] = values
    else:
        np.put_along_axis(a, idx[..., None], np.asarray(values)[..., None], axis=-1)


def _shifted(x, idx, delta):
    y = np.array(x, dtype=float, copy=True)
    _put(y, idx, _take(y, idx) + delta)
    return y


def _symmetric_difference(target, x, eta, idx):
    if target.symmetric_difference is not None:
        return target.symmetric_difference(x, eta, idx)
    return target.potential(_shifted(x, idx, eta)) - target.potential(_shifted(x, idx, -eta))


def central_difference(target: TargetModel, x, i, eta: float, counter: EvalCounter | None = None):
    """[f(x + eta e_i) - f(x - eta e_i)] / (2 eta)."""
    x = np.asarray(x, dtype=float)
    _tick(counter)
    return _symmetric_difference(target, x, eta, i) / (2.0 * eta)


def full_gradient_fd(target: TargetModel, x, eta: float, counter: EvalCounter | None = None):
    """All d centered differences at ``x``; costs d evaluations."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    _tick(counter, d)
    if target.symmetric_difference is not None:
        return target.symmetric_difference(x, eta, None) / (2.0 * eta)
    out = np.empty_like(x)
    for j in range(d):
        out[..., j] = _symmetric_difference(target, x, eta, j) / (2.0 * eta)
    return out


def rcd_estimate(target: TargetModel, x, eta: float, r, counter: EvalCounter | None = None):
    """Random-coordinate surrogate d * (centered difference along r) * e_r.

    ``r`` is supplied by the caller, normally drawn uniformly from
    ``range(d)``.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.zeros_like(x)
    _put(out, r, d * central_difference(target, x, r, eta, counter))
    return out


def rcad_init(target: TargetModel, x0, eta: float) -> GradMemory:
    """Memory initialised with the full finite-difference gradient at ``x0``."""
    counter = EvalCounter()
    g = full_gradient_fd(target, x0, eta, counter)
    return GradMemory(g=g, evals=counter.count)


def _rcad_update(g, new, r):
    """Flux g + d (g' - g) where g' differs from g only at r; updates g in place."""
    d = g.shape[-1]
    old = _take(g, r)
    flux = g.copy()
    _put(flux, r, old + d * (new - old))
    _put(g, r, new)
    return flux


def rcad_flux(
    target: TargetModel,
    mem: GradMemory,
    x,
    eta: float,
    r,
    *,
    inplace: bool = False,
) -> FluxResult:
    """One RCAD step: refresh coordinate r of the memory and build the flux.

    With ``inplace=True`` the memory object is updated and returned,
    otherwise a new memory is returned and ``mem`` is left untouched.
    """
    new = central_difference(target, x, r, eta)
    out = mem if inplace else GradMemory(g=np.array(mem.g, dtype=float, copy=True), evals=mem.evals)
    flux = _rcad_update(out.g, new, r)
    out.evals += 1
    return FluxResult(flux=flux, memory=out, coord=r)


def rcad_error_variance_enumerated(target: TargetModel, mem: GradMemory, x) -> float:
    """E_r |grad f(x) - F(r)|^2 by enumerating every coordinate r.

    Uses analytic partials, so the result is free of finite-difference error.
    For a single point it should equal (d - 1) |grad f(x) - g|^2.
    """
    if not target.has_exact_partials:
        raise ValueError("enumerated variance needs a target with exact partials")
    x = np.asarray(x, dtype=float)
    g = np.asarray(mem.g, dtype=float)
    grad = target.exact_gradient(x)
    d = x.shape[-1]
    total = 0.0
    for r in range(d):
        work = g.copy()
        flux = _rcad_update(work, grad[..., r], r)
        total += float(np.sum((grad - flux) ** 2))
    return total / d
