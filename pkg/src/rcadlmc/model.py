"""Target distributions p ~ exp(-f) and step-size admissibility checks.

Arrays follow numpy batch conventions: a point is an array of shape
``(..., d)`` and coordinate indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "TargetModel",
    "KernelParams",
    "Condition",
    "AdmissibilityReport",
    "gaussian_target",
    "mixture_target",
    "validate_overdamped_params",
    "validate_underdamped_params",
]


@dataclass(frozen=True)
class TargetModel:
    """Potential f with the regularity constants used by the samplers.

    Attributes:
        dim: Dimension d.
        potential: Batched map ``(..., d) -> (...)``.
        mu: Strong convexity constant; 0 means "not strongly convex".
        lip_grad: Lipschitz constant L of the gradient.
        lip_hess: Lipschitz constant H of the hessian, if known.
        exact_gradient: Batched map ``(..., d) -> (..., d)`` returning the
            analytic gradient, if known.
        symmetric_difference: Optional fast path returning
            ``f(x + eta e_j) - f(x - eta e_j)``. Called as
            ``symmetric_difference(x, eta, coords)`` where ``coords`` is an int,
            an integer array broadcastable against ``x[..., 0]``, or None for
            every coordinate at once (result shape ``(..., d)``).
        name: Short label used in reports.
        params: Constructor parameters, echoed into reports.
    """

    dim: int
    potential: Callable[[np.ndarray], np.ndarray]
    mu: float
    lip_grad: float
    lip_hess: Optional[float] = None
    exact_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    symmetric_difference: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.lip_grad <= 0 or self.lip_grad < self.mu:
            raise ValueError("lip_grad must be positive and at least mu")
        if self.lip_hess is not None and self.lip_hess < 0:
            raise ValueError("lip_hess must be nonnegative")

    @property
    def has_exact_partials(self) -> bool:
        return self.exact_gradient is not None

    @property
    def condition_number(self) -> float:
        """kappa = L / mu (inf when mu = 0)."""
        return self.lip_grad / self.mu if self.mu > 0 else float("inf")

    def exact_partial(self, x, i):
        """Analytic partial derivative along coordinate(s) ``i``."""
        if self.exact_gradient is None:
            raise ValueError(f"target {self.name!r} has no exact partial derivatives")
        grad = self.exact_gradient(np.asarray(x, dtype=float))
        i = np.asarray(i)
        if i.ndim == 0:
            return grad[..., int(i)]
        return np.take_along_axis(grad, i[..., None], axis=-1)[..., 0]


@dataclass(frozen=True)
class KernelParams:
    """Time step ``h``, finite-difference step ``eta`` and coupling ``gamma``."""

    h: float
    eta: float
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("h", "eta", "gamma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")


def gaussian_target(dim: int, mean=0.0, var: float = 1.0) -> TargetModel:
    """Isotropic Gaussian N(mean, var * I) with f(x) = |x - mean|^2 / (2 var)."""
    if var <= 0:
        raise ValueError("var must be positive")
    mean_vec = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
    mean_vec.setflags(write=False)
    prec = 1.0 / var

    def potential(x):
        z = np.asarray(x, dtype=float) - mean_vec
        return 0.5 * prec * np.einsum("...i,...i->...", z, z)

    def gradient(x):
        return prec * (np.asarray(x, dtype=float) - mean_vec)

    def symmetric_difference(x, eta, coords=None):
        # exact for quadratics: f(x+eta e) - f(x-eta e) = 2 eta (x_j - m_j) / var
        x = np.asarray(x, dtype=float)
        if coords is None:
            return 2.0 * eta * prec * (x - mean_vec)
        coords = np.asarray(coords)
        if coords.ndim == 0:
            return 2.0 * eta * prec * (x[..., int(coords)] - mean_vec[int(coords)])
        xj = np.take_along_axis(x, coords[..., None], axis=-1)[..., 0]
        return 2.0 * eta * prec * (xj - mean_vec[coords])

    return TargetModel(
        dim=dim,
        potential=potential,
        mu=prec,
        lip_grad=prec,
        lip_hess=0.0,
        exact_gradient=gradient,
        symmetric_difference=symmetric_difference,
        name="gaussian",
        params={"mean": mean_vec, "var": float(var)},
    )


def mixture_target(dim: int, c: float = 2.0) -> TargetModel:
    """Equal mixture of N(c 1, I) and N(-c 1, I).

    f(x) = -log[exp(-|x - c1|^2/2) + exp(-|x + c1|^2/2)], evaluated with
    ``np.logaddexp`` so that exponents of order -1e4 do not underflow.
    The target is not log-concave for c >= 1, so ``mu`` is recorded as 0.
    """
    c = float(c)

    def _sq_dists(x):
        x = np.asarray(x, dtype=float)
        s = x.sum(axis=-1)
        q = np.einsum("...i,...i->...", x, x)
        base = q + dim * c * c
        return x, base - 2.0 * c * s, base + 2.0 * c * s

    def potential(x):
        _, a_plus, a_minus = _sq_dists(x)
        return -np.logaddexp(-0.5 * a_plus, -0.5 * a_minus)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        t = np.tanh(c * x.sum(axis=-1))
        return x - c * t[..., None]

    def symmetric_difference(x, eta, coords=None):
        x, a_plus, a_minus = _sq_dists(x)
        if coords is None:
            xj = x
            a_plus, a_minus = a_plus[..., None], a_minus[..., None]
        else:
            coords = np.asarray(coords)
            if coords.ndim == 0:
                xj = x[..., int(coords)]
            else:
                xj = np.take_along_axis(x, coords[..., None], axis=-1)[..., 0]
        e2 = eta * eta
        f_fwd = -np.logaddexp(
            -0.5 * (a_plus + 2.0 * eta * (xj - c) + e2),
            -0.5 * (a_minus + 2.0 * eta * (xj + c) + e2),
        )
        f_bwd = -np.logaddexp(
            -0.5 * (a_plus - 2.0 * eta * (xj - c) + e2),
            -0.5 * (a_minus - 2.0 * eta * (xj + c) + e2),
        )
        return f_fwd - f_bwd

    # hessian = I - c^2 sech^2(c s) 11^T, eigenvalues in [1 - c^2 d, 1]
    lip = max(1.0, c * c * dim - 1.0)
    return TargetModel(
        dim=dim,
        potential=potential,
        mu=0.0,
        lip_grad=lip,
        lip_hess=None,
        exact_gradient=gradient,
        symmetric_difference=symmetric_difference,
        name="mixture",
        params={"c": c},
    )


@dataclass(frozen=True)
class Condition:
    """One admissibility condition: ``status`` is "pass", "fail" or "unchecked"."""

    name: str
    status: str
    value: Optional[float] = None
    bound: Optional[float] = None
    note: str = ""


@dataclass(frozen=True)
class AdmissibilityReport:
    kind: str
    conditions: tuple
    theory_inapplicable: bool = False

    @property
    def passed(self) -> bool:
        return not self.theory_inapplicable and all(
            c.status != "fail" for c in self.conditions
        )

    def failures(self):
        return [c for c in self.conditions if c.status == "fail"]

    def lines(self):
        out = [f"{self.kind}: {'admissible' if self.passed else 'NOT admissible'}"]
        if self.theory_inapplicable:
            out.append("  theory inapplicable: target is not strongly convex (mu = 0)")
        for c in self.conditions:
            detail = ""
            if c.value is not None and c.bound is not None:
                detail = f" ({c.value:.6g} vs bound {c.bound:.6g})"
            note = f" - {c.note}" if c.note else ""
            out.append(f"  [{c.status}] {c.name}{detail}{note}")
        return out


def _strict(name, value, bound, note=""):
    return Condition(name, "pass" if value < bound else "fail", value, bound, note)


def validate_overdamped_params(target: TargetModel, params: KernelParams) -> AdmissibilityReport:
    """Check h < 1/(3(1+9d) kappa^2 mu) and eta < h for the overdamped sampler."""
    if target.mu == 0:
        return AdmissibilityReport(
            "overdamped",
            (_strict("eta < h", params.eta, params.h),),
            theory_inapplicable=True,
        )
    d, kappa = target.dim, target.condition_number
    h_bound = 1.0 / (3.0 * (1.0 + 9.0 * d) * kappa**2 * target.mu)
    return AdmissibilityReport(
        "overdamped",
        (
            _strict("h < 1/(3(1+9d) kappa^2 mu)", params.h, h_bound),
            _strict("eta < h", params.eta, params.h),
        ),
    )


def validate_underdamped_params(target: TargetModel, params: KernelParams) -> AdmissibilityReport:
    """Check gamma = 1/L, h <= 1/(1648 kappa d) and eta < h^3.

    The companion bound h <= 1/(100(1+D) kappa) involves a constant D with no
    known value and is always reported as "unchecked".
    """
    eta_cond = _strict("eta < h^3", params.eta, params.h**3)
    if target.mu == 0:
        return AdmissibilityReport("underdamped", (eta_cond,), theory_inapplicable=True)
    d, kappa = target.dim, target.condition_number
    gamma_ok = np.isclose(params.gamma, 1.0 / target.lip_grad, rtol=1e-12, atol=0.0)
    h_bound = 1.0 / (1648.0 * kappa * d)
    return AdmissibilityReport(
        "underdamped",
        (
            Condition("gamma = 1/L", "pass" if gamma_ok else "fail", params.gamma, 1.0 / target.lip_grad),
            Condition(
                "h <= 1/(1648 kappa d)",
                "pass" if params.h <= h_bound else "fail",
                params.h,
                h_bound,
            ),
            Condition(
                "h <= 1/(100(1+D) kappa)",
                "unchecked",
                params.h,
                None,
                "constant D is not given explicitly",
            ),
            eta_cond,
        ),
    )
