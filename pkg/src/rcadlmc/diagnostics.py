"""Error metrics and analytic references for sampler ensembles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import KernelParams, TargetModel, gaussian_target
from .propagation import (
    UnstableChainError,
    gaussian_chain_moment_propagation,
    plateau_reached,
    stationary_moments,
)
from .samplers import ChainConfig, InitialDistribution, SamplerKind, run_ensemble

__all__ = [
    "MomentErrorReport",
    "CounterexampleReport",
    "phi_x1_squared",
    "reference_moment",
    "moment_error",
    "w2_gaussian",
    "stationary_variance_overdamped_gaussian",
    "counterexample_check",
    "COUNTEREXAMPLE_SHIFT",
]

COUNTEREXAMPLE_SHIFT = 1.0 / 8.0


def phi_x1_squared(x):
    return np.asarray(x)[..., 0] ** 2


def phi_x1(x):
    return np.asarray(x)[..., 0]


TEST_FUNCTIONS = {"x1_squared": phi_x1_squared, "x1": phi_x1}


def reference_moment(target: TargetModel, phi: str = "x1_squared") -> float:
    """Exact E_p[phi] for the built-in targets."""
    if target.name == "gaussian":
        m1 = float(target.params["mean"][0])
        var = target.params["var"]
        return {"x1_squared": var + m1 * m1, "x1": m1}[phi]
    if target.name == "mixture":
        c = target.params["c"]
        # equal mixture of N(+-c, 1) in every coordinate
        return {"x1_squared": c * c + 1.0, "x1": 0.0}[phi]
    raise ValueError(f"no analytic reference for target {target.name!r}")


@dataclass(frozen=True)
class MomentErrorReport:
    estimate: float
    reference: float
    error: float
    std_error: float
    n: int


def moment_error(samples, reference: float, phi: Callable = phi_x1_squared) -> MomentErrorReport:
    """|mean(phi(samples)) - reference| with its Monte Carlo standard error."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    if n < 2:
        raise ValueError("moment_error needs at least two samples")
    vals = phi(samples)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n))
    return MomentErrorReport(est, float(reference), abs(est - reference), se, n)


def w2_gaussian(mean1, var1: float, mean2, var2: float, d: int) -> float:
    """W2 between N(mean1, var1 I_d) and N(mean2, var2 I_d)."""
    if var1 <= 0 or var2 <= 0:
        raise ValueError("variances must be positive")
    m1 = np.broadcast_to(np.asarray(mean1, dtype=float), (d,))
    m2 = np.broadcast_to(np.asarray(mean2, dtype=float), (d,))
    diff = float(np.sum((m1 - m2) ** 2))
    return math.sqrt(diff + d * (math.sqrt(var1) - math.sqrt(var2)) ** 2)


def stationary_variance_overdamped_gaussian(h: float) -> float:
    """Stationary variance 1/(1 - h/2) of exact-gradient O-LMC on N(0, 1)."""
    if not 0 < h < 2:
        raise ValueError("the overdamped Gaussian chain is stable only for 0 < h < 2")
    return 1.0 / (1.0 - 0.5 * h)


@dataclass(frozen=True)
class CounterexampleReport:
    kind: str
    d: int
    h: float
    steps: int
    n_chains: int
    measured: float
    std_error: float
    oracle: float
    oracle_stationary: float
    bound: float
    plateaued: bool
    seed: int

    @property
    def excess_measured(self) -> float:
        return self.measured - 2 * self.d

    @property
    def excess_oracle(self) -> float:
        return self.oracle - 2 * self.d

    @property
    def excess_stationary(self) -> float:
        return self.oracle_stationary - 2 * self.d

    @property
    def agrees(self) -> bool:
        """Ensemble and oracle agree within 3 standard errors (True without an ensemble)."""
        if self.n_chains == 0:
            return True
        return abs(self.measured - self.oracle) <= 3.0 * self.std_error

    @property
    def w2_term(self) -> float:
        """d^{3/2} h / 2304, the step-size term of the W2 lower bound."""
        return self.d**1.5 * self.h / 2304.0


def counterexample_check(
    d: int,
    h: float,
    steps: int,
    n_chains: int,
    seed: int = 0,
    kind=SamplerKind.RCD_U_LMC,
    threads: int = 1,
) -> CounterexampleReport:
    """Stationary E|x + v|^2 of the RCD counter-example, by ensemble and by oracle.

    Standard Gaussian target, gamma = 1, exact gradients, x0 ~ N(1/8 1, I),
    v0 ~ N(0, I). ``n_chains = 0`` skips the ensemble. ``oracle_stationary``
    is inf when the chain has no stationary second moment.
    """
    kind = SamplerKind.parse(str(kind))
    if not kind.underdamped:
        raise ValueError("the counter-example concerns underdamped samplers")
    target = gaussian_target(d)
    params = KernelParams(h=h, eta=1e-6, gamma=1.0)
    init = InitialDistribution(mean_x=COUNTEREXAMPLE_SHIFT, std_x=1.0, mean_v=0.0, std_v=1.0)

    traj = gaussian_chain_moment_propagation(target, kind, params, steps, init)
    w_traj = traj.sq_norm_w
    try:
        stat = stationary_moments(target, kind, params)
    except UnstableChainError:
        # no stationary second moment: E|w|^2 grows without bound
        oracle_stat = math.inf
    else:
        per_coord = stat["second_x"] + stat["second_v"] + 2.0 * stat["cross_xv"]
        oracle_stat = float(np.sum(np.broadcast_to(per_coord, (d,))))

    measured, se = float("nan"), float("nan")
    if n_chains > 0:
        cfg = ChainConfig(target, kind, params, steps, seed=seed, init=init, exact_gradients=True)
        out = run_ensemble(cfg, n_chains, threads=threads)
        w2 = np.sum((out.x + out.v) ** 2, axis=1)
        measured = float(w2.mean())
        se = float(w2.std(ddof=1) / math.sqrt(n_chains)) if n_chains > 1 else float("nan")

    return CounterexampleReport(
        kind=kind.value,
        d=d,
        h=h,
        steps=steps,
        n_chains=n_chains,
        measured=measured,
        std_error=se,
        oracle=float(w_traj[-1]),
        oracle_stationary=oracle_stat,
        bound=d * d * h / 288.0,
        plateaued=plateau_reached(w_traj),
        seed=seed,
    )
