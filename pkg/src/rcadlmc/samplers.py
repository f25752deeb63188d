"""The six Langevin samplers and a reproducible ensemble runner.

Chains are simulated in fixed-size blocks. Block ``k`` of an ensemble draws
all of its randomness from one stream seeded by ``derive_seed(master, k)``,
so results depend only on the master seed and the block size, never on the
number of worker threads. Within a step the draw order is fixed: the
random coordinates first, then the Gaussian noise.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .gradients import _rcad_update, central_difference, full_gradient_fd
from .kernels import covariance_factor, transition_covariance, transition_mean_coefficients
from .model import KernelParams, TargetModel

__all__ = [
    "SamplerKind",
    "InitialDistribution",
    "ChainConfig",
    "ChainOutput",
    "EnsembleOutput",
    "DEFAULT_BLOCK_SIZE",
    "derive_seed",
    "expected_evals",
    "run_chain",
    "run_ensemble",
]

DEFAULT_BLOCK_SIZE = 8192


class SamplerKind(str, Enum):
    O_LMC = "O_LMC"
    U_LMC = "U_LMC"
    RCD_O_LMC = "RCD_O_LMC"
    RCD_U_LMC = "RCD_U_LMC"
    RCAD_O_LMC = "RCAD_O_LMC"
    RCAD_U_LMC = "RCAD_U_LMC"

    @property
    def underdamped(self) -> bool:
        return self.value.endswith("U_LMC")

    @property
    def estimator(self) -> str:
        """'full', 'rcd' or 'rcad'."""
        if self.value.startswith("RCAD"):
            return "rcad"
        if self.value.startswith("RCD"):
            return "rcd"
        return "full"

    @classmethod
    def parse(cls, name: str) -> "SamplerKind":
        key = name.strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown sampler {name!r}; expected one of {', '.join(k.value for k in cls)}"
            ) from None

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class InitialDistribution:
    """Isotropic Gaussian start: x ~ N(mean_x 1, std_x^2 I), v ~ N(mean_v 1, std_v^2 I)."""

    mean_x: float = 0.0
    std_x: float = 1.0
    mean_v: float = 0.0
    std_v: float = 1.0


@dataclass(frozen=True)
class ChainConfig:
    """Everything needed to reproduce one chain (or one ensemble template).

    ``record`` is None (final state only), an int stride, or an explicit
    sequence of step indices in ``[0, steps]`` at which x (and v) are stored.
    """

    target: TargetModel
    kind: SamplerKind
    params: KernelParams
    steps: int
    seed: Union[int, np.random.SeedSequence] = 0
    init: InitialDistribution = field(default_factory=InitialDistribution)
    exact_gradients: bool = False
    record: Union[None, int, Sequence[int]] = None

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not isinstance(self.kind, SamplerKind):
            object.__setattr__(self, "kind", SamplerKind.parse(str(self.kind)))
        if self.exact_gradients and not self.target.has_exact_partials:
            raise ValueError("exact-gradient mode needs a target with exact partials")

    def record_steps(self) -> np.ndarray:
        if self.record is None:
            return np.empty(0, dtype=np.int64)
        if isinstance(self.record, (int, np.integer)):
            if self.record <= 0:
                raise ValueError("record stride must be positive")
            return np.arange(0, self.steps + 1, int(self.record), dtype=np.int64)
        steps = np.unique(np.asarray(list(self.record), dtype=np.int64))
        if steps.size and (steps[0] < 0 or steps[-1] > self.steps):
            raise ValueError("record steps must lie in [0, steps]")
        return steps


@dataclass
class ChainOutput:
    x: np.ndarray
    v: Optional[np.ndarray]
    evals: int
    diverged: bool
    diverged_at: Optional[int]
    record_steps: np.ndarray
    trajectory_x: Optional[np.ndarray] = None
    trajectory_v: Optional[np.ndarray] = None
    wall_time: float = 0.0


@dataclass
class EnsembleOutput:
    """Stacked results of ``n`` chains; chain ``i`` is row ``i`` everywhere.

    Trajectories have shape ``(len(record_steps), n, d)``; entries recorded
    after a chain diverged are NaN.
    """

    x: np.ndarray
    v: Optional[np.ndarray]
    evals: np.ndarray
    diverged: np.ndarray
    diverged_at: np.ndarray
    record_steps: np.ndarray
    trajectory_x: Optional[np.ndarray] = None
    trajectory_v: Optional[np.ndarray] = None
    wall_time: float = 0.0

    @property
    def n_chains(self) -> int:
        return self.x.shape[0]

    @property
    def total_evals(self) -> int:
        return int(self.evals.sum())

    @property
    def divergence_fraction(self) -> float:
        return float(self.diverged.mean()) if self.n_chains else 0.0

    def chain(self, i: int) -> ChainOutput:
        at = int(self.diverged_at[i])
        return ChainOutput(
            x=self.x[i],
            v=None if self.v is None else self.v[i],
            evals=int(self.evals[i]),
            diverged=bool(self.diverged[i]),
            diverged_at=at if at >= 0 else None,
            record_steps=self.record_steps,
            trajectory_x=None if self.trajectory_x is None else self.trajectory_x[:, i],
            trajectory_v=None if self.trajectory_v is None else self.trajectory_v[:, i],
        )


def derive_seed(master: Union[int, np.random.SeedSequence], index: int) -> np.random.SeedSequence:
    """Seed of block ``index``: the master entropy with ``index`` appended to the spawn key."""
    if isinstance(master, np.random.SeedSequence):
        return np.random.SeedSequence(master.entropy, spawn_key=tuple(master.spawn_key) + (index,))
    return np.random.SeedSequence(int(master), spawn_key=(index,))


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def expected_evals(kind: SamplerKind, d: int, steps: int) -> int:
    """Cost model in partial-derivative evaluations per chain."""
    kind = SamplerKind.parse(str(kind))
    if kind.estimator == "full":
        return steps * d
    if kind.estimator == "rcd":
        return steps
    return d + steps


def _simulate_block(config: ChainConfig, n: int, seed) -> EnsembleOutput:
    t0 = time.perf_counter()
    rng = np.random.default_rng(_as_seed_sequence(seed))
    target, kind, prm = config.target, config.kind, config.params
    d, h, eta = target.dim, prm.h, prm.eta
    under = kind.underdamped
    est = kind.estimator
    init = config.init
    exact = config.exact_gradients

    def full_grad(x):
        return target.exact_gradient(x) if exact else full_gradient_fd(target, x, eta)

    def partial(x, r):
        if exact:
            grad = target.exact_gradient(x)
            return np.take_along_axis(grad, r[:, None], axis=1)[:, 0]
        return central_difference(target, x, r, eta)

    x = init.mean_x + init.std_x * rng.standard_normal((n, d))
    v = init.mean_v + init.std_v * rng.standard_normal((n, d)) if under else None
    evals = np.zeros(n, dtype=np.int64)
    g = None
    if est == "rcad":
        g = full_grad(x)
        evals += d

    if under:
        ca, cb, ce, cc = transition_mean_coefficients(h, prm.gamma)
        fa, fb, fc = covariance_factor(*transition_covariance(h, prm.gamma))
    else:
        noise_scale = math.sqrt(2.0 * h)

    rec_steps = config.record_steps()
    rec_pos = {int(s): j for j, s in enumerate(rec_steps)}
    traj_x = np.full((len(rec_steps), n, d), np.nan) if len(rec_steps) else None
    traj_v = np.full((len(rec_steps), n, d), np.nan) if (len(rec_steps) and under) else None

    final_x = np.empty((n, d))
    final_v = np.empty((n, d)) if under else None
    diverged_at = np.full(n, -1, dtype=np.int64)
    alive = np.arange(n)
    step_cost = {"full": d, "rcd": 1, "rcad": 1}[est]

    def record(m):
        j = rec_pos.get(m)
        if j is not None:
            traj_x[j, alive] = x
            if under:
                traj_v[j, alive] = v

    record(0)
    buf = None
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(config.steps):
            na = alive.size
            if na == 0:
                break
            rows_idx = np.arange(na)
            if est == "full":
                flux = full_grad(x)
            elif est == "rcd":
                # the flux is d * partial on coordinate r and zero elsewhere
                r = rng.integers(0, d, size=na)
                flux = None
                sparse = d * partial(x, r)
            else:
                r = rng.integers(0, d, size=na)
                flux = _rcad_update(g, partial(x, r), r)
            width = 2 * d if under else d
            if buf is None or buf.shape[0] != na:
                buf = np.empty((na, width))
            z = rng.standard_normal(out=buf)
            if under:
                z1, z2 = z[:, :d], z[:, d:]
                # x uses the old v, so update x first
                x += ca * v
                x += fa * z1
                v *= ce
                v += fb * z1
                v += fc * z2
                if flux is None:
                    x[rows_idx, r] -= cb * sparse
                    v[rows_idx, r] -= cc * sparse
                else:
                    x -= cb * flux
                    v -= cc * flux
            else:
                z *= noise_scale
                if flux is None:
                    z[rows_idx, r] -= h * sparse
                else:
                    z -= h * flux
                x += z
            evals[alive] += step_cost

            check = x.sum(axis=1)
            if under:
                check = check + v.sum(axis=1)
            cand = ~np.isfinite(check)
            if cand.any():
                bad = np.zeros(na, dtype=bool)
                rows = np.flatnonzero(cand)
                bad_rows = ~np.isfinite(x[rows]).all(axis=1)
                if under:
                    bad_rows |= ~np.isfinite(v[rows]).all(axis=1)
                bad[rows[bad_rows]] = True
                if bad.any():
                    gone = alive[bad]
                    final_x[gone] = x[bad]
                    if under:
                        final_v[gone] = v[bad]
                    diverged_at[gone] = m + 1
                    keep = ~bad
                    alive, x = alive[keep], x[keep]
                    if under:
                        v = v[keep]
                    if g is not None:
                        g = g[keep]
            record(m + 1)

    final_x[alive] = x
    if under:
        final_v[alive] = v
    return EnsembleOutput(
        x=final_x,
        v=final_v,
        evals=evals,
        diverged=diverged_at >= 0,
        diverged_at=diverged_at,
        record_steps=rec_steps,
        trajectory_x=traj_x,
        trajectory_v=traj_v,
        wall_time=time.perf_counter() - t0,
    )


def run_chain(config: ChainConfig) -> ChainOutput:
    """Run a single chain seeded by ``config.seed``."""
    block = _simulate_block(config, 1, config.seed)
    out = block.chain(0)
    out.wall_time = block.wall_time
    return out


def run_ensemble(
    config: ChainConfig,
    n_chains: int,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> EnsembleOutput:
    """Run ``n_chains`` independent chains from the template ``config``.

    ``config.seed`` acts as the master seed. Block ``k`` holds chains
    ``[k * block_size, (k + 1) * block_size)`` and is seeded with
    ``derive_seed(config.seed, k)``; with one chain the result equals
    ``run_chain`` on that derived seed.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be at least 1")
    t0 = time.perf_counter()
    sizes = [min(block_size, n_chains - s) for s in range(0, n_chains, block_size)]
    jobs = [(k, size) for k, size in enumerate(sizes)]

    def work(job):
        k, size = job
        return _simulate_block(config, size, derive_seed(config.seed, k))

    if threads <= 1 or len(jobs) == 1:
        parts = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))

    def cat(name, axis=0):
        arrays = [getattr(p, name) for p in parts]
        if arrays[0] is None:
            return None
        return np.concatenate(arrays, axis=axis)

    return EnsembleOutput(
        x=cat("x"),
        v=cat("v"),
        evals=cat("evals"),
        diverged=cat("diverged"),
        diverged_at=cat("diverged_at"),
        record_steps=parts[0].record_steps,
        trajectory_x=cat("trajectory_x", axis=1),
        trajectory_v=cat("trajectory_v", axis=1),
        wall_time=time.perf_counter() - t0,
    )
