"""Step-size sweeps: config parsing, execution and CSV output.

Config files are flat ``key = value`` text; ``#`` starts a comment and list
values are comma separated::

    target   = gaussian
    samplers = RCD_O_LMC, RCAD_O_LMC
    h        = 0.02, 0.05, 0.1
    d        = 100
    N        = 100000
    M        = plateau 20000
    seed     = 7
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from .diagnostics import TEST_FUNCTIONS, moment_error, reference_moment
from .model import (
    KernelParams,
    TargetModel,
    gaussian_target,
    mixture_target,
    validate_overdamped_params,
    validate_underdamped_params,
)
from .propagation import UnstableChainError, gaussian_chain_moment_propagation, stationary_moments
from .samplers import ChainConfig, InitialDistribution, SamplerKind, run_ensemble

__all__ = [
    "ConfigError",
    "EtaRule",
    "StepRule",
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "CSV_COLUMNS",
    "COUNTEREXAMPLE_COLUMNS",
    "parse_config",
    "admissibility",
    "plateau_steps",
    "run_sweep",
    "emit_csv",
    "sweep_csv",
    "format_csv",
    "counterexample_csv",
]

CSV_COLUMNS = ("sampler", "d", "h", "eta", "M", "N", "error", "std_error", "evals", "wall_ms", "seed")
COUNTEREXAMPLE_COLUMNS = (
    "sampler", "d", "h", "M", "N", "measured", "std_error", "oracle", "oracle_stationary",
    "excess_measured", "excess_oracle", "excess_stationary", "bound_d2h_288", "plateaued", "seed",
)
FAILED_FRACTION = 0.5


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class EtaRule:
    """Finite-difference step as a function of h: fixed, k*h or k*h^3.

    ``mode="auto"`` picks h/10 for overdamped and h^3/10 for underdamped kinds.
    """

    mode: str = "auto"
    value: float = 0.1

    def eta(self, h: float, kind: SamplerKind) -> float:
        mode = self.mode
        if mode == "auto":
            mode = "h3-proportional" if kind.underdamped else "h-proportional"
        if mode == "fixed":
            return self.value
        if mode == "h-proportional":
            return self.value * h
        return self.value * h**3

    def __str__(self):
        return "auto" if self.mode == "auto" else f"{self.mode} {self.value!r}"


@dataclass(frozen=True)
class StepRule:
    """Number of steps: fixed, or the oracle plateau capped at ``value``."""

    mode: str
    value: int
    tol: float = 1e-3

    def __str__(self):
        return str(self.value) if self.mode == "fixed" else f"plateau {self.value}"


@dataclass(frozen=True)
class SweepSpec:
    target: TargetModel
    samplers: tuple
    h_values: tuple
    steps: StepRule
    n_chains: int
    seed: int
    eta: EtaRule = EtaRule()
    gamma: float = 1.0
    init: InitialDistribution = InitialDistribution(mean_x=0.5)
    exact_gradients: bool = False
    phi: str = "x1_squared"
    out: Optional[str] = None
    threads: int = 1
    warnings: tuple = field(default=(), compare=False)

    @property
    def d(self) -> int:
        return self.target.dim

    def cells(self):
        """(sampler, h) pairs in declared order."""
        return [(k, h) for k in self.samplers for h in self.h_values]

    def kernel_params(self, kind: SamplerKind, h: float) -> KernelParams:
        return KernelParams(h=h, eta=self.eta.eta(h, kind), gamma=self.gamma)

    def echo(self):
        """Canonical key = value lines (no output path or thread count)."""
        t = self.target
        lines = [f"target = {t.name}", f"d = {t.dim}"]
        if t.name == "gaussian":
            lines.append(f"target_mean = {float(t.params['mean'][0])!r}")
            lines.append(f"target_var = {t.params['var']!r}")
        elif t.name == "mixture":
            lines.append(f"mixture_c = {t.params['c']!r}")
        lines += [
            f"samplers = {', '.join(k.value for k in self.samplers)}",
            f"h = {', '.join(repr(h) for h in self.h_values)}",
            f"eta = {self.eta}",
            f"gamma = {self.gamma!r}",
            f"N = {self.n_chains}",
            f"M = {self.steps}",
            f"seed = {self.seed}",
            f"init_mean = {self.init.mean_x!r}",
            f"init_std = {self.init.std_x!r}",
            f"init_v_mean = {self.init.mean_v!r}",
            f"init_v_std = {self.init.std_v!r}",
            f"exact_gradients = {str(self.exact_gradients).lower()}",
            f"phi = {self.phi}",
        ]
        return lines


_REQUIRED = ("target", "samplers", "h", "d", "N", "M", "seed")
_KNOWN = set(_REQUIRED) | {
    "target_mean", "target_var", "mixture_c", "eta", "gamma", "init_mean", "init_std",
    "init_v_mean", "init_v_std", "exact_gradients", "phi", "out", "threads", "plateau_tol",
}


def _number(text, line, key, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}", line) from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line)
    return value


def _integer(text, line, key):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}", line) from None
    if not math.isfinite(value) or value != int(value):
        raise ConfigError(f"{key}: expected an integer, got {text!r}", line)
    return int(value)


def _parse_eta(text, line):
    parts = text.split()
    if parts == ["auto"]:
        return EtaRule()
    if len(parts) == 2 and parts[0] in ("fixed", "h-proportional", "h3-proportional"):
        value = _number(parts[1], line, "eta")
        if value <= 0:
            raise ConfigError("eta: value must be positive", line)
        return EtaRule(parts[0], value)
    raise ConfigError(
        f"eta: expected 'auto', 'fixed <v>', 'h-proportional <k>' or 'h3-proportional <k>', got {text!r}",
        line,
    )


def _parse_steps(text, line, tol):
    parts = text.split()
    if len(parts) == 1:
        return StepRule("fixed", _integer(parts[0], line, "M"), tol)
    if len(parts) == 2 and parts[0] == "plateau":
        return StepRule("plateau", _integer(parts[1], line, "M"), tol)
    raise ConfigError(f"M: expected '<steps>' or 'plateau <cap>', got {text!r}", line)


def _parse_bool(text, line, key):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {text!r}", line)


def parse_config(text: str) -> SweepSpec:
    """Parse a sweep config; raises ConfigError with the offending line number."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in _KNOWN:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        raw[key] = (value, lineno)
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")

    def get(key, default=None):
        return raw.get(key, (default, None))

    d_text, d_line = get("d")
    d = _integer(d_text, d_line, "d")
    if d < 1:
        raise ConfigError("d must be at least 1", d_line)

    name, t_line = get("target")
    name = name.lower()
    try:
        if name == "gaussian":
            mean = _number(*get("target_mean", "0"), "target_mean")
            var = _number(*get("target_var", "1"), "target_var")
            target = gaussian_target(d, mean=mean, var=var)
        elif name == "mixture":
            c = _number(*get("mixture_c", "2"), "mixture_c")
            target = mixture_target(d, c=c)
        else:
            raise ConfigError(f"unknown target {name!r}; expected gaussian or mixture", t_line)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), t_line) from None

    s_text, s_line = get("samplers")
    names = [s for s in (p.strip() for p in s_text.split(",")) if s]
    if not names:
        raise ConfigError("empty sweep axis: samplers", s_line)
    try:
        samplers = tuple(SamplerKind.parse(s) for s in names)
    except ValueError as exc:
        raise ConfigError(str(exc), s_line) from None

    h_text, h_line = get("h")
    h_parts = [p.strip() for p in h_text.split(",") if p.strip()]
    if not h_parts:
        raise ConfigError("empty sweep axis: h", h_line)
    h_values = tuple(_number(p, h_line, "h") for p in h_parts)
    if any(h <= 0 for h in h_values):
        raise ConfigError("h values must be positive", h_line)

    n_chains = _integer(*get("N"), "N")
    if n_chains < 1:
        raise ConfigError("N must be at least 1", raw["N"][1])
    tol = _number(*get("plateau_tol", "1e-3"), "plateau_tol")
    steps = _parse_steps(*get("M"), tol)
    if steps.value < 0:
        raise ConfigError("M must be nonnegative", raw["M"][1])
    seed = _integer(*get("seed"), "seed")
    if seed < 0:
        raise ConfigError("seed must be nonnegative", raw["seed"][1])

    eta = _parse_eta(*get("eta", "auto"))
    gamma = _number(*get("gamma", "1"), "gamma")
    if gamma <= 0:
        raise ConfigError("gamma must be positive", raw["gamma"][1])
    init = InitialDistribution(
        mean_x=_number(*get("init_mean", "0.5"), "init_mean"),
        std_x=_number(*get("init_std", "1"), "init_std"),
        mean_v=_number(*get("init_v_mean", "0"), "init_v_mean"),
        std_v=_number(*get("init_v_std", "1"), "init_v_std"),
    )
    exact = _parse_bool(*get("exact_gradients", "false"), "exact_gradients")
    phi, phi_line = get("phi", "x1_squared")
    if phi not in TEST_FUNCTIONS:
        raise ConfigError(f"phi: expected one of {', '.join(TEST_FUNCTIONS)}, got {phi!r}", phi_line)
    threads = _integer(*get("threads", "1"), "threads")

    spec = SweepSpec(
        target=target,
        samplers=samplers,
        h_values=h_values,
        steps=steps,
        n_chains=n_chains,
        seed=seed,
        eta=eta,
        gamma=gamma,
        init=init,
        exact_gradients=exact,
        phi=phi,
        out=get("out")[0],
        threads=threads,
    )
    return replace(spec, warnings=tuple(_warnings(spec)))


def admissibility(spec: SweepSpec):
    """Admissibility report for every (sampler, h) cell."""
    out = []
    for kind, h in spec.cells():
        params = spec.kernel_params(kind, h)
        check = validate_underdamped_params if kind.underdamped else validate_overdamped_params
        out.append((kind, h, check(spec.target, params)))
    return out


def _warnings(spec: SweepSpec):
    msgs = []
    for kind, h, rep in admissibility(spec):
        if rep.theory_inapplicable:
            msgs.append(f"{kind} h={h!r}: theory inapplicable (target not strongly convex)")
        for cond in rep.failures():
            msgs.append(
                f"{kind} h={h!r}: violates {cond.name} ({cond.value:.6g} vs {cond.bound:.6g})"
            )
    return msgs


def _oracle_target(spec: SweepSpec):
    """Gaussian whose moment recursion stands in for the target, plus the matching start."""
    t = spec.target
    if t.name == "gaussian":
        return t, spec.init
    # inside either mode the mixture behaves like N(+-c 1, I)
    c = t.params["c"]
    mode = c if spec.init.mean_x >= 0 else -c
    return gaussian_target(t.dim, mean=mode), spec.init


def plateau_steps(spec: SweepSpec, kind: SamplerKind, h: float) -> int:
    """First step where the oracle E x_1^2 is within ``tol`` (relative) of stationarity.

    Unstable chains and chains that do not settle before the cap get the cap.
    """
    cap, tol = spec.steps.value, spec.steps.tol
    target, init = _oracle_target(spec)
    params = spec.kernel_params(kind, h)
    try:
        stat = float(np.atleast_1d(stationary_moments(target, kind, params)["second_x"])[0])
    except UnstableChainError:
        return cap
    traj = gaussian_chain_moment_propagation(target, kind, params, cap, init).second_x[:, 0]
    close = np.flatnonzero(np.abs(traj - stat) <= tol * abs(stat))
    # first index after which the trajectory stays within tolerance
    if close.size == 0 or close[-1] != cap:
        return cap
    breaks = np.flatnonzero(np.diff(close) != 1)
    start = close[breaks[-1] + 1] if breaks.size else close[0]
    return int(max(start, 1))


@dataclass
class SweepRow:
    sampler: str
    d: int
    h: float
    eta: float
    M: int
    N: int
    error: float
    std_error: float
    evals: int
    wall_ms: float
    seed: int
    estimate: float = float("nan")
    reference: float = float("nan")
    divergence_fraction: float = 0.0

    @property
    def failed(self) -> bool:
        return self.divergence_fraction > FAILED_FRACTION

    def values(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class SweepResult:
    rows: list
    spec: Optional[SweepSpec] = None

    @property
    def failed_cells(self):
        return [r for r in self.rows if r.failed]


def run_cell(spec: SweepSpec, kind: SamplerKind, h: float, threads: int = 1) -> SweepRow:
    params = spec.kernel_params(kind, h)
    steps = spec.steps.value if spec.steps.mode == "fixed" else plateau_steps(spec, kind, h)
    config = ChainConfig(
        spec.target, kind, params, steps, seed=spec.seed, init=spec.init,
        exact_gradients=spec.exact_gradients,
    )
    t0 = time.perf_counter()
    out = run_ensemble(config, spec.n_chains, threads=threads)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    ref = reference_moment(spec.target, spec.phi)
    ok = ~out.diverged
    row = SweepRow(
        sampler=kind.value, d=spec.d, h=h, eta=params.eta, M=steps, N=spec.n_chains,
        error=math.inf, std_error=math.nan, evals=out.total_evals, wall_ms=wall_ms,
        seed=spec.seed, reference=ref, divergence_fraction=out.divergence_fraction,
    )
    if not row.failed and ok.sum() >= 2:
        rep = moment_error(out.x[ok], ref, TEST_FUNCTIONS[spec.phi])
        row.error, row.std_error, row.estimate = rep.error, rep.std_error, rep.estimate
    return row


def run_sweep(spec: SweepSpec, threads: Optional[int] = None, progress=None) -> SweepResult:
    """One row per (sampler, h) in declared order; every cell uses the master seed."""
    threads = spec.threads if threads is None else threads
    rows = []
    for kind, h in spec.cells():
        row = run_cell(spec, kind, h, threads=threads)
        rows.append(row)
        if progress is not None:
            progress(row)
    return SweepResult(rows=rows, spec=spec)


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def format_csv(columns, rows, comments=(), blank=()) -> str:
    """CSV text with ``#`` comment lines first; columns in ``blank`` are written as nan."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["nan" if c in blank else _fmt(v) for c, v in zip(columns, row)])
    return buf.getvalue()


def sweep_comments(spec: Optional[SweepSpec]):
    lines = [f"rcadlmc {__version__}"]
    if spec is not None:
        lines += [f"config: {line}" for line in spec.echo()]
    return lines


def sweep_csv(result: SweepResult, timing: bool = True) -> str:
    """CSV text of a sweep; with ``timing=False`` the wall_ms column is nan."""
    return format_csv(
        CSV_COLUMNS,
        [r.values() for r in result.rows],
        comments=sweep_comments(result.spec),
        blank=() if timing else ("wall_ms",),
    )


def emit_csv(result: SweepResult, path, timing: bool = True) -> None:
    """Write the sweep CSV to ``path``; OSErrors name the path."""
    text = sweep_csv(result, timing)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def counterexample_csv(reports, comments=()) -> str:
    rows = []
    for r in reports:
        rows.append([
            r.kind, r.d, r.h, r.steps, r.n_chains, r.measured, r.std_error, r.oracle,
            r.oracle_stationary, r.excess_measured, r.excess_oracle, r.excess_stationary,
            r.bound, r.plateaued, r.seed,
        ])
    return format_csv(COUNTEREXAMPLE_COLUMNS, rows, comments=comments)
