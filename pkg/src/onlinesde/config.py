"""Run configuration: a flat ``key = value`` format with ``[section]`` headers.

Example::

    [run]
    subcommand = experiment
    seed = 7

    [model]
    id = ou-sin
    sin_weight = 0.5

    [estimator]
    schedule = drift-sqrt
    eta = 1.0

Blank lines and lines starting with ``#`` or ``;`` are ignored. Vectors are
comma separated; an empty value means "unset" for optional keys. Every key
has a default (see ``FIELDS``), so an empty file is a valid configuration:
the OU drift risk-curve experiment.

``parse_config`` reports every problem at once, each with its line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Any, Callable

from .catalog import DEFAULT_PARAMS
from .errors import ConfigError, InvalidArgumentError
from .mirror import SCHEDULE_KINDS, Schedule

SUBCOMMANDS = ("simulate", "estimate-drift", "estimate-diffusion", "experiment", "diagnose")
DIAGNOSTICS = ("lyapunov", "moments", "tv-decay", "mixing", "conditions")


@dataclass(frozen=True)
class Field:
    section: str
    kind: str  # "str" | "int" | "float" | "bool" | "floats" | "ints"
    default: Any
    doc: str
    optional: bool = False
    check: Callable[[Any], str | None] | None = None


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonnegative(v):
    return None if v >= 0 else "must be >= 0"


def _at_least_one(v):
    return None if v >= 1 else "must be >= 1"


def _one_of(options):
    def check(v):
        return None if v in options else f"must be one of {', '.join(options)}"

    return check


def _seed(v):
    return None if 0 <= v < 2**64 else "must be an unsigned 64-bit integer"


def _increasing_positive(v):
    if not v:
        return "must not be empty"
    if any(x < 1 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
        return "must be positive and strictly increasing"
    return None


def _increasing_times(v):
    if len(v) < 2 or any(x < 0 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
        return "must hold at least two nonnegative, strictly increasing times"
    return None


FIELDS: dict[str, Field] = {
    # [run]
    "subcommand": Field("run", "str", "experiment", "what to run", check=_one_of(SUBCOMMANDS)),
    "seed": Field("run", "int", 0, "master seed for every random stream", check=_seed),
    "out": Field("run", "str", "out", "output directory"),
    "plot": Field("run", "bool", False, "also write an SVG plot (experiment only)"),
    # [model]
    "id": Field("model", "str", "ou", "catalog model id", check=_one_of(tuple(DEFAULT_PARAMS))),
    # [estimator]
    "schedule": Field("estimator", "str", None, "step-size schedule; default drift-sqrt or diffusion-sqrt",
                      optional=True, check=_one_of(SCHEDULE_KINDS)),
    "eta": Field("estimator", "float", 1.0, "base learning rate", check=_positive),
    "theta_lower": Field("estimator", "floats", None, "lower corner of the parameter box; default per model",
                         optional=True),
    "theta_upper": Field("estimator", "floats", None, "upper corner of the parameter box; default per model",
                         optional=True),
    "theta1": Field("estimator", "floats", None, "initial iterate; default the centre of the box",
                    optional=True),
    "input": Field("estimator", "str", None, "observation CSV to estimate from instead of simulating",
                   optional=True),
    # [simulation]
    "x0": Field("simulation", "floats", (0.0,), "initial state"),
    "n": Field("simulation", "int", 65536, "observations for simulate / estimate-*", check=_at_least_one),
    "h": Field("simulation", "float", None, "fixed observation step; default h_c * n^-h_delta",
               optional=True, check=_positive),
    "h_c": Field("simulation", "float", 1.0, "constant c of the rule h = c n^-delta", check=_positive),
    "h_delta": Field("simulation", "float", 0.3, "exponent delta of the rule h = c n^-delta",
                     check=lambda v: None if 0 < v < 0.5 else "must lie in (0, 0.5)"),
    "n_grid": Field("simulation", "ints", (1024, 4096, 16384, 65536), "experiment sample sizes",
                    check=_increasing_positive),
    "substeps": Field("simulation", "int", 20, "Euler-Maruyama substeps per observation", check=_at_least_one),
    "replications": Field("simulation", "int", 100, "replications per grid point", check=_at_least_one),
    # [invariant]
    "invariant_count": Field("invariant", "int", 100_000, "invariant sample size", check=_at_least_one),
    "burn_in": Field("invariant", "float", 20.0, "burn-in time", check=_positive),
    "stride": Field("invariant", "int", 10, "thinning stride in fine steps", check=_at_least_one),
    "dt": Field("invariant", "float", 0.01, "fine step of the invariant sampler", check=_positive),
    "chains": Field("invariant", "int", 100, "parallel chains pooled into the sample", check=_at_least_one),
    # [diagnose]
    "target": Field("diagnose", "str", "lyapunov", "which diagnostic", check=_one_of(DIAGNOSTICS)),
    "gamma": Field("diagnose", "float", 1.0, "growth exponent gamma", check=_nonnegative),
    "nu": Field("diagnose", "float", 1.0, "Lyapunov exponent nu", check=_positive),
    "kappa0": Field("diagnose", "float", 1.0, "ellipticity constant kappa0", check=_positive),
    "varkappa1": Field("diagnose", "float", 1.0, "dissipativity constant varkappa1", check=_positive),
    "d": Field("diagnose", "int", 1, "state dimension for the Lyapunov constants", check=_at_least_one),
    "m": Field("diagnose", "int", 2, "moment order", check=_nonnegative),
    "horizon": Field("diagnose", "float", 10.0, "time horizon of the moment check", check=_positive),
    "reps": Field("diagnose", "int", 2000, "Monte-Carlo replications", check=lambda v: None if v >= 4 else "must be >= 4"),
    "x": Field("diagnose", "floats", (2.0,), "starting point"),
    "y": Field("diagnose", "floats", (-2.0,), "second starting point (tv-decay)"),
    "times": Field("diagnose", "floats", (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0), "time grid (tv-decay)",
                   check=_increasing_times),
    "epsilon": Field("diagnose", "float", 0.5, "Hellinger tolerance (mixing)",
                     check=lambda v: None if 0 < v < math.sqrt(2) else "must lie in (0, sqrt 2)"),
    "step": Field("diagnose", "float", 0.1, "lag unit h for the mixing time", check=_positive),
    "cap": Field("diagnose", "int", 1000, "largest lag tried (mixing)", check=_at_least_one),
    "bins": Field("diagnose", "int", None, "histogram bins per axis; default 64 (d=1) or 32 (d=2)",
                  optional=True, check=_at_least_one),
}

SECTIONS = ("run", "model", "estimator", "simulation", "invariant", "diagnose")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str = "experiment"
    seed: int = 0
    out: str = "out"
    plot: bool = False
    id: str = "ou"
    model_params: tuple = ()
    schedule: str | None = None
    eta: float = 1.0
    theta_lower: tuple | None = None
    theta_upper: tuple | None = None
    theta1: tuple | None = None
    input: str | None = None
    x0: tuple = (0.0,)
    n: int = 65536
    h: float | None = None
    h_c: float = 1.0
    h_delta: float = 0.3
    n_grid: tuple = (1024, 4096, 16384, 65536)
    substeps: int = 20
    replications: int = 100
    invariant_count: int = 100_000
    burn_in: float = 20.0
    stride: int = 10
    dt: float = 0.01
    chains: int = 100
    target: str = "lyapunov"
    gamma: float = 1.0
    nu: float = 1.0
    kappa0: float = 1.0
    varkappa1: float = 1.0
    d: int = 1
    m: int = 2
    horizon: float = 10.0
    reps: int = 2000
    x: tuple = (2.0,)
    y: tuple = (-2.0,)
    times: tuple = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0)
    epsilon: float = 0.5
    step: float = 0.1
    cap: int = 1000
    bins: int | None = None

    @property
    def params(self) -> dict:
        return dict(self.model_params)

    @property
    def kind(self) -> str:
        if self.subcommand == "estimate-diffusion":
            return "diffusion"
        if self.subcommand == "estimate-drift":
            return "drift"
        return "diffusion" if self.id == "sqrt-theta-diffusion" else "drift"

    @property
    def schedule_kind(self) -> str:
        return self.schedule or ("drift-sqrt" if self.kind == "drift" else "diffusion-sqrt")

    def step_for(self, n: int) -> float:
        return float(self.h) if self.h is not None else self.h_c * n ** (-self.h_delta)


# keep the dataclass and the schema in sync
assert {f.name for f in fields(RunConfig)} - {"model_params"} == set(FIELDS)


def _convert(kind: str, raw: str):
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("not finite")
        return v
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError("not a boolean")
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if kind == "floats":
        vals = tuple(float(p) for p in parts)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("not finite")
        return vals
    return tuple(int(p) for p in parts)


_TYPE_NAMES = {"str": "a string", "int": "an integer", "float": "a finite number", "bool": "a boolean",
               "floats": "a comma-separated list of numbers", "ints": "a comma-separated list of integers"}


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate; raises ``ConfigError`` listing every problem with its line.

    ``overrides`` (command-line values) replace file values before the
    cross-field checks, so those checks see the configuration that will run.
    """
    errors: list[str] = []
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    params: dict[str, float] = {}
    param_lines: dict[str, int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if section is None:
            errors.append(f"line {lineno}: key {key!r} appears before any [section]")
            continue
        if section not in SECTIONS:
            continue
        if key in lines or key in param_lines:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        spec = FIELDS.get(key)
        if spec is None or spec.section != section:
            if section == "model":
                try:
                    params[key] = float(raw)
                    param_lines[key] = lineno
                except ValueError:
                    errors.append(f"line {lineno}: model parameter {key!r} must be a number")
                continue
            where = f" (it belongs in [{spec.section}])" if spec is not None else ""
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]{where}")
            continue
        lines[key] = lineno
        if raw == "" and spec.optional:
            values[key] = None
            continue
        try:
            value = _convert(spec.kind, raw)
        except ValueError:
            errors.append(f"line {lineno}: {key} must be {_TYPE_NAMES[spec.kind]}, got {raw!r}")
            continue
        problem = spec.check(value) if spec.check else None
        if problem:
            errors.append(f"line {lineno}: {key} {problem}")
            continue
        values[key] = value

    config = RunConfig(**values)
    model_id = config.id
    if model_id in DEFAULT_PARAMS:
        for key, lineno in param_lines.items():
            if key not in DEFAULT_PARAMS[model_id]:
                errors.append(f"line {lineno}: unknown parameter {key!r} for model {model_id}; "
                              f"expected one of {sorted(DEFAULT_PARAMS[model_id])}")
    config = replace(config, model_params=tuple(sorted(params.items())))
    for key, value in (overrides or {}).items():
        check = FIELDS[key].check
        problem = check(value) if check and value is not None else None
        if problem:
            errors.append(f"--{key}: {key} {problem}")
        else:
            config = replace(config, **{key: value})
            lines.pop(key, None)
    errors.extend(_cross_check(config, lines))
    if errors:
        raise ConfigError(errors)
    return config


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply command-line overrides and re-run every check that could now fail."""
    errors = []
    for key, value in overrides.items():
        check = FIELDS[key].check
        problem = check(value) if check and value is not None else None
        if problem:
            errors.append(f"--{key}: {key} {problem}")
    if errors:
        raise ConfigError(errors)
    config = replace(config, **overrides)
    errors = _cross_check(config, {})
    if errors:
        raise ConfigError(errors)
    return config


def _at(lines: dict, key: str) -> str:
    return f"line {lines[key]}" if key in lines else f"{key} (default)"


def _cross_check(c: RunConfig, lines: dict) -> list[str]:
    """Constraints that involve several keys."""
    errors = []
    where = _at(lines, "schedule")
    if c.subcommand == "experiment":
        grid = c.n_grid
    elif c.subcommand in ("estimate-drift", "estimate-diffusion", "simulate"):
        grid = (c.n,) if c.input is None else ()
    else:
        grid = ()
    if c.subcommand != "simulate":
        for n in grid:
            try:
                Schedule(c.schedule_kind, c.eta, c.step_for(n), n)
            except InvalidArgumentError as exc:
                errors.append(f"{where}: n={n}, h={c.step_for(n):.6g}: {exc}")
    if c.schedule is not None and c.subcommand in ("estimate-drift", "estimate-diffusion", "experiment"):
        if not c.schedule.startswith(c.kind):
            errors.append(f"{where}: schedule {c.schedule} does not match the {c.kind} estimator")
    if (c.theta_lower is None) != (c.theta_upper is None):
        errors.append(f"{_at(lines, 'theta_lower' if c.theta_lower is not None else 'theta_upper')}: "
                      "theta_lower and theta_upper must be given together")
    elif c.theta_lower is not None:
        if len(c.theta_lower) != len(c.theta_upper) or any(
            lo > hi for lo, hi in zip(c.theta_lower, c.theta_upper)
        ):
            errors.append(f"{_at(lines, 'theta_upper')}: need theta_lower <= theta_upper componentwise")
    if c.input is not None and c.subcommand not in ("estimate-drift", "estimate-diffusion"):
        errors.append(f"{_at(lines, 'input')}: input is only used by estimate-drift / estimate-diffusion")
    return errors


def _format(kind: str, value) -> str:
    if value is None:
        return ""
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Text that ``parse_config`` maps back to an equal ``RunConfig``."""
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for key, spec in FIELDS.items():
            if spec.section == section:
                out.append(f"{key} = {_format(spec.kind, getattr(config, key))}".rstrip())
        if section == "model":
            for key, value in config.model_params:
                out.append(f"{key} = {float(value)!r}")
        out.append("")
    return "\n".join(out)


def describe_fields() -> str:
    """One line per key: section, key, default and meaning (used by --help and the README)."""
    rows = []
    for key, spec in FIELDS.items():
        rows.append(f"[{spec.section}] {key} = {_format(spec.kind, spec.default) or '(unset)'}  # {spec.doc}")
    return "\n".join(rows)
