"""Command-line front end.

    onlinesde experiment --config run.ini --seed 3 --out results --plot
    onlinesde diagnose lyapunov --config lyap.ini

Artifacts are named ``<subcommand>_seed<seed>.csv`` (diagnostics:
``diagnose-<target>_seed<seed>.csv``) inside ``--out``. One summary line goes
to standard output; on failure a single JSON error line goes to standard
error and the exit status is nonzero (2 for configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import catalog, ergodicity, risk
from .config import DIAGNOSTICS, SUBCOMMANDS, RunConfig, describe_fields, parse_config
from .diffusion import DiffusionLoss, DiffusionStream
from .drift import DriftLoss, DriftStream
from .errors import ConfigError
from .mirror import Schedule
from .models import check_diffusion_conditions, check_drift_conditions
from .simulate import ObservationSeries, SimConfig, simulate_path
from .spaces import Box


def _fmt(v) -> str:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    return ",".join(f"{x:.6g}" for x in arr)


def _entry(c: RunConfig) -> catalog.CatalogEntry:
    return catalog.build(c.id, **c.params)


def _space(c: RunConfig, entry):
    if c.theta_lower is None:
        return entry.space
    return Box(list(c.theta_lower), list(c.theta_upper))


def _theta1(c: RunConfig):
    return None if c.theta1 is None else np.asarray(c.theta1, dtype=float)


def _invariant(c: RunConfig, model) -> risk.InvariantSample:
    return risk.sample_invariant(model, c.burn_in, c.invariant_count, c.stride, c.seed, c.dt, c.chains)


def _name(c: RunConfig) -> str:
    stem = f"diagnose-{c.target}" if c.subcommand == "diagnose" else c.subcommand
    return f"{stem}_seed{c.seed}"


# --------------------------------------------------------------------------
# subcommands


def run_simulate(c: RunConfig, out: Path) -> str:
    entry = _entry(c)
    h = c.step_for(c.n)
    obs = simulate_path(entry.true_model, SimConfig(np.asarray(c.x0), h, c.n, c.substeps, c.seed))
    obs.to_csv(out / f"{_name(c)}.csv")
    return f"simulate: model={c.id} n={c.n} h={h:.6g} final_state={_fmt(obs.states[-1])}"


def run_estimate(c: RunConfig, out: Path) -> str:
    entry = _entry(c)
    kind = c.kind
    model = entry.drift_model if kind == "drift" else entry.diffusion_model
    if model is None:
        raise ConfigError([f"model {c.id} has no parametric {kind} model"])
    space = _space(c, entry)
    if c.input is not None:
        obs = ObservationSeries.from_csv(c.input, seed=c.seed)
    else:
        obs = simulate_path(entry.true_model,
                            SimConfig(np.asarray(c.x0), c.step_for(c.n), c.n, c.substeps, c.seed))
    schedule = Schedule(c.schedule_kind, c.eta, obs.h, obs.n)
    if kind == "drift":
        loss = DriftLoss(model)
        stream = DriftStream(loss, space, schedule, obs.states[0], _theta1(c), trace=True)
    else:
        loss = DiffusionLoss(model)
        stream = DiffusionStream(loss, space, schedule, obs.states[0], _theta1(c), trace=True)
    stream.consume(obs.states[1:])
    theta_bar = stream.estimate()
    (out / f"{_name(c)}.csv").write_text(stream.trace_csv())
    line = f"{c.subcommand}: model={c.id} n={obs.n} h={obs.h:.6g} theta_bar={_fmt(theta_bar)}"
    if c.input is None:
        sample = _invariant(c, entry.true_model)
        theta0 = risk.quasi_optimal(loss, entry.true_model, sample, space).theta0
        er = risk.excess_risk(theta_bar, theta0, loss, entry.true_model, sample)
        line += f" theta0={_fmt(theta0)} excess_risk={er:.6g}"
    return line


def run_experiment_cmd(c: RunConfig, out: Path, plot: bool) -> str:
    entry = _entry(c)
    cfg = risk.ExperimentConfig(
        entry=entry, n_grid=tuple(c.n_grid), replications=c.replications, seed=c.seed,
        schedule=c.schedule, eta=c.eta, h_c=c.h_c, h_delta=c.h_delta, h_fixed=c.h,
        space=_space(c, entry), theta1=_theta1(c), x0=np.asarray(c.x0), substeps=c.substeps,
        invariant_count=c.invariant_count, invariant_burn_in=c.burn_in, invariant_stride=c.stride,
        invariant_dt=c.dt, invariant_chains=c.chains,
    )
    curve = risk.run_experiment(cfg)
    stem = out / _name(c)
    stem.with_suffix(".csv").write_text(curve.to_csv())
    Path(f"{stem}_summary.json").write_text(curve.summary_json())
    if plot:
        curve.to_svg(stem.with_suffix(".svg"))
    return (f"experiment: model={c.id} slope={curve.slope:.6g} "
            f"risk_first={curve.rows[0].mean_excess_risk:.6g} risk_last={curve.rows[-1].mean_excess_risk:.6g}")


def run_diagnose(c: RunConfig, out: Path) -> str:
    path = out / f"{_name(c)}.csv"
    if c.target == "lyapunov":
        k = ergodicity.lyapunov_constants(c.gamma, c.nu, c.kappa0, c.varkappa1, c.d)
        rows = [("E1", k.E1), ("E2", k.E2), ("nu", k.nu), ("R1", k.R1)]
        path.write_text("quantity,value\n" + "".join(f"{a},{b:.17g}\n" for a, b in rows))
        return f"diagnose lyapunov: E1={k.E1:.6g} E2={k.E2:.6g} R1={k.R1:.6g}"
    entry = _entry(c)
    model = entry.true_model
    if c.target == "moments":
        family = catalog.family_for(entry)
        rep = ergodicity.moment_bound_check(model, family, np.asarray(c.x0), c.m, c.horizon,
                                            c.reps, c.seed)
        path.write_text("m,empirical_sup,stderr,time_of_sup,bound,passed\n"
                        f"{rep.m},{rep.empirical_sup:.17g},{rep.stderr:.17g},{rep.time_of_sup:.17g},"
                        f"{rep.bound:.17g},{str(rep.passed).lower()}\n")
        return (f"diagnose moments: sup={rep.empirical_sup:.6g} se={rep.stderr:.3g} "
                f"bound={rep.bound:.6g} passed={rep.passed}")
    if c.target == "tv-decay":
        rep = ergodicity.tv_decay_estimate(model, np.asarray(c.x), np.asarray(c.y), np.asarray(c.times),
                                           c.reps, c.bins, c.seed)
        path.write_text(rep.to_csv())
        return f"diagnose tv-decay: rate={rep.rate:.6g} decreasing={rep.decreasing}"
    if c.target == "mixing":
        rep = ergodicity.mixing_time_estimate(model, np.asarray(c.x), c.epsilon, c.step, c.reps,
                                              c.bins, c.seed, invariant=_invariant(c, model), cap=c.cap)
        path.write_text("tau,hellinger_sq\n" + "".join(
            f"{i + 1},{v:.17g}\n" for i, v in enumerate(rep.hellinger_sq)))
        return f"diagnose mixing: {rep.summary()}"
    family = catalog.family_for(entry)
    grid = ergodicity.default_probe_grid(model.dim)
    results = (check_drift_conditions(model, family, grid).results
               + check_diffusion_conditions(model, family, grid).results)
    path.write_text("name,statistic,bound,passed\n" + "".join(
        f"{r.name},{r.statistic:.17g},{r.bound:.17g},{str(r.passed).lower()}\n" for r in results))
    failed = [r.name for r in results if not r.passed]
    return f"diagnose conditions: model={c.id} passed={not failed}" + (f" failed={','.join(failed)}" if failed else "")


def run(config: RunConfig, plot: bool = False) -> str:
    """Execute ``config``; returns the summary line."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.subcommand == "simulate":
        return run_simulate(config, out)
    if config.subcommand in ("estimate-drift", "estimate-diffusion"):
        return run_estimate(config, out)
    if config.subcommand == "experiment":
        return run_experiment_cmd(config, out, plot or config.plot)
    return run_diagnose(config, out)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onlinesde",
        description="Online drift/diffusion estimation for SDEs by stochastic mirror descent.",
        epilog="Configuration keys (section, key, default):\n" + describe_fields(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("target", nargs="?", choices=DIAGNOSTICS, help="diagnostic to run (diagnose only)")
    parser.add_argument("--config", type=Path, help="configuration file")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--plot", action="store_true", help="write an SVG plot next to the CSV")
    return parser


def _error_line(exc: BaseException) -> str:
    tb = exc.__traceback__
    while tb is not None and tb.tb_next is not None:
        tb = tb.tb_next
    origin = tb.tb_frame.f_globals.get("__name__", "?") if tb is not None else type(exc).__module__
    payload = {"error": type(exc).__name__, "module": origin, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["errors"] = exc.errors
    if getattr(exc, "index", None) is not None:
        payload["index"] = exc.index
    return json.dumps(payload, sort_keys=True)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        overrides = {"subcommand": args.subcommand}
        if args.target is not None:
            overrides["target"] = args.target
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        config = parse_config(text, overrides)
        print(run(config, plot=args.plot))
        return 0
    except ConfigError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
