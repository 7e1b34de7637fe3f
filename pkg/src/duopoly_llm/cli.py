"""Command-line entry point: ``duopoly-llm <command> [flags]``.

Every command that writes data emits a CSV plus a JSON sidecar next to it
holding the fully resolved configuration. Feeding that sidecar back through
``--config`` reproduces the run; explicit flags override config values,
which override defaults.

Exit codes: 0 success, 2 invalid arguments, 3 experiment aborted because
too many runs stayed undetermined, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import dynamics, experiments
from .dynamics import LearnConfig
from .estimator import EstimatorConfig
from .io import artifact_version, write_csv, write_sidecar
from .market import GameParams, LlmParams, classify_regime, delta, rho_critical
from .rng import RngStream, stream_id_for

EXIT_OK, EXIT_USAGE, EXIT_ABORTED, EXIT_IO = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def parse_grid(text) -> list:
    """``start:stop:step`` (inclusive within half a step), ``a,b,c`` or a single value."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    text = str(text).strip()
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise UsageError(f"bad grid {text!r}; expected start:stop:step") from None
        if step <= 0 or stop < start:
            raise UsageError(f"bad grid {text!r}; need step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 0.5)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad value list {text!r}") from None


def parse_int_list(text) -> list:
    values = parse_grid(text)
    if any(v != int(v) or v < 1 for v in values):
        raise UsageError(f"expected positive integers, got {text!r}")
    return [int(v) for v in values]


# defaults per command; every flag below overrides these and any --config value
_LEARN_DEFAULTS = dict(r=1.5, rho=0.85, alpha=dynamics.DEFAULT_ALPHA, eta=dynamics.DEFAULT_ETA,
                       N=dynamics.DEFAULT_HORIZON, epsilon=1e-3, z_cap=dynamics.DEFAULT_Z_CAP, seed=0)
DEFAULTS = {
    "constants": dict(r=1.5, rho=None, theta="0.1,0.25,0.5,0.75,0.9"),
    "trajectory": dict(_LEARN_DEFAULTS, theta0=0.5, b=64, deterministic=False, reps=1, record_every=None),
    "selection": dict(_LEARN_DEFAULTS, theta0=0.5, b="1,4,16,64", reps=200),
    "lockin": dict(_LEARN_DEFAULTS, delta=0.1, b="1,4,16,64", reps=200),
    "width": dict(_LEARN_DEFAULTS, N=20_000, b="4,64", resolution=0.005, epsilon_band=0.1, reps=200),
    "tracking": dict(_LEARN_DEFAULTS, theta0=0.5, b="16,256,4096", T=20.0, reps=100),
    "sweep": dict(_LEARN_DEFAULTS, rho="0.55:0.99:0.01", theta0="0.02:0.98:0.02", deterministic=True,
                  b=64, reps=200),
}


def _learn_flags(p, *, batch=True, batch_list=False):
    p.add_argument("--r", type=float)
    p.add_argument("--rho", type=float)
    if batch:
        p.add_argument("--b", type=str if batch_list else int,
                       help="batch size" + (" list, e.g. 1,4,16,64" if batch_list else ""))
    p.add_argument("--alpha", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--N", type=int, help="retraining horizon")
    p.add_argument("--epsilon", type=float, help="IPW clipping floor")
    p.add_argument("--z-cap", dest="z_cap", type=float)
    p.add_argument("--seed", type=int)


def _output_flags(p):
    p.add_argument("--out", type=str, help="CSV path; the sidecar goes next to it as .json")
    p.add_argument("--config", type=str, help="JSON config file (a previous sidecar works)")
    p.add_argument("--workers", type=int, help=f"worker threads (default ${experiments.WORKERS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duopoly-llm", argument_default=argparse.SUPPRESS,
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", argument_default=argparse.SUPPRESS,
                       help="analytic thresholds and payoff differences")
    p.add_argument("--r", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--theta", type=str, help="theta values at which to report delta")
    p.add_argument("--config", type=str)

    p = sub.add_parser("trajectory", argument_default=argparse.SUPPRESS, help="one or more learning paths")
    _learn_flags(p)
    p.add_argument("--theta0", type=float)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--reps", type=int)
    p.add_argument("--record-every", dest="record_every", type=int)
    _output_flags(p)

    p = sub.add_parser("selection", argument_default=argparse.SUPPRESS,
                       help="collusion probability per batch size")
    _learn_flags(p, batch_list=True)
    p.add_argument("--theta0", type=float)
    p.add_argument("--reps", type=int)
    _output_flags(p)

    p = sub.add_parser("lockin", argument_default=argparse.SUPPRESS,
                       help="wrong-basin rates at theta_minus +/- delta")
    _learn_flags(p, batch_list=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--reps", type=int)
    _output_flags(p)

    p = sub.add_parser("width", argument_default=argparse.SUPPRESS, help="transition band width per batch size")
    _learn_flags(p, batch_list=True)
    p.add_argument("--resolution", type=float)
    p.add_argument("--epsilon-band", dest="epsilon_band", type=float,
                   help="band is p in (eps, 1 - eps)")
    p.add_argument("--reps", type=int)
    _output_flags(p)

    p = sub.add_parser("tracking", argument_default=argparse.SUPPRESS,
                       help="finite- vs infinite-batch path deviation")
    _learn_flags(p, batch_list=True)
    p.add_argument("--theta0", type=float)
    p.add_argument("--T", type=float, help="time horizon in summed step sizes")
    p.add_argument("--reps", type=int)
    _output_flags(p)

    p = sub.add_parser("sweep", argument_default=argparse.SUPPRESS, help="phase diagram over (rho, theta0)")
    _learn_flags(p, batch=False)
    p.add_argument("--theta0", type=str)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--deterministic", action="store_true")
    mode.add_argument("--stochastic", dest="deterministic", action="store_false")
    p.add_argument("--b", type=int)
    p.add_argument("--reps", type=int)
    _output_flags(p)
    # --rho on sweep is a grid
    for action in p._actions:
        if action.dest == "rho":
            action.type = str
    return parser


def resolve(command: str, args: dict) -> dict:
    """Merge defaults, then ``--config`` contents, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    path = args.pop("config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError:
            raise
        except ValueError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        loaded = loaded.get("config", loaded)
        unknown = set(loaded) - set(cfg) - {"out", "workers"}
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(args)
    return cfg


def learn_config(cfg: dict, **overrides) -> LearnConfig:
    values = dict(cfg, **overrides)
    b = values.get("b", 1)
    return LearnConfig(
        game=GameParams(values["r"]), rho=float(values["rho"]),
        batch_size=int(b) if isinstance(b, (int, float)) else 1,
        alpha=float(values["alpha"]), eta=float(values["eta"]), horizon=int(values["N"]),
        estimator=EstimatorConfig(float(values["epsilon"])), z_cap=float(values["z_cap"]),
        record_every=values.get("record_every"),
    )


def _default_out(command: str, cfg: dict) -> str:
    return cfg.get("out") or f"{command}.csv"


def _sidecar(command: str, cfg: dict, started: float, **extra) -> dict:
    echoed = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    return dict(command=command, config=echoed, seed=cfg.get("seed"), version=artifact_version(),
                wall_clock_seconds=round(time.time() - started, 3), **extra)


def _g6(x) -> str:
    return "-" if x is None else f"{x:.6g}"


def cmd_constants(cfg: dict) -> int:
    g = GameParams(cfg["r"])
    out = {"r": g.r, "rho_c": rho_critical(g)}
    if cfg.get("rho") is not None:
        regime = classify_regime(float(cfg["rho"]), g)
        out.update(rho=regime.rho, s=regime.s, regime=regime.kind.value,
                   theta_minus=regime.theta_minus, theta_plus=regime.theta_plus)
        out["delta"] = {repr(t): delta(LlmParams(t, regime.rho), g) for t in parse_grid(cfg["theta"])}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_trajectory(cfg: dict) -> int:
    started = time.time()
    lc = learn_config(cfg)
    reps = int(cfg["reps"])
    if reps < 1:
        raise UsageError("--reps must be at least 1")
    theta0 = float(cfg["theta0"])
    if cfg["deterministic"]:
        trajs = [dynamics.simulate_deterministic(theta0, lc)]
    else:
        label = ("trajectory", repr(theta0), lc.batch_size, repr(lc.rho), repr(lc.r))
        trajs = experiments.parallel_map(
            lambda k: dynamics.simulate_stochastic(theta0, lc, RngStream(cfg["seed"], stream_id_for(*label, k))),
            range(reps), cfg.get("workers"))
    out = _default_out("trajectory", cfg)
    if len(trajs) == 1:
        t = trajs[0]
        write_csv(out, ("n", "theta"), zip(t.steps.tolist(), t.thetas.tolist()))
    else:
        write_csv(out, ("rep", "n", "theta"),
                  ((k, n, th) for k, t in enumerate(trajs) for n, th in zip(t.steps.tolist(), t.thetas.tolist())))
    runs = [dict(limit=t.limit.value, z_final=t.z_final, steps_run=t.steps_run, absorbed=t.absorbed,
                 theta_final=t.theta_final, on_separatrix=t.on_separatrix) for t in trajs]
    extra = dict(runs[0]) if len(runs) == 1 else dict(runs=runs)
    write_sidecar(out, _sidecar("trajectory", cfg, started, learn_config=lc.to_dict(), **extra))
    for k, t in enumerate(trajs):
        print(f"rep {k}: limit {t.limit.value}  theta_final {_g6(t.theta_final)}  steps {t.steps_run}")
    return EXIT_OK


def cmd_selection(cfg: dict) -> int:
    started = time.time()
    b_grid = parse_int_list(cfg["b"])
    rows = []
    for b in b_grid:
        lc = learn_config(cfg, b=b)
        est = experiments.selection_probability(float(cfg["theta0"]), lc, int(cfg["reps"]), cfg["seed"],
                                                cfg.get("workers"))
        rows.append((b, float(cfg["theta0"]), est.p_plus_hat, est.ci_low, est.ci_high, est.replications,
                     est.undetermined_count, est.collusive_count, est.competitive_count))
        print(f"b={b:<6d} p_plus {_g6(est.p_plus_hat)}  95% CI [{_g6(est.ci_low)}, {_g6(est.ci_high)}]"
              f"  undetermined {est.undetermined_count}")
    out = _default_out("selection", cfg)
    write_csv(out, ("b", "theta0", "p_plus_hat", "ci_low", "ci_high", "replications", "undetermined",
                    "collusive", "competitive"), rows)
    write_sidecar(out, _sidecar("selection", cfg, started, learn_config=learn_config(cfg, b=1).to_dict()))
    return EXIT_OK


def cmd_lockin(cfg: dict) -> int:
    started = time.time()
    lc = learn_config(cfg, b=1)
    recs = experiments.lockin_curve(float(cfg["delta"]), lc, parse_int_list(cfg["b"]), int(cfg["reps"]),
                                    cfg["seed"], cfg.get("workers"))
    out = _default_out("lockin", cfg)
    write_csv(out, ("b", "theta0_above", "mis_above", "mis_ci_low", "mis_ci_high", "theta0_below",
                    "p_plus_below", "ci_low", "ci_high"),
              [(r.b, r.theta0_above, r.mis_above, *r.mis_above_ci, r.theta0_below, r.p_plus_below,
                *r.p_plus_below_ci) for r in recs])
    write_sidecar(out, _sidecar("lockin", cfg, started, learn_config=lc.to_dict()))
    for r in recs:
        print(f"b={r.b:<6d} mis-selection above {_g6(r.mis_above)}  collusion below {_g6(r.p_plus_below)}")
    return EXIT_OK


def cmd_width(cfg: dict) -> int:
    started = time.time()
    lc = learn_config(cfg, b=1)
    recs = experiments.transition_width(lc, parse_int_list(cfg["b"]), float(cfg["resolution"]),
                                        float(cfg["epsilon_band"]), int(cfg["reps"]), cfg["seed"],
                                        workers=cfg.get("workers"))
    out = _default_out("width", cfg)
    write_csv(out, ("b", "width", "lower", "upper", "below_resolution", "truncated"),
              [(r.b, r.width, r.lower, r.upper, r.below_resolution, r.truncated) for r in recs])
    curve = Path(out).with_name(Path(out).stem + "_curve.csv")
    write_csv(curve, ("b", "theta0", "p_plus_hat"),
              [(r.b, t, p) for r in recs for t, p in zip(r.theta0, r.p_plus)])
    write_sidecar(out, _sidecar("width", cfg, started, learn_config=lc.to_dict(), curve_csv=curve.name))
    for r in recs:
        bound = "<=" if r.below_resolution else "="
        print(f"b={r.b:<6d} width {bound} {_g6(r.width)}  band [{_g6(r.lower)}, {_g6(r.upper)}]")
    return EXIT_OK


def cmd_tracking(cfg: dict) -> int:
    started = time.time()
    lc = learn_config(cfg, b=1)
    recs = experiments.tracking_error(lc, parse_int_list(cfg["b"]), float(cfg["T"]), int(cfg["reps"]),
                                      cfg["seed"], float(cfg["theta0"]), cfg.get("workers"))
    out = _default_out("tracking", cfg)
    write_csv(out, ("b", "n_steps", "median", "q25", "q75", "iqr"),
              [(r.b, r.n_steps, r.median, r.q25, r.q75, r.iqr) for r in recs])
    write_sidecar(out, _sidecar("tracking", cfg, started, learn_config=lc.to_dict()))
    for r in recs:
        print(f"b={r.b:<6d} median sup-deviation {_g6(r.median)}  IQR {_g6(r.iqr)}")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    started = time.time()
    rho_grid, theta_grid = parse_grid(cfg["rho"]), parse_grid(cfg["theta0"])
    lc = learn_config(cfg, rho=rho_grid[0] if rho_grid else 0.85, b=int(cfg["b"]))
    recs = experiments.phase_sweep(float(cfg["r"]), rho_grid, theta_grid, lc,
                                   stochastic=not cfg["deterministic"], reps=int(cfg["reps"]),
                                   seed=cfg["seed"], workers=cfg.get("workers"))
    out = _default_out("sweep", cfg)
    rows = []
    for s in recs:
        value = s.limit if s.limit is not None else s.p_plus_hat
        rows.append((s.rho, s.theta0, s.regime, s.theta_minus, s.theta_plus, value, s.ci_low, s.ci_high,
                     s.theta_final))
    write_csv(out, ("rho", "theta0", "regime", "theta_minus", "theta_plus", "limit_or_pplus", "ci_low",
                    "ci_high", "theta_final"), rows)
    write_sidecar(out, _sidecar("sweep", cfg, started, rho_c=rho_critical(GameParams(cfg["r"])),
                                cells=len(rows)))
    print(f"wrote {len(rows)} cells to {out}")
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "trajectory": cmd_trajectory,
    "selection": cmd_selection,
    "lockin": cmd_lockin,
    "width": cmd_width,
    "tracking": cmd_tracking,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    try:
        cfg = resolve(command, args)
        return COMMANDS[command](cfg)
    except experiments.UndeterminedRateError as exc:
        print(f"duopoly-llm {command}: aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except OSError as exc:
        print(f"duopoly-llm {command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, KeyError) as exc:
        print(f"duopoly-llm {command}: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
