"""Command-line interface.

Subcommands: verify, simulate, sweep, growth, bourgain, probe3d. Each
reads one YAML config document and writes a CSV table plus a JSON-lines
event log into the output directory (--out, else $TFLAB_OUT, else ./out).
Failed verdicts are data, not errors: the exit status is nonzero only for
hard failures (bad config, IO, numerical blow-up).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from .checkpoint import save_checkpoint
from .config import ConfigError, ExperimentConfig, config_hash, load_config, validate
from .dynamics import Observer, SimulationBlowupError, SpdeState, StepControl, integrate
from .experiments import (
    build_spectrum,
    default_spde_dt,
    growth_alpha_star,
    run_bourgain_set_estimate,
    run_growth_experiment,
    run_stationary,
    run_viscosity_sweep,
    run_3d_alternative_probe,
    verify_invariants,
)
from .fields import SobolevIndex, VorticityField2D, sobolev_norm
from .forcing import RngStream, sample_stationary_linear
from .measures import segmented_ci
from .operators import biot_savart
from .reporting import CsvWriter, JsonlWriter

SUBCOMMANDS = ("verify", "simulate", "sweep", "growth", "bourgain", "probe3d")


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.out_dir or os.environ.get("TFLAB_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_verify(cfg, out, chash, threads):
    checks = verify_invariants(cfg)
    with CsvWriter(out / "verify.csv", "verify", ["name", "value", "bound", "passed"], chash) as w:
        for c in checks:
            w.write_row(c)
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: "
                  f"{c['value']:.3e} (bound {c['bound']:.3e})")
    n_bad = sum(not c["passed"] for c in checks)
    print(f"verify: {len(checks) - n_bad}/{len(checks)} checks passed")
    return 0


def _cmd_simulate(cfg, out, chash, threads):
    grid, spectrum = build_spectrum(cfg)
    nu = cfg.nu[0]
    stream = RngStream(cfg.seed, 0)
    field = sample_stationary_linear(spectrum, cfg.delta, stream, radius=cfg.galerkin_n)
    state = SpdeState(field, 0.0, nu, cfg.delta, cfg.galerkin_n, stream)
    dt = cfg.time.dt or default_spde_dt(cfg, spectrum, nu)
    ctrl = StepControl(c_cfl=cfg.time.cfl, h_max=max(cfg.time.h_max, dt), fixed_dt=dt)
    sigma = cfg.sigma[0]
    rows = []

    def sample(s):
        u = biot_savart(s.field) if isinstance(s.field, VorticityField2D) else s.field
        rows.append({
            "t": s.t,
            "l2": sobolev_norm(u, SobolevIndex(0.0)),
            "h1": sobolev_norm(u, SobolevIndex(1.0)),
            "hsigma": sobolev_norm(u, SobolevIndex(sigma, homogeneous=False)),
        })

    obs = Observer(cfg.time.sample_every_steps * dt, sample)
    state = integrate(state, cfg.time.t_end, ctrl, (obs,), spectrum, not cfg.linear_only)
    with CsvWriter(out / "series.csv", "series", ["t", "l2", "h1", "hsigma"], chash) as w:
        for r in rows:
            w.write_row(r)
    save_checkpoint(state, out / "state.tflab")
    print(f"simulate: {len(rows)} samples to t={state.t:g}; checkpoint at state.tflab")
    return 0


_SWEEP_COLUMNS = ["nu", "galerkin_n", "quantity", "estimate", "ci_half_width",
                  "target", "lower", "upper", "verdict"]


def write_sweep_csv(table, path, chash):
    with CsvWriter(path, "sweep", _SWEEP_COLUMNS, chash) as w:
        for row in table.rows:
            for r in row.report.rows:
                w.write_row({
                    "nu": row.nu,
                    "galerkin_n": row.galerkin_n if row.galerkin_n is not None else "",
                    "quantity": r.quantity,
                    "estimate": r.estimate,
                    "ci_half_width": r.ci_half_width,
                    "target": r.target if r.target is not None else "",
                    "lower": r.lower if r.lower is not None else "",
                    "upper": r.upper if r.upper is not None else "",
                    "verdict": r.verdict,
                })


def _cmd_sweep(cfg, out, chash, threads):
    table = run_viscosity_sweep(cfg, threads=threads)
    write_sweep_csv(table, out / "sweep.csv", chash)
    with JsonlWriter(out / "sweep_events.jsonl", "sweep-events", chash) as log:
        for row in table.rows:
            log.write({
                "event": "row", "nu": row.nu, "n_samples": row.run.n_samples,
                "dt": row.run.dt, "tau_int": row.run.tau_int,
                "passed": row.report.passed,
            })
    for row in table.rows:
        status = "pass" if row.report.passed else "FAIL"
        print(f"sweep nu={row.nu:g}: {row.run.n_samples} samples, balance {status}")
    return 0


def _cmd_growth(cfg, out, chash, threads):
    records = run_growth_experiment(cfg, threads=threads)
    cols = ["sample_id", "alpha_hat", "alpha_star", "flagged", "aborted",
            "max_hsigma", "max_linf_grad"]
    with CsvWriter(out / "growth.csv", "growth", cols, chash) as w:
        for r in records:
            w.write_row({
                "sample_id": r.sample_id, "alpha_hat": r.alpha_hat,
                "alpha_star": r.alpha_star, "flagged": r.flagged,
                "aborted": r.aborted,
                "max_hsigma": max(r.running_max) if r.running_max else math.nan,
                "max_linf_grad": max(r.linf_grad) if r.linf_grad else math.nan,
            })
    series_cols = ["sample_id", "t", "hsigma", "running_max", "linf_grad"]
    with CsvWriter(out / "growth_series.csv", "growth-series", series_cols, chash) as w:
        for r in records:
            for t, h, m, g in zip(r.times, r.hsigma, r.running_max, r.linf_grad):
                w.write_row({"sample_id": r.sample_id, "t": t, "hsigma": h,
                             "running_max": m, "linf_grad": g})
    n_flag = sum(r.flagged for r in records)
    print(f"growth: {len(records)} samples, alpha* = {growth_alpha_star(cfg):.4g}, "
          f"{n_flag} flagged (evidence only; the bound is asymptotic)")
    return 0


def _cmd_bourgain(cfg, out, chash, threads):
    result = run_bourgain_set_estimate(cfg, threads=threads)
    cols = ["lambda", "horizon", "tau", "n_checkpoints", "exit_fraction",
            "max_tail", "union_bound", "consistent"]
    with CsvWriter(out / "bourgain.csv", "bourgain", cols, chash) as w:
        for c in result.cells:
            w.write_row({
                "lambda": c.lam, "horizon": c.horizon, "tau": c.tau,
                "n_checkpoints": c.n_checkpoints, "exit_fraction": c.exit_fraction,
                "max_tail": c.max_tail, "union_bound": c.union_bound,
                "consistent": c.consistent,
            })
    bad = sum(not c.consistent for c in result.cells)
    print(f"bourgain: c = {result.c_doubling:.4g}, {len(result.cells)} cells, "
          f"{bad} union-bound violations")
    return 0


def _cmd_probe3d(cfg, out, chash, threads):
    rows = run_3d_alternative_probe(cfg, threads=threads)
    cols = ["nu", "galerkin_n", "mean_l2sq", "mean_h1psq", "ci_half_width", "target"]
    with CsvWriter(out / "probe3d.csv", "probe3d", cols, chash) as w:
        for r in rows:
            w.write_row({"nu": r.nu, "galerkin_n": r.galerkin_n,
                         "mean_l2sq": r.mean_l2sq, "mean_h1psq": r.mean_h1psq,
                         "ci_half_width": r.ci_half_width, "target": r.target})
    for r in rows:
        print(f"probe3d nu={r.nu:g}: E|u|^2_L2 = {r.mean_l2sq:.4g}, "
              f"E|u|^2_H1d = {r.mean_h1psq:.4g} (linear target {r.target:.4g})")
    return 0


_HANDLERS = {
    "verify": _cmd_verify,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "growth": _cmd_growth,
    "bourgain": _cmd_bourgain,
    "probe3d": _cmd_probe3d,
}


def dispatch(subcommand: str, cfg: ExperimentConfig, out_dir, threads: int = 1) -> int:
    """Run one experiment driver; returns a process exit status."""
    if subcommand not in _HANDLERS:
        print(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}",
              file=sys.stderr)
        return 2
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"output directory not writable: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[subcommand](cfg, out, config_hash(cfg), threads)
    except SimulationBlowupError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tflab",
        description="Stationary-measure laboratory for torus Euler flows "
                    "and their stochastic hyperviscous approximations.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="YAML config path")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (default $TFLAB_OUT or ./out)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads; affects wall time only, never results")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        else:
            cfg = ExperimentConfig()
            errors = validate(cfg)
            if errors:
                raise ConfigError(errors)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    return dispatch(args.subcommand, cfg, _out_dir(args, cfg), max(args.threads, 1))


if __name__ == "__main__":
    sys.exit(main())
