"""Command-line interface.

Subcommands: run (one closed-loop optimization), batch (repeated runs
with derived seeds), sweep (ramp-fidelity grids), analyze (sensitivity
and covariance reports from a stored record). Exit codes: 0 on success,
2 for configuration or fixture problems, 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, dqd, harness

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tune",
        description="Closed-loop tuning of simulated spin-qubit devices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimization")
    p_run.add_argument("--config", required=True, help="run config JSON")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.add_argument("--resume", action="store_true",
                       help="continue from an existing record in the output directory")

    p_batch = sub.add_parser("batch", help="repeat a run with derived seeds")
    p_batch.add_argument("--config", required=True)
    p_batch.add_argument("--repeats", type=int, required=True)
    p_batch.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="compute a ramp-fidelity grid")
    p_sweep.add_argument("--config", required=True, help="sweep config JSON")
    p_sweep.add_argument("--out", default=None, help="override output CSV path")

    p_an = sub.add_parser("analyze", help="analyze a stored run record")
    p_an.add_argument("--record", required=True, help="directory with record.jsonl")
    p_an.add_argument("--hdmr", action="store_true",
                      help="write first-order sensitivity report")
    p_an.add_argument("--cov-pairs", action="append", default=[],
                      metavar="I,J", help="covariance entry trajectory, repeatable")
    p_an.add_argument("--out", default=None, help="output directory (default: record dir)")
    return parser


def _cmd_run(args) -> int:
    config = harness.RunConfig.from_json(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    record = harness.run(config, resume=args.resume)
    if config.output_dir is not None:
        out = Path(config.output_dir)
        harness.export(record, "trace", out / "trace.csv")
        harness.export(record, "covariance", out / "covariance.json")
        harness.export(record, "best_params", out / "best_params.json")
    best = dict(zip(record.space.names, record.best_params))
    print(json.dumps({"best_cost": record.best_cost, "best_params": best},
                     sort_keys=True))
    return 0


def _cmd_batch(args) -> int:
    config = harness.RunConfig.from_json(args.config)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    result = harness.batch(config, repeats=args.repeats)
    summary = {
        "repeats": result.aggregate["repeats"],
        "best_costs": result.aggregate["best_costs"],
        "band_width": result.aggregate["band_width"],
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _parse_axis(payload: dict) -> tuple:
    try:
        name = payload["name"]
        if "values" in payload:
            values = np.asarray(payload["values"], dtype=float)
        else:
            num = int(payload["num"])
            if payload.get("spacing", "linear") == "geom":
                values = np.geomspace(float(payload["start"]), float(payload["stop"]), num)
            else:
                values = np.linspace(float(payload["start"]), float(payload["stop"]), num)
    except (KeyError, TypeError, ValueError) as err:
        raise harness.ConfigError(f"bad sweep axis: {err}") from None
    return name, values


def _cmd_sweep(args) -> int:
    try:
        payload = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise harness.ConfigError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as err:
        raise harness.ConfigError(f"config file is not valid JSON: {err}") from None
    try:
        base = dqd.DqdConfig(**payload.get("base", {}))
    except (TypeError, ValueError) as err:
        raise harness.ConfigError(f"bad base config: {err}") from None
    axis1 = _parse_axis(payload["axis1"]) if "axis1" in payload else None
    axis2 = _parse_axis(payload["axis2"]) if "axis2" in payload else None
    if axis1 is None or axis2 is None:
        raise harness.ConfigError("sweep config needs axis1 and axis2")
    noise = None
    if payload.get("noise"):
        try:
            noise = dqd.NoiseModel(**payload["noise"])
        except (TypeError, ValueError) as err:
            raise harness.ConfigError(f"bad noise model: {err}") from None
    n_steps = int(payload.get("n_steps", dqd.GRID_STEPS))
    out = Path(args.out if args.out is not None else payload.get("out", "grid.csv"))
    try:
        grid = dqd.sweep_fidelity_grid(base, axis1, axis2, noise=noise, n_steps=n_steps)
    except ValueError as err:
        raise harness.ConfigError(str(err)) from None
    dqd.grid_to_csv(out, axis1, axis2, grid)
    print(json.dumps({"out": str(out), "shape": list(grid.shape),
                      "mean_fidelity": float(grid.mean())}, sort_keys=True))
    return 0


def _cmd_analyze(args) -> int:
    record = harness.load_record(args.record)
    out_dir = Path(args.out if args.out is not None else args.record)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.hdmr:
        xs = []
        costs = []
        for gen in record.generations:
            for cand in gen.candidates:
                xs.append(record.space.normalize(np.array(cand["x"], dtype=float)))
                costs.append(cand["cost"])
        finite = np.isfinite(costs)
        samples = np.clip(np.array(xs)[finite], 0.0, 1.0)
        report = analysis.hdmr_first_order(samples, np.array(costs)[finite],
                                           names=list(record.space.names))
        payload = {
            "first_order": report.first_order,
            "residual": report.residual,
            "normalized": report.normalized_contributions(),
        }
        (out_dir / "hdmr.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        lines = ["name,contribution"]
        for name, value in report.normalized_contributions().items():
            lines.append(f"{name},{value!r}")
        (out_dir / "hdmr.csv").write_text("\n".join(lines) + "\n")
        wrote += ["hdmr.json", "hdmr.csv"]
    if args.cov_pairs:
        series = harness.covariance_series(record)
        for pair in args.cov_pairs:
            try:
                i, j = (int(v) for v in pair.split(","))
            except ValueError:
                raise harness.ConfigError(
                    f"bad --cov-pairs value {pair!r}; expected I,J") from None
            try:
                traj = analysis.covariance_trajectory(series, (i, j))
            except ValueError as err:
                raise harness.ConfigError(str(err)) from None
            name = f"cov_{i}_{j}.csv"
            lines = ["generation,value"] + [f"{g},{v!r}" for g, v in traj]
            (out_dir / name).write_text("\n".join(lines) + "\n")
            wrote.append(name)
    print(json.dumps({"record": str(args.record), "wrote": wrote}, sort_keys=True))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "batch": _cmd_batch,
    "sweep": _cmd_sweep,
    "analyze": _cmd_analyze,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except harness.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
