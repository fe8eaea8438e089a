"""Command line: wind-gen, plan, simulate, report.

Exit codes: 0 success, 1 simulation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import engine
from .config import CampaignSpec, ConfigError, dump_spec, load_spec, parse_config
from .engine import Environment, Mode, TrialMetrics
from .events import dump_events, load_catalog
from .planner import plan, write_policy, write_policy_csv
from .wind import WindFileError, load_wind_field, synthesize_wind_field, write_wind_csv, write_wind_field

OUT_ENV = "AEROBOT_OUT"
EXIT_OK, EXIT_SIM, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("aerobot")


class ReportError(ValueError):
    pass


def _spec_from_args(args) -> CampaignSpec:
    spec = parse_config(args.config) if args.config else load_spec(None)
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        update["n_trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        update["workers"] = args.workers
    out = getattr(args, "out", None) or os.environ.get(OUT_ENV)
    if out:
        update["out"] = out
    # re-validate so CLI overrides obey the schema too
    return load_spec({**spec.model_dump(mode="json"), **update}) if update else spec


def build_environment(spec: CampaignSpec) -> Environment:
    if spec.wind.path:
        wind = load_wind_field(spec.wind.path)
    else:
        wind = synthesize_wind_field(spec.wind.synthesis(), spec.wind.seed)
    catalog = load_catalog(spec.catalog)
    return Environment.build(wind, catalog, time_step=spec.base.time_step_s)


# ------------------------------------------------------------------ simulate


def read_metrics_csv(path) -> list[TrialMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for name, value in row.items():
                if name in ("closest_approaches", "latencies"):
                    kw[name] = tuple(float(x) for x in value.split(";")) if value else ()
                elif name in ("pct_detected_visited", "pct_events_visited"):
                    kw[name] = float(value)
                else:
                    kw[name] = int(value)
            out.append(TrialMetrics(**kw))
    return out


def _cell_params(trial) -> dict:
    d = trial.model_dump(mode="json")
    return {k: d[k] for k in ("mode", "orbit", "radius_multiplier", "rate_multiplier", "n_balloons")}


def simulate(spec: CampaignSpec) -> int:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "campaign.json").write_text(dump_spec(spec) + "\n")
    env = None
    summary = {"seed": spec.seed, "n_trials": spec.n_trials, "cells": {}}
    status = EXIT_OK
    for cell in spec.cells():
        path = out / f"{cell.name}.metrics.csv"
        if not path.exists():
            try:
                env = env or build_environment(spec)
                log.info("cell %s: %d trials", cell.name, spec.n_trials)
                metrics = engine.run_trials(cell.trial.build(), spec.n_trials, spec.seed, env, spec.workers)
            except Exception as err:  # one failing cell must not hide the others
                log.error("cell %s failed: %s", cell.name, err)
                status = EXIT_SIM
                continue
            tmp = path.with_suffix(".tmp")
            engine.write_metrics_csv(metrics, tmp)
            tmp.replace(path)
        else:
            log.info("cell %s: already complete, skipping", cell.name)
        # summaries always come from the CSV so resumed and fresh runs agree byte for byte
        summary["cells"][cell.name] = {"params": _cell_params(cell.trial), "metrics": engine.aggregate(read_metrics_csv(path))}
    engine.write_summary_json(summary, out / "summary.json")
    if summary["cells"]:
        write_report([summary], out)
    return status


# ------------------------------------------------------------------ report

REPORT_METRICS = (
    ("distinct_detections", "Distinct detections"),
    ("distinct_visits", "Distinct visits"),
    ("total_visits", "Total visits"),
    ("pct_detected_visited", "Detected events visited [%]"),
    ("pct_events_visited", "Events visited [%]"),
)
HIST_EDGES_KM = np.arange(0.0, 55.0, 5.0)


def _gain(a, b):
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return 100.0 * (a - b) / b


def load_summaries(paths) -> list[dict]:
    out = []
    for p in paths:
        try:
            out.append(json.loads(Path(p).read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise ReportError(f"{p}: {err}") from None
    return out


def _scenarios(summaries):
    """Group cells by everything except mode: scenario label -> {mode: metrics}."""
    schema = None
    groups: dict[str, dict] = {}
    for s in summaries:
        for name, cell in s.get("cells", {}).items():
            keys = tuple(sorted(k for k, v in cell["metrics"].items() if isinstance(v, dict)))
            if schema is None:
                schema = keys
            elif keys != schema:
                raise ReportError(f"cell {name} has a different metric schema")
            p = cell["params"]
            label = f"{p['orbit']} r={p['radius_multiplier']:g} q={p['rate_multiplier']:g} n={p['n_balloons']}"
            if p["mode"] in groups.setdefault(label, {}):
                raise ReportError(f"duplicate {p['mode']} cell for scenario {label}")
            groups[label][p["mode"]] = cell["metrics"]
    if not groups:
        raise ReportError("no cells found in the summaries")
    return groups


def format_tables(summaries) -> str:
    modes = [m.value for m in Mode]
    lines = []
    for label, cells in _scenarios(summaries).items():
        present = [m for m in modes if m in cells]
        lines.append(f"## {label}")
        head = ["Metric"] + [f"{m} mean" for m in present] + [f"{m} std" for m in present]
        gains = []
        if Mode.AUTONOMOUS.value in cells and Mode.PASSIVE.value in cells:
            gains.append(("gain vs passive [%]", Mode.PASSIVE.value))
        if Mode.AUTONOMOUS.value in cells and Mode.GROUND.value in cells:
            gains.append(("gain vs ground [%]", Mode.GROUND.value))
        head += [g for g, _ in gains]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        for key, title in REPORT_METRICS:
            row = [title]
            row += [f"{cells[m][key]['mean']:.2f}" for m in present]
            row += [f"{cells[m][key]['std']:.2f}" for m in present]
            auto = cells.get(Mode.AUTONOMOUS.value)
            for _, ref in gains:
                row.append(f"{_gain(auto[key]['mean'], cells[ref][key]['mean']):+.1f}")
            lines.append("| " + " | ".join(row) + " |")
        lines.append("")
    return "\n".join(lines)


def closest_approach_histogram(summaries) -> tuple[list[str], np.ndarray]:
    names, counts = [], []
    for s in summaries:
        for name, cell in s.get("cells", {}).items():
            ca = np.asarray(cell["metrics"].get("closest_approach_m", []), dtype=float) / 1e3
            names.append(name)
            counts.append(np.histogram(ca, bins=HIST_EDGES_KM)[0])
    return names, np.array(counts).reshape(len(names), HIST_EDGES_KM.size - 1)


def write_report(summaries, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.md").write_text(format_tables(summaries))
    names, counts = closest_approach_histogram(summaries)
    with open(out / "closest_approach_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo_km", "bin_hi_km"] + names)
        for b in range(HIST_EDGES_KM.size - 1):
            w.writerow([f"{HIST_EDGES_KM[b]:g}", f"{HIST_EDGES_KM[b + 1]:g}"] + [int(c) for c in counts[:, b]])


# ------------------------------------------------------------------ commands


def cmd_wind_gen(args) -> int:
    spec = _spec_from_args(args)
    if args.convert:
        field = load_wind_field(args.convert)
    else:
        field = synthesize_wind_field(spec.wind.synthesis(), spec.wind.seed if args.seed is None else args.seed)
    target = Path(args.out or os.environ.get(OUT_ENV) or "wind.vwnd")
    if target.suffix == "" or target.is_dir():
        target.mkdir(parents=True, exist_ok=True)
        target = target / "wind.vwnd"
    (write_wind_csv if args.csv else write_wind_field)(field, target)
    print(target)
    return EXIT_OK


def cmd_plan(args) -> int:
    spec = _spec_from_args(args)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    env = build_environment(spec)
    cfg = spec.base.build(seed=spec.seed)
    state = engine.initialize_trial(cfg, env)
    known = [e for e in state.events if e.start <= 0.0 < e.end]
    policy = plan(env.transitions, known, cfg.planner)
    write_policy(policy, out / "policy.vpol")
    write_policy_csv(policy, out / "policy.csv")
    dump_events(known, out / "events.json")
    print(f"{len(known)} events, {policy.iterations} iterations, residual {policy.residual:.3g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return simulate(_spec_from_args(args))


def cmd_report(args) -> int:
    summaries = load_summaries(args.summaries)
    out = args.out or os.environ.get(OUT_ENV) or "."
    write_report(summaries, out)
    print(format_tables(summaries))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aerobot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False):
        sp.add_argument("--config", help="campaign file (JSON or YAML)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output path (overrides ${OUT_ENV} and the config)")
        if trials:
            sp.add_argument("--trials", type=int)
            sp.add_argument("--workers", type=int)

    w = sub.add_parser("wind-gen", help="synthesize a wind field or convert between formats")
    common(w)
    w.add_argument("--convert", help="existing wind file to re-encode")
    w.add_argument("--csv", action="store_true", help="write the CSV debug format")
    w.set_defaults(func=cmd_wind_gen)

    pl = sub.add_parser("plan", help="solve one policy and export value/command maps")
    common(pl)
    pl.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run a campaign over the configured sweep")
    common(s, trials=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="comparison tables from summary files")
    r.add_argument("summaries", nargs="+")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ReportError, WindFileError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.InitializationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
