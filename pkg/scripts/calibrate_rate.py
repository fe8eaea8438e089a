"""Calibrate the nominal per-site eruption rate.

Runs passive nominal trials (detections barely depend on the guidance mode)
at several rate multipliers, fits mean distinct detections against the
multiplier with a quadratic, and reports the per-site rate that hits the
target. Paste the result into NOMINAL_SITE_RATE in src/aerobot/events.py.

    python scripts/calibrate_rate.py --trials 300
"""

import argparse

import numpy as np

from aerobot.engine import Mode, TrialConfig, default_environment, run_trials
from aerobot.events import DAY, NOMINAL_SITE_RATE

TARGET_DETECTIONS = 8.35


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--multipliers", type=float, nargs="+", default=[0.5, 0.75, 1.0, 1.25])
    args = ap.parse_args()

    env = default_environment()
    means = []
    for m in args.multipliers:
        cfg = TrialConfig(mode=Mode.PASSIVE, rate_multiplier=m)
        res = run_trials(cfg, args.trials, args.seed, env)
        means.append(np.mean([r.distinct_detections for r in res]))
        print(f"multiplier {m:.3f}: mean distinct detections {means[-1]:.3f}", flush=True)
    fit = np.polynomial.Polynomial.fit(args.multipliers, means, 2)
    roots = [r.real for r in (fit - TARGET_DETECTIONS).roots() if abs(r.imag) < 1e-9 and r.real > 0]
    best = min(roots, key=lambda r: abs(r - 1.0))
    print(f"multiplier for {TARGET_DETECTIONS} detections: {best:.4f}")
    print(f"NOMINAL_SITE_RATE = {NOMINAL_SITE_RATE * DAY * best:.5f} / DAY")


if __name__ == "__main__":
    main()
