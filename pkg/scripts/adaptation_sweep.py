"""Recovery time of the multi-output online LSTM after a permanent 60% drop.

Sweeps the online fine-tuning knobs (window, epochs, step size) and prints,
for each setting, the number of days until the 7-day rolling MAAPE is back
within 1.5x its pre-shock mean.

    python scripts/adaptation_sweep.py                 # defaults only
    python scripts/adaptation_sweep.py --sweep         # full grid
"""

import argparse
import itertools
import time

import numpy as np

from transitbench.data import Shock, SyntheticScenario, generate_synthetic
from transitbench.metrics import daily_maape, rolling_maape
from transitbench.runner import ExperimentConfig, OnlineConfig, run_experiment


def recovery(panel, t0, shock, online):
    cfg = ExperimentConfig("LSTM", "online", "multi", train_end=panel.dates[t0 - 1], online=online)
    flog, _ = run_experiment(panel, cfg)
    roll = rolling_maape(daily_maape(flog))
    pre = float(np.mean(roll[6:shock - 6]))
    back = np.flatnonzero(roll[shock:] <= 1.5 * pre)
    return (int(back[0]) if len(back) else None), pre


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--t0", type=int, default=730, help="first test day")
    ap.add_argument("--shock", type=int, default=180, help="test-day index of the drop")
    ap.add_argument("--sweep", action="store_true")
    a = ap.parse_args()
    panel = generate_synthetic(SyntheticScenario(shocks=(Shock(a.t0 + a.shock, None, 0.4),)), a.seed)
    if a.sweep:
        grid = itertools.product((45, 60, 90), (1, 2), (None, 3e-3, 1e-2))
    else:
        grid = [(90, 1, None)]
    print(f"{'window':>6} {'epochs':>6} {'lr':>8} {'days':>6} {'pre':>7} {'secs':>6}")
    for window, epochs, lr in grid:
        t = time.perf_counter()
        days, pre = recovery(panel, a.t0, a.shock, OnlineConfig(window, epochs, lr))
        print(f"{window:>6} {epochs:>6} {str(lr or 'base'):>8} {str(days):>6} {pre:>7.3f} "
              f"{time.perf_counter() - t:>6.0f}")


if __name__ == "__main__":
    main()
