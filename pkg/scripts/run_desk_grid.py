"""Run the desk-scale pipeline end to end and print the headline numbers.

    python scripts/run_desk_grid.py --out out/desk
"""

import argparse
import sys
import time
from pathlib import Path

from transitbench.analysis import compare_cells, read_regressions_csv
from transitbench.cli import main
from transitbench.runner import read_timings

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk_scale.yaml"


def step(*argv):
    t = time.perf_counter()
    code = main(list(argv))
    if code:
        sys.exit(f"{argv[0]} exited with {code}")
    return time.perf_counter() - t


def main_():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--out", default="out/desk")
    ap.add_argument("--jobs", default="1")
    a = ap.parse_args()
    common = ["--config", a.config, "--out", a.out]
    step("synth", *common)
    print(f"run: {step('run', *common, '--grid', 'all', '--jobs', a.jobs):.0f}s")
    step("analyze", *common)
    step("report", *common)
    step("verify", "--out", a.out)

    fits = {f.experiment: f for f in read_regressions_csv(Path(a.out) / "analysis" / "regressions.csv")}
    print("\nshock (covid) coefficient, online vs static")
    for fam in ("mlp", "cnn", "lstm"):
        for out in ("single", "multi"):
            on, st = fits[f"{fam}-{out}-online"], fits[f"{fam}-{out}-static"]
            c = compare_cells(on, st, "covid")
            print(f"  {fam:>4} {out:<6} {on.get('covid')[0]:.3f} vs {st.get('covid')[0]:.3f}"
                  f"  z={c.z:.1f}")
    t = read_timings(Path(a.out) / "timings.csv")
    print("\nbaseline training seconds (static cells)")
    for exp in sorted(e for e in t if e.endswith("-static")):
        print(f"  {exp:<20} {t[exp]['baseline_total_s']:.1f}")


if __name__ == "__main__":
    main_()
