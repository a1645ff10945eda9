"""Order-recovery rates of the stepwise search over seeds.

    python scripts/arima_montecarlo.py --seeds 100
"""

import argparse
from collections import Counter

import numpy as np
from scipy.signal import lfilter

from transitbench.arima import stepwise_select


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    a = ap.parse_args()
    ar_ok, wn_orders = 0, Counter()
    for seed in range(a.seeds):
        e = np.random.default_rng(seed).standard_normal(2200)
        fit = stepwise_select(lfilter([1.0], [1.0, -0.7], e)[200:], seasonal=False)
        ar_ok += fit.order.p >= 1 and fit.order.q <= 1 and abs(fit.ar[0] - 0.7) <= 0.05
        wn = stepwise_select(np.random.default_rng(seed).standard_normal(1000), seasonal=False)
        wn_orders[wn.order.label()] += 1
    print(f"AR(1) phi=0.7 recovered: {ar_ok}/{a.seeds}")
    print("white-noise selections:")
    for label, n in wn_orders.most_common():
        print(f"  {label:<14} {n}")


if __name__ == "__main__":
    main()
