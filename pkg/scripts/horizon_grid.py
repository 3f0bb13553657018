"""Heat grid of PR AUC margin and positive rate over (alpha, h) for one indicator.

    python scripts/horizon_grid.py --indicator svd_lr --days 720
"""

import argparse

import numpy as np

from ewi.pipeline import INDICATORS, IndicatorParams, SweepGrid, make_partition, sensitivity_sweep
from ewi.synth import SynthSpec, generate
from ewi.volatility import VolatilitySeries


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--indicator", choices=INDICATORS, default="nmf_nlr")
    ap.add_argument("--days", type=int, default=720)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    data = generate(SynthSpec(n_days=args.days, seed=args.seed))
    sigma = VolatilitySeries(int(data.X.day_index[0]), data.sigma)
    grid = SweepGrid(indicators=(args.indicator,))
    rows = sensitivity_sweep(data.X, sigma, grid, IndicatorParams(), make_partition(args.days),
                             seed=args.seed, threads=args.threads)
    cell = {(r["alpha"], r["h"]): r for r in rows}
    for key, title in (("auc_pr_minus_eps", "AUC PR - eps"), ("eps", "eps")):
        print(f"\n{title} ({args.indicator}); rows alpha, columns h")
        print("alpha  " + " ".join(f"{h:>6d}" for h in grid.hs))
        for a in grid.alphas:
            vals = [cell[a, h][key] for h in grid.hs]
            print(f"{a:5.2f}  " + " ".join("   n/a" if np.isnan(v) else f"{v:6.3f}" for v in vals))


if __name__ == "__main__":
    main()
