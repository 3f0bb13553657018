"""Reconstruction score against k and the singular-value ratio profile on synthetic data.

    python scripts/factor_diagnostics.py --seeds 3 --ks 2 4 6 8 10 12
"""

import argparse

import numpy as np

from ewi.linalg import estimate_rank, reconstruction_score, robust_nmf, svd
from ewi.synth import SynthSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--ks", type=int, nargs="+", default=[2, 4, 6, 8, 10, 12, 15])
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--lam", type=float, default=1.0)
    args = ap.parse_args()

    scores = {k: [] for k in args.ks}
    for seed in range(args.seeds):
        X = generate(SynthSpec(noise_level=args.noise, seed=seed)).X.values
        S = svd(X)[1]
        ratios = S[1:16] / S[:15]
        print(f"seed {seed}: estimated rank {estimate_rank(X)}; S[i+1]/S[i] = "
              + " ".join(f"{r:.3f}" for r in ratios))
        for k in args.ks:
            fp = robust_nmf(X, k, args.lam)
            scores[k].append(reconstruction_score(X, fp.W, fp.H))

    print("\n  k  reconstruction score (mean over seeds)")
    for k in args.ks:
        print(f"{k:3d}  {np.mean(scores[k]):.4f}")


if __name__ == "__main__":
    main()
