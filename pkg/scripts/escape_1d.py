"""Success rates on the 1-D robust-mean family started at the outlier cluster."""
import argparse
import time

from robustfit.bench import METHODS, escape_experiment
from robustfit.lm import LMConfig
from robustfit.mean1d import MeanFamily


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-iter", type=int, default=50)
    ap.add_argument("--outliers", type=float, default=0.3)
    ap.add_argument("--methods", default=",".join(METHODS))
    args = ap.parse_args()
    methods = args.methods.split(",")
    start = time.perf_counter()
    rates = escape_experiment(args.trials, MeanFamily(outlier_fraction=args.outliers), methods, args.seed,
                              lm=LMConfig(max_iter=args.max_iter))
    for m in methods:
        print(f"{m:10s} {rates[m]:.3f}")
    print(f"{args.trials} trials in {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
