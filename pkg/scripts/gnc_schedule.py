"""Final objective and iteration count of GNC against the number of scale levels."""
import argparse

from robustfit.baselines import GncSchedule, gnc_solve
from robustfit.mean1d import constructed_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-levels", type=int, default=8)
    args = ap.parse_args()
    mean, theta0 = constructed_instance()
    problem = mean.problem(theta0)
    print("levels,psi,iterations,theta")
    for levels in range(1, args.max_levels + 1):
        tr = gnc_solve(problem, schedule=GncSchedule(levels))
        print(f"{levels},{tr.final.psi:.6f},{tr.iterations},{tr.theta[0]:.6g}")


if __name__ == "__main__":
    main()
