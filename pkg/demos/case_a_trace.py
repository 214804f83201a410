"""Watch the staged booster carve up the Case A line.

The target is smooth on [1/2, 1] and rough near 0.  The staged booster
should freeze the smooth part early with a wide bin width and spend its
later, narrower stages on the rough interval.

Run with ``python demos/case_a_trace.py [seed]``.
"""

import sys

from htboost.cli import stage_trace
from htboost.evaluation import ExperimentConfig


def main(seed=0):
    cfg = ExperimentConfig(case="A", seed=seed)
    for rec in stage_trace(cfg):
        cells = rec["stopped_cells"]
        span = f"within {min(c[0][0] for c in cells):.3f}..{max(c[0][1] for c in cells):.3f}" if cells else "none"
        print(f"stage {rec['stage']}: h={rec['bin_width']:.3f} rho={rec['rho']} T={rec['T']} "
              f"froze {len(cells)} cells ({span}) test mse {rec['test_mse']:.3e}")
        by_region = ", ".join(f"{k}: {v:.2e}" for k, v in rec["test_region_mse"].items())
        print(f"    per region {by_region}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
