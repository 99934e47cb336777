"""Show that unfamiliar conditions raise the policy's uncertainty.

Trains the reference starter policy on the seen tracks, then scores
maskless rollouts on those tracks and on held-out tracks driven under the
novel-conditions perturbation profile. If the dropout ensemble is doing
its job, the median combined score is visibly higher on the novel side.

The full reference budget takes a couple of minutes; --quick shrinks the
corpus for a fast look.

Example
-------
python demos/novelty_gap.py --seed 0 --quick
"""

from __future__ import annotations

import argparse

from uail.config import RunConfig
from uail.experiments import epistemic_trend


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="small corpus, fast run")
    args = ap.parse_args()

    config = RunConfig()
    if args.quick:
        config = RunConfig.from_dict(
            config.to_dict() | {"starter_frames": 800, "epochs": 40}
        )
    budget = 1000 if args.quick else 1200

    row = epistemic_trend(config, args.seed, budget=budget)
    print(f"seed {row['seed']}  rollout budget {budget} frames per condition")
    print()
    print("condition   median U    mean U      frames")
    print("-" * 46)
    for name, cond in row["conditions"].items():
        tag = " (novel analog)" if cond["analog"] else ""
        print(
            f"{name:<10}  {cond['median']:.4g}    {cond['mean']:.4g}    "
            f"{cond['count']}{tag}"
        )
    print()
    verdict = "higher" if row["novel_exceeds_familiar"] else "NOT higher"
    print(f"novel median is {verdict} than the familiar median")


if __name__ == "__main__":
    main()
