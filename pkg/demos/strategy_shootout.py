"""Matched-budget comparison of the data collection strategies.

Every strategy starts from the same expert-only set and the same extra
frame budget: stochastic control mixing, periodic steer noise with clean
labels, and uncertainty-gated handover. Each aggregate retrains the same
initialization and drives the closed-loop benchmark. The table reports
benchmark success alongside how often each strategy crashed while it was
collecting, which is the cost a real vehicle would pay.

The default scale finishes in about a minute. --reference runs the full
reference configuration instead (several minutes).

Example
-------
python demos/strategy_shootout.py --seed 0
"""

from __future__ import annotations

import argparse

from uail.config import RunConfig
from uail.experiments import strategy_face_off


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reference", action="store_true", help="full reference scale")
    args = ap.parse_args()

    config = RunConfig()
    if not args.reference:
        config = RunConfig.from_dict(
            config.to_dict()
            | {
                "starter_frames": 800,
                "budget_frames": 800,
                "epochs": 40,
                "cases_per_type": 2,
                "bench_seeds": [0, 1],
                "bench_max_ticks": 900,
            }
        )

    out = strategy_face_off(config, args.seed)
    print(f"seed {args.seed}  eta={out['eta']:.4g}  sd_weight={out['sd_weight']:.4g}")
    print()
    head = "strategy      success  ci      collect infr  train frames"
    print(head)
    print("-" * len(head))
    for name, row in out["strategies"].items():
        infr = row.get("collection_infraction_rate")
        infr_s = f"{infr:12.3f}" if infr is not None else " " * 12
        print(
            f"{name:<12}  {row['success_rate']:.3f}    {row['success_ci']:.3f}"
            f"  {infr_s}  {row['training_frames']:12d}"
        )
    switches = out["strategies"]["uail"].get("switch_frames", 0)
    print()
    print(f"uail handed control to the expert on {switches} frames during collection")


if __name__ == "__main__":
    main()
