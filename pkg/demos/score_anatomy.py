"""Walk through the uncertainty score on a single gated rollout.

A small dropout policy drives one left turn under the takeover rule. The
script prints the per-signal pieces (entropy, variational ratio, deviation
from the modal action, temporal divergence) for the frames around the first
handover, then a per-episode summary of how often the expert held control.

Example
-------
python demos/score_anatomy.py --seed 4 --budget 400
"""

from __future__ import annotations

import argparse

from uail.aggregation import collect_uail
from uail.policy import init
from uail.track import TrackSpec, generate_track


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--budget", type=int, default=400)
    ap.add_argument("--eta", type=float, default=80.0)
    args = ap.parse_args()

    track = generate_track(
        TrackSpec(left=1, right=0, straight=0, obstacle_density=0.0), seed=6
    )
    policy = init([20, 16, 2], p=0.5, seed=args.seed)
    ds = collect_uail(
        policy, [track], args.eta, window_size=4, n_samples=8,
        budget_frames=args.budget, seed=args.seed,
    )

    frames = list(ds.frames())
    first_switch = next(i for i, f in enumerate(frames) if f.uncertainty.switched)
    lo, hi = max(0, first_switch - 3), min(len(frames), first_switch + 3)

    print(f"eta={args.eta}  window=4  n_samples=8  frames={len(frames)}")
    print(f"first handover at collected frame {first_switch}")
    print()
    head = "frame   H_s    VR_s   SD_s   TD_s   U_s     U_thr   combined  window  who"
    print(head)
    print("-" * len(head))
    for i in range(lo, hi):
        rec = frames[i].uncertainty
        s = rec.steer
        who = "expert" if rec.switched else "agent"
        print(
            f"{i:5d}  {s.entropy:5.3f}  {s.var_ratio:5.3f}  {s.std_mode:5.3f}"
            f"  {s.temp_div:5.3f}  {s.score:6.4f}  {rec.throttle.score:6.4f}"
            f"  {rec.combined:8.4f}  {rec.window_sum:6.3f}  {who}"
        )

    stats = ds.metadata["stats"]
    expert_share = stats["frames_by_mode"].get("expert", 0) / ds.n_frames
    print()
    print(f"episodes: {stats['episodes']}  infraction episodes: {stats['infraction_episodes']}")
    print(f"expert held control on {expert_share:.1%} of frames "
          f"({stats['switch_frames']} switch frames)")


if __name__ == "__main__":
    main()
