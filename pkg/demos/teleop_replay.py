"""Drive a scripted remote session and certify its recording.

Runs a lockstep teleoperation session with a synthetic control stream
standing in for the human (steady slight-left steering), prints where the
takeover banner would show, then replays the recorded dataset against the
policy to prove every stored uncertainty value reproduces bit for bit.

The same session can be served over a socket for the browser client:

    uail serve --policy runs/<run>/policy.json --port 8765

Example
-------
python demos/teleop_replay.py --budget 250
"""

from __future__ import annotations

import argparse

from uail.policy import init
from uail.replay import replay_dataset
from uail.teleop import (
    ControlInput, FrameUpdate, TeleopSession, banner_intervals, run_headless,
    switched_intervals,
)
from uail.track import TrackSpec, generate_track


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget", type=int, default=250)
    ap.add_argument("--eta", type=float, default=1.5)
    args = ap.parse_args()

    tracks = [
        generate_track(TrackSpec(left=1, right=0, straight=0, obstacle_density=0.0), seed=6),
        generate_track(TrackSpec(left=0, right=1, straight=0, obstacle_density=0.0), seed=7),
    ]
    policy = init([20, 16, 2], p=0.5, seed=4)
    session = TeleopSession(
        policy, tracks, eta=args.eta, budget_frames=args.budget, seed=11,
        window_size=4, n_samples=8, max_episode_ticks=200,
    )
    controls = (ControlInput(tick=t, steer=-0.2, throttle=0.5) for t in range(10 ** 6))
    dataset, log = run_headless(session, controls)

    frames = [m for m in log if isinstance(m, FrameUpdate)]
    human = [m for m in frames if m.control_mode == "expert"]
    print(f"session frames: {len(frames)}  human-controlled: {len(human)}")
    print()
    print("takeover banner intervals (episode, first sim tick, last sim tick):")
    for interval in banner_intervals(frames):
        print(f"  {interval}")
    assert banner_intervals(frames) == switched_intervals(dataset)

    report = replay_dataset(dataset, policy)
    print()
    print(f"replay: {report.scored_frames} frames rescored, "
          f"max abs error {report.max_abs_error:.2e}, certified={report.certified}")


if __name__ == "__main__":
    main()
