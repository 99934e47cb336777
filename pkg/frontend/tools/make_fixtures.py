"""Regenerate the server-side session fixtures from the recorded control
stream.

Reads fixtures/controls.jsonl (the client input simulator's output),
drives a headless session with it, and writes the server transcript, the
dataset's switched intervals, and the session parameters. The client
tests replay the transcript and must reproduce those intervals from
frame messages alone.
"""

import json
from pathlib import Path

from uail.jsonio import canonical_dumps
from uail.policy import init
from uail.teleop import TeleopSession, decode, encode, run_headless, switched_intervals
from uail.track import TrackSpec, generate_track

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"

SESSION_PARAMS = {
    "arch": [20, 16, 2],
    "dropout": 0.5,
    "policy_seed": 4,
    "tracks": [
        {"left": 1, "right": 0, "straight": 0, "seed": 6},
        {"left": 0, "right": 1, "straight": 0, "seed": 7},
    ],
    "eta": 85.0,
    "budget_frames": 200,
    "seed": 11,
    "window_size": 4,
    "n_samples": 8,
    "max_episode_ticks": 120,
}


def build_session() -> TeleopSession:
    p = SESSION_PARAMS
    policy = init(p["arch"], p["dropout"], p["policy_seed"])
    tracks = [
        generate_track(
            TrackSpec(left=t["left"], right=t["right"], straight=t["straight"],
                      obstacle_density=0.0),
            t["seed"],
        )
        for t in p["tracks"]
    ]
    return TeleopSession(
        policy, tracks, eta=p["eta"], budget_frames=p["budget_frames"],
        seed=p["seed"], window_size=p["window_size"], n_samples=p["n_samples"],
        max_episode_ticks=p["max_episode_ticks"],
    )


def main() -> None:
    controls = [
        decode(line)
        for line in (FIXTURES / "controls.jsonl").read_text().splitlines()
        if line
    ]
    dataset, log = run_headless(build_session(), iter(controls))

    (FIXTURES / "session_params.json").write_text(
        canonical_dumps(SESSION_PARAMS) + "\n"
    )
    (FIXTURES / "session_log.jsonl").write_text(
        "\n".join(encode(m) for m in log) + "\n"
    )
    (FIXTURES / "switched_intervals.json").write_text(
        canonical_dumps([list(iv) for iv in switched_intervals(dataset)]) + "\n"
    )
    stats = dataset.metadata["stats"]
    print(f"frames={dataset.n_frames} episodes={stats['episodes']} "
          f"switch_frames={stats['switch_frames']} log_lines={len(log)}")


if __name__ == "__main__":
    main()
