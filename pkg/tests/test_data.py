import numpy as np
import pytest

from uail.data import (
    Dataset,
    DatasetFormatError,
    Frame,
    Trajectory,
    training_arrays,
)
from uail.policy import Action, Observation
from uail.uncertainty import SignalScores, UncertaintyRecord


def make_obs(command="follow"):
    return Observation(rays=np.linspace(0.1, 1.0, 15), speed=0.3, command=command)


def make_frame(tick=0, mode="expert", with_extras=False):
    action = Action(steer=0.1, throttle=0.5)
    scores = SignalScores(entropy=0.2, var_ratio=0.1, std_mode=0.05, temp_div=0.01, score=0.004)
    return Frame(
        tick=tick,
        obs=make_obs(),
        action=action,
        label=action if mode == "expert" else Action(steer=0.0, throttle=0.4),
        control_mode=mode,
        label_source="oracle_everyframe",
        uncertainty=UncertaintyRecord(
            t=tick, steer=scores, throttle=scores, combined=0.006,
            window_sum=0.01, switched=False,
        )
        if with_extras
        else None,
        infraction="off_lane" if with_extras else None,
        mc_steer=[0.1, 0.11, 0.12] if with_extras else None,
        mc_throttle=[0.5, 0.52, 0.49] if with_extras else None,
    )


def make_dataset(n_frames=6):
    traj = Trajectory(track="t0", route_index=0, end_reason="completed")
    for i in range(n_frames):
        traj.frames.append(make_frame(tick=i, with_extras=(i % 2 == 0)))
    return Dataset(
        metadata={"strategy": "bc", "seed": 1, "config_digest": "abc", "tracks": ["t0"]},
        trajectories=[traj],
    )


def test_frame_round_trips_with_and_without_optionals():
    full = make_frame(with_extras=True)
    assert Frame.from_dict(full.to_dict()).to_dict() == full.to_dict()
    bare = make_frame(with_extras=False)
    assert Frame.from_dict(bare.to_dict()).to_dict() == bare.to_dict()
    d = bare.to_dict()
    assert "uncertainty" not in d and "mc_steer" not in d and "infraction" not in d


def test_expert_frames_must_execute_their_label():
    with pytest.raises(ValueError):
        Frame(
            tick=0,
            obs=make_obs(),
            action=Action(steer=0.5, throttle=0.5),
            label=Action(steer=0.0, throttle=0.5),
            control_mode="expert",
            label_source="oracle_everyframe",
        )


def test_frame_rejects_unknown_enums():
    with pytest.raises(ValueError):
        make_frame(mode="autopilot")
    with pytest.raises(ValueError):
        Frame(
            tick=0,
            obs=make_obs(),
            action=Action(steer=0.0, throttle=0.0),
            label=None,
            control_mode="agent",
            label_source="telepathy",
        )


def test_trajectory_rejects_unordered_ticks():
    traj = Trajectory(track="t", route_index=0)
    traj.frames = [make_frame(tick=3), make_frame(tick=3)]
    with pytest.raises(DatasetFormatError):
        traj.validate()


def test_dataset_save_load_save_is_byte_identical(tmp_path):
    ds = make_dataset()
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    ds.save(p1)
    Dataset.load(p1).save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_load_round_trips_content(tmp_path):
    ds = make_dataset()
    path = tmp_path / "d.jsonl"
    ds.save(path)
    loaded = Dataset.load(path)
    assert loaded.metadata == ds.metadata
    assert loaded.n_frames == ds.n_frames
    got = [f.to_dict() for f in loaded.trajectories[0].frames]
    want = [f.to_dict() for f in ds.trajectories[0].frames]
    assert got == want
    assert loaded.trajectories[0].end_reason == "completed"


def test_dataset_load_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"type":"frame"}\n')
    with pytest.raises(DatasetFormatError):
        Dataset.load(path)
    path.write_text('{"type":"header","version":99}\n')
    with pytest.raises(DatasetFormatError):
        Dataset.load(path)
    # Header counts must match the records that follow.
    ds = make_dataset(n_frames=3)
    good = tmp_path / "good.jsonl"
    ds.save(good)
    lines = good.read_text().splitlines()
    (tmp_path / "cut.jsonl").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DatasetFormatError):
        Dataset.load(tmp_path / "cut.jsonl")
    with pytest.raises(DatasetFormatError):
        Dataset.load(tmp_path / "absent.jsonl")


def test_training_arrays_stack_labeled_frames_only():
    traj = Trajectory(track="t", route_index=0)
    traj.frames = [
        make_frame(tick=0),
        Frame(
            tick=1,
            obs=make_obs(),
            action=Action(steer=0.2, throttle=0.3),
            label=None,
            control_mode="agent",
            label_source="none",
        ),
        make_frame(tick=2),
    ]
    ds = Dataset(metadata={}, trajectories=[traj])
    x, y = training_arrays([ds])
    assert x.shape == (2, 20)
    assert y.shape == (2, 2)
    assert np.all(y[:, 0] == 0.1)


def test_training_arrays_require_labels():
    traj = Trajectory(track="t", route_index=0)
    traj.frames = [
        Frame(
            tick=0,
            obs=make_obs(),
            action=Action(steer=0.0, throttle=0.0),
            label=None,
            control_mode="agent",
            label_source="none",
        )
    ]
    with pytest.raises(ValueError):
        training_arrays([Dataset(metadata={}, trajectories=[traj])])
