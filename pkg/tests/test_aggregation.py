import math

import numpy as np
import pytest

from uail import rng
from uail.aggregation import (
    CLEAN_PROFILE,
    UNSEEN_PROFILE,
    PerturbationProfile,
    UailLoopDiverged,
    collect_bc,
    collect_mixing,
    collect_noise,
    collect_uail,
    run_uail_loop,
)
from uail.policy import Observation, PolicyParams, init
from uail.track import TrackSpec, generate_track
from uail.uncertainty import ScoreWindow


def straight_track(seed=5):
    return generate_track(TrackSpec(left=0, right=0, straight=1, obstacle_density=0.0), seed)


def turn_track(seed=9):
    return generate_track(TrackSpec(left=1, right=0, straight=0, obstacle_density=0.0), seed)


def small_policy(seed=0, dropout=0.1):
    return init([20, 16, 2], dropout, seed)


def test_bc_fills_the_budget_with_expert_frames():
    ds = collect_bc([turn_track()], 300, seed=11)
    assert ds.n_frames == 300
    for frame in ds.frames():
        assert frame.control_mode == "expert"
        assert frame.action.steer == frame.label.steer
        assert frame.action.throttle == frame.label.throttle
        assert frame.uncertainty is None
    assert ds.metadata["stats"]["infraction_episodes"] == 0
    assert ds.metadata["stats"]["frames_by_mode"]["expert"] == 300


def test_bc_is_deterministic_byte_for_byte(tmp_path):
    track = turn_track()
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    collect_bc([track], 200, seed=11).save(a)
    collect_bc([track], 200, seed=11).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_budget_cut_mid_episode_is_marked():
    ds = collect_bc([turn_track()], 50, seed=3)
    assert ds.trajectories[-1].end_reason == "budget"
    assert ds.n_frames == 50


def test_episodes_rotate_through_the_track_list():
    tracks = [straight_track(1), straight_track(2)]
    ds = collect_bc(tracks, 240, seed=7, max_episode_ticks=60)
    names = [t.track for t in ds.trajectories]
    assert names == [tracks[i % 2].name for i in range(len(names))]
    assert len(names) >= 3


def test_mixing_edge_probabilities_pin_the_controller():
    track = turn_track()
    policy = small_policy()
    all_expert = collect_mixing(policy, [track], 150, 0.0, seed=21)
    assert all(f.control_mode == "expert" for f in all_expert.frames())
    all_agent = collect_mixing(policy, [track], 150, 1.0, seed=21)
    assert all(f.control_mode == "agent" for f in all_agent.frames())
    for frame in all_agent.frames():
        # Labels still come from the oracle even when it never drives.
        assert frame.label is not None
        assert frame.label_source == "oracle_everyframe"


def test_mixing_rate_concentrates_near_mix_p():
    ds = collect_mixing(small_policy(), [turn_track()], 4000, 0.4, seed=5)
    agent = sum(1 for f in ds.frames() if f.control_mode == "agent")
    rate = agent / 4000
    sigma = math.sqrt(0.4 * 0.6 / 4000)
    assert abs(rate - 0.4) < 3 * sigma


def test_mixing_rejects_bad_probability():
    with pytest.raises(ValueError):
        collect_mixing(small_policy(), [turn_track()], 10, 1.5, seed=0)


def test_segment_mixing_hands_over_in_sustained_runs():
    ds = collect_mixing(
        small_policy(), [straight_track()], 2000, 0.4, seed=31, segment_ticks=20
    )
    modes = [f.control_mode for f in ds.frames()]
    assert {"agent", "expert"} == set(modes)
    runs = []
    current, length = modes[0], 0
    for m in modes:
        if m == current:
            length += 1
        else:
            runs.append(length)
            current, length = m, 1
    runs.append(length)
    assert sum(runs) / len(runs) > 5.0  # per-frame flips would average ~2


def test_segment_mixing_fraction_still_tracks_mix_p():
    ds = collect_mixing(
        small_policy(), [straight_track()], 6000, 0.4, seed=32, segment_ticks=20
    )
    agent = sum(1 for f in ds.frames() if f.control_mode == "agent")
    # ~300 independent segments; 4 sigma of the segment-level CLT bound
    assert abs(agent / 6000 - 0.4) < 0.12


def test_segment_mixing_edge_probabilities_still_pin_the_controller():
    track = turn_track()
    policy = small_policy()
    all_expert = collect_mixing(policy, [track], 120, 0.0, seed=33, segment_ticks=20)
    assert all(f.control_mode == "expert" for f in all_expert.frames())
    all_agent = collect_mixing(policy, [track], 120, 1.0, seed=33, segment_ticks=20)
    assert all(f.control_mode == "agent" for f in all_agent.frames())


def test_segment_mixing_rejects_negative_length():
    with pytest.raises(ValueError):
        collect_mixing(small_policy(), [turn_track()], 10, 0.4, seed=0, segment_ticks=-1)


def test_noise_schedule_hits_exact_global_frames():
    ds = collect_noise([turn_track()], 100, noise_period=5, noise_bound=0.4, seed=13)
    frames = list(ds.frames())
    assert len(frames) == 100
    for i, frame in enumerate(frames):
        if i % 5 == 0:
            assert frame.control_mode == "noise"
            assert frame.action.throttle == frame.label.throttle
            assert abs(frame.action.steer - frame.label.steer) <= 0.4 + 1e-12
        else:
            assert frame.control_mode == "expert"
            assert frame.action.steer == frame.label.steer
    assert sum(1 for f in frames if f.control_mode == "noise") == 20


def test_noise_labels_are_the_unperturbed_oracle():
    track = turn_track()
    noisy = collect_noise([track], 60, noise_period=3, noise_bound=0.5, seed=2)
    perturbed = [
        f for f in noisy.frames()
        if f.control_mode == "noise" and f.action.steer != f.label.steer
    ]
    assert len(perturbed) >= 15  # a zero draw has measure zero


def test_zero_bound_noise_reduces_to_bc_apart_from_mode_tags():
    track = turn_track()
    bc = collect_bc([track], 120, seed=9)
    nz = collect_noise([track], 120, noise_period=5, noise_bound=0.0, seed=9)
    for fb, fn in zip(bc.frames(), nz.frames()):
        assert fb.action.steer == fn.action.steer
        assert fb.action.throttle == fn.action.throttle
        assert fb.label.steer == fn.label.steer
        assert np.array_equal(fb.obs.rays, fn.obs.rays)


def test_uail_rollout_mode_records_scores_without_switching():
    ds = collect_uail(
        small_policy(dropout=0.3), [turn_track()], math.inf, 5, 10, 150, seed=31
    )
    frames = list(ds.frames())
    assert len(frames) == 150
    for frame in frames:
        assert frame.control_mode == "agent"
        assert frame.uncertainty is not None
        assert frame.uncertainty.switched is False
        assert frame.mc_steer is not None and len(frame.mc_steer) == 10
        assert frame.mc_throttle is not None and len(frame.mc_throttle) == 10
    assert ds.metadata["stats"]["switch_frames"] == 0
    assert ds.metadata["eta"] == "inf"


def test_uail_switches_under_a_tiny_threshold():
    ds = collect_uail(
        small_policy(dropout=0.3), [turn_track()], 1e-12, 3, 10, 120, seed=17
    )
    frames = list(ds.frames())
    switched = [f for f in frames if f.uncertainty.switched]
    assert switched
    for frame in switched:
        assert frame.control_mode == "expert"
        assert frame.action.steer == frame.label.steer
        assert frame.mc_steer is None  # the executed action is not an MC draw
    assert ds.metadata["stats"]["switch_frames"] == len(switched)


def test_dropout_free_policy_never_switches():
    # Unanimous samples leave every signal at zero, and zero never beats
    # a positive threshold.
    ds = collect_uail(
        small_policy(dropout=0.0), [turn_track()], 1e-12, 3, 10, 100, seed=41
    )
    for frame in ds.frames():
        assert frame.control_mode == "agent"
        assert frame.uncertainty.combined == 0.0
        assert frame.uncertainty.switched is False


def test_stored_window_state_replays_from_stored_scores():
    ds = collect_uail(
        small_policy(dropout=0.3), [turn_track()], 0.05, 4, 10, 400, seed=23
    )
    saw_switch = False
    for traj in ds.trajectories:
        window = ScoreWindow(4, 0.05)
        for frame in traj.frames:
            total, switched = window.push(frame.uncertainty.combined)
            assert total == pytest.approx(frame.uncertainty.window_sum, abs=1e-12)
            assert switched == frame.uncertainty.switched
            saw_switch = saw_switch or switched
    assert saw_switch


def test_uail_collection_is_deterministic(tmp_path):
    track = turn_track()
    policy = small_policy(dropout=0.2)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    collect_uail(policy, [track], 0.1, 5, 10, 150, seed=77).save(a)
    collect_uail(policy, [track], 0.1, 5, 10, 150, seed=77).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_expert_labels_agree_across_strategies_while_expert_drives():
    # With the agent never in control the visited states are identical,
    # so every strategy must produce the same labels.
    track = turn_track()
    bc = list(collect_bc([track], 80, seed=55).frames())
    mx = list(collect_mixing(small_policy(), [track], 80, 0.0, seed=55).frames())
    nz = list(collect_noise([track], 80, noise_period=7, noise_bound=0.0, seed=55).frames())
    for fb, fm, fn in zip(bc, mx, nz):
        assert fb.label.steer == fm.label.steer == fn.label.steer
        assert fb.label.throttle == fm.label.throttle == fn.label.throttle


def test_uail_parameter_validation():
    policy = small_policy()
    with pytest.raises(ValueError):
        collect_uail(policy, [turn_track()], -1.0, 5, 10, 10, seed=0)
    with pytest.raises(ValueError):
        collect_uail(policy, [turn_track()], 1.0, 0, 10, 10, seed=0)
    with pytest.raises(ValueError):
        collect_uail(policy, [turn_track()], 1.0, 5, 1, 10, seed=0)
    with pytest.raises(ValueError):
        collect_bc([turn_track()], 0, seed=0)
    with pytest.raises(ValueError):
        collect_bc([], 10, seed=0)


def test_clean_profile_is_the_identity():
    obs = Observation(rays=np.linspace(0.0, 1.0, 15), speed=0.5, command="follow")
    g = rng.stream(1, "perturb-test")
    out = CLEAN_PROFILE.apply(obs, g)
    assert np.array_equal(out.rays, obs.rays)
    assert out.speed == obs.speed and out.command == obs.command


def test_unseen_profile_perturbs_within_bounds():
    obs = Observation(rays=np.full(15, 0.5), speed=0.5, command="follow")
    changed = dropped = 0
    for i in range(200):
        out = UNSEEN_PROFILE.apply(obs, rng.stream(i, "perturb-test"))
        assert np.all(out.rays >= 0.0) and np.all(out.rays <= 1.0)
        changed += int(not np.array_equal(out.rays, obs.rays))
        dropped += int(np.any(out.rays == 1.0))
    assert changed == 200
    assert dropped > 50  # 15 rays at 5% dropout: most batches of 200 see many


def test_perturbation_is_deterministic_per_stream():
    obs = Observation(rays=np.full(15, 0.5), speed=0.5, command="follow")
    a = UNSEEN_PROFILE.apply(obs, rng.stream(3, "p"))
    b = UNSEEN_PROFILE.apply(obs, rng.stream(3, "p"))
    assert np.array_equal(a.rays, b.rays)


def test_profile_rejects_bad_parameters():
    with pytest.raises(ValueError):
        PerturbationProfile(name="x", ray_noise_sigma=-0.1)
    with pytest.raises(ValueError):
        PerturbationProfile(name="x", ray_dropout_p=1.5)


def test_loop_grows_the_dataset_by_one_batch_per_iteration():
    track = turn_track()
    seed_ds = collect_bc([track], 120, seed=1)
    policy = init([20, 12, 2], 0.1, 4)
    hyper = dict(epochs=2, lr=0.01, batch=32, momentum=0.9)
    policy, datasets, metrics = run_uail_loop(
        policy, [track], [seed_ds], 2, 60, hyper, seed=90,
        eta=0.05, window_size=4, n_samples=8,
        benchmark_fn=lambda p: 0.5,
    )
    assert len(datasets) == 3
    assert len(metrics) == 2
    assert metrics[0]["training_frames"] == 120
    assert metrics[1]["training_frames"] == 180
    assert metrics[0]["dataset_frames"] == 180
    assert metrics[1]["dataset_frames"] == 240
    for entry in metrics:
        assert entry["benchmark_success"] == 0.5
        assert 0.0 <= entry["switch_rate"] <= 1.0
        assert math.isfinite(entry["train_loss_final"])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_loop_divergence_preserves_partial_state():
    track = turn_track()
    seed_ds = collect_bc([track], 60, seed=1)
    # Saturating activations cannot blow up, so plant an overflow deep
    # enough that the hidden activations themselves go non-finite.
    policy = init([20, 12, 12, 2], 0.1, 4)
    policy.activation = "identity"
    policy.weights = [w * 1e200 for w in policy.weights]
    hyper = dict(epochs=8, lr=0.1, batch=16, momentum=0.9)
    with pytest.raises(UailLoopDiverged) as info:
        run_uail_loop(
            policy, [track], [seed_ds], 3, 40, hyper, seed=6,
            eta=0.05, window_size=4, n_samples=8,
        )
    err = info.value
    assert err.datasets[0] is seed_ds
    assert err.metrics == []
    assert err.policy is policy


def test_loop_requires_starter_data():
    with pytest.raises(ValueError):
        run_uail_loop(
            small_policy(), [turn_track()], [], 1, 10, {}, seed=0,
            eta=1.0,
        )
