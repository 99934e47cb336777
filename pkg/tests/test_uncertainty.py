import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    oracle_combine,
    oracle_counts,
    oracle_entropy,
    oracle_std_from_mode,
    oracle_temporal_divergence,
    oracle_uncertainty_score,
    oracle_variational_ratio,
    oracle_window,
)
from uail import rng
from uail.uncertainty import (
    BinSpec,
    ScoreWindow,
    SignalScores,
    UncertaintyRecord,
    combine_signals,
    discretize,
    entropy,
    score_signal,
    smoothing_eps,
    std_from_mode,
    temporal_divergence,
    uncertainty_score,
    variational_ratio,
    window_should_switch,
)

STEER_SPEC = BinSpec(lo=-1.0, hi=1.0, n_bins=20)


def sample_set_from_counts(counts, spec):
    """Build a SampleSet whose histogram equals the given counts exactly."""
    values = []
    for i, c in enumerate(counts):
        values.extend([spec.center(i)] * c)
    return discretize(values, spec)


# --- discretization ---


def test_all_equal_samples_concentrate_in_one_bin():
    s = discretize([0.0, 0.0, 0.0], STEER_SPEC)
    assert s.counts[s.mode_bin] == 3
    assert np.sum(s.counts) == 3
    assert s.mode_center == STEER_SPEC.center(s.mode_bin)


def test_out_of_range_samples_clamp_to_edge_bins():
    s = discretize([-1.5, 1.5], STEER_SPEC)
    assert s.counts[0] == 1
    assert s.counts[19] == 1


def test_discretize_rejects_fewer_than_two_samples():
    with pytest.raises(ValueError):
        discretize([0.3], STEER_SPEC)


def test_discretize_rejects_non_finite_samples():
    with pytest.raises(ValueError):
        discretize([0.0, float("nan")], STEER_SPEC)


def test_bin_spec_rejects_degenerate_ranges():
    with pytest.raises(ValueError):
        BinSpec(lo=1.0, hi=1.0, n_bins=20)
    with pytest.raises(ValueError):
        BinSpec(lo=0.0, hi=1.0, n_bins=1)


def test_bin_spec_round_trips_through_dict():
    assert BinSpec.from_dict(STEER_SPEC.to_dict()) == STEER_SPEC


# --- entropy ---


def test_entropy_of_unanimous_samples_is_zero():
    s = discretize([0.25] * 20, STEER_SPEC)
    assert entropy(s) == 0.0


def test_entropy_of_even_two_bin_split_is_ln2():
    s = discretize([-0.55] * 10 + [0.55] * 10, STEER_SPEC)
    assert entropy(s) == pytest.approx(math.log(2), abs=1e-12)


def test_entropy_of_uniform_four_bins_is_ln4():
    spec = BinSpec(lo=0.0, hi=1.0, n_bins=4)
    s = sample_set_from_counts([5, 5, 5, 5], spec)
    assert entropy(s) == pytest.approx(math.log(4), abs=1e-12)


# --- variational ratio ---


def test_variational_ratio_of_unanimous_samples_is_zero():
    s = discretize([0.25] * 20, STEER_SPEC)
    assert variational_ratio(s) == 0.0


def test_variational_ratio_fifteen_of_twenty_in_mode():
    s = discretize([0.05] * 15 + [-0.95, -0.75, 0.55, 0.75, 0.95], STEER_SPEC)
    assert variational_ratio(s) == pytest.approx(0.25, abs=1e-12)


def test_variational_ratio_tie_breaks_to_lowest_bin():
    spec = BinSpec(lo=0.0, hi=1.0, n_bins=4)
    s = sample_set_from_counts([7, 7, 6, 0], spec)
    assert s.mode_bin == 0
    assert variational_ratio(s) == pytest.approx(1 - 7 / 20, abs=1e-12)


# --- std from mode ---


def test_std_from_mode_zero_when_all_samples_at_mode_center():
    s = discretize([0.05] * 10, STEER_SPEC)
    assert s.mode_center == pytest.approx(0.05)
    assert std_from_mode(s) == pytest.approx(0.0, abs=1e-12)


def test_std_from_mode_direct_arithmetic_example():
    # Two bins with centers 0.0 and 0.2; the 2/2 tie makes 0.0 the mode.
    spec = BinSpec(lo=-0.1, hi=0.3, n_bins=2)
    s = discretize([0.0, 0.2, 0.0, 0.2], spec)
    assert s.mode_center == pytest.approx(0.0, abs=1e-12)
    assert std_from_mode(s) == pytest.approx(0.1, abs=1e-12)


def test_std_from_mode_matches_mean_absolute_deviation_oracle():
    g = rng.stream(77, "sd-oracle")
    samples = g.uniform(-1, 1, size=20)
    s = discretize(samples, STEER_SPEC)
    assert std_from_mode(s) == pytest.approx(
        oracle_std_from_mode(samples, -1.0, 1.0, 20, s.mode_center), abs=1e-12
    )


def test_std_from_mode_zero_for_any_unanimous_sample_set():
    # 0.0371 sits well off its bin center; unanimity must still score 0.
    s = discretize([0.0371] * 12, STEER_SPEC)
    assert std_from_mode(s) == 0.0


# --- temporal divergence ---


def test_temporal_divergence_of_identical_histograms_is_zero():
    g = rng.stream(3, "td-ident")
    s = discretize(g.uniform(-1, 1, size=20), STEER_SPEC)
    assert temporal_divergence(s, s) == 0.0


def test_temporal_divergence_two_bin_frozen_example():
    spec = BinSpec(lo=0.0, hi=1.0, n_bins=2)
    cur = sample_set_from_counts([10, 10], spec)
    prev = sample_set_from_counts([5, 15], spec)
    td = temporal_divergence(cur, prev)
    # Exact agreement with the smoothed oracle, approximate agreement with
    # the unsmoothed limit 0.5*ln2 + 0.5*ln(2/3).
    assert td == pytest.approx(oracle_temporal_divergence([10, 10], [5, 15]), abs=1e-12)
    assert td == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-3)


def test_temporal_divergence_finite_on_disjoint_support():
    spec = BinSpec(lo=0.0, hi=1.0, n_bins=4)
    cur = sample_set_from_counts([20, 0, 0, 0], spec)
    prev = sample_set_from_counts([0, 0, 0, 20], spec)
    td = temporal_divergence(cur, prev)
    assert math.isfinite(td)
    assert td == pytest.approx(
        oracle_temporal_divergence([20, 0, 0, 0], [0, 0, 0, 20]), abs=1e-12
    )


def test_temporal_divergence_rejects_mismatched_specs():
    a = discretize([0.1, 0.2], BinSpec(lo=0.0, hi=1.0, n_bins=4))
    b = discretize([0.1, 0.2], BinSpec(lo=0.0, hi=1.0, n_bins=8))
    with pytest.raises(ValueError):
        temporal_divergence(a, b)


def test_smoothing_eps_scales_with_sample_count_and_bins():
    s = discretize([0.1] * 20, BinSpec(lo=0.0, hi=1.0, n_bins=2))
    assert smoothing_eps(s) == pytest.approx(1 / 40, abs=1e-15)


# --- composite score ---


def test_uncertainty_score_zero_when_samples_unanimous_both_steps():
    s = discretize([0.25] * 20, STEER_SPEC)
    assert uncertainty_score(s, s, sd_weight=1.0) == 0.0


def test_uncertainty_score_with_zero_divergence_reduces_to_sd_term():
    spec = BinSpec(lo=-0.1, hi=0.3, n_bins=2)
    s = discretize([0.0, 0.2, 0.0, 0.2], spec)  # SD = 0.1 from the mode at 0.0
    assert uncertainty_score(s, s, sd_weight=1.0) == pytest.approx(0.01, abs=1e-12)


def test_uncertainty_score_treats_missing_prev_as_first_frame():
    g = rng.stream(5, "u-first")
    s = discretize(g.uniform(-1, 1, size=20), STEER_SPEC)
    assert uncertainty_score(s, None, sd_weight=0.5) == uncertainty_score(
        s, s, sd_weight=0.5
    )


def test_uncertainty_score_rejects_negative_weight():
    s = discretize([0.1, 0.2], STEER_SPEC)
    with pytest.raises(ValueError):
        uncertainty_score(s, s, sd_weight=-0.5)


def test_uncertainty_score_matches_composed_oracle_on_random_inputs():
    g = rng.stream(11, "u-oracle")
    for _ in range(200):
        cur = g.uniform(-1, 1, size=20)
        prev = g.uniform(-1, 1, size=20)
        lam = float(g.uniform(0, 3))
        got = uncertainty_score(
            discretize(cur, STEER_SPEC), discretize(prev, STEER_SPEC), sd_weight=lam
        )
        want = oracle_uncertainty_score(cur, prev, -1.0, 1.0, 20, lam)
        assert got == pytest.approx(want, abs=1e-12)


# --- combining and windowing ---


def test_combine_signals_trivial_values():
    assert combine_signals(0.0, 0.0, 0.6) == 0.0
    assert combine_signals(1.0, 1.0, 0.6) == pytest.approx(1.6, abs=1e-12)
    assert combine_signals(0.02, 0.05, 0.6) == pytest.approx(0.05, abs=1e-12)


def test_combine_signals_rejects_negative_inputs():
    with pytest.raises(ValueError):
        combine_signals(-0.1, 0.0, 0.6)
    with pytest.raises(ValueError):
        combine_signals(0.0, -0.1, 0.6)


def test_window_switch_is_strictly_greater_than_threshold():
    assert window_should_switch([0, 0, 0, 0, 0], 0.1) == (0.0, False)
    total, switch = window_should_switch([0.05, 0.04, 0.03], 0.1)
    assert total == pytest.approx(0.12, abs=1e-12)
    assert switch is True
    total, switch = window_should_switch([0.05, 0.05], 0.1)
    assert total == pytest.approx(0.10, abs=1e-12)
    assert switch is False


def test_score_window_starts_zeroed_and_tracks_last_t_scores():
    w = ScoreWindow(size=3, eta=0.5)
    assert w.values() == [0.0, 0.0, 0.0]
    assert w.push(0.2) == (pytest.approx(0.2), False)
    assert w.push(0.2) == (pytest.approx(0.4), False)
    assert w.push(0.2) == (pytest.approx(0.6), True)
    # The oldest 0.2 falls out; sum stays at 0.6 with the next push.
    total, switch = w.push(0.2)
    assert total == pytest.approx(0.6)
    assert switch is True


def test_score_window_matches_manual_rolling_sums():
    g = rng.stream(21, "window")
    scores = g.uniform(0, 0.2, size=50).tolist()
    w = ScoreWindow(size=5, eta=0.45)
    padded = [0.0] * 5 + scores
    for i, v in enumerate(scores):
        want_sum, want_switch = oracle_window(padded[i + 1 : i + 6], 0.45)
        got_sum, got_switch = w.push(v)
        assert got_sum == pytest.approx(want_sum, abs=1e-12)
        assert got_switch == want_switch


# --- randomized oracle agreement ---


def test_signal_measures_match_brute_force_oracles_on_random_inputs():
    g = rng.stream(13, "oracle-suite")
    for _ in range(300):
        n = int(g.integers(2, 40))
        samples = g.uniform(-1.2, 1.2, size=n)
        s = discretize(samples, STEER_SPEC)
        counts = oracle_counts(samples, -1.0, 1.0, 20)
        assert s.counts.tolist() == counts
        assert entropy(s) == pytest.approx(oracle_entropy(counts), abs=1e-9)
        assert variational_ratio(s) == pytest.approx(
            oracle_variational_ratio(counts), abs=1e-9
        )
        assert std_from_mode(s) == pytest.approx(
            oracle_std_from_mode(samples, -1.0, 1.0, 20, s.mode_center), abs=1e-9
        )


def test_combine_matches_oracle_on_random_inputs():
    g = rng.stream(17, "combine-oracle")
    for _ in range(300):
        a, b = g.uniform(0, 5, size=2)
        alpha = float(g.uniform(0, 2))
        assert combine_signals(a, b, alpha) == pytest.approx(
            oracle_combine(a, b, alpha), abs=1e-12
        )


# --- properties ---


finite_samples = st.lists(
    st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=2, max_size=60
)


@settings(max_examples=60, deadline=None)
@given(finite_samples, st.randoms(use_true_random=False))
def test_histogram_measures_ignore_sample_order(samples, shuffler):
    permuted = list(samples)
    shuffler.shuffle(permuted)
    a = discretize(samples, STEER_SPEC)
    b = discretize(permuted, STEER_SPEC)
    assert entropy(a) == pytest.approx(entropy(b), abs=1e-12)
    assert variational_ratio(a) == pytest.approx(variational_ratio(b), abs=1e-12)
    assert std_from_mode(a) == pytest.approx(std_from_mode(b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(finite_samples)
def test_entropy_and_variational_ratio_bounds(samples):
    s = discretize(samples, STEER_SPEC)
    assert 0.0 <= entropy(s) <= math.log(STEER_SPEC.n_bins) + 1e-12
    assert 0.0 <= variational_ratio(s) <= 1.0 - 1.0 / s.n + 1e-12


@settings(max_examples=60, deadline=None)
@given(finite_samples, finite_samples)
def test_temporal_divergence_is_nonnegative_and_zero_on_self(cur, prev):
    a = discretize(cur, STEER_SPEC)
    b = discretize(prev + [0.0] * (len(cur) - len(prev)), STEER_SPEC) if len(
        prev
    ) < len(cur) else discretize(prev[: len(cur)], STEER_SPEC)
    if a.n == b.n:
        assert temporal_divergence(a, b) >= 0.0
    assert temporal_divergence(a, a) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    finite_samples,
    st.floats(min_value=0.0, max_value=2.0),
    st.floats(min_value=0.0, max_value=2.0),
)
def test_score_is_monotone_in_sd_weight(samples, w1, w2):
    lo, hi = sorted([w1, w2])
    s = discretize(samples, STEER_SPEC)
    assert uncertainty_score(s, s, sd_weight=lo) <= uncertainty_score(
        s, s, sd_weight=hi
    ) + 1e-12


# --- record serialization ---


def test_signal_scores_round_trip_through_dict():
    scores = SignalScores(entropy=0.5, var_ratio=0.3, std_mode=0.1, temp_div=0.05, score=0.02)
    assert SignalScores.from_dict(scores.to_dict()) == scores


def test_uncertainty_record_round_trips_through_dict():
    scores = score_signal(discretize([0.1, 0.2, 0.2], STEER_SPEC), None, sd_weight=1.0)
    rec = UncertaintyRecord(
        t=7, steer=scores, throttle=scores, combined=0.1, window_sum=0.3, switched=False
    )
    assert UncertaintyRecord.from_dict(rec.to_dict()) == rec


def test_score_signal_components_compose_into_score():
    g = rng.stream(29, "score-signal")
    cur = discretize(g.uniform(-1, 1, size=20), STEER_SPEC)
    prev = discretize(g.uniform(-1, 1, size=20), STEER_SPEC)
    scores = score_signal(cur, prev, sd_weight=0.7)
    inner = scores.temp_div * scores.entropy * scores.var_ratio + 0.7 * scores.std_mode
    assert scores.score == pytest.approx(inner * inner, abs=1e-12)
    assert scores.score == pytest.approx(uncertainty_score(cur, prev, 0.7), abs=1e-12)
