import json

import numpy as np
import pytest

from uail.track import (
    GenerationFailedError,
    Track,
    TrackFormatError,
    TrackSpec,
    generate_benchmark_suite,
    generate_track,
    load_track,
    save_track,
    suite_turn_counts,
)


def test_single_straight_spec_yields_a_straight_route():
    track = generate_track(TrackSpec(straight=1, obstacle_density=0.0), seed=7)
    route = track.routes[0]
    assert len(route.nodes) == 1
    assert route.nodes[0].label == "straight"
    assert np.all(route.points[:, 1] == 0.0)  # no turns, so the route stays on y=0


def test_turn_counts_are_exact():
    track = generate_track(
        TrackSpec(left=4, right=4, straight=4, obstacle_density=0.0), seed=3
    )
    labels = [n.label for n in track.routes[0].nodes]
    assert len(labels) == 12
    assert labels.count("left") == 4
    assert labels.count("right") == 4
    assert labels.count("straight") == 4


def test_generation_is_deterministic_per_seed():
    spec = TrackSpec(left=2, right=1, straight=1, obstacle_density=2.0)
    a = generate_track(spec, seed=11)
    b = generate_track(spec, seed=11)
    assert a.to_dict() == b.to_dict()
    c = generate_track(spec, seed=12)
    assert a.to_dict() != c.to_dict()


def test_route_nodes_are_ordered_and_inside_the_route():
    track = generate_track(TrackSpec(left=3, right=2, straight=2), seed=5)
    route = track.routes[0]
    s_values = [n.s for n in route.nodes]
    assert s_values == sorted(s_values)
    assert all(0 < s < route.length for s in s_values)
    assert route.spawn.x == route.points[0][0]
    assert route.spawn.y == route.points[0][1]


def test_obstacles_stay_clear_of_the_drivable_union():
    ego_radius = 0.9
    for seed in range(4):
        track = generate_track(
            TrackSpec(left=2, right=2, straight=2, obstacle_density=3.0), seed=seed
        )
        assert track.obstacles, "expected roadside obstacles at this density"
        for obs in track.obstacles:
            clearance = track.min_centerline_distance(obs.center)
            assert clearance > track.half_width + obs.radius + ego_radius


def test_track_file_round_trip_is_byte_identical(tmp_path):
    track = generate_track(
        TrackSpec(left=1, right=1, straight=1, obstacle_density=2.0), seed=9
    )
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_track(track, p1)
    save_track(load_track(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_malformed_and_wrong_version_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(TrackFormatError):
        load_track(p)
    track = generate_track(TrackSpec(straight=1), seed=1)
    doc = track.to_dict()
    doc["version"] = 999
    p.write_text(json.dumps(doc))
    with pytest.raises(TrackFormatError):
        load_track(p)
    del doc["version"]
    p.write_text(json.dumps(doc))
    with pytest.raises(TrackFormatError):
        load_track(p)
    with pytest.raises(TrackFormatError):
        load_track(tmp_path / "absent.json")


def test_invalid_specs_fail_generation():
    with pytest.raises(GenerationFailedError):
        generate_track(TrackSpec(left=-1), seed=0)
    with pytest.raises(GenerationFailedError):
        generate_track(TrackSpec(straight=1, seg_len=(4.0, 10.0)), seed=0)
    with pytest.raises(GenerationFailedError):
        generate_track(TrackSpec(straight=1, obstacle_density=-1.0), seed=0)


def test_track_validation_rejects_bad_fields():
    with pytest.raises(ValueError):
        Track(
            name="x",
            designation="other",
            half_width=2.0,
            segments=[np.array([[0.0, 0.0], [1.0, 0.0]])],
            obstacles=[],
            routes=[],
        )
    with pytest.raises(ValueError):
        Track(
            name="x",
            designation="seen",
            half_width=0.0,
            segments=[np.array([[0.0, 0.0], [1.0, 0.0]])],
            obstacles=[],
            routes=[],
        )


def test_benchmark_suite_is_turn_type_balanced():
    suite = generate_benchmark_suite(seed=42, cases_per_type=3)
    assert len(suite) == 9
    counts = suite_turn_counts(suite)
    assert counts == {"left": 3, "right": 3, "straight": 3}
    for track in suite:
        assert len(track.routes) == 1
        assert len(track.routes[0].nodes) == 1
    # Determinism across calls.
    again = generate_benchmark_suite(seed=42, cases_per_type=3)
    assert [t.to_dict() for t in suite] == [t.to_dict() for t in again]
