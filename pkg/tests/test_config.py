"""Run configuration: defaults, digests, strict parsing, overrides."""

import math

import pytest

from uail.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    load_config,
    save_config,
)
from uail.simulator import VehicleConfig


def test_defaults_match_reference_settings():
    cfg = RunConfig()
    assert cfg.alpha == 0.6
    assert cfg.n_samples == 20
    assert cfg.mix_p == 0.4
    assert cfg.noise_period == 5
    assert cfg.noise_bound == 1.0
    assert cfg.buffers == [3, 5, 10]
    assert cfg.window_size == 5
    assert cfg.dropout == 0.1
    assert cfg.steer_bins.lo == -1.0 and cfg.steer_bins.hi == 1.0
    assert cfg.steer_bins.n_bins == 20
    assert cfg.throttle_bins.lo == 0.0 and cfg.throttle_bins.hi == 1.0


def test_arch_derives_from_ray_count():
    assert RunConfig().arch == [20, 64, 64, 2]
    narrow = RunConfig(vehicle=VehicleConfig(n_rays=9))
    assert narrow.arch == [14, 64, 64, 2]


def test_dict_round_trip_preserves_digest():
    cfg = RunConfig(seed=7, alpha=0.25, hidden_layers=[32])
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.digest() == cfg.digest()


def test_digest_tracks_every_field_change():
    base = RunConfig().digest()
    assert RunConfig(seed=1).digest() != base
    assert RunConfig(eta=0.2).digest() != base
    assert RunConfig(hidden_layers=[64, 64, 64]).digest() != base
    assert len(base) == 12


def test_infinite_eta_survives_serialization():
    cfg = RunConfig(eta=math.inf)
    doc = cfg.to_dict()
    assert doc["eta"] == "inf"
    assert math.isinf(RunConfig.from_dict(doc).eta)


def test_unknown_keys_rejected():
    doc = RunConfig().to_dict()
    doc["warp_drive"] = True
    with pytest.raises(ConfigError, match="warp_drive"):
        RunConfig.from_dict(doc)


def test_unsupported_version_rejected():
    doc = RunConfig().to_dict()
    doc["version"] = 99
    with pytest.raises(ConfigError, match="version"):
        RunConfig.from_dict(doc)


@pytest.mark.parametrize(
    "bad",
    [
        dict(dropout=1.0),
        dict(eta=0.0),
        dict(eta=-1.0),
        dict(mix_p=1.5),
        dict(noise_period=0),
        dict(noise_bound=2.0),
        dict(buffers=[3, 0]),
        dict(n_samples=1),
    ],
)
def test_invalid_values_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_save_load_cycle_is_byte_stable(tmp_path):
    path = tmp_path / "run.json"
    save_config(RunConfig(seed=3, lr=5e-4), path)
    first = path.read_bytes()
    save_config(load_config(path), path)
    assert path.read_bytes() == first


def test_load_rejects_malformed_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("[1, 2, 3]")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_overrides_win_over_file_values():
    cfg = RunConfig(alpha=0.6, seed=0)
    out = apply_overrides(cfg, {"alpha": 0.9, "seed": 5})
    assert out.alpha == 0.9 and out.seed == 5
    assert cfg.alpha == 0.6  # original untouched
    assert out.digest() != cfg.digest()


def test_overrides_reject_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        apply_overrides(RunConfig(), {"alph": 0.9})


def test_empty_overrides_change_nothing():
    cfg = RunConfig(seed=11)
    assert apply_overrides(cfg, {}).to_dict() == cfg.to_dict()
