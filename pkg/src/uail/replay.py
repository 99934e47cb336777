"""Deterministic re-verification of stored uncertainty scores.

A scored dataset records every observation, the raw Monte Carlo samples
for agent-driven frames, and the seed it was collected under. Replay
re-derives the samples from that seed schedule, rebuilds the full score
chain (including the temporal term linking consecutive frames and the
per-episode window state), and compares against what the file stores.
A mismatch means the file, the policy checkpoint, or the scoring code
drifted since collection.

Episodes are identified by trajectory position, so certification covers
datasets whose every started episode recorded at least one frame (all
collectors here do).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .data import Dataset
from .policy import PolicyParams, mc_sample
from .uncertainty import BinSpec, ScoreWindow, combine_signals, score_signal

CERTIFY_TOL = 1e-9

_SCORE_FIELDS = ("entropy", "var_ratio", "std_mode", "temp_div", "score")


class ReplayMismatchError(Exception):
    """A stored record disagrees with its recomputation."""


@dataclass(frozen=True)
class ReplayReport:
    frames: int
    scored_frames: int
    raw_sample_frames: int
    max_abs_error: float
    switch_mismatches: int

    @property
    def certified(self) -> bool:
        return self.max_abs_error <= CERTIFY_TOL and self.switch_mismatches == 0

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "scored_frames": self.scored_frames,
            "raw_sample_frames": self.raw_sample_frames,
            "max_abs_error": self.max_abs_error,
            "switch_mismatches": self.switch_mismatches,
            "certified": self.certified,
        }


def _scoring_params(metadata: dict) -> dict:
    eta = metadata["eta"]
    return {
        "eta": math.inf if eta == "inf" else float(eta),
        "window_size": int(metadata["window_size"]),
        "n_samples": int(metadata["n_samples"]),
        "sd_weight": float(metadata["sd_weight"]),
        "alpha": float(metadata["alpha"]),
        "steer_bins": BinSpec.from_dict(metadata["steer_bins"]),
        "throttle_bins": BinSpec.from_dict(metadata["throttle_bins"]),
        "seed": int(metadata["seed"]),
    }


def replay_dataset(dataset: Dataset, policy: PolicyParams) -> ReplayReport:
    """Recompute every stored uncertainty record and report the drift.

    Unscored datasets (expert-only collection, plain mixing or noise)
    certify trivially: there is nothing to recompute.
    """
    n_frames = sum(1 for _ in dataset.frames())
    if "eta" not in dataset.metadata:
        for frame in dataset.frames():
            if frame.uncertainty is not None:
                raise ValueError(
                    "dataset carries uncertainty records but no scoring parameters"
                )
        return ReplayReport(n_frames, 0, 0, 0.0, 0)

    p = _scoring_params(dataset.metadata)
    max_err = 0.0
    scored = 0
    with_raw = 0
    switch_mismatches = 0
    for episode, traj in enumerate(dataset.trajectories):
        window = ScoreWindow(p["window_size"], p["eta"])
        prev_steer = prev_throttle = None
        for frame in traj.frames:
            stored = frame.uncertainty
            if stored is None:
                raise ValueError(
                    f"unscored frame at episode {episode} tick {frame.tick} "
                    "breaks the replay chain"
                )
            mc = mc_sample(
                policy,
                frame.obs,
                p["n_samples"],
                rng.derive_seed(p["seed"], "mc", episode, frame.tick),
                p["steer_bins"],
                p["throttle_bins"],
            )
            if frame.mc_steer is not None:
                with_raw += 1
                max_err = max(
                    max_err,
                    float(np.max(np.abs(mc.steer.raw - np.asarray(frame.mc_steer)))),
                    float(np.max(np.abs(mc.throttle.raw - np.asarray(frame.mc_throttle)))),
                )
            steer = score_signal(mc.steer, prev_steer, p["sd_weight"])
            throttle = score_signal(mc.throttle, prev_throttle, p["sd_weight"])
            combined = combine_signals(steer.score, throttle.score, p["alpha"])
            window_sum, switched = window.push(combined)
            prev_steer, prev_throttle = mc.steer, mc.throttle

            for name in _SCORE_FIELDS:
                max_err = max(
                    max_err,
                    abs(getattr(steer, name) - getattr(stored.steer, name)),
                    abs(getattr(throttle, name) - getattr(stored.throttle, name)),
                )
            max_err = max(
                max_err,
                abs(combined - stored.combined),
                abs(window_sum - stored.window_sum),
            )
            if switched != stored.switched:
                switch_mismatches += 1
            scored += 1
    return ReplayReport(n_frames, scored, with_raw, max_err, switch_mismatches)


def certify(dataset: Dataset, policy: PolicyParams) -> ReplayReport:
    """Replay and raise unless everything reproduces within tolerance."""
    report = replay_dataset(dataset, policy)
    if not report.certified:
        raise ReplayMismatchError(
            f"max absolute error {report.max_abs_error:.3e}, "
            f"{report.switch_mismatches} switch mismatches"
        )
    return report
