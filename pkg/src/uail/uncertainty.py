"""Dropout-sample uncertainty scoring for continuous control signals.

Given repeated stochastic forward passes for one input, the sample set for
each control signal is discretized into a histogram, from which four
dispersion measures are computed: entropy and variational ratio of the
histogram, mean absolute deviation of the raw samples from the modal bin
center, and the KL divergence between consecutive timesteps' histograms.
The per-signal score multiplies the three categorical/temporal terms,
adds the weighted deviation term, and squares the sum; per-signal scores
combine linearly across signals, and a windowed running sum drives the
control-switch test.

All functions are pure and safe to call from any thread.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BinSpec:
    """Uniform discretization of one signal's normalized range.

    Values outside [lo, hi] clamp to the edge bins.
    """

    lo: float
    hi: float
    n_bins: int

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise ValueError(f"BinSpec requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.n_bins < 2:
            raise ValueError(f"BinSpec requires n_bins >= 2, got {self.n_bins}")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n_bins

    def index(self, value: float) -> int:
        i = int(math.floor((value - self.lo) / self.width))
        return min(max(i, 0), self.n_bins - 1)

    def indices(self, values: np.ndarray) -> np.ndarray:
        i = np.floor((values - self.lo) / self.width).astype(int)
        return np.clip(i, 0, self.n_bins - 1)

    def center(self, i: int) -> float:
        return self.lo + (i + 0.5) * self.width

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n_bins": self.n_bins}

    @staticmethod
    def from_dict(d: dict) -> "BinSpec":
        return BinSpec(lo=float(d["lo"]), hi=float(d["hi"]), n_bins=int(d["n_bins"]))


@dataclass(frozen=True)
class SampleSet:
    """Continuous output samples for one signal plus their discretization.

    ``mode_bin`` is the lowest-index maximal-count bin; ``mode_center`` is
    that bin's center value (used as the executed control output).
    """

    raw: np.ndarray
    counts: np.ndarray
    spec: BinSpec
    mode_bin: int
    mode_center: float

    @property
    def n(self) -> int:
        return int(self.raw.size)


def discretize(samples, spec: BinSpec) -> SampleSet:
    """Bin continuous samples over ``spec``; ties break to the lowest bin index."""
    raw = np.asarray(samples, dtype=float)
    if raw.ndim != 1:
        raw = raw.ravel()
    if raw.size < 2:
        raise ValueError(f"need at least 2 samples, got {raw.size}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("samples must be finite")
    counts = np.bincount(spec.indices(raw), minlength=spec.n_bins)
    mode_bin = int(np.argmax(counts))  # argmax picks the lowest index on ties
    return SampleSet(
        raw=raw,
        counts=counts,
        spec=spec,
        mode_bin=mode_bin,
        mode_center=spec.center(mode_bin),
    )


def entropy(s: SampleSet) -> float:
    """Shannon entropy (nats) of the sample histogram; 0·ln 0 counts as 0."""
    p = s.counts[s.counts > 0] / s.n
    return float(-np.sum(p * np.log(p)))


def variational_ratio(s: SampleSet) -> float:
    """Fraction of samples outside the modal bin."""
    return float(1.0 - s.counts[s.mode_bin] / s.n)


def std_from_mode(s: SampleSet) -> float:
    """Mean absolute deviation of the discretized samples from the modal
    bin center. Unanimous samples score exactly zero."""
    centers = np.array([s.spec.center(i) for i in s.spec.indices(s.raw)])
    return float(np.mean(np.abs(centers - s.mode_center)))


def smoothing_eps(s: SampleSet) -> float:
    """Additive count smoothing used before KL; scales away as N grows."""
    return 1.0 / (s.n * s.spec.n_bins)


def _smoothed_dist(s: SampleSet) -> np.ndarray:
    eps = smoothing_eps(s)
    c = s.counts + eps
    return c / c.sum()


def temporal_divergence(cur: SampleSet, prev: SampleSet) -> float:
    """KL divergence of the current histogram from the previous one.

    Both histograms get additive smoothing before normalization so the
    divergence is finite even when the previous distribution has empty
    support where the current one does not.
    """
    if cur.spec != prev.spec:
        raise ValueError(f"mismatched bin specs: {cur.spec} vs {prev.spec}")
    p = _smoothed_dist(cur)
    q = _smoothed_dist(prev)
    return max(float(np.sum(p * np.log(p / q))), 0.0)


def uncertainty_score(cur: SampleSet, prev: SampleSet | None, sd_weight: float) -> float:
    """Composite per-signal score: (TD·H·VR + sd_weight·SD) squared.

    At the first frame of an episode pass ``prev=None`` (or ``prev=cur``):
    the temporal term is zero by convention.
    """
    if sd_weight < 0:
        raise ValueError(f"sd_weight must be >= 0, got {sd_weight}")
    if prev is None:
        prev = cur
    td = temporal_divergence(cur, prev)
    inner = td * entropy(cur) * variational_ratio(cur) + sd_weight * std_from_mode(cur)
    return inner * inner


def combine_signals(u_steer: float, u_throttle: float, alpha: float) -> float:
    """Total score across signals: steer score plus alpha-weighted throttle score."""
    if u_steer < 0 or u_throttle < 0 or alpha < 0:
        raise ValueError(
            f"combine_signals requires non-negative inputs, got "
            f"({u_steer}, {u_throttle}, {alpha})"
        )
    return u_steer + alpha * u_throttle


def window_should_switch(window, eta: float) -> tuple[float, bool]:
    """Sum the windowed scores and test strictly against the threshold.

    ``window`` holds the last up-to-T combined scores; missing warm-up
    entries simply contribute nothing.
    """
    total = float(sum(window))
    return total, total > eta


class ScoreWindow:
    """Fixed-size ring of the last T combined scores, zero-initialized per episode."""

    def __init__(self, size: int, eta: float):
        if size < 1:
            raise ValueError(f"window size must be >= 1, got {size}")
        self.size = size
        self.eta = eta
        self._buf: deque[float] = deque([0.0] * size, maxlen=size)

    def push(self, combined: float) -> tuple[float, bool]:
        """Record one score; returns (window_sum, switch) for this step."""
        self._buf.append(combined)
        return window_should_switch(self._buf, self.eta)

    def values(self) -> list[float]:
        return list(self._buf)


@dataclass(frozen=True)
class SignalScores:
    """The five per-signal measures for one timestep."""

    entropy: float
    var_ratio: float
    std_mode: float
    temp_div: float
    score: float

    def to_dict(self) -> dict:
        return {
            "entropy": self.entropy,
            "var_ratio": self.var_ratio,
            "std_mode": self.std_mode,
            "temp_div": self.temp_div,
            "score": self.score,
        }

    @staticmethod
    def from_dict(d: dict) -> "SignalScores":
        return SignalScores(
            entropy=float(d["entropy"]),
            var_ratio=float(d["var_ratio"]),
            std_mode=float(d["std_mode"]),
            temp_div=float(d["temp_div"]),
            score=float(d["score"]),
        )


def score_signal(cur: SampleSet, prev: SampleSet | None, sd_weight: float) -> SignalScores:
    """Compute all five measures for one signal at one timestep."""
    if prev is None:
        prev = cur
    h = entropy(cur)
    vr = variational_ratio(cur)
    sd = std_from_mode(cur)
    td = temporal_divergence(cur, prev)
    inner = td * h * vr + sd_weight * sd
    return SignalScores(entropy=h, var_ratio=vr, std_mode=sd, temp_div=td, score=inner * inner)


@dataclass(frozen=True)
class UncertaintyRecord:
    """Per-timestep uncertainty bookkeeping for both control signals."""

    t: int
    steer: SignalScores
    throttle: SignalScores
    combined: float
    window_sum: float
    switched: bool

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "steer": self.steer.to_dict(),
            "throttle": self.throttle.to_dict(),
            "combined": self.combined,
            "window_sum": self.window_sum,
            "switched": self.switched,
        }

    @staticmethod
    def from_dict(d: dict) -> "UncertaintyRecord":
        return UncertaintyRecord(
            t=int(d["t"]),
            steer=SignalScores.from_dict(d["steer"]),
            throttle=SignalScores.from_dict(d["throttle"]),
            combined=float(d["combined"]),
            window_sum=float(d["window_sum"]),
            switched=bool(d["switched"]),
        )
