"""Infraction-prediction scoring and closed-loop benchmarking.

Per-frame uncertainty scores become binary infraction predictors through
a k-step lookahead labeling, compared via ROC curves. Trained policies
are graded on balanced intersection suites with deterministic,
dropout-free inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .data import Dataset, Frame
from .policy import PolicyParams, forward
from .simulator import Simulation, VehicleConfig
from .track import Track, suite_turn_counts

SIGNAL_NAMES = ("total_u", "sd_steer", "sd_throttle")
BUFFER_STEPS = (3, 5, 10)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class UndefinedRocError(Exception):
    """Raised when a trace has only one label class."""


@dataclass(frozen=True)
class ScoredFrame:
    """One frame of a prediction trace: a scalar score plus the ground
    truth needed to grade it later."""

    tick: int
    score: float
    command: str
    infraction: bool


@dataclass
class LabeledScoreTrace:
    """Flattened frames with lookahead labels for one buffer size."""

    k: int
    scores: np.ndarray
    labels: np.ndarray
    commands: tuple[str, ...]

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int((~self.labels).sum())


def _frame_score(frame: Frame, signal: str) -> float:
    u = frame.uncertainty
    if signal == "total_u":
        return u.combined
    if signal == "sd_steer":
        return u.steer.std_mode
    if signal == "sd_throttle":
        return u.throttle.std_mode
    raise ValueError(f"unknown signal {signal!r}")


def signal_traces(datasets: list[Dataset], signal: str) -> list[list[ScoredFrame]]:
    """Per-trajectory score traces for one signal; frames without
    uncertainty records are skipped."""
    traces = []
    for ds in datasets:
        for traj in ds.trajectories:
            trace = [
                ScoredFrame(
                    tick=f.tick,
                    score=_frame_score(f, signal),
                    command=f.obs.command,
                    infraction=f.infraction is not None,
                )
                for f in traj.frames
                if f.uncertainty is not None
            ]
            if trace:
                traces.append(trace)
    return traces


def label_with_buffer(traces: list[list[ScoredFrame]], k: int) -> LabeledScoreTrace:
    """A frame is positive iff an infraction occurs at most k ticks ahead
    within its own trajectory, the infraction frame itself included.
    Trajectory tails simply see a shortened window."""
    if k < 1:
        raise ValueError(f"buffer must be >= 1, got {k}")
    scores: list[float] = []
    labels: list[bool] = []
    commands: list[str] = []
    for trace in traces:
        ticks = np.array([f.tick for f in trace])
        inf_ticks = np.sort(ticks[[f.infraction for f in trace]])
        lo = np.searchsorted(inf_ticks, ticks, side="left")
        hi = np.searchsorted(inf_ticks, ticks + k, side="right")
        positive = hi > lo
        scores.extend(f.score for f in trace)
        labels.extend(bool(p) for p in positive)
        commands.extend(f.command for f in trace)
    return LabeledScoreTrace(
        k=k,
        scores=np.array(scores, dtype=float),
        labels=np.array(labels, dtype=bool),
        commands=tuple(commands),
    )


@dataclass
class RocCurve:
    """Operating points swept over score thresholds, plus the area."""

    points: list[tuple[float, float, float]]  # (fpr, tpr, threshold)
    auc: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "points": [[fpr, tpr, thr] for fpr, tpr, thr in self.points],
        }


def roc(trace: LabeledScoreTrace) -> RocCurve:
    """Threshold sweep with tied scores sharing one operating point;
    AUC by trapezoidal integration (equals the pairwise-comparison
    statistic with ties at half credit)."""
    n_pos, n_neg = trace.n_pos, trace.n_neg
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRocError(
            f"need both classes, got {n_pos} positive / {n_neg} negative"
        )
    order = np.argsort(-trace.scores, kind="stable")
    scores = trace.scores[order]
    labels = trace.labels[order]
    # Thresholds fall strictly between distinct score values, with
    # finite sentinels outside the observed range for the endpoints.
    points = [(0.0, 0.0, float(scores[0]) + 1.0)]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(labels[i:j].sum())
        fp += (j - i) - int(labels[i:j].sum())
        threshold = (
            (float(scores[i]) + float(scores[j])) / 2.0
            if j < n
            else float(scores[i]) - 1.0
        )
        points.append((fp / n_neg, tp / n_pos, threshold))
        i = j
    fprs = np.array([p[0] for p in points])
    tprs = np.array([p[1] for p in points])
    auc = float(_trapezoid(tprs, fprs))
    return RocCurve(points=points, auc=auc, n_pos=n_pos, n_neg=n_neg)


def per_command_roc(trace: LabeledScoreTrace) -> dict[str, RocCurve]:
    """One curve per command; partitions with a single label class are
    left out rather than fabricated."""
    commands = np.array(trace.commands)
    out: dict[str, RocCurve] = {}
    for cmd in sorted(set(trace.commands)):
        pick = commands == cmd
        sub = LabeledScoreTrace(
            k=trace.k,
            scores=trace.scores[pick],
            labels=trace.labels[pick],
            commands=tuple(np.array(trace.commands)[pick]),
        )
        try:
            out[cmd] = roc(sub)
        except UndefinedRocError:
            continue
    return out


def compare_signals(
    datasets: list[Dataset], buffers: tuple[int, ...] = BUFFER_STEPS
) -> dict[str, dict[int, float]]:
    """AUC matrix: every scored signal crossed with every buffer size."""
    table: dict[str, dict[int, float]] = {}
    for signal in SIGNAL_NAMES:
        traces = signal_traces(datasets, signal)
        table[signal] = {}
        for k in buffers:
            table[signal][k] = roc(label_with_buffer(traces, k)).auc
    return table


MIN_SCENARIO_FRAMES = 1000


def scenario_medians(
    conditions: dict[str, Dataset], min_frames: int = MIN_SCENARIO_FRAMES
) -> dict[str, dict]:
    """Median (and mean) combined uncertainty per condition and per
    command. Refuses undersized conditions outright."""
    out: dict[str, dict] = {}
    for name, ds in conditions.items():
        scored = [f for f in ds.frames() if f.uncertainty is not None]
        if len(scored) < min_frames:
            raise ValueError(
                f"condition {name!r} has {len(scored)} scored frames, need >= {min_frames}"
            )
        values = np.array([f.uncertainty.combined for f in scored])
        by_command: dict[str, dict] = {}
        commands = np.array([f.obs.command for f in scored])
        for cmd in sorted(set(commands)):
            v = values[commands == cmd]
            by_command[cmd] = {
                "median": float(np.median(v)),
                "mean": float(np.mean(v)),
                "count": int(v.size),
            }
        out[name] = {
            "median": float(np.median(values)),
            "mean": float(np.mean(values)),
            "count": int(values.size),
            "by_command": by_command,
        }
    return out


@dataclass
class BenchmarkReport:
    """Closed-loop suite results aggregated over seeds."""

    suite: list[str]
    seeds: list[int]
    success_rate: float
    success_ci: float
    total_meters: float
    infractions: int
    meters_per_infraction: float | None
    by_turn_type: dict[str, dict]
    by_seed: list[dict]
    collection_infraction_rate: float | None = None

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seeds": self.seeds,
            "success_rate": self.success_rate,
            "success_ci": self.success_ci,
            "total_meters": self.total_meters,
            "infractions": self.infractions,
            "meters_per_infraction": self.meters_per_infraction,
            "by_turn_type": self.by_turn_type,
            "by_seed": self.by_seed,
            "collection_infraction_rate": self.collection_infraction_rate,
        }


def _case_turn_type(track: Track) -> str:
    labels = {n.label for n in track.routes[0].nodes}
    if len(labels) != 1:
        raise ValueError(f"benchmark case {track.name!r} is not a single intersection")
    return labels.pop()


def _mean_ci(values: list[float]) -> tuple[float, float]:
    arr = np.array(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), 0.0
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return float(arr.mean()), half


def run_benchmark(
    policy,
    suite: list[Track],
    seeds: list[int],
    *,
    cfg: VehicleConfig | None = None,
    max_ticks: int = 1500,
    spawn_jitter: float = 0.15,
    require_balanced: bool = True,
) -> BenchmarkReport:
    """Drive every case once per seed and grade completions.

    `policy` is either PolicyParams (run maskless) or a callable
    sim -> Action. Seeds only perturb the spawn pose slightly, keeping
    runs deterministic per (policy, suite, seed). A case succeeds when
    the route ends within the tick budget without any infraction.
    """
    if not suite:
        raise ValueError("empty benchmark suite")
    if require_balanced:
        counts = suite_turn_counts(suite)
        if len(set(counts.values())) != 1:
            raise ValueError(f"suite is not turn-type balanced: {counts}")
    cfg = cfg or VehicleConfig()
    if isinstance(policy, PolicyParams):
        controller = lambda sim: forward(policy, sim.observe())
    else:
        controller = policy

    by_seed = []
    per_type_rates: dict[str, list[float]] = {}
    total_meters = 0.0
    total_infractions = 0
    for seed in seeds:
        case_results = []
        for case_index, track in enumerate(suite):
            sim = Simulation(track, 0, cfg)
            g = rng.stream(seed, "bench", case_index)
            sim.state = replace(
                sim.state,
                x=sim.state.x + float(g.normal(0.0, spawn_jitter)),
                y=sim.state.y + float(g.normal(0.0, spawn_jitter)),
                heading=sim.state.heading + float(g.normal(0.0, 0.035)),
            )
            meters = 0.0
            hit = None
            for _ in range(max_ticks):
                if sim.done:
                    break
                meters += sim.state.speed * cfg.dt
                sim.step(controller(sim))
                hit = sim.poll_infraction()
                if hit is not None:
                    break
            success = sim.done and hit is None
            case_results.append(
                {
                    "case": track.name,
                    "turn_type": _case_turn_type(track),
                    "success": success,
                    "meters": meters,
                    "infraction": hit.kind if hit else None,
                }
            )
            total_meters += meters
            total_infractions += int(hit is not None)
        rate = sum(r["success"] for r in case_results) / len(case_results)
        by_seed.append(
            {
                "seed": seed,
                "success_rate": rate,
                "infractions": sum(1 for r in case_results if r["infraction"]),
                "meters": sum(r["meters"] for r in case_results),
                "cases": case_results,
            }
        )
        for turn in sorted({r["turn_type"] for r in case_results}):
            sub = [r["success"] for r in case_results if r["turn_type"] == turn]
            per_type_rates.setdefault(turn, []).append(sum(sub) / len(sub))

    success_rate, success_ci = _mean_ci([s["success_rate"] for s in by_seed])
    by_turn_type = {}
    for turn, rates in sorted(per_type_rates.items()):
        mean, ci = _mean_ci(rates)
        by_turn_type[turn] = {"success_rate": mean, "ci": ci}
    return BenchmarkReport(
        suite=[t.name for t in suite],
        seeds=list(seeds),
        success_rate=success_rate,
        success_ci=success_ci,
        total_meters=total_meters,
        infractions=total_infractions,
        meters_per_infraction=(
            total_meters / total_infractions if total_infractions else None
        ),
        by_turn_type=by_turn_type,
        by_seed=by_seed,
    )


def roc_table(curve: RocCurve) -> str:
    """Tab-separated operating points for external plotting."""
    lines = ["fpr\ttpr\tthreshold"]
    for fpr, tpr, thr in curve.points:
        lines.append(f"{fpr:.10g}\t{tpr:.10g}\t{thr:.10g}")
    return "\n".join(lines) + "\n"


def signal_table(matrix: dict[str, dict[int, float]]) -> str:
    """Tab-separated signal-by-buffer AUC table."""
    buffers = sorted({k for row in matrix.values() for k in row})
    lines = ["signal\t" + "\t".join(f"k={k}" for k in buffers)]
    for signal in matrix:
        cells = "\t".join(f"{matrix[signal][k]:.6f}" for k in buffers)
        lines.append(f"{signal}\t{cells}")
    return "\n".join(lines) + "\n"


def scenario_table(medians: dict[str, dict]) -> str:
    """Tab-separated condition table, medians first."""
    lines = ["condition\tmedian\tmean\tcount"]
    for name in sorted(medians):
        row = medians[name]
        lines.append(f"{name}\t{row['median']:.8g}\t{row['mean']:.8g}\t{row['count']}")
        for cmd in sorted(row["by_command"]):
            sub = row["by_command"][cmd]
            lines.append(
                f"{name}/{cmd}\t{sub['median']:.8g}\t{sub['mean']:.8g}\t{sub['count']}"
            )
    return "\n".join(lines) + "\n"
