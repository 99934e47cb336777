"""Dataset model and its line-delimited file format.

A dataset file is JSONL: one header record, then for each trajectory a
trajectory record followed by its frame records. Serialization is
canonical (sorted keys, no whitespace), so serialize -> parse ->
serialize is byte-identical and equal datasets have equal files.

Frames collected under uncertainty scoring also store the raw MC sample
values for both signals, which lets `replay` recompute every stored score
from the file alone and certify the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jsonio import canonical_dumps, read_jsonl
from .policy import Action, Observation
from .uncertainty import UncertaintyRecord

DATASET_FORMAT_VERSION = 1

CONTROL_MODES = ("agent", "expert", "noise")
LABEL_SOURCES = ("oracle_everyframe", "human_in_control", "none")


class DatasetFormatError(Exception):
    """Dataset file malformed or violating frame invariants."""


def _action_to_dict(a: Action) -> dict:
    return {"steer": a.steer, "throttle": a.throttle}


def _action_from_dict(d: dict) -> Action:
    return Action(steer=float(d["steer"]), throttle=float(d["throttle"]))


def _obs_to_dict(o: Observation) -> dict:
    return {
        "rays": [float(r) for r in o.rays],
        "speed": float(o.speed),
        "command": o.command,
    }


def _obs_from_dict(d: dict) -> Observation:
    return Observation(
        rays=np.array(d["rays"], dtype=float),
        speed=float(d["speed"]),
        command=str(d["command"]),
    )


@dataclass(frozen=True)
class Frame:
    """One simulation tick as recorded during collection."""

    tick: int
    obs: Observation
    action: Action  # what was executed
    label: Action | None  # expert label, when a source supplied one
    control_mode: str
    label_source: str
    uncertainty: UncertaintyRecord | None = None
    infraction: str | None = None  # infraction kind triggered by this step
    mc_steer: list[float] | None = None  # raw MC samples, for replay certification
    mc_throttle: list[float] | None = None

    def __post_init__(self) -> None:
        if self.control_mode not in CONTROL_MODES:
            raise ValueError(f"unknown control_mode {self.control_mode!r}")
        if self.label_source not in LABEL_SOURCES:
            raise ValueError(f"unknown label_source {self.label_source!r}")
        if self.control_mode == "expert" and self.label is not None:
            if self.action != self.label:
                raise ValueError(
                    "expert-controlled frame must execute the expert label"
                )

    def to_dict(self) -> dict:
        d = {
            "type": "frame",
            "tick": self.tick,
            "obs": _obs_to_dict(self.obs),
            "action": _action_to_dict(self.action),
            "control_mode": self.control_mode,
            "label_source": self.label_source,
        }
        if self.label is not None:
            d["label"] = _action_to_dict(self.label)
        if self.uncertainty is not None:
            d["uncertainty"] = self.uncertainty.to_dict()
        if self.infraction is not None:
            d["infraction"] = self.infraction
        if self.mc_steer is not None:
            d["mc_steer"] = self.mc_steer
        if self.mc_throttle is not None:
            d["mc_throttle"] = self.mc_throttle
        return d

    @staticmethod
    def from_dict(d: dict) -> "Frame":
        return Frame(
            tick=int(d["tick"]),
            obs=_obs_from_dict(d["obs"]),
            action=_action_from_dict(d["action"]),
            label=_action_from_dict(d["label"]) if "label" in d else None,
            control_mode=str(d["control_mode"]),
            label_source=str(d["label_source"]),
            uncertainty=UncertaintyRecord.from_dict(d["uncertainty"])
            if "uncertainty" in d
            else None,
            infraction=str(d["infraction"]) if "infraction" in d else None,
            mc_steer=[float(v) for v in d["mc_steer"]] if "mc_steer" in d else None,
            mc_throttle=[float(v) for v in d["mc_throttle"]]
            if "mc_throttle" in d
            else None,
        )


@dataclass
class Trajectory:
    """One episode's frames plus how the episode ended."""

    track: str
    route_index: int
    frames: list[Frame] = field(default_factory=list)
    end_reason: str = "completed"  # completed | infraction | expert_lost | timeout | budget

    def validate(self) -> None:
        ticks = [f.tick for f in self.frames]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise DatasetFormatError("frames are not strictly tick-ordered")

    def header_dict(self) -> dict:
        return {
            "type": "trajectory",
            "track": self.track,
            "route_index": self.route_index,
            "end_reason": self.end_reason,
            "n_frames": len(self.frames),
        }


@dataclass
class Dataset:
    metadata: dict
    trajectories: list[Trajectory] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return sum(len(t.frames) for t in self.trajectories)

    def frames(self):
        for traj in self.trajectories:
            yield from traj.frames

    def records(self):
        header = dict(self.metadata)
        header["type"] = "header"
        header["version"] = DATASET_FORMAT_VERSION
        header["n_trajectories"] = len(self.trajectories)
        header["n_frames"] = self.n_frames
        yield header
        for traj in self.trajectories:
            yield traj.header_dict()
            for frame in traj.frames:
                yield frame.to_dict()

    def save(self, path) -> None:
        for traj in self.trajectories:
            traj.validate()
        with open(path, "w") as f:
            for rec in self.records():
                f.write(canonical_dumps(rec))
                f.write("\n")

    @staticmethod
    def load(path) -> "Dataset":
        try:
            records = list(read_jsonl(path))
        except (OSError, ValueError) as e:
            raise DatasetFormatError(f"unreadable dataset {path}: {e}") from e
        if not records or records[0].get("type") != "header":
            raise DatasetFormatError("dataset must start with a header record")
        header = records[0]
        if header.get("version") != DATASET_FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {header.get('version')}")
        metadata = {
            k: v
            for k, v in header.items()
            if k not in ("type", "version", "n_trajectories", "n_frames")
        }
        trajectories: list[Trajectory] = []
        try:
            for rec in records[1:]:
                if rec["type"] == "trajectory":
                    trajectories.append(
                        Trajectory(
                            track=str(rec["track"]),
                            route_index=int(rec["route_index"]),
                            end_reason=str(rec["end_reason"]),
                        )
                    )
                elif rec["type"] == "frame":
                    if not trajectories:
                        raise DatasetFormatError("frame record before any trajectory")
                    trajectories[-1].frames.append(Frame.from_dict(rec))
                else:
                    raise DatasetFormatError(f"unknown record type {rec['type']!r}")
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, DatasetFormatError):
                raise
            raise DatasetFormatError(f"malformed dataset record: {e}") from e
        ds = Dataset(metadata=metadata, trajectories=trajectories)
        if len(trajectories) != header["n_trajectories"] or ds.n_frames != header["n_frames"]:
            raise DatasetFormatError("header counts do not match records")
        for traj in trajectories:
            traj.validate()
        return ds


def training_arrays(datasets) -> tuple[np.ndarray, np.ndarray]:
    """Stack every labeled frame of the given datasets into (X, Y) arrays."""
    xs, ys = [], []
    for ds in datasets:
        for frame in ds.frames():
            if frame.label is None:
                continue
            xs.append(frame.obs.to_vector())
            ys.append(frame.label.as_array())
    if not xs:
        raise ValueError("no labeled frames to train on")
    return np.stack(xs), np.stack(ys)
