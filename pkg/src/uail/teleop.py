"""Wire protocol and server-side session for human-in-the-loop collection.

Messages are JSON objects with a `type` field, one per socket frame (or
per transcript line). The schema is versioned; hello negotiates it. The
server streams `frame` updates; the client streams `control` inputs;
`pause`/`resume` bracket stretches where the human input went stale and
the simulation froze rather than fabricate labels.

TeleopSession is the transport-free state machine behind `serve`: it
runs uncertainty-gated collection where the takeover source is a human
mailbox instead of the scripted oracle. Agent-driven frames carry no
label (a human cannot supply counterfactual actions while watching);
frames the human drives are labeled with exactly the executed input.
Datasets produced here differ from oracle collection only in those
label fields, never in scoring, so one scored run is reproducible from
its transcript no matter how the inputs were timed originally.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

from . import rng
from .aggregation import CLEAN_PROFILE, DEFAULT_STEER_BINS, DEFAULT_THROTTLE_BINS
from .data import Dataset, Frame, Trajectory
from .expert import RemoteMailbox
from .jsonio import canonical_dumps
from .policy import Action, PolicyParams, mc_sample
from .simulator import Simulation, VehicleConfig
from .track import Track
from .uncertainty import BinSpec, ScoreWindow, UncertaintyRecord, combine_signals, score_signal

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    """Malformed, out-of-bounds, or version-incompatible message."""


@dataclass(frozen=True)
class Hello:
    role: str  # server | client
    version: int = PROTOCOL_VERSION
    session: str = ""

    def __post_init__(self):
        if self.role not in ("server", "client"):
            raise ProtocolError(f"hello role must be server|client, got {self.role!r}")


@dataclass(frozen=True)
class SessionConfig:
    digest: str
    eta: float
    window_size: int
    n_samples: int
    dt: float
    hold_budget_ticks: int
    budget_frames: int


@dataclass(frozen=True)
class TrackGeometry:
    episode: int
    track: dict  # full geometry, as the track file format


@dataclass(frozen=True)
class FrameUpdate:
    tick: int  # session-global, strictly increasing
    episode: int
    sim_tick: int
    x: float
    y: float
    heading: float
    speed: float
    command: str
    combined: float
    window_sum: float
    eta: float
    control_mode: str
    infraction: str | None = None


@dataclass(frozen=True)
class ControlInput:
    tick: int  # latest server tick the client had seen
    steer: float
    throttle: float

    def __post_init__(self):
        if not (-1.0 <= self.steer <= 1.0):
            raise ProtocolError(f"steer out of [-1, 1]: {self.steer}")
        if not (0.0 <= self.throttle <= 1.0):
            raise ProtocolError(f"throttle out of [0, 1]: {self.throttle}")

    @property
    def action(self) -> Action:
        return Action(steer=self.steer, throttle=self.throttle)


@dataclass(frozen=True)
class Pause:
    reason: str = "stale_input"


@dataclass(frozen=True)
class Resume:
    pass


@dataclass(frozen=True)
class End:
    reason: str
    frames: int = 0
    episodes: int = 0


@dataclass(frozen=True)
class ErrorMessage:
    message: str


MESSAGE_TYPES = {
    "hello": Hello,
    "config": SessionConfig,
    "track": TrackGeometry,
    "frame": FrameUpdate,
    "control": ControlInput,
    "pause": Pause,
    "resume": Resume,
    "end": End,
    "error": ErrorMessage,
}
_TYPE_NAMES = {cls: name for name, cls in MESSAGE_TYPES.items()}


def encode(message) -> str:
    """One message as a canonical JSON line (no trailing newline)."""
    name = _TYPE_NAMES.get(type(message))
    if name is None:
        raise ProtocolError(f"not a protocol message: {type(message).__name__}")
    d = {"type": name}
    for f in fields(message):
        value = getattr(message, f.name)
        if value is None:
            continue
        d[f.name] = value
    return canonical_dumps(d)


def decode(line: str):
    """Parse one message; reject unknown types and bad field values."""
    try:
        d = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"not valid JSON: {e}") from e
    if not isinstance(d, dict) or "type" not in d:
        raise ProtocolError("message must be an object with a type field")
    cls = MESSAGE_TYPES.get(d["type"])
    if cls is None:
        raise ProtocolError(f"unknown message type {d['type']!r}")
    kwargs = {k: v for k, v in d.items() if k != "type"}
    try:
        return cls(**kwargs)
    except ProtocolError:
        raise
    except (TypeError, ValueError) as e:
        raise ProtocolError(f"bad {d['type']} message: {e}") from e


def banner_intervals(frames: list[FrameUpdate]) -> list[tuple[int, int, int]]:
    """Maximal expert-control stretches as (episode, first, last) sim ticks.

    The takeover banner is up exactly while control_mode is expert; this
    is the reference the client rendering must reproduce.
    """
    intervals = []
    current = None
    for f in frames:
        if f.control_mode == "expert":
            if current is None:
                current = [f.episode, f.sim_tick, f.sim_tick]
            elif current[0] == f.episode:
                current[2] = f.sim_tick
            else:
                intervals.append(tuple(current))
                current = [f.episode, f.sim_tick, f.sim_tick]
        elif current is not None:
            intervals.append(tuple(current))
            current = None
    if current is not None:
        intervals.append(tuple(current))
    return intervals


def switched_intervals(dataset: Dataset) -> list[tuple[int, int, int]]:
    """Maximal switched stretches of a dataset, same shape as the banner."""
    intervals = []
    for episode, traj in enumerate(dataset.trajectories):
        current = None
        for frame in traj.frames:
            on = frame.uncertainty is not None and frame.uncertainty.switched
            if on:
                if current is None:
                    current = [episode, frame.tick, frame.tick]
                else:
                    current[2] = frame.tick
            elif current is not None:
                intervals.append(tuple(current))
                current = None
        if current is not None:
            intervals.append(tuple(current))
    return intervals


class TeleopSession:
    """Uncertainty-gated collection with a human takeover source.

    Transport-free: feed decoded messages in, get messages to send back.
    Deterministic given the control stream, regardless of original
    timing, because scoring never depends on the wall clock.
    """

    def __init__(
        self,
        policy: PolicyParams,
        tracks: list[Track],
        *,
        eta: float,
        budget_frames: int,
        seed: int,
        window_size: int = 5,
        n_samples: int = 20,
        sd_weight: float = 1.0,
        alpha: float = 0.6,
        steer_bins: BinSpec = DEFAULT_STEER_BINS,
        throttle_bins: BinSpec = DEFAULT_THROTTLE_BINS,
        cfg: VehicleConfig | None = None,
        max_episode_ticks: int = 1500,
        hold_budget_ticks: int = 10,
        config_digest: str = "",
        session_id: str = "",
    ):
        if budget_frames < 1:
            raise ValueError(f"budget_frames must be >= 1, got {budget_frames}")
        if not tracks:
            raise ValueError("need at least one track")
        if not (eta > 0.0 and math.isfinite(eta)):
            # A session that can never hand over has no use for a human.
            raise ValueError(f"eta must be positive and finite, got {eta}")
        self.policy = policy
        self.tracks = tracks
        self.eta = eta
        self.budget_frames = budget_frames
        self.seed = seed
        self.window_size = window_size
        self.n_samples = n_samples
        self.sd_weight = sd_weight
        self.alpha = alpha
        self.steer_bins = steer_bins
        self.throttle_bins = throttle_bins
        self.cfg = cfg or VehicleConfig()
        self.max_episode_ticks = max_episode_ticks
        self.mailbox = RemoteMailbox(hold_budget_ticks=hold_budget_ticks)
        self.config_digest = config_digest
        self.session_id = session_id or f"session-{seed}"

        self.trajectories: list[Trajectory] = []
        self.stats = {
            "episodes": 0,
            "completed_episodes": 0,
            "infraction_episodes": 0,
            "expert_lost_episodes": 0,
            "timeout_episodes": 0,
            "switch_frames": 0,
            "frames_by_mode": {"agent": 0, "expert": 0, "noise": 0},
        }
        self.total = 0
        self.episode = -1
        self.global_tick = 0
        self.pause_events = 0
        self.paused = False
        self.ended = False
        self.client_seen = False
        self._pending = None  # scored but not yet executed tick
        self._sim: Simulation | None = None
        self._window: ScoreWindow | None = None
        self._prev_steer = None
        self._prev_throttle = None
        self._traj: Trajectory | None = None
        self._ticks_run = 0

    # -- protocol entry points --

    def greet(self) -> list:
        first = self._begin_episode()
        return [
            Hello(role="server", session=self.session_id),
            SessionConfig(
                digest=self.config_digest,
                eta=self.eta,
                window_size=self.window_size,
                n_samples=self.n_samples,
                dt=self.cfg.dt,
                hold_budget_ticks=self.mailbox.hold_budget_ticks,
                budget_frames=self.budget_frames,
            ),
            *first,
        ]

    def handle(self, message) -> list:
        """React to one client message; in lockstep a control advances one tick."""
        if self.ended:
            return []
        if isinstance(message, Hello):
            if message.version != PROTOCOL_VERSION:
                self.ended = True
                return [
                    End(
                        reason=f"unsupported protocol version {message.version}",
                        frames=self.total,
                        episodes=self.stats["episodes"],
                    )
                ]
            self.client_seen = True
            return []
        if isinstance(message, ControlInput):
            return self.advance(message)
        if isinstance(message, End):
            return self._finish("client_end")
        if isinstance(message, ErrorMessage):
            return []
        raise ProtocolError(f"client cannot send {_TYPE_NAMES[type(message)]!r}")

    def handle_line(self, line: str) -> list:
        """Decode then handle; wire-level garbage becomes an error message."""
        try:
            return self.handle(decode(line))
        except ProtocolError as e:
            return [ErrorMessage(message=str(e))]

    def advance(self, control: ControlInput | None) -> list:
        """Run one simulation tick if possible.

        With a control, deliver it first (lockstep pacing); with None the
        mailbox zero-order-holds, and a stale hold during a takeover
        pauses the session instead of inventing an expert action.
        """
        if self.ended:
            return []
        if control is not None:
            self.mailbox.deliver(control.action)
        out = []
        record = self._score_pending()
        held = self.mailbox.take()
        if record.switched:
            if held is None:
                if not self.paused:
                    self.paused = True
                    self.pause_events += 1
                    out.append(Pause())
                return out
            executed, mode = held, "expert"
            label, source = held, "human_in_control"
            mc_raw = None
        else:
            mc = self._pending[1]
            executed, mode = mc.action, "agent"
            label, source = None, "none"
            mc_raw = (mc.steer.raw.tolist(), mc.throttle.raw.tolist())
        if self.paused:
            self.paused = False
            out.append(Resume())
        out.extend(self._execute(executed, mode, label, source, record, mc_raw))
        return out

    # -- session internals --

    def _begin_episode(self) -> list:
        self.episode += 1
        self.stats["episodes"] += 1
        track = self.tracks[self.episode % len(self.tracks)]
        self._sim = Simulation(track, 0, self.cfg)
        self._window = ScoreWindow(self.window_size, self.eta)
        self._prev_steer = None
        self._prev_throttle = None
        self._ticks_run = 0
        self._pending = None
        self._traj = Trajectory(track=track.name, route_index=0, end_reason="budget")
        return [TrackGeometry(episode=self.episode, track=track.to_dict())]

    def _score_pending(self) -> UncertaintyRecord:
        """Score the current state once; pauses must not re-push the window."""
        if self._pending is not None:
            return self._pending[2]
        obs = self._sim.observe()
        mc = mc_sample(
            self.policy,
            obs,
            self.n_samples,
            rng.derive_seed(self.seed, "mc", self.episode, self._sim.state.tick),
            self.steer_bins,
            self.throttle_bins,
        )
        steer_scores = score_signal(mc.steer, self._prev_steer, self.sd_weight)
        throttle_scores = score_signal(mc.throttle, self._prev_throttle, self.sd_weight)
        combined = combine_signals(steer_scores.score, throttle_scores.score, self.alpha)
        window_sum, switched = self._window.push(combined)
        self._prev_steer, self._prev_throttle = mc.steer, mc.throttle
        record = UncertaintyRecord(
            t=self._sim.state.tick,
            steer=steer_scores,
            throttle=throttle_scores,
            combined=combined,
            window_sum=window_sum,
            switched=switched,
        )
        self._pending = (obs, mc, record)
        return record

    def _execute(self, action, mode, label, source, record, mc_raw) -> list:
        obs = self._pending[0]
        self._pending = None
        sim = self._sim
        tick_before = sim.state.tick
        sim.step(action)
        hit = sim.poll_infraction()
        kwargs = dict(
            tick=tick_before,
            obs=obs,
            action=action,
            label=label,
            control_mode=mode,
            label_source=source,
            uncertainty=record,
            infraction=hit.kind if hit else None,
        )
        if mc_raw is not None:
            kwargs["mc_steer"], kwargs["mc_throttle"] = mc_raw
        self._traj.frames.append(Frame(**kwargs))
        self.total += 1
        self._ticks_run += 1
        self.stats["frames_by_mode"][mode] += 1
        if record.switched:
            self.stats["switch_frames"] += 1
        state = sim.state
        out = [
            FrameUpdate(
                tick=self.global_tick,
                episode=self.episode,
                sim_tick=tick_before,
                x=float(state.x),
                y=float(state.y),
                heading=float(state.heading),
                speed=float(state.speed),
                command=obs.command,
                combined=record.combined,
                window_sum=record.window_sum,
                eta=self.eta,
                control_mode=mode,
                infraction=hit.kind if hit else None,
            )
        ]
        self.global_tick += 1

        episode_over = None
        if hit is not None:
            episode_over = "infraction"
            self.stats["infraction_episodes"] += 1
        elif sim.done:
            episode_over = "completed"
            self.stats["completed_episodes"] += 1
        elif self._ticks_run >= self.max_episode_ticks:
            episode_over = "timeout"
            self.stats["timeout_episodes"] += 1
        if self.total >= self.budget_frames:
            if episode_over is not None:
                self._traj.end_reason = episode_over
            self._close_trajectory()
            out.extend(self._finish("budget"))
            return out
        if episode_over is not None:
            self._traj.end_reason = episode_over
            self._close_trajectory()
            out.extend(self._begin_episode())
        return out

    def _close_trajectory(self) -> None:
        if self._traj is not None and self._traj.frames:
            self.trajectories.append(self._traj)
        self._traj = None

    def _finish(self, reason: str) -> list:
        if self.ended:
            return []
        self._close_trajectory()
        self.ended = True
        return [End(reason=reason, frames=self.total, episodes=self.stats["episodes"])]

    @property
    def done(self) -> bool:
        return self.ended

    def dataset(self) -> Dataset:
        trajectories = list(self.trajectories)
        if self._traj is not None and self._traj.frames:
            # Mid-session snapshot: the open episode is included as-is.
            t = self._traj
            trajectories.append(
                Trajectory(
                    track=t.track,
                    route_index=t.route_index,
                    frames=list(t.frames),
                    end_reason=t.end_reason,
                )
            )
        stats = dict(self.stats)
        stats["infraction_rate"] = (
            stats["infraction_episodes"] / stats["episodes"] if stats["episodes"] else 0.0
        )
        metadata = {
            "strategy": "uail",
            "expert_source": "remote",
            "session": self.session_id,
            "seed": self.seed,
            "budget_frames": self.budget_frames,
            "tracks": [t.name for t in self.tracks],
            "perturbation": CLEAN_PROFILE.to_dict(),
            "config_digest": self.config_digest,
            "eta": self.eta,
            "window_size": self.window_size,
            "n_samples": self.n_samples,
            "sd_weight": self.sd_weight,
            "alpha": self.alpha,
            "steer_bins": self.steer_bins.to_dict(),
            "throttle_bins": self.throttle_bins.to_dict(),
            "pause_events": self.pause_events,
            "stats": stats,
        }
        return Dataset(metadata=metadata, trajectories=trajectories)


def run_headless(session: TeleopSession, controls) -> tuple[Dataset, list]:
    """Feed a synthetic control stream through a session, lockstep.

    One tick per input, exactly as a live client pacing the server; the
    transcript of emitted messages is returned with the dataset.
    """
    log = list(session.greet())
    for control in controls:
        if session.done:
            break
        log.extend(session.handle(control))
    if not session.done:
        log.extend(session.handle(End(reason="stream_exhausted")))
    return session.dataset(), log


async def serve_session(
    session: TeleopSession, host: str = "127.0.0.1", port: int = 8765, started=None
):
    """Host one session over a websocket until it ends.

    Lockstep: every inbound message is handled and the replies are sent
    in order, so a client that paces controls at the tick rate drives
    the simulation in real time and a test client may run it as fast as
    the socket allows. `started`, if given, receives the bound port once
    the server is listening (useful with port 0). Returns the collected
    dataset.
    """
    import asyncio

    import websockets

    done = asyncio.Event()

    async def handler(ws):
        for message in session.greet():
            await ws.send(encode(message))
        try:
            async for raw in ws:
                for reply in session.handle_line(raw):
                    await ws.send(encode(reply))
                if session.done:
                    break
        finally:
            done.set()

    async with websockets.serve(handler, host, port) as server:
        if started is not None:
            started(server.sockets[0].getsockname()[1])
        await done.wait()
    return session.dataset()
