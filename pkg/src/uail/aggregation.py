"""Data-collection strategies and the iterate-train loop.

Four ways to gather (observation, expert label) pairs on the simulator:

- behavior cloning: the expert drives every frame
- stochastic mixing: a coin flip hands control to the agent, per frame
  or in sustained segments
- noise injection: the expert drives but every Nth executed steer is
  perturbed; labels stay clean
- uncertainty-gated aggregation: the agent drives under MC-dropout
  scoring and the expert takes over whenever the windowed score sum
  crosses the threshold

All strategies label every frame with the scripted oracle (the remote
human source lives behind the teleop server and labels only frames it
actually controls). Seed streams are split per purpose so one strategy's
draws never shift another's.

Episodes end at route completion, the first infraction, an expert-lost
abort, a tick cap, or budget exhaustion; the reason is recorded on the
trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .data import Dataset, Frame, Trajectory, training_arrays
from .expert import ExpertLostError, oracle_action
from .policy import Action, Observation, PolicyParams, forward, mc_sample, train
from .simulator import Simulation, VehicleConfig
from .track import Track
from .uncertainty import (
    BinSpec,
    ScoreWindow,
    UncertaintyRecord,
    combine_signals,
    score_signal,
)

DEFAULT_STEER_BINS = BinSpec(lo=-1.0, hi=1.0, n_bins=20)
DEFAULT_THROTTLE_BINS = BinSpec(lo=0.0, hi=1.0, n_bins=20)

MAX_EPISODE_TICKS = 1500

# Mean handover length for segment-mode mixing: one second of sustained
# control per draw instead of isolated ticks.
MIX_SEGMENT_TICKS = 20


@dataclass(frozen=True)
class PerturbationProfile:
    """Observation-space stand-in for unseen conditions.

    Additive Gaussian noise on the normalized rays plus a per-ray dropout
    that blanks the ray to max range. The clean profile is the identity.
    """

    name: str = "clean"
    ray_noise_sigma: float = 0.0
    ray_dropout_p: float = 0.0

    def __post_init__(self):
        if self.ray_noise_sigma < 0.0:
            raise ValueError(f"ray_noise_sigma must be >= 0, got {self.ray_noise_sigma}")
        if not (0.0 <= self.ray_dropout_p <= 1.0):
            raise ValueError(f"ray_dropout_p must be in [0, 1], got {self.ray_dropout_p}")

    def apply(self, obs: Observation, g: np.random.Generator) -> Observation:
        if self.ray_noise_sigma == 0.0 and self.ray_dropout_p == 0.0:
            return obs
        rays = obs.rays.copy()
        if self.ray_noise_sigma > 0.0:
            rays = rays + g.normal(0.0, self.ray_noise_sigma, size=rays.shape)
        if self.ray_dropout_p > 0.0:
            rays[g.random(rays.shape) < self.ray_dropout_p] = 1.0
        return Observation(
            rays=np.clip(rays, 0.0, 1.0), speed=obs.speed, command=obs.command
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ray_noise_sigma": self.ray_noise_sigma,
            "ray_dropout_p": self.ray_dropout_p,
        }


CLEAN_PROFILE = PerturbationProfile()
UNSEEN_PROFILE = PerturbationProfile(name="unseen", ray_noise_sigma=0.05, ray_dropout_p=0.05)


class _ExpertController:
    def reset(self, episode: int) -> None:
        pass

    def act(self, sim, obs, expert_action, episode, global_frame):
        return expert_action, "expert", None, None


class _MixingController:
    """Bernoulli(mix_p) hands control to the agent.

    With segment_ticks=0 the coin is flipped every frame. A positive
    value flips once per segment whose length is geometric with that
    mean, so an agent draw means sustained control rather than a single
    tick; the long-run agent fraction is mix_p either way. Segments
    never span episodes.
    """

    def __init__(self, policy: PolicyParams, mix_p: float, seed: int, segment_ticks: int = 0):
        if not (0.0 <= mix_p <= 1.0):
            raise ValueError(f"mix_p must be in [0, 1], got {mix_p}")
        if segment_ticks < 0:
            raise ValueError(f"segment_ticks must be >= 0, got {segment_ticks}")
        self.policy = policy
        self.mix_p = mix_p
        self.segment_ticks = segment_ticks
        self.g = rng.stream(seed, "mixing")
        self._remaining = 0
        self._agent = False

    def reset(self, episode: int) -> None:
        self._remaining = 0

    def act(self, sim, obs, expert_action, episode, global_frame):
        if self.segment_ticks > 0:
            if self._remaining <= 0:
                self._agent = self.g.random() < self.mix_p
                self._remaining = int(self.g.geometric(1.0 / self.segment_ticks))
            self._remaining -= 1
            agent_turn = self._agent
        else:
            agent_turn = self.g.random() < self.mix_p
        if agent_turn:
            return forward(self.policy, obs), "agent", None, None
        return expert_action, "expert", None, None


class _NoiseController:
    def __init__(self, noise_period: int, noise_bound: float, seed: int):
        if noise_period < 1:
            raise ValueError(f"noise_period must be >= 1, got {noise_period}")
        if not (0.0 <= noise_bound <= 1.0):
            raise ValueError(f"noise_bound must be in [0, 1], got {noise_bound}")
        self.period = noise_period
        self.bound = noise_bound
        self.g = rng.stream(seed, "noise")

    def reset(self, episode: int) -> None:
        pass

    def act(self, sim, obs, expert_action, episode, global_frame):
        # Schedule keyed to the global collected-frame counter so the
        # every-Nth-frame contract survives episode boundaries.
        if global_frame % self.period == 0:
            delta = float(self.g.uniform(-self.bound, self.bound))
            noisy = Action(
                steer=min(max(expert_action.steer + delta, -1.0), 1.0),
                throttle=expert_action.throttle,
            )
            return noisy, "noise", None, None
        return expert_action, "expert", None, None


class _UailController:
    def __init__(
        self,
        policy: PolicyParams,
        eta: float,
        window_size: int,
        n_samples: int,
        seed: int,
        sd_weight: float,
        alpha: float,
        steer_bins: BinSpec,
        throttle_bins: BinSpec,
    ):
        if window_size < 1:
            raise ValueError(f"window size must be >= 1, got {window_size}")
        if n_samples < 2:
            raise ValueError(f"need >= 2 MC samples, got {n_samples}")
        if not (eta > 0.0):
            raise ValueError(f"eta must be positive, got {eta}")
        self.policy = policy
        self.eta = eta
        self.window_size = window_size
        self.n = n_samples
        self.seed = seed
        self.sd_weight = sd_weight
        self.alpha = alpha
        self.steer_bins = steer_bins
        self.throttle_bins = throttle_bins
        self.window: ScoreWindow | None = None
        self.prev_steer = None
        self.prev_throttle = None

    def reset(self, episode: int) -> None:
        self.window = ScoreWindow(self.window_size, self.eta)
        self.prev_steer = None
        self.prev_throttle = None

    def act(self, sim, obs, expert_action, episode, global_frame):
        mc = mc_sample(
            self.policy,
            obs,
            self.n,
            rng.derive_seed(self.seed, "mc", episode, sim.state.tick),
            self.steer_bins,
            self.throttle_bins,
        )
        steer_scores = score_signal(mc.steer, self.prev_steer, self.sd_weight)
        throttle_scores = score_signal(mc.throttle, self.prev_throttle, self.sd_weight)
        combined = combine_signals(steer_scores.score, throttle_scores.score, self.alpha)
        window_sum, switched = self.window.push(combined)
        self.prev_steer, self.prev_throttle = mc.steer, mc.throttle
        record = UncertaintyRecord(
            t=sim.state.tick,
            steer=steer_scores,
            throttle=throttle_scores,
            combined=combined,
            window_sum=window_sum,
            switched=switched,
        )
        if switched:
            return expert_action, "expert", record, None
        mc_raw = (mc.steer.raw.tolist(), mc.throttle.raw.tolist())
        return mc.action, "agent", record, mc_raw


def _store_mc(frame_kwargs: dict, mc_raw) -> dict:
    if mc_raw is not None:
        frame_kwargs["mc_steer"], frame_kwargs["mc_throttle"] = mc_raw
    return frame_kwargs


def run_collection(
    strategy: str,
    tracks: list[Track],
    budget_frames: int,
    seed: int,
    controller,
    *,
    cfg: VehicleConfig | None = None,
    perturb: PerturbationProfile = CLEAN_PROFILE,
    max_episode_ticks: int = MAX_EPISODE_TICKS,
    store_mc: bool = True,
    config_digest: str = "",
    metadata_extra: dict | None = None,
) -> Dataset:
    """Shared episode loop: the controller decides who executes each frame,
    the oracle labels every frame, infractions end episodes."""
    if budget_frames < 1:
        raise ValueError(f"budget_frames must be >= 1, got {budget_frames}")
    if not tracks:
        raise ValueError("need at least one track")
    cfg = cfg or VehicleConfig()
    trajectories: list[Trajectory] = []
    stats = {
        "episodes": 0,
        "completed_episodes": 0,
        "infraction_episodes": 0,
        "expert_lost_episodes": 0,
        "timeout_episodes": 0,
        "switch_frames": 0,
        "frames_by_mode": {"agent": 0, "expert": 0, "noise": 0},
    }
    total = 0
    episode = 0
    while total < budget_frames:
        track = tracks[episode % len(tracks)]
        sim = Simulation(track, 0, cfg)
        controller.reset(episode)
        g_perturb = rng.stream(seed, "perturb", episode)
        traj = Trajectory(track=track.name, route_index=0, end_reason="budget")
        ticks_run = 0
        while total < budget_frames:
            if sim.done:
                traj.end_reason = "completed"
                stats["completed_episodes"] += 1
                break
            if ticks_run >= max_episode_ticks:
                traj.end_reason = "timeout"
                stats["timeout_episodes"] += 1
                break
            try:
                expert_label = oracle_action(sim)
                obs = perturb.apply(sim.observe(), g_perturb)
                executed, mode, record, mc_raw = controller.act(
                    sim, obs, expert_label, episode, total
                )
            except ExpertLostError:
                traj.end_reason = "expert_lost"
                stats["expert_lost_episodes"] += 1
                break
            tick_before = sim.state.tick
            sim.step(executed)
            hit = sim.poll_infraction()
            kwargs = dict(
                tick=tick_before,
                obs=obs,
                action=executed,
                label=expert_label,
                control_mode=mode,
                label_source="oracle_everyframe",
                uncertainty=record,
                infraction=hit.kind if hit else None,
            )
            if store_mc:
                _store_mc(kwargs, mc_raw)
            traj.frames.append(Frame(**kwargs))
            total += 1
            ticks_run += 1
            stats["frames_by_mode"][mode] += 1
            if record is not None and record.switched:
                stats["switch_frames"] += 1
            if hit is not None:
                traj.end_reason = "infraction"
                stats["infraction_episodes"] += 1
                break
        stats["episodes"] += 1
        if traj.frames:
            trajectories.append(traj)
        episode += 1
    stats["infraction_rate"] = stats["infraction_episodes"] / stats["episodes"]
    metadata = {
        "strategy": strategy,
        "seed": seed,
        "budget_frames": budget_frames,
        "tracks": [t.name for t in tracks],
        "perturbation": perturb.to_dict(),
        "config_digest": config_digest,
        "stats": stats,
    }
    if metadata_extra:
        metadata.update(metadata_extra)
    return Dataset(metadata=metadata, trajectories=trajectories)


def collect_bc(
    tracks: list[Track], budget_frames: int, seed: int, **kwargs
) -> Dataset:
    """Expert drives every frame (pure behavior cloning data)."""
    return run_collection(
        "bc", tracks, budget_frames, seed, _ExpertController(), **kwargs
    )


def collect_mixing(
    policy: PolicyParams,
    tracks: list[Track],
    budget_frames: int,
    mix_p: float,
    seed: int,
    *,
    segment_ticks: int = 0,
    **kwargs,
) -> Dataset:
    """Bernoulli(mix_p) gives the agent control; expert labels all frames.

    Default is a fresh coin every frame; segment_ticks>0 switches to
    sustained handovers of that mean length.
    """
    controller = _MixingController(policy, mix_p, seed, segment_ticks)
    return run_collection(
        "mixing",
        tracks,
        budget_frames,
        seed,
        controller,
        metadata_extra={"mix_p": mix_p, "segment_ticks": segment_ticks},
        **kwargs,
    )


def collect_noise(
    tracks: list[Track],
    budget_frames: int,
    noise_period: int,
    noise_bound: float,
    seed: int,
    **kwargs,
) -> Dataset:
    """Expert drives; every noise_period-th executed steer is perturbed,
    labels stay un-noised."""
    controller = _NoiseController(noise_period, noise_bound, seed)
    return run_collection(
        "noise",
        tracks,
        budget_frames,
        seed,
        controller,
        metadata_extra={"noise_period": noise_period, "noise_bound": noise_bound},
        **kwargs,
    )


def collect_uail(
    policy: PolicyParams,
    tracks: list[Track],
    eta: float,
    window_size: int,
    n_samples: int,
    budget_frames: int,
    seed: int,
    *,
    sd_weight: float = 1.0,
    alpha: float = 0.6,
    steer_bins: BinSpec = DEFAULT_STEER_BINS,
    throttle_bins: BinSpec = DEFAULT_THROTTLE_BINS,
    **kwargs,
) -> Dataset:
    """Agent drives under MC-dropout scoring; the expert takes over while
    the windowed score sum exceeds eta. eta=inf is a plain on-policy
    rollout that still records every uncertainty score."""
    controller = _UailController(
        policy, eta, window_size, n_samples, seed, sd_weight, alpha, steer_bins, throttle_bins
    )
    return run_collection(
        "uail",
        tracks,
        budget_frames,
        seed,
        controller,
        metadata_extra={
            "eta": eta if math.isfinite(eta) else "inf",
            "window_size": window_size,
            "n_samples": n_samples,
            "sd_weight": sd_weight,
            "alpha": alpha,
            "steer_bins": steer_bins.to_dict(),
            "throttle_bins": throttle_bins.to_dict(),
        },
        **kwargs,
    )


class UailLoopDiverged(Exception):
    """Training diverged mid-loop; carries everything gathered so far."""

    def __init__(self, message, policy, datasets, metrics):
        super().__init__(message)
        self.policy = policy
        self.datasets = datasets
        self.metrics = metrics


def run_uail_loop(
    policy: PolicyParams,
    tracks: list[Track],
    initial_datasets: list[Dataset],
    n_iterations: int,
    batch_frames: int,
    train_hyper: dict,
    seed: int,
    *,
    eta: float,
    window_size: int = 5,
    n_samples: int = 20,
    sd_weight: float = 1.0,
    alpha: float = 0.6,
    benchmark_fn=None,
    **collect_kwargs,
):
    """Alternate training and uncertainty-gated collection.

    Each iteration trains on everything gathered so far, then collects
    batch_frames new frames. Returns (policy, all datasets, per-iteration
    metrics). benchmark_fn, when given, maps a policy to a success rate
    and its result is recorded per iteration.
    """
    if not initial_datasets:
        raise ValueError("need a nonempty starter dataset")
    datasets = list(initial_datasets)
    metrics: list[dict] = []
    for iteration in range(n_iterations):
        x, y = training_arrays(datasets)
        try:
            policy, curve = train(
                policy, x, y, seed=rng.derive_seed(seed, "train", iteration), **train_hyper
            )
        except Exception as e:
            raise UailLoopDiverged(
                f"training diverged at iteration {iteration}: {e}", policy, datasets, metrics
            ) from e
        collected = collect_uail(
            policy,
            tracks,
            eta,
            window_size,
            n_samples,
            batch_frames,
            rng.derive_seed(seed, "collect", iteration),
            sd_weight=sd_weight,
            alpha=alpha,
            **collect_kwargs,
        )
        datasets.append(collected)
        stats = collected.metadata["stats"]
        entry = {
            "iteration": iteration,
            "train_loss_start": curve[0],
            "train_loss_final": curve[-1],
            "training_frames": int(x.shape[0]),
            "dataset_frames": sum(ds.n_frames for ds in datasets),
            "switch_rate": stats["switch_frames"] / collected.n_frames,
            "collection_infraction_rate": stats["infraction_rate"],
        }
        if benchmark_fn is not None:
            entry["benchmark_success"] = benchmark_fn(policy)
        metrics.append(entry)
    return policy, datasets, metrics
