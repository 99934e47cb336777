"""Deterministic 2D driving world on a lane-graph track.

Vehicle model is a kinematic bicycle. Coordinates are y-up with heading
measured counterclockwise from +x; positive steer turns the vehicle to
the right (heading decreases). That one sign convention is used by every
module in the package.

Observations are ray distances over a forward fan, resolved against the
union of lane capsules and the obstacle discs, plus normalized speed and
the active route command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import (
    heading_vector,
    point_at_arclength,
    project_to_polyline,
    ray_circles_min_entry,
    ray_union_exit_batch,
)
from .policy import Action, Observation
from .track import Route, Track


@dataclass(frozen=True)
class VehicleConfig:
    wheelbase: float = 2.5
    max_steer_deg: float = 30.0
    a_max: float = 3.0  # full-throttle acceleration, m/s^2
    drag: float = 0.6  # linear speed decay, 1/s; terminal speed = a_max/drag
    v_max: float = 6.0  # speed normalizer for observations
    dt: float = 0.05  # 20 Hz
    ego_radius: float = 0.9
    n_rays: int = 15
    ray_max_range: float = 30.0
    ray_fov_deg: float = 180.0
    approach_before: float = 10.0  # command active this far before a node
    approach_after: float = 5.0  # and this far past it

    @property
    def max_steer_rad(self) -> float:
        return math.radians(self.max_steer_deg)

    def to_dict(self) -> dict:
        return {
            "wheelbase": self.wheelbase,
            "max_steer_deg": self.max_steer_deg,
            "a_max": self.a_max,
            "drag": self.drag,
            "v_max": self.v_max,
            "dt": self.dt,
            "ego_radius": self.ego_radius,
            "n_rays": self.n_rays,
            "ray_max_range": self.ray_max_range,
            "ray_fov_deg": self.ray_fov_deg,
            "approach_before": self.approach_before,
            "approach_after": self.approach_after,
        }

    @staticmethod
    def from_dict(d: dict) -> "VehicleConfig":
        return VehicleConfig(**{k: type(getattr(VehicleConfig(), k))(v) for k, v in d.items()})


@dataclass(frozen=True)
class SimState:
    x: float
    y: float
    heading: float
    speed: float
    route_s: float  # monotone arc-length progress along the active route
    tick: int

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Infraction:
    kind: str  # off_lane | collision
    tick: int
    x: float
    y: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tick": self.tick, "x": self.x, "y": self.y}

    @staticmethod
    def from_dict(d: dict) -> "Infraction":
        return Infraction(
            kind=str(d["kind"]), tick=int(d["tick"]), x=float(d["x"]), y=float(d["y"])
        )


def advance(state: SimState, action: Action, cfg: VehicleConfig, dt: float | None = None) -> SimState:
    """One kinematic bicycle step; route progress is not touched here.

    Position moves along the pre-step heading at the pre-step speed;
    heading and speed then update. Positive steer decreases heading
    (rightward turn in the y-up frame).
    """
    if dt is None:
        dt = cfg.dt
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    steer = min(max(action.steer, -1.0), 1.0)
    throttle = min(max(action.throttle, 0.0), 1.0)
    x = state.x + state.speed * math.cos(state.heading) * dt
    y = state.y + state.speed * math.sin(state.heading) * dt
    heading = state.heading - (state.speed / cfg.wheelbase) * math.tan(steer * cfg.max_steer_rad) * dt
    speed = max(state.speed + (throttle * cfg.a_max - cfg.drag * state.speed) * dt, 0.0)
    return SimState(x=x, y=y, heading=heading, speed=speed, route_s=state.route_s, tick=state.tick + 1)


def observe(state: SimState, track: Track, cfg: VehicleConfig, command: str) -> Observation:
    """Ray fan over the forward field of view, left ray first."""
    origin = state.position
    seg_a, seg_b = track.edge_arrays()
    centers, radii = track.obstacle_arrays()
    half_fov = math.radians(cfg.ray_fov_deg) / 2.0
    rays = np.empty(cfg.n_rays)
    for i in range(cfg.n_rays):
        offset = half_fov - i * (2.0 * half_fov) / (cfg.n_rays - 1)
        direction = heading_vector(state.heading + offset)
        dist = ray_union_exit_batch(
            origin, direction, seg_a, seg_b, track.half_width, cfg.ray_max_range
        )
        dist = min(dist, ray_circles_min_entry(origin, direction, centers, radii))
        rays[i] = dist / cfg.ray_max_range
    speed = min(state.speed / cfg.v_max, 1.0)
    return Observation(rays=rays, speed=speed, command=command)


def detect_infraction(state: SimState, track: Track, cfg: VehicleConfig) -> Infraction | None:
    """Level-triggered violation test; edge-triggering is the simulation's job."""
    if track.min_centerline_distance(state.position) > track.half_width:
        return Infraction(kind="off_lane", tick=state.tick, x=state.x, y=state.y)
    for obs in track.obstacles:
        if np.hypot(*(state.position - obs.center)) < cfg.ego_radius + obs.radius:
            return Infraction(kind="collision", tick=state.tick, x=state.x, y=state.y)
    return None


def route_command(route_s: float, route: Route, cfg: VehicleConfig) -> str | None:
    """Active command at the given progress; None once the route is exhausted."""
    if route_s >= route.length - 0.5:
        return None
    for node in route.nodes:
        if node.s - cfg.approach_before <= route_s <= node.s + cfg.approach_after:
            return node.label
    return "follow"


class Simulation:
    """One vehicle on one route: owns state, progress tracking, and
    edge-triggered infraction emission."""

    def __init__(self, track: Track, route_index: int = 0, cfg: VehicleConfig | None = None):
        if not (0 <= route_index < len(track.routes)):
            raise ValueError(f"track has no route {route_index}")
        self.track = track
        self.route = track.routes[route_index]
        self.cfg = cfg or VehicleConfig()
        self.state = self._spawn_state()
        self._in_violation = False

    def _spawn_state(self) -> SimState:
        sp = self.route.spawn
        return SimState(x=sp.x, y=sp.y, heading=sp.heading, speed=0.0, route_s=0.0, tick=0)

    def reset(self) -> SimState:
        self.state = self._spawn_state()
        self._in_violation = False
        return self.state

    @property
    def done(self) -> bool:
        return self.state.route_s >= self.route.length - 0.5

    def command(self) -> str | None:
        return route_command(self.state.route_s, self.route, self.cfg)

    def observe(self) -> Observation:
        cmd = self.command() or "follow"
        return observe(self.state, self.track, self.cfg, cmd)

    def step(self, action: Action) -> SimState:
        """Advance one tick and update monotone route progress."""
        nxt = advance(self.state, action, self.cfg)
        window = self.state.speed * self.cfg.dt + 5.0
        s_proj, _ = project_to_polyline(
            nxt.position,
            self.route.points,
            self.route.cum,
            s_lo=self.state.route_s - 2.0,
            s_hi=self.state.route_s + window,
        )
        self.state = replace(nxt, route_s=max(self.state.route_s, s_proj))
        return self.state

    def poll_infraction(self) -> Infraction | None:
        """Emit an Infraction exactly once per contiguous violation."""
        hit = detect_infraction(self.state, self.track, self.cfg)
        if hit is None:
            self._in_violation = False
            return None
        if self._in_violation:
            return None
        self._in_violation = True
        return hit

    def lookahead_point(self, distance: float):
        """Route point `distance` ahead of current progress, for the expert."""
        return point_at_arclength(
            self.route.points, self.route.cum, self.state.route_s + distance
        )
