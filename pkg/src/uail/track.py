"""Lane-graph tracks: model, seeded generator, and file format.

A track is a set of centerline polylines sharing one lane half-width; the
drivable region is the union of the capsules they induce. Routes are
pre-resolved centerline polylines annotated with intersection events
(arc-length position plus turn label), so the simulator never does graph
search at runtime.

Generated tracks chain intersections with exact per-turn-type counts.
Roadside obstacles are placed strictly outside the drivable region with
enough clearance that a vehicle on the lane cannot touch them; they only
matter once the vehicle strays, and they shape the ray picture.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .geometry import heading_vector, perp, point_segment_distance, polyline_arclengths

TRACK_FORMAT_VERSION = 1

TURN_LABELS = ("left", "right", "straight")

FILLET_RADIUS = 5.0
STUB_LENGTH = 8.0
ARC_POINTS = 7


class TrackFormatError(Exception):
    """Track file missing, malformed, or inconsistent."""


class GenerationFailedError(Exception):
    """Track spec cannot be realized."""


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    radius: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "radius": self.radius}

    @staticmethod
    def from_dict(d: dict) -> "Obstacle":
        return Obstacle(x=float(d["x"]), y=float(d["y"]), radius=float(d["radius"]))


@dataclass(frozen=True)
class Spawn:
    x: float
    y: float
    heading: float

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @staticmethod
    def from_dict(d: dict) -> "Spawn":
        return Spawn(x=float(d["x"]), y=float(d["y"]), heading=float(d["heading"]))


@dataclass(frozen=True)
class RouteNode:
    """One intersection event along a route: arc-length position and turn label."""

    s: float
    label: str

    def to_dict(self) -> dict:
        return {"s": self.s, "label": self.label}

    @staticmethod
    def from_dict(d: dict) -> "RouteNode":
        label = str(d["label"])
        if label not in TURN_LABELS:
            raise TrackFormatError(f"unknown turn label {label!r}")
        return RouteNode(s=float(d["s"]), label=label)


class Route:
    """A drivable route: spawn, centerline polyline, intersection events."""

    def __init__(self, spawn: Spawn, points: np.ndarray, nodes: list[RouteNode]):
        self.spawn = spawn
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 2 or self.points.shape[1] != 2:
            raise ValueError(f"route polyline must be (n>=2, 2), got {self.points.shape}")
        self.nodes = sorted(nodes, key=lambda n: n.s)
        self.cum = polyline_arclengths(self.points)

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def to_dict(self) -> dict:
        return {
            "spawn": self.spawn.to_dict(),
            "points": [[float(x), float(y)] for x, y in self.points],
            "nodes": [n.to_dict() for n in self.nodes],
        }

    @staticmethod
    def from_dict(d: dict) -> "Route":
        return Route(
            spawn=Spawn.from_dict(d["spawn"]),
            points=np.array(d["points"], dtype=float),
            nodes=[RouteNode.from_dict(n) for n in d["nodes"]],
        )


class Track:
    def __init__(
        self,
        name: str,
        designation: str,
        half_width: float,
        segments: list[np.ndarray],
        obstacles: list[Obstacle],
        routes: list[Route],
    ):
        if designation not in ("seen", "unseen"):
            raise ValueError(f"designation must be seen|unseen, got {designation!r}")
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        self.name = name
        self.designation = designation
        self.half_width = half_width
        self.segments = [np.asarray(s, dtype=float) for s in segments]
        self.obstacles = list(obstacles)
        self.routes = list(routes)
        self._edges: list[tuple[np.ndarray, np.ndarray]] | None = None
        self._edge_arrays: tuple[np.ndarray, np.ndarray] | None = None
        self._obstacle_arrays: tuple[np.ndarray, np.ndarray] | None = None

    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """All centerline segments as (a, b) pairs; cached."""
        if self._edges is None:
            self._edges = [
                (seg[i], seg[i + 1])
                for seg in self.segments
                for i in range(len(seg) - 1)
            ]
        return self._edges

    def capsules(self):
        return [(a, b, self.half_width) for a, b in self.edges()]

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """All edges stacked as (A, B) arrays for vectorized ray casts; cached."""
        if self._edge_arrays is None:
            edges = self.edges()
            self._edge_arrays = (
                np.stack([a for a, _ in edges]),
                np.stack([b for _, b in edges]),
            )
        return self._edge_arrays

    def obstacle_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Obstacle centers and radii stacked; cached."""
        if self._obstacle_arrays is None:
            if self.obstacles:
                self._obstacle_arrays = (
                    np.stack([o.center for o in self.obstacles]),
                    np.array([o.radius for o in self.obstacles]),
                )
            else:
                self._obstacle_arrays = (np.zeros((0, 2)), np.zeros(0))
        return self._obstacle_arrays

    def min_centerline_distance(self, p) -> float:
        return min(point_segment_distance(p, a, b) for a, b in self.edges())

    def to_dict(self) -> dict:
        return {
            "version": TRACK_FORMAT_VERSION,
            "name": self.name,
            "designation": self.designation,
            "half_width": self.half_width,
            "segments": [[[float(x), float(y)] for x, y in seg] for seg in self.segments],
            "obstacles": [o.to_dict() for o in self.obstacles],
            "routes": [r.to_dict() for r in self.routes],
        }

    @staticmethod
    def from_dict(d: dict) -> "Track":
        try:
            if d["version"] != TRACK_FORMAT_VERSION:
                raise TrackFormatError(f"unsupported track version {d['version']}")
            return Track(
                name=str(d["name"]),
                designation=str(d["designation"]),
                half_width=float(d["half_width"]),
                segments=[np.array(seg, dtype=float) for seg in d["segments"]],
                obstacles=[Obstacle.from_dict(o) for o in d["obstacles"]],
                routes=[Route.from_dict(r) for r in d["routes"]],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise TrackFormatError(f"malformed track document: {e}") from e


def save_track(track: Track, path) -> None:
    with open(path, "w") as f:
        json.dump(track.to_dict(), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_track(path) -> Track:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise TrackFormatError(f"unreadable track file {path}: {e}") from e
    return Track.from_dict(doc)


@dataclass(frozen=True)
class TrackSpec:
    """Generation request: exact turn counts plus geometry knobs."""

    left: int = 0
    right: int = 0
    straight: int = 0
    seg_len: tuple[float, float] = (18.0, 30.0)
    obstacle_density: float = 1.0  # obstacles per 100 m of route
    half_width: float = 2.0
    name: str = "track"
    designation: str = "seen"

    def validate(self) -> None:
        if min(self.left, self.right, self.straight) < 0:
            raise GenerationFailedError("turn counts must be non-negative")
        lo, hi = self.seg_len
        if not (0 < lo <= hi):
            raise GenerationFailedError(f"bad segment length range {self.seg_len}")
        if lo < 2 * FILLET_RADIUS + 6:
            raise GenerationFailedError(
                f"minimum segment length {lo} too short for fillet radius {FILLET_RADIUS}"
            )
        if self.obstacle_density < 0:
            raise GenerationFailedError("obstacle density must be non-negative")


def _rot(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _fillet_arc(corner: np.ndarray, u: np.ndarray, label: str) -> np.ndarray:
    """Quarter-circle corner cut for a 90-degree turn at `corner` entered along u.

    Returns the arc polyline from the tangent point on the incoming leg to
    the tangent point on the outgoing leg.
    """
    sign = 1.0 if label == "left" else -1.0  # left turns counterclockwise
    v = _rot(u, sign * math.pi / 2)
    start = corner - FILLET_RADIUS * u
    center = start + FILLET_RADIUS * v
    # Arc from `start` to corner + R*v, sweeping 90 degrees around `center`.
    start_angle = math.atan2(*(start - center)[::-1])
    pts = []
    for i in range(ARC_POINTS):
        ang = start_angle + sign * (math.pi / 2) * i / (ARC_POINTS - 1)
        pts.append(center + FILLET_RADIUS * np.array([math.cos(ang), math.sin(ang)]))
    return np.array(pts)


def generate_track(spec: TrackSpec, seed: int) -> Track:
    """Deterministically realize a spec: chained intersections, exact turn counts."""
    spec.validate()
    g = rng.stream(seed, "track", spec.name)

    labels = ["left"] * spec.left + ["right"] * spec.right + ["straight"] * spec.straight
    g.shuffle(labels)

    lo, hi = spec.seg_len
    pos = np.array([0.0, 0.0])
    u = np.array([1.0, 0.0])  # initial heading +x
    route_pts = [pos.copy()]
    nodes: list[RouteNode] = []
    node_geoms: list[tuple[np.ndarray, np.ndarray]] = []  # (corner, incoming dir)

    def extend(points: np.ndarray) -> None:
        for p in points:
            if np.hypot(*(p - route_pts[-1])) > 1e-9:
                route_pts.append(p)

    for label in labels:
        leg = float(g.uniform(lo, hi))
        corner = route_pts[-1] + leg * u
        node_geoms.append((corner.copy(), u.copy()))
        if label == "straight":
            extend(np.array([corner]))
            cum_here = polyline_arclengths(np.array(route_pts))[-1]
            nodes.append(RouteNode(s=float(cum_here), label=label))
        else:
            arc = _fillet_arc(corner, u, label)
            extend(arc)
            cum = polyline_arclengths(np.array(route_pts))
            # Event position: arc midpoint (closest approach to the corner).
            mid_back = (len(arc) - 1) // 2
            nodes.append(
                RouteNode(s=float(cum[len(route_pts) - len(arc) + mid_back]), label=label)
            )
            sign = 1.0 if label == "left" else -1.0
            u = _rot(u, sign * math.pi / 2)

    tail = float(g.uniform(lo, hi))
    extend(np.array([route_pts[-1] + tail * u]))
    route_points = np.array(route_pts)

    # Drivable segments: the route itself plus two bars per intersection
    # (forward corridor covering the cut corner, and the crossing corridor).
    segments: list[np.ndarray] = [route_points]
    for corner, u_in in node_geoms:
        w = perp(u_in)
        segments.append(
            np.array(
                [corner - (FILLET_RADIUS + 2.0) * u_in, corner + STUB_LENGTH * u_in]
            )
        )
        segments.append(np.array([corner - STUB_LENGTH * w, corner + STUB_LENGTH * w]))

    spawn = Spawn(x=float(route_points[0][0]), y=float(route_points[0][1]), heading=0.0)
    route = Route(spawn=spawn, points=route_points, nodes=nodes)
    bare = Track(
        name=spec.name,
        designation=spec.designation,
        half_width=spec.half_width,
        segments=segments,
        obstacles=[],
        routes=[route],
    )

    # Roadside obstacles: beside the route, strictly clear of the whole
    # drivable union so an on-lane vehicle can never touch them.
    ego_radius = 0.9
    n_obstacles = int(round(spec.obstacle_density * route.length / 100.0))
    obstacles: list[Obstacle] = []
    for _ in range(n_obstacles):
        for _attempt in range(50):
            s = float(g.uniform(5.0, route.length - 5.0))
            side = 1.0 if g.random() < 0.5 else -1.0
            radius = float(g.uniform(0.4, 0.8))
            margin = float(g.uniform(0.3, 1.2))
            i = int(np.searchsorted(route.cum, s, side="right")) - 1
            i = min(max(i, 0), len(route_points) - 2)
            seg = route_points[i + 1] - route_points[i]
            t = seg / np.hypot(*seg)
            base = route_points[i] + (s - route.cum[i]) * t
            offset = spec.half_width + radius + ego_radius + margin
            center = base + side * offset * perp(t)
            clearance = bare.min_centerline_distance(center)
            if clearance < spec.half_width + radius + ego_radius + 0.15:
                continue
            if any(
                np.hypot(*(center - o.center)) < radius + o.radius + 1.0
                for o in obstacles
            ):
                continue
            obstacles.append(Obstacle(x=float(center[0]), y=float(center[1]), radius=radius))
            break
    return Track(
        name=spec.name,
        designation=spec.designation,
        half_width=spec.half_width,
        segments=segments,
        obstacles=obstacles,
        routes=[route],
    )


def generate_benchmark_suite(
    seed: int,
    cases_per_type: int = 2,
    designation: str = "seen",
    obstacle_density: float = 1.0,
) -> list[Track]:
    """Single-intersection cases, exactly balanced across turn types."""
    suite = []
    for label in TURN_LABELS:
        for i in range(cases_per_type):
            spec = TrackSpec(
                left=1 if label == "left" else 0,
                right=1 if label == "right" else 0,
                straight=1 if label == "straight" else 0,
                obstacle_density=obstacle_density,
                name=f"bench-{label}-{i}",
                designation=designation,
            )
            suite.append(generate_track(spec, rng.derive_seed(seed, "bench", label, i)))
    return suite


def suite_turn_counts(suite: list[Track]) -> dict[str, int]:
    counts = {label: 0 for label in TURN_LABELS}
    for track in suite:
        for route in track.routes:
            for node in route.nodes:
                counts[node.label] += 1
    return counts
