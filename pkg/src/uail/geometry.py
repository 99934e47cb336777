"""Planar primitives for the capsule-union driving world.

The drivable region is the union of capsules (segments inflated by the
lane half-width). Rays are resolved analytically: a ray's overlap with a
single capsule is one interval because capsules are convex, and the
distance to the union boundary from an interior point is the reach of the
merged intervals containing the origin.
"""

from __future__ import annotations

import math

import numpy as np


def unit(v: np.ndarray) -> np.ndarray:
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        raise ValueError("zero-length vector")
    return v / n


def perp(v: np.ndarray) -> np.ndarray:
    """90-degree counterclockwise rotation."""
    return np.array([-v[1], v[0]])


def heading_vector(heading: float) -> np.ndarray:
    return np.array([math.cos(heading), math.sin(heading)])


def point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ ab) / denom
    t = min(max(t, 0.0), 1.0)
    closest = a + t * ab
    return float(np.hypot(*(p - closest)))


def polyline_arclengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex, starting at 0."""
    d = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(d)])


def point_at_arclength(points: np.ndarray, cum: np.ndarray, s: float):
    """Interpolated (position, unit tangent) at arc length s, clamped to the ends."""
    s = min(max(s, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(points) - 2)
    seg_len = cum[i + 1] - cum[i]
    frac = 0.0 if seg_len == 0 else (s - cum[i]) / seg_len
    pos = points[i] + frac * (points[i + 1] - points[i])
    tangent = unit(points[i + 1] - points[i])
    return pos, tangent


def project_to_polyline(p, points: np.ndarray, cum: np.ndarray, s_lo=None, s_hi=None):
    """Closest point on the polyline, returned as (arc length, distance).

    Optionally restricts the search to segments overlapping [s_lo, s_hi],
    which keeps route-progress tracking local when the path crosses itself.
    """
    p = np.asarray(p, dtype=float)
    best_s, best_d = 0.0, float("inf")
    for i in range(len(points) - 1):
        if s_hi is not None and cum[i] > s_hi:
            break
        if s_lo is not None and cum[i + 1] < s_lo:
            continue
        a, b = points[i], points[i + 1]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
        closest = a + t * ab
        d = float(np.hypot(*(p - closest)))
        if d < best_d:
            best_d = d
            best_s = float(cum[i]) + t * math.sqrt(denom)
    return best_s, best_d


def _intersect_intervals(a, b):
    if a is None or b is None:
        return None
    lo = max(a[0], b[0])
    hi = min(a[1], b[1])
    return (lo, hi) if lo <= hi else None


def ray_circle_interval(origin, direction, center, radius):
    """Parameter interval where the ray's line passes through the disc, or None."""
    oc = np.asarray(origin, dtype=float) - np.asarray(center, dtype=float)
    b = float(oc @ direction)
    c = float(oc @ oc) - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    return (-b - root, -b + root)


def ray_capsule_interval(origin, direction, a, b, radius):
    """Parameter interval where the ray's line lies inside the capsule, or None.

    The capsule is convex, so the union of the rectangle-band overlap and
    the two end-disc overlaps is a single interval.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    length = math.hypot(ab[0], ab[1])
    pieces = []
    if length > 1e-12:
        u = ab / length
        n = perp(u)
        o = origin - a
        po, pd = float(o @ u), float(direction @ u)
        qo, qd = float(o @ n), float(direction @ n)
        if abs(qd) < 1e-15:
            band = None if abs(qo) > radius else (-math.inf, math.inf)
        else:
            t1, t2 = (-radius - qo) / qd, (radius - qo) / qd
            band = (min(t1, t2), max(t1, t2))
        if abs(pd) < 1e-15:
            slab = None if not (0.0 <= po <= length) else (-math.inf, math.inf)
        else:
            t1, t2 = (0.0 - po) / pd, (length - po) / pd
            slab = (min(t1, t2), max(t1, t2))
        rect = _intersect_intervals(band, slab)
        if rect is not None:
            pieces.append(rect)
    for cap in (a, b):
        disc = ray_circle_interval(origin, direction, cap, radius)
        if disc is not None:
            pieces.append(disc)
    if not pieces:
        return None
    return (min(p[0] for p in pieces), max(p[1] for p in pieces))


def ray_union_exit(origin, direction, capsules, max_range: float) -> float:
    """Distance at which the ray leaves the union of capsules.

    ``capsules`` is an iterable of (a, b, radius). If the origin is outside
    the union the distance is 0. Capped at max_range.
    """
    intervals = []
    for a, b, r in capsules:
        iv = ray_capsule_interval(origin, direction, a, b, r)
        if iv is None:
            continue
        lo, hi = max(iv[0], 0.0), iv[1]
        if hi >= lo:
            intervals.append((lo, hi))
    eps = 1e-9
    reach = 0.0
    if not any(lo <= eps for lo, _ in intervals):
        return 0.0
    extended = True
    while extended:
        extended = False
        for lo, hi in intervals:
            if lo <= reach + eps and hi > reach:
                reach = hi
                extended = True
        if reach >= max_range:
            return max_range
    return min(reach, max_range)


def ray_circle_entry(origin, direction, center, radius):
    """First non-negative ray parameter hitting the disc, or None; 0 if inside."""
    iv = ray_circle_interval(origin, direction, center, radius)
    if iv is None or iv[1] < 0.0:
        return None
    return max(iv[0], 0.0)


_EMPTY = 1e18  # sentinel bounds encoding an empty interval (lo > hi)


def ray_capsule_intervals_batch(origin, direction, seg_a, seg_b, radius):
    """Vectorized ray_capsule_interval over n capsules sharing one radius.

    Returns (lo, hi, valid) arrays; rows with valid=False have no overlap.
    Semantics match the scalar function exactly.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    ab = seg_b - seg_a
    length = np.hypot(ab[:, 0], ab[:, 1])
    degenerate = length < 1e-12
    safe_len = np.where(degenerate, 1.0, length)
    u = ab / safe_len[:, None]
    n = np.column_stack([-u[:, 1], u[:, 0]])
    o = origin[None, :] - seg_a
    po = (o * u).sum(axis=1)
    pd = u @ direction
    qo = (o * n).sum(axis=1)
    qd = n @ direction

    def slab(offset, lo_bound, hi_bound, rate):
        parallel = np.abs(rate) < 1e-15
        safe_rate = np.where(parallel, 1.0, rate)
        t1 = (lo_bound - offset) / safe_rate
        t2 = (hi_bound - offset) / safe_rate
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        inside_always = parallel & (offset >= lo_bound) & (offset <= hi_bound)
        lo = np.where(parallel, np.where(inside_always, -_EMPTY, _EMPTY), lo)
        hi = np.where(parallel, np.where(inside_always, _EMPTY, -_EMPTY), hi)
        return lo, hi

    band_lo, band_hi = slab(qo, -radius, radius, qd)
    slab_lo, slab_hi = slab(po, 0.0, length, pd)
    rect_lo = np.maximum(band_lo, slab_lo)
    rect_hi = np.minimum(band_hi, slab_hi)
    rect_lo = np.where(degenerate, _EMPTY, rect_lo)
    rect_hi = np.where(degenerate, -_EMPTY, rect_hi)

    def disc(center):
        oc = origin[None, :] - center
        b = oc @ direction
        c = (oc * oc).sum(axis=1) - radius * radius
        d2 = b * b - c
        hit = d2 >= 0.0
        root = np.sqrt(np.where(hit, d2, 0.0))
        return np.where(hit, -b - root, _EMPTY), np.where(hit, -b + root, -_EMPTY)

    a_lo, a_hi = disc(seg_a)
    b_lo, b_hi = disc(seg_b)
    # Convexity: the union of the nonempty pieces is one interval.
    empty = lambda lo, hi: lo > hi
    los = np.stack([np.where(empty(rect_lo, rect_hi), _EMPTY, rect_lo),
                    np.where(empty(a_lo, a_hi), _EMPTY, a_lo),
                    np.where(empty(b_lo, b_hi), _EMPTY, b_lo)])
    his = np.stack([np.where(empty(rect_lo, rect_hi), -_EMPTY, rect_hi),
                    np.where(empty(a_lo, a_hi), -_EMPTY, a_hi),
                    np.where(empty(b_lo, b_hi), -_EMPTY, b_hi)])
    lo = los.min(axis=0)
    hi = his.max(axis=0)
    return lo, hi, lo <= hi


def ray_union_exit_batch(origin, direction, seg_a, seg_b, radius, max_range: float) -> float:
    """ray_union_exit against stacked capsule arrays sharing one radius."""
    lo, hi, valid = ray_capsule_intervals_batch(origin, direction, seg_a, seg_b, radius)
    lo = np.maximum(lo[valid], 0.0)
    hi = hi[valid]
    keep = hi >= lo
    lo, hi = lo[keep], hi[keep]
    eps = 1e-9
    if lo.size == 0 or lo.min() > eps:
        return 0.0
    reach = 0.0
    extended = True
    while extended:
        extended = False
        grow = (lo <= reach + eps) & (hi > reach)
        if grow.any():
            reach = float(hi[grow].max())
            extended = True
        if reach >= max_range:
            return max_range
    return min(reach, max_range)


def ray_circles_min_entry(origin, direction, centers, radii) -> float:
    """Smallest non-negative entry distance into any disc, or +inf."""
    if len(centers) == 0:
        return math.inf
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    oc = origin[None, :] - centers
    b = oc @ direction
    c = (oc * oc).sum(axis=1) - radii * radii
    d2 = b * b - c
    hit = d2 >= 0.0
    root = np.sqrt(np.where(hit, d2, 0.0))
    t_hi = -b + root
    entry = np.where(hit & (t_hi >= 0.0), np.maximum(-b - root, 0.0), math.inf)
    best = float(entry.min())
    return best
