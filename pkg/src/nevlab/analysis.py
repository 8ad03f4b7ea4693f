"""Shared numerical verification engines.

Boundary length (adaptive Simpson of |f'| over a contour), winding
index, simple-curve checking via a spatial-hash segment sweep, dyadic
box counting with an automatic scale window, convex-polygon membership
and sup-norm estimation.  Everything here is pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AmbiguousWinding,
    DegenerateRange,
    NotConvex,
    PoleOnContour,
    ToleranceNotReached,
)
from .ratmap import RationalMap


@dataclass
class CurveSample:
    """Ordered sample of a curve; closed curves repeat no endpoint."""

    points: np.ndarray
    closed: bool = True
    params: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        if self.points.size < 16:
            raise ValueError("need at least 16 points")
        gaps = np.abs(np.diff(self.points))
        if self.closed:
            gaps = np.append(gaps, abs(self.points[0] - self.points[-1]))
        if np.any(gaps == 0.0):
            raise ValueError("consecutive points must be distinct")

    def segments(self):
        """(start, end) arrays for all polyline segments."""
        p = self.points
        if self.closed:
            return p, np.roll(p, -1)
        return p[:-1], p[1:]


# -- boundary length ----------------------------------------------------


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 24):
    """Adaptive Simpson with interval-doubling error estimate."""
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        if depth >= max_depth:
            raise ToleranceNotReached(
                f"adaptive Simpson hit depth {max_depth} on [{a}, {b}]"
            )
        return rec(a, m, fa, flm, fm, left, depth + 1) + rec(
            m, b, fm, frm, fb, right, depth + 1
        )

    return rec(a, b, fa, fm, fb, whole, 0)


def boundary_length(
    mp,
    contour: str = "circle",
    tol: float = 1e-6,
    radius: float = 1.0,
    pole_split: bool = True,
) -> float:
    """Arc length of the image boundary.

    contour "circle": (1/2pi) * integral over |z|=radius of |f'|, the
    normalized length of f(|z|=radius).  contour "real_line": integral
    of |f'(x)| dx over R, compactified by x = tan(u).
    """
    if contour == "circle":
        def speed(t):
            z = radius * complex(math.cos(t), math.sin(t))
            return abs(mp.deriv(z)) * radius

        # pole-aware initial panels: split at pole arguments
        knots = {0.0, 2.0 * math.pi}
        if pole_split and isinstance(mp, RationalMap):
            for p in mp.distinct_poles():
                if abs(abs(p) - radius) < 0.5 * radius:
                    knots.add(math.atan2(p.imag, p.real) % (2.0 * math.pi))
        for k in range(1, 64):
            knots.add(2.0 * math.pi * k / 64.0)
        ks = sorted(knots)
        total = 0.0
        for a, b in zip(ks[:-1], ks[1:]):
            if b - a > 1e-12:
                total += _adaptive_simpson(speed, a, b, tol * (b - a) / (2 * math.pi))
        return total / (2.0 * math.pi)

    if contour == "real_line":
        def speed(u):
            x = math.tan(u)
            return abs(mp.deriv(x)) / math.cos(u) ** 2

        half = 0.5 * math.pi - 1e-9
        knots = np.linspace(-half, half, 129)
        total = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            total += _adaptive_simpson(speed, a, b, tol * (b - a) / math.pi)
        return total

    raise ValueError(f"unknown contour {contour!r}")


def sup_norm(mp, contour: str = "circle", samples: int = 4096, radius: float = 1.0) -> float:
    """Max |f| over the contour with one refinement doubling."""
    def values(n):
        if contour == "circle":
            t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
            z = radius * np.exp(1j * t)
        elif contour == "real_line":
            u = np.linspace(-0.5 * math.pi + 1e-9, 0.5 * math.pi - 1e-9, n)
            z = np.tan(u).astype(complex)
        else:
            raise ValueError(f"unknown contour {contour!r}")
        return np.abs(mp.eval(z))

    return float(max(values(samples).max(), values(2 * samples).max()))


# -- winding index -------------------------------------------------------


def winding_index(curve: CurveSample, point: complex) -> int:
    """Rounded total turning of (sample - point); residual must be < 0.1.

    A point at distance more than twice the largest sample gap always
    satisfies the per-segment resolution test below; spiky curves with
    large gaps far from the point remain unambiguous.
    """
    if not curve.closed:
        raise ValueError("winding index needs a closed curve")
    rel = curve.points - point
    if np.any(np.abs(rel) == 0.0):
        raise AmbiguousWinding("point lies on the sampled curve")
    args = np.angle(rel)
    turns = np.diff(np.append(args, args[0]))
    turns = (turns + math.pi) % (2.0 * math.pi) - math.pi
    # a single step subtending more than pi/2 could hide a wrap direction
    if np.max(np.abs(turns)) > 0.5 * math.pi:
        raise AmbiguousWinding("a sample step subtends > pi/2 at the point; refine sampling")
    total = turns.sum() / (2.0 * math.pi)
    idx = round(total)
    if abs(total - idx) >= 0.1:
        raise AmbiguousWinding(f"winding residual {abs(total - idx):.3f} >= 0.1; refine sampling")
    return int(idx)


# -- simple-curve check --------------------------------------------------


@dataclass
class SimpleCurveResult:
    simple: bool
    first_crossing: Optional[tuple[int, int]] = None
    crossing_point: Optional[complex] = None
    near_misses: list[tuple[int, int, float]] = field(default_factory=list)


def _seg_intersect_batch(p1, p2, q1, q2):
    """Vectorized proper/improper segment intersection test."""
    def cross(a, b):
        return a.real * b.imag - a.imag * b.real

    d1 = p2 - p1
    d2 = q2 - q1
    o1 = cross(d1, q1 - p1)
    o2 = cross(d1, q2 - p1)
    o3 = cross(d2, p1 - q1)
    o4 = cross(d2, p2 - q1)
    proper = ((o1 > 0) != (o2 > 0)) & ((o3 > 0) != (o4 > 0))
    # collinear / endpoint-touching cases: bounding-box overlap with a zero
    touch = (o1 == 0) | (o2 == 0) | (o3 == 0) | (o4 == 0)
    if touch.any():
        lo1r = np.minimum(p1.real, p2.real)
        hi1r = np.maximum(p1.real, p2.real)
        lo1i = np.minimum(p1.imag, p2.imag)
        hi1i = np.maximum(p1.imag, p2.imag)
        lo2r = np.minimum(q1.real, q2.real)
        hi2r = np.maximum(q1.real, q2.real)
        lo2i = np.minimum(q1.imag, q2.imag)
        hi2i = np.maximum(q1.imag, q2.imag)
        boxed = (lo1r <= hi2r) & (lo2r <= hi1r) & (lo1i <= hi2i) & (lo2i <= hi1i)
        proper = proper | (touch & boxed)
    return proper


def _point_segment_distance_batch(pt, a, b):
    """Vectorized distance from points to segments (aligned arrays)."""
    d = b - a
    den = (d * np.conj(d)).real
    t = np.zeros_like(den)
    nz = den > 0
    t[nz] = np.clip(((pt[nz] - a[nz]) * np.conj(d[nz])).real / den[nz], 0.0, 1.0)
    return np.abs(pt - (a + t * d))


def _segment_pair_distance_batch(p1, p2, q1, q2):
    """Vectorized min distance between segment pairs."""
    return np.minimum.reduce(
        [
            _point_segment_distance_batch(p1, q1, q2),
            _point_segment_distance_batch(p2, q1, q2),
            _point_segment_distance_batch(q1, p1, p2),
            _point_segment_distance_batch(q2, p1, p2),
        ]
    )


def simple_curve_check(
    curve: CurveSample,
    refine: Optional[Callable[[float, float, int], np.ndarray]] = None,
    near_miss_tol: float = 1e-9,
    max_rounds: int = 3,
) -> SimpleCurveResult:
    """Polyline self-intersection sweep (spatial hash; adjacent exempt).

    `refine(t_lo, t_hi, n)`, when given, resamples the underlying map on
    a parameter window; near-misses (< near_miss_tol separation) trigger
    up to `max_rounds` local re-samplings before the verdict.
    """
    pts = curve.points
    if pts.size < 64:
        raise ValueError("need >= 64 points for the sweep")

    for round_no in range(max_rounds + 1):
        a, b = curve.segments()
        n = len(a)
        lengths = np.abs(b - a)
        # robust cell size: a few long segments (needle tips) must not
        # collapse the hash into one bucket; they are checked separately
        cell = max(float(np.percentile(lengths, 90)), 1e-300)
        long_mask = lengths > 8.0 * cell
        long_idx = np.nonzero(long_mask)[0]
        buckets: dict[tuple[int, int], list[int]] = {}
        lo_x = np.floor(np.minimum(a.real, b.real) / cell).astype(np.int64)
        hi_x = np.floor(np.maximum(a.real, b.real) / cell).astype(np.int64)
        lo_y = np.floor(np.minimum(a.imag, b.imag) / cell).astype(np.int64)
        hi_y = np.floor(np.maximum(a.imag, b.imag) / cell).astype(np.int64)
        for i in range(n):
            if long_mask[i]:
                continue
            for cx in range(lo_x[i], hi_x[i] + 1):
                for cy in range(lo_y[i], hi_y[i] + 1):
                    buckets.setdefault((cx, cy), []).append(i)
        pair_set: set[tuple[int, int]] = set()
        for members in buckets.values():
            m = len(members)
            if m < 2:
                continue
            for u in range(m):
                iu = members[u]
                for v in range(u + 1, m):
                    j = members[v]
                    i = iu
                    if i > j:
                        i, j = j, i
                    if j == i + 1:
                        continue
                    if curve.closed and i == 0 and j == n - 1:
                        continue
                    pair_set.add((i, j))
        # long segments against everything
        for li in long_idx.tolist():
            for j in range(n):
                i, j2 = (li, j) if li < j else (j, li)
                if i == j2 or j2 == i + 1:
                    continue
                if curve.closed and i == 0 and j2 == n - 1:
                    continue
                pair_set.add((i, j2))
        near: list[tuple[int, int, float]] = []
        if pair_set:
            pairs = np.array(sorted(pair_set), dtype=np.int64)
            ii, jj = pairs[:, 0], pairs[:, 1]
            hits = _seg_intersect_batch(a[ii], b[ii], a[jj], b[jj])
            if hits.any():
                k = int(np.argmax(hits))
                i, j = int(ii[k]), int(jj[k])
                return SimpleCurveResult(
                    simple=False,
                    first_crossing=(i, j),
                    crossing_point=0.5 * (a[i] + b[i]),
                    near_misses=near,
                )
            dists = _segment_pair_distance_batch(a[ii], b[ii], a[jj], b[jj])
            close = np.nonzero(dists < near_miss_tol)[0]
            near = [(int(ii[k]), int(jj[k]), float(dists[k])) for k in close]
        if not near or refine is None or round_no == max_rounds:
            return SimpleCurveResult(simple=True, near_misses=near)
        # double sampling near the first near-miss window
        params = curve.params if curve.params is not None else np.arange(len(pts), dtype=float)
        i, j, _ = near[0]
        lo = min(params[i], params[j])
        hi = max(params[min(i + 1, len(params) - 1)], params[min(j + 1, len(params) - 1)])
        extra = refine(lo, hi, 2 * (j - i + 2))
        merged = np.concatenate([pts, np.asarray(extra, dtype=complex)])
        order = np.argsort(np.concatenate([params, np.linspace(lo, hi, len(extra))]))
        pts = merged[order]
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.abs(np.diff(pts)) > 0
        curve = CurveSample(pts[keep], closed=curve.closed)
    return SimpleCurveResult(simple=True, near_misses=[])


def simple_curve_bruteforce(curve: CurveSample) -> bool:
    """O(n^2) all-pairs oracle (for cross-checking the sweep)."""
    a, b = curve.segments()
    n = len(a)
    simple = True
    for i in range(n):
        js = np.arange(i + 2, n)
        if curve.closed and i == 0:
            js = js[js != n - 1]
        if len(js) == 0:
            continue
        hits = _seg_intersect_batch(
            np.full(len(js), a[i]), np.full(len(js), b[i]), a[js], b[js]
        )
        if hits.any():
            simple = False
            break
    return simple


# -- box counting --------------------------------------------------------


@dataclass
class BoxCountReport:
    scales: list[int]
    counts: list[float]
    slope: float
    window: tuple[int, int]
    min_spacing: float
    offsets: int = 1

    def count_at(self, n: int) -> float:
        return self.counts[self.scales.index(n)]


def _min_spacing(points: np.ndarray) -> float:
    """Exact min nearest-neighbour distance (chunked O(n^2))."""
    pts = np.unique(points)
    n = len(pts)
    if n < 2:
        return math.inf
    best = math.inf
    chunk = max(1, 4_000_000 // n)
    for lo in range(0, n, chunk):
        block = pts[lo : lo + chunk, None] - pts[None, :]
        d = np.abs(block)
        rows = np.arange(lo, min(lo + chunk, n))
        d[rows - lo, rows] = math.inf
        best = min(best, float(d.min()))
    return best


def box_count(points, n_range=(2, 12), offsets: int = 1) -> BoxCountReport:
    """Box counts M(N) for sides 2^{-N} and the fitted slope.

    With offsets=1 this is the plain dyadic-lattice count.  offsets=k
    averages the count over a k x k grid of lattice phases, which damps
    the log-periodic lattice artifact of self-similar sets (the
    Minkowski definition asks for a minimal cover by boxes of side
    2^{-N}, not for lattice-aligned boxes; the phase average sits
    between the lattice count and the minimal one and scales the same).

    The least-squares window automatically excludes saturated scales:
    boxes smaller than the minimum point spacing, or counts beyond half
    the sample size, say nothing about the underlying set.  Base-2 logs
    throughout, matching the 2^{-N} sides.
    """
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size < 100:
        raise ValueError("need >= 100 points")
    n_lo, n_hi = int(n_range[0]), int(n_range[1])
    if not (2 <= n_lo < n_hi <= 20):
        raise ValueError("N range must sit within [2, 20]")
    scales = list(range(n_lo, n_hi + 1))
    if len(scales) < 3:
        raise DegenerateRange("need at least 3 scales")
    counts = []
    for n in scales:
        side = 2.0 ** (-n)
        total = 0
        for k in range(offsets):
            for l in range(offsets):
                ix = np.floor((pts.real - k * side / offsets) / side).astype(np.int64)
                iy = np.floor((pts.imag - l * side / offsets) / side).astype(np.int64)
                total += len(np.unique(ix + (iy << 32)))
        counts.append(total / offsets**2)
    spacing = _min_spacing(pts)
    sat = 0.5 * pts.size
    usable = [
        i
        for i, n in enumerate(scales)
        if 2.0 ** (-n) >= spacing and counts[i] <= sat
    ]
    if len(usable) < 3:
        usable = list(range(min(3, len(scales))))
    xs = np.array([scales[i] for i in usable], dtype=float)
    ys = np.log2([max(counts[i], 1.0) for i in usable])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return BoxCountReport(
        scales=scales,
        counts=counts,
        slope=slope,
        window=(int(xs[0]), int(xs[-1])),
        min_spacing=spacing,
        offsets=offsets,
    )


# -- convex polygon membership -------------------------------------------


def point_in_convex_polygon(point: complex, vertices: Sequence[complex]) -> str:
    """Half-plane test; returns 'inside', 'boundary' or 'outside'."""
    verts = [complex(v) for v in vertices]
    m = len(verts)
    if m < 3:
        raise NotConvex("need at least 3 vertices")

    def cross(o, a, b):
        return (a - o).real * (b - o).imag - (a - o).imag * (b - o).real

    signs = []
    for i in range(m):
        c = cross(verts[i], verts[(i + 1) % m], verts[(i + 2) % m])
        if c != 0.0:
            signs.append(c > 0)
    if not signs:
        raise NotConvex("degenerate polygon")
    if any(s != signs[0] for s in signs):
        raise NotConvex("vertices not in convex position")
    orient = 1.0 if signs[0] else -1.0

    diam = max(abs(u - v) for u in verts for v in verts)
    tol = 1e-12 * max(diam, 1e-300)
    point = complex(point)
    on_boundary = False
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        side = orient * cross(a, b, point)
        edge = abs(b - a)
        if edge == 0.0:
            continue
        if side < -tol * edge:
            return "outside"
        if side <= tol * edge:
            # within the strip of this edge line; confirm segment range
            t = ((point - a) * (b - a).conjugate()).real / edge**2
            if -tol <= t <= 1 + tol:
                on_boundary = True
    return "boundary" if on_boundary else "inside"


def convex_membership_margin(points, vertices: Sequence[complex]) -> np.ndarray:
    """Signed inward margin of points w.r.t. a convex polygon, vectorized.

    Positive inside, ~0 on the boundary, negative outside (the value is
    the worst signed distance to an edge line, which for convex sets
    lower-bounds the true signed distance).
    """
    verts = [complex(v) for v in vertices]
    m = len(verts)
    if m < 3:
        raise NotConvex("need at least 3 vertices")

    def cross(o, a, b):
        return (a - o).real * (b - o).imag - (a - o).imag * (b - o).real

    signs = []
    for i in range(m):
        c = cross(verts[i], verts[(i + 1) % m], verts[(i + 2) % m])
        if c != 0.0:
            signs.append(c > 0)
    if not signs:
        raise NotConvex("degenerate polygon")
    if any(s != signs[0] for s in signs):
        raise NotConvex("vertices not in convex position")
    orient = 1.0 if signs[0] else -1.0

    pts = np.asarray(points, dtype=complex).ravel()
    margin = np.full(pts.shape, np.inf)
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        edge = abs(b - a)
        if edge == 0.0:
            continue
        d = b - a
        side = orient * ((d.real * (pts.imag - a.imag)) - (d.imag * (pts.real - a.real)))
        margin = np.minimum(margin, side / edge)
    return margin


def convex_polygon_distance(poly1: Sequence[complex], poly2: Sequence[complex]) -> float:
    """Distance between two convex polygons (0 if they intersect)."""
    p1 = [complex(v) for v in poly1]
    p2 = [complex(v) for v in poly2]
    if any(point_in_convex_polygon(v, p2) != "outside" for v in p1):
        return 0.0
    if any(point_in_convex_polygon(v, p1) != "outside" for v in p2):
        return 0.0

    def pt_seg(pt, a, b):
        d = b - a
        den = (d * d.conjugate()).real
        t = 0.0 if den == 0 else max(0.0, min(1.0, ((pt - a) * d.conjugate()).real / den))
        return abs(pt - (a + t * d))

    best = math.inf
    e1 = list(zip(p1, p1[1:] + p1[:1]))
    e2 = list(zip(p2, p2[1:] + p2[:1]))
    for a1, b1 in e1:
        for a2, b2 in e2:
            # segment/segment distance via the four point-segment cases
            best = min(
                best,
                pt_seg(a1, a2, b2),
                pt_seg(b1, a2, b2),
                pt_seg(a2, a1, b1),
                pt_seg(b2, a1, b1),
            )
    return best
