""" Strokes in the (beta1, beta3) phase plane

Closed polygonal strokes, the diamond / octagon / square families generated from the amplitude
bound a, rate bound b and period T, and their piecewise-constant rate realization.

Orientation: counter-clockwise in (beta1, beta3) is +1. With the joint-angle convention of
dynamics.py a counter-clockwise loop moves the swimmer towards +x when eta > xi, so the family
generators always emit counter-clockwise polygons.

Octagon sides: a1 and a3 are the axis-aligned sides, a2 and a4 the diagonal ones. The generator
starts with the vertical side on which beta3 decreases and then turns left:

    a1: (0, -1)   a2: (1, -1)/sqrt2   a3: (1, 0)   a4: (1, 1)/sqrt2   then the same sides reversed
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateStrokeError, OutOfRegimeError, ScheduleError, SelfIntersectionError, StrokeError

SQRT2 = math.sqrt(2.)

# relative tolerance used to classify edge directions and regime boundaries
_EDGE_TOL = 1e-9
_REGIME_TOL = 1e-12

_OCTAGON_DIRECTIONS = np.array([
    (0., -1.), (1. / SQRT2, -1. / SQRT2), (1., 0.), (1. / SQRT2, 1. / SQRT2),
    (0., 1.), (-1. / SQRT2, 1. / SQRT2), (-1., 0.), (-1. / SQRT2, -1. / SQRT2)])


class PhasePoint(NamedTuple):
    b1: float
    b3: float


def edge_kind(delta):
    """'axis', 'diagonal' or 'free' for an edge vector in the phase plane."""
    dx, dy = abs(delta[0]), abs(delta[1])
    scale = max(dx, dy)
    if min(dx, dy) <= _EDGE_TOL * scale:
        return 'axis'
    if abs(dx - dy) <= _EDGE_TOL * scale:
        return 'diagonal'
    return 'free'


def _shoelace(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross(o, p, q):
    return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])


def _segments_intersect(p1, p2, q1, q2, eps):
    d1, d2 = _cross(q1, q2, p1), _cross(q1, q2, p2)
    d3, d4 = _cross(p1, p2, q1), _cross(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
            ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True

    def _on_segment(a, b, p, d):
        return abs(d) <= eps and min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps \
            and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps

    return _on_segment(q1, q2, p1, d1) or _on_segment(q1, q2, p2, d2) \
        or _on_segment(p1, p2, q1, d3) or _on_segment(p1, p2, q2, d4)


@dataclass(frozen=True)
class StrokePolygon:
    """Closed stroke: the last vertex connects back to the first."""
    vertices: np.ndarray
    orientation: int
    free_edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, 'vertices', v)
        object.__setattr__(self, 'free_edges', frozenset(self.free_edges))
        if len(v) < 3:
            raise StrokeError('a stroke polygon needs at least 3 vertices, got {}'.format(len(v)))
        if not np.all(np.isfinite(v)):
            raise StrokeError('stroke vertices must be finite')
        if self.orientation not in (1, -1):
            raise StrokeError('orientation must be +1 or -1, got {}'.format(self.orientation))
        for i, delta in enumerate(self.edges()):
            if not np.any(delta):
                raise StrokeError('consecutive vertices {} and {} coincide'.format(i, (i + 1) % len(v)))
            if i not in self.free_edges and edge_kind(delta) == 'free':
                raise StrokeError('edge {} is neither axis-aligned nor diagonal and not flagged free-form'.format(i))
        area = _shoelace(v)
        if area != 0. and int(np.sign(area)) != self.orientation:
            raise StrokeError('orientation {} does not match the traversal direction'.format(self.orientation))

    def __len__(self):
        return len(self.vertices)

    def edges(self):
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def start(self):
        return PhasePoint(*self.vertices[0])

    def to_dict(self):
        return {'vertices': self.vertices.tolist(), 'orientation': self.orientation}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d['vertices'], dtype=np.float64), int(d['orientation']))


@dataclass(frozen=True)
class OctagonSpec:
    """Arc lengths of the four distinct sides of a centrally symmetric octagon."""
    a1: float
    a2: float
    a3: float
    a4: float

    def __post_init__(self):
        sides = self.sides
        if any(not math.isfinite(s) or s < 0 for s in sides):
            raise StrokeError('octagon sides must be finite and >= 0, got {}'.format(sides))
        if sum(s > 0 for s in sides) < 2:
            raise DegenerateStrokeError('octagon needs at least two nonzero sides, got {}'.format(sides))

    @property
    def sides(self):
        return self.a1, self.a2, self.a3, self.a4

    @property
    def perimeter(self):
        return 2. * sum(self.sides)

    def scaled(self, factor):
        return OctagonSpec(*[s * factor for s in self.sides])


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant shape rates. `bound`, when given, is checked against every rate."""
    durations: np.ndarray
    rates: np.ndarray
    bound: Optional[float] = None

    def __post_init__(self):
        d = np.array(self.durations, dtype=np.float64).reshape(-1)
        r = np.array(self.rates, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, 'durations', d)
        object.__setattr__(self, 'rates', r)
        if len(d) == 0 or len(d) != len(r):
            raise ScheduleError('schedule needs matching, non-empty durations and rates')
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(r))):
            raise ScheduleError('schedule entries must be finite')
        if np.any(d <= 0):
            raise ScheduleError('segment durations must be positive')
        if self.bound is not None and np.any(np.abs(r) > self.bound * (1. + _REGIME_TOL)):
            raise ScheduleError('rate bound {} violated (max |rate| = {})'.format(self.bound, np.abs(r).max()))
        travel = d[:, None] * r
        gap = np.abs(travel.sum(axis=0)).max()
        if gap > 1e-12 * max(1., np.abs(travel).sum()):
            raise ScheduleError('schedule does not return to its start point (gap {:.3e})'.format(gap))

    @classmethod
    def from_segments(cls, segments, bound=None):
        """From a list of (duration, (db1, db3))."""
        return cls([s[0] for s in segments], [tuple(s[1]) for s in segments], bound)

    @property
    def segments(self):
        from .dynamics import ShapeRate
        return [(float(dt), ShapeRate(float(r[0]), float(r[1]))) for dt, r in zip(self.durations, self.rates)]

    @property
    def total_duration(self):
        return float(self.durations.sum())

    def reversed(self):
        return ControlSchedule(self.durations[::-1], -self.rates[::-1], self.bound)

    def repeat(self, k):
        return ControlSchedule(np.tile(self.durations, k), np.tile(self.rates, (k, 1)), self.bound)

    def time_scaled(self, factor):
        """Same path traversed `factor` times faster."""
        bound = None if self.bound is None else self.bound * factor
        return ControlSchedule(self.durations / factor, self.rates * factor, bound)

    def padded(self, T):
        """Append a zero-rate rest so the schedule lasts exactly T."""
        rest = T - self.total_duration
        if rest < -_REGIME_TOL * T:
            raise ScheduleError('schedule lasts {} > T = {}'.format(self.total_duration, T))
        if rest <= _REGIME_TOL * T:
            return self
        return ControlSchedule(np.append(self.durations, rest), np.vstack((self.rates, [0., 0.])), self.bound)

    def discretize(self, n_steps):
        """Per-step (h, u) with steps allotted to segments in proportion to their duration.

        Every segment gets at least one step and segment boundaries coincide with step boundaries.
        """
        counts = np.maximum(1, np.rint(n_steps * self.durations / self.durations.sum()).astype(int))
        h = np.repeat(self.durations / counts, counts)
        u = np.repeat(self.rates, counts, axis=0)
        return h, u

    def to_dict(self):
        return {'segments': [[float(dt), float(r[0]), float(r[1])] for dt, r in zip(self.durations, self.rates)]}

    @classmethod
    def from_dict(cls, d, bound=None):
        seg = np.asarray(d['segments'], dtype=np.float64).reshape(-1, 3)
        return cls(seg[:, 0], seg[:, 1:], bound)


def octagon_polygon(spec: OctagonSpec, center: PhasePoint = PhasePoint(0., 0.)) -> StrokePolygon:
    """Centrally symmetric, counter-clockwise octagon with side lengths (a1, a2, a3, a4, a1, a2, a3, a4).

    Zero-length sides are dropped, so the square (a2 = a4 = 0) and the diamond (a1 = a3 = 0)
    come out as 4-vertex polygons.
    """
    if not any(spec.sides):
        raise DegenerateStrokeError('all octagon sides are zero')
    lengths = np.tile(np.asarray(spec.sides, dtype=np.float64), 2)
    keep = lengths > 0
    edges = lengths[keep, None] * _OCTAGON_DIRECTIONS[keep]
    vertices = np.vstack(([0., 0.], np.cumsum(edges, axis=0)[:-1]))
    vertices = vertices - vertices.mean(axis=0) + np.asarray(center, dtype=np.float64)
    return StrokePolygon(vertices, 1)


def stroke_regime(a, b, T):
    """Stroke shape expected for the bounds: diamond for b <= 4a/T, octagon up to 8a/T,
    square at b = 8a/T and a sequence of strokes above.

    Read as a period, the diamond touches the amplitude bound at T = 4a/b and the square at T = 8a/b.
    """
    low, high = 4. * a / T, 8. * a / T
    if b <= low * (1. + _REGIME_TOL):
        return 'diamond'
    if abs(b - high) <= _REGIME_TOL * high:
        return 'square'
    if b < high:
        return 'octagon'
    return 'sequence'


def family_from_bounds(a, b, T) -> OctagonSpec:
    """Bound-touching octagon for 4a/T <= b <= 8a/T.

    Diagonal sides d with d / sqrt2 = 2a - bT/4, axis sides e = bT/2 - 2a; traversed at rates
    saturating b the stroke lasts exactly T and touches the amplitude bound a.
    """
    if a <= 0 or b <= 0 or T <= 0:
        raise ValueError('a, b and T must be positive, got a={} b={} T={}'.format(a, b, T))
    low, high = 4. * a / T, 8. * a / T
    if b < low * (1. - _REGIME_TOL):
        raise OutOfRegimeError(
            'b = {:.6g} < 4a/T = {:.6g}: the stroke never reaches the amplitude bound, '
            'use a scaled diamond (stroke_family)'.format(b, low))
    if b > high * (1. + _REGIME_TOL):
        raise OutOfRegimeError(
            'b = {:.6g} > 8a/T = {:.6g}: a single stroke cannot use the whole period, '
            'use a multi-stroke sequence (stroke_family)'.format(b, high))
    # sides within round-off of zero at the regime edges are dropped
    half_diag = 2. * a - b * T / 4.
    axis = b * T / 2. - 2. * a
    half_diag = half_diag if half_diag > _REGIME_TOL * a else 0.
    axis = axis if axis > _REGIME_TOL * a else 0.
    d = SQRT2 * half_diag
    return OctagonSpec(axis, d, axis, d)


def stroke_family(a, b, T):
    """Stroke for any bounds as (k, spec, sub_period): k identical strokes of period T / k.

    Below the octagon regime the diamond is scaled down so its saturated traversal lasts T,
    above it the period is split into k = ceil(bT / 8a) equal sub-periods.
    """
    regime = stroke_regime(a, b, T)
    if regime == 'diamond':
        half_diag = min(a, b * T / 4.)
        d = SQRT2 * half_diag
        return 1, OctagonSpec(0., d, 0., d), T
    if regime in ('octagon', 'square'):
        return 1, family_from_bounds(a, b, T), T
    k = int(math.ceil(b * T / (8. * a) * (1. - _REGIME_TOL)))
    return k, family_from_bounds(a, b, T / k), T / k


def schedule_from_polygon(poly: StrokePolygon, T=None, b=1.) -> ControlSchedule:
    """One segment per edge at rates saturating b: (+-b, +-b) on diagonals, (+-b, 0) or (0, +-b) on axes.

    An axis edge of length l takes l / b, a diagonal edge of arc length l takes l / (b sqrt2).
    The total duration is <= T (callers pad or repeat); T=None skips the horizon check.
    """
    if b <= 0:
        raise ValueError('rate bound must be positive, got {}'.format(b))
    if poly.free_edges:
        raise ScheduleError('free-form edges {} have no saturated-rate realization'.format(sorted(poly.free_edges)))
    durations, rates = [], []
    for delta in poly.edges():
        sign = np.sign(delta)
        if edge_kind(delta) == 'axis':
            axis = int(np.argmax(np.abs(delta)))
            rate = np.zeros(2)
            rate[axis] = b * sign[axis]
            durations.append(abs(delta[axis]) / b)
        else:
            rate = b * sign
            durations.append(0.5 * (abs(delta[0]) + abs(delta[1])) / b)
        rates.append(rate)
    schedule = ControlSchedule(durations, rates, bound=b)
    if T is not None and schedule.total_duration > T * (1. + _REGIME_TOL):
        raise ScheduleError('traversal at rate bound {} takes {:.6g} > T = {}'.format(
            b, schedule.total_duration, T))
    return schedule


def polygon_area(poly: StrokePolygon) -> float:
    """Signed (shoelace) area, positive for counter-clockwise strokes."""
    v = poly.vertices
    n = len(v)
    scale = np.abs(v).max() + 1.
    eps = 1e-12 * scale * scale
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n], eps):
                raise SelfIntersectionError('edges {} and {} intersect'.format(i, j))
    return _shoelace(v)


def _reordered(vertices):
    # keep the first vertex, walk the others backwards
    return np.vstack((vertices[:1], vertices[:0:-1]))


def reverse_polygon(poly: StrokePolygon) -> StrokePolygon:
    return StrokePolygon(_reordered(poly.vertices), -poly.orientation)


def reflect_diagonal(poly: StrokePolygon) -> StrokePolygon:
    """Mirror across beta1 = beta3 (swaps the joint angles, flips orientation)."""
    return StrokePolygon(poly.vertices[:, ::-1], -poly.orientation)


def reflect_antidiagonal(poly: StrokePolygon) -> StrokePolygon:
    """Mirror across beta1 = -beta3."""
    return StrokePolygon(-poly.vertices[:, ::-1], -poly.orientation)
