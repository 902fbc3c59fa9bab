"""Numeric 2D geometry for straightedge-and-compass constructions.

Objects are small frozen dataclasses. Every tool of the construction language
maps onto :func:`construct`, and every intersection goes through
:func:`intersect`. All comparisons use absolute tolerances over scenes that
live roughly inside the unit box.
"""
from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence, Union


class GeometryError(Exception):
    """Base class for kernel errors."""


class DegenerateInput(GeometryError):
    pass


class ArityMismatch(GeometryError):
    pass


class SamplingExhausted(GeometryError):
    pass


@dataclass(frozen=True)
class Tolerances:
    eps_match: float = 1e-6
    eps_degenerate: float = 1e-9
    eps_separation: float = 1e-3

    def __post_init__(self) -> None:
        if not (0 < self.eps_degenerate < self.eps_match < self.eps_separation):
            raise ValueError("tolerances must satisfy 0 < degenerate < match < separation")


DEFAULT_TOL = Tolerances()


class ToolKind(str, Enum):
    LINE = "line"
    RAY = "ray"
    SEGMENT = "segment"
    CIRCLE = "circle"
    COMPASS = "compass"
    PERP_BISECTOR = "perp_bisector"
    PERPENDICULAR = "perpendicular"
    PARALLEL = "parallel"
    ANGLE_BISECTOR = "angle_bisector"
    INTERSECT = "intersect"
    POINT_ON = "point_on"
    FREE_POINT = "free_point"

    @property
    def arity(self) -> int:
        return _ARITY[self]

    @property
    def max_outputs(self) -> int:
        return 2 if self is ToolKind.INTERSECT else 1


_ARITY = {
    ToolKind.LINE: 2,
    ToolKind.RAY: 2,
    ToolKind.SEGMENT: 2,
    ToolKind.CIRCLE: 2,
    ToolKind.COMPASS: 3,
    ToolKind.PERP_BISECTOR: 2,
    ToolKind.PERPENDICULAR: 2,
    ToolKind.PARALLEL: 2,
    ToolKind.ANGLE_BISECTOR: 3,
    ToolKind.INTERSECT: 2,
    ToolKind.POINT_ON: 1,
    ToolKind.FREE_POINT: 0,
}


# --- objects -----------------------------------------------------------------


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    label: str = ""

    def __sub__(self, other: Point) -> tuple[float, float]:
        return (self.x - other.x, self.y - other.y)

    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def dist(self, other: Point) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Line:
    anchor: Point
    dir: tuple[float, float]
    label: str = ""


@dataclass(frozen=True)
class Ray:
    origin: Point
    dir: tuple[float, float]
    label: str = ""


@dataclass(frozen=True)
class Segment:
    a: Point
    b: Point
    label: str = ""

    @property
    def dir(self) -> tuple[float, float]:
        return _unit(self.b - self.a)

    @property
    def length(self) -> float:
        return self.a.dist(self.b)


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float
    label: str = ""


GeoObject = Union[Point, Line, Ray, Segment, Circle]
Linear = (Line, Ray, Segment)


def kind_name(obj: GeoObject) -> str:
    return type(obj).__name__.lower()


def relabel(obj: GeoObject, label: str) -> GeoObject:
    return replace(obj, label=label)


# --- vector helpers ----------------------------------------------------------


def _cross(u: tuple[float, float], v: tuple[float, float]) -> float:
    return u[0] * v[1] - u[1] * v[0]


def _dot(u: tuple[float, float], v: tuple[float, float]) -> float:
    return u[0] * v[0] + u[1] * v[1]


def _unit(v: tuple[float, float]) -> tuple[float, float]:
    n = math.hypot(v[0], v[1])
    return (v[0] / n, v[1] / n)


def _pt(x: float, y: float) -> Point:
    return Point(x, y)


def base_point(obj: GeoObject) -> Point:
    """Anchor of a linear object (line anchor, ray origin, segment start)."""
    if isinstance(obj, Line):
        return obj.anchor
    if isinstance(obj, Ray):
        return obj.origin
    if isinstance(obj, Segment):
        return obj.a
    raise TypeError(f"{kind_name(obj)} is not linear")


def direction(obj: GeoObject) -> tuple[float, float]:
    if isinstance(obj, Linear):
        return obj.dir
    raise TypeError(f"{kind_name(obj)} is not linear")


def _param_range(obj: GeoObject, tol: float) -> tuple[float, float]:
    if isinstance(obj, Ray):
        return (-tol, math.inf)
    if isinstance(obj, Segment):
        return (-tol, obj.length + tol)
    return (-math.inf, math.inf)


def _param(obj: GeoObject, p: Point) -> float:
    return _dot(p - base_point(obj), direction(obj))


def residual(obj: GeoObject, p: Point) -> float:
    """Distance from point ``p`` to ``obj`` (zero when the point lies on it)."""
    if isinstance(obj, Point):
        return obj.dist(p)
    if isinstance(obj, Circle):
        return abs(obj.center.dist(p) - obj.radius)
    base = base_point(obj)
    d = direction(obj)
    t = _dot(p - base, d)
    if isinstance(obj, Ray):
        t = max(t, 0.0)
    elif isinstance(obj, Segment):
        t = min(max(t, 0.0), obj.length)
    foot = _pt(base.x + t * d[0], base.y + t * d[1])
    return foot.dist(p)


def on_object(obj: GeoObject, p: Point, eps: float) -> bool:
    return residual(obj, p) <= eps


# --- construction ------------------------------------------------------------


def _need_points(tool: ToolKind, args: Sequence[GeoObject]) -> None:
    for a in args:
        if not isinstance(a, Point):
            raise DegenerateInput(f"{tool.value} expects points, got {kind_name(a)}")


def _distinct(p: Point, q: Point, tol: Tolerances, what: str) -> None:
    if p.dist(q) <= tol.eps_degenerate:
        raise DegenerateInput(f"coincident points for {what}")


def construct(
    tool: ToolKind,
    args: Sequence[GeoObject],
    scene: Scene | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> GeoObject:
    """Build the object produced by ``tool`` applied to ``args``.

    Intersections and point sampling are not handled here (see
    :func:`intersect` and :func:`sample_point`); they have their own entry
    points because they may yield zero or two results. The scene is never
    mutated.
    """
    tool = ToolKind(tool)
    if tool in (ToolKind.INTERSECT, ToolKind.POINT_ON, ToolKind.FREE_POINT):
        raise ValueError(f"{tool.value} is not a constructive tool")
    if len(args) != tool.arity:
        raise ArityMismatch(f"{tool.value} takes {tool.arity} arguments, got {len(args)}")

    if tool in (ToolKind.PERPENDICULAR, ToolKind.PARALLEL):
        base, p = args
        if not isinstance(base, Linear):
            raise DegenerateInput(f"{tool.value} needs a linear base object, got {kind_name(base)}")
        if not isinstance(p, Point):
            raise DegenerateInput(f"{tool.value} needs a point, got {kind_name(p)}")
        d = direction(base)
        if tool is ToolKind.PERPENDICULAR:
            d = (-d[1], d[0])
        return Line(_pt(p.x, p.y), d)

    _need_points(tool, args)
    if tool is ToolKind.LINE:
        a, b = args
        _distinct(a, b, tol, "line")
        return Line(_pt(a.x, a.y), _unit(b - a))
    if tool is ToolKind.RAY:
        a, b = args
        _distinct(a, b, tol, "ray")
        return Ray(_pt(a.x, a.y), _unit(b - a))
    if tool is ToolKind.SEGMENT:
        a, b = args
        _distinct(a, b, tol, "segment")
        return Segment(_pt(a.x, a.y), _pt(b.x, b.y))
    if tool is ToolKind.CIRCLE:
        o, a = args
        _distinct(o, a, tol, "circle radius")
        return Circle(_pt(o.x, o.y), o.dist(a))
    if tool is ToolKind.COMPASS:
        o, a, b = args
        _distinct(a, b, tol, "compass radius")
        return Circle(_pt(o.x, o.y), a.dist(b))
    if tool is ToolKind.PERP_BISECTOR:
        a, b = args
        _distinct(a, b, tol, "perpendicular bisector")
        d = _unit(b - a)
        return Line(_pt((a.x + b.x) / 2, (a.y + b.y) / 2), (-d[1], d[0]))
    if tool is ToolKind.ANGLE_BISECTOR:
        a, v, b = args
        _distinct(a, v, tol, "angle arm")
        _distinct(b, v, tol, "angle arm")
        ua, ub = _unit(a - v), _unit(b - v)
        if abs(_cross(ua, ub)) <= tol.eps_degenerate:
            # zero or straight angle: the bisector is not determined by the arms
            raise DegenerateInput("angle bisector of a degenerate angle")
        return Ray(_pt(v.x, v.y), _unit((ua[0] + ub[0], ua[1] + ub[1])))
    raise AssertionError(tool)


# --- intersection ------------------------------------------------------------


def _canonical(points: Iterable[Point]) -> list[Point]:
    return sorted(points, key=lambda p: (p.x, p.y))


def _filter_linear(obj: GeoObject, pts: list[Point], tol: Tolerances) -> list[Point]:
    if isinstance(obj, (Ray, Segment)):
        lo, hi = _param_range(obj, tol.eps_degenerate)
        return [p for p in pts if lo <= _param(obj, p) <= hi]
    return pts


def _linear_linear(l1: GeoObject, l2: GeoObject, tol: Tolerances) -> list[Point]:
    p, d = base_point(l1), direction(l1)
    q, e = base_point(l2), direction(l2)
    den = _cross(d, e)
    if abs(den) <= tol.eps_degenerate:
        return []
    t = _cross(q - p, e) / den
    return [_pt(p.x + t * d[0], p.y + t * d[1])]


def _linear_circle(lin: GeoObject, c: Circle, tol: Tolerances) -> list[Point]:
    p, d = base_point(lin), direction(lin)
    t0 = _dot(c.center - p, d)
    foot = _pt(p.x + t0 * d[0], p.y + t0 * d[1])
    dist = foot.dist(c.center)
    h2 = c.radius * c.radius - dist * dist
    # |r - dist| below eps_degenerate counts as tangency
    band = 2.0 * c.radius * tol.eps_degenerate
    if h2 < -band:
        return []
    if h2 <= band:
        return [foot]
    h = math.sqrt(h2)
    return [
        _pt(foot.x - h * d[0], foot.y - h * d[1]),
        _pt(foot.x + h * d[0], foot.y + h * d[1]),
    ]


def _circle_circle(c1: Circle, c2: Circle, tol: Tolerances) -> list[Point]:
    dx, dy = c2.center - c1.center
    d = math.hypot(dx, dy)
    if d <= tol.eps_degenerate:
        return []
    a = (d * d + c1.radius**2 - c2.radius**2) / (2 * d)
    h2 = c1.radius**2 - a * a
    band = 2.0 * c1.radius * tol.eps_degenerate
    if h2 < -band:
        return []
    ux, uy = dx / d, dy / d
    mid = _pt(c1.center.x + a * ux, c1.center.y + a * uy)
    if h2 <= band:
        return [mid]
    h = math.sqrt(h2)
    return [_pt(mid.x - h * uy, mid.y + h * ux), _pt(mid.x + h * uy, mid.y - h * ux)]


def intersect(o1: GeoObject, o2: GeoObject, tol: Tolerances = DEFAULT_TOL) -> list[Point]:
    """Intersection points of two non-point objects, in (x, y) order.

    An empty list means the objects do not meet (parallel or coincident
    lines included). Tangencies collapse to a single point.
    """
    if isinstance(o1, Point) or isinstance(o2, Point):
        raise DegenerateInput("cannot intersect a point")
    if isinstance(o1, Circle) and isinstance(o2, Circle):
        pts = _circle_circle(o1, o2, tol)
    elif isinstance(o1, Circle):
        pts = _filter_linear(o2, _linear_circle(o2, o1, tol), tol)
    elif isinstance(o2, Circle):
        pts = _filter_linear(o1, _linear_circle(o1, o2, tol), tol)
    else:
        pts = _linear_linear(o1, o2, tol)
        pts = _filter_linear(o2, _filter_linear(o1, pts, tol), tol)
    return _canonical(pts)


# --- sampling ----------------------------------------------------------------

VIEWPORT = (-0.5, 1.5)
MAX_RESAMPLES = 100


def _clip_to_viewport(p: Point, d: tuple[float, float], lo_t: float) -> tuple[float, float]:
    lo, hi = VIEWPORT
    t0, t1 = lo_t, math.inf
    if lo_t == -math.inf:
        t0 = -math.inf
    for pc, dc in ((p.x, d[0]), (p.y, d[1])):
        if abs(dc) < 1e-15:
            if not lo <= pc <= hi:
                return (1.0, 0.0)
            continue
        a, b = (lo - pc) / dc, (hi - pc) / dc
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
    return (t0, t1)


def _draw(target: GeoObject | None, rng: random.Random) -> Point:
    if target is None:
        return _pt(rng.random(), rng.random())
    if isinstance(target, Point):
        return _pt(target.x, target.y)
    if isinstance(target, Circle):
        th = rng.uniform(0.0, 2.0 * math.pi)
        return _pt(
            target.center.x + target.radius * math.cos(th),
            target.center.y + target.radius * math.sin(th),
        )
    if isinstance(target, Segment):
        t = rng.random()
        return _pt(target.a.x + t * (target.b.x - target.a.x), target.a.y + t * (target.b.y - target.a.y))
    p, d = base_point(target), direction(target)
    lo_t = 0.0 if isinstance(target, Ray) else -math.inf
    t0, t1 = _clip_to_viewport(p, d, lo_t)
    if not t0 < t1:
        # object misses the viewport: sample near its anchor
        t0, t1 = (0.0, 1.0) if isinstance(target, Ray) else (-1.0, 1.0)
    t = rng.uniform(t0, t1)
    return _pt(p.x + t * d[0], p.y + t * d[1])


def sample_point(
    target: GeoObject | None,
    rng: random.Random,
    avoid: Sequence[Point] = (),
    tol: Tolerances = DEFAULT_TOL,
) -> Point:
    """Draw an arbitrary point on ``target`` (``None`` means the free plane).

    Free points are uniform in the unit box. Candidates closer than
    ``eps_separation`` to any point in ``avoid`` are rejected.
    """
    for _ in range(MAX_RESAMPLES):
        p = _draw(target, rng)
        if all(p.dist(q) > tol.eps_separation for q in avoid):
            return p
    raise SamplingExhausted(f"no admissible point after {MAX_RESAMPLES} draws")


# --- equivalence ---------------------------------------------------------------


def _same_line(a: GeoObject, b: GeoObject, eps: float) -> bool:
    if abs(_cross(direction(a), direction(b))) >= eps:
        return False
    pa, pb = base_point(a), base_point(b)
    la = Line(pa, direction(a))
    lb = Line(pb, direction(b))
    return residual(lb, pa) < eps and residual(la, pb) < eps


def equivalent(a: GeoObject, b: GeoObject, tol: Tolerances = DEFAULT_TOL) -> bool:
    eps = tol.eps_match
    if isinstance(a, Segment) and isinstance(b, Line) or isinstance(a, Line) and isinstance(b, Segment):
        return _same_line(a, b, eps)
    if type(a) is not type(b):
        return False
    if isinstance(a, Point):
        return a.dist(b) < eps
    if isinstance(a, Circle):
        return a.center.dist(b.center) < eps and abs(a.radius - b.radius) < eps
    if isinstance(a, Line):
        return _same_line(a, b, eps)
    if isinstance(a, Ray):
        return a.origin.dist(b.origin) < eps and _dot(a.dir, b.dir) > 0 and _same_line(a, b, eps)
    if isinstance(a, Segment):
        return (a.a.dist(b.a) < eps and a.b.dist(b.b) < eps) or (
            a.a.dist(b.b) < eps and a.b.dist(b.a) < eps
        )
    raise TypeError(type(a))


# --- transforms ----------------------------------------------------------------


def transform(obj: GeoObject, scale: float, shift: tuple[float, float]) -> GeoObject:
    """Apply ``p -> scale * p + shift`` (a similarity, so tools commute with it)."""

    def tp(p: Point) -> Point:
        return Point(scale * p.x + shift[0], scale * p.y + shift[1], p.label)

    if isinstance(obj, Point):
        return tp(obj)
    if isinstance(obj, Line):
        return replace(obj, anchor=tp(obj.anchor))
    if isinstance(obj, Ray):
        return replace(obj, origin=tp(obj.origin))
    if isinstance(obj, Segment):
        return replace(obj, a=tp(obj.a), b=tp(obj.b))
    if isinstance(obj, Circle):
        return replace(obj, center=tp(obj.center), radius=scale * obj.radius)
    raise TypeError(type(obj))


# --- scene ---------------------------------------------------------------------


@dataclass
class Scene:
    """Append-only, labelled collection of objects plus the instance RNG."""

    objects: list[GeoObject] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)
    rng_seed: int = 0
    rng: random.Random = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.rng is None:
            self.rng = random.Random(self.rng_seed)

    def add(self, label: str, obj: GeoObject) -> GeoObject:
        if label in self.index:
            raise ValueError(f"label {label!r} already bound")
        obj = relabel(obj, label)
        self.index[label] = len(self.objects)
        self.objects.append(obj)
        return obj

    def get(self, label: str) -> GeoObject:
        return self.objects[self.index[label]]

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __iter__(self):
        return iter(self.objects)

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def labels(self) -> list[str]:
        return [o.label for o in self.objects]

    def points(self) -> list[Point]:
        return [o for o in self.objects if isinstance(o, Point)]

    @property
    def diameter(self) -> float:
        pts = self.points()
        best = 0.0
        for i, p in enumerate(pts):
            for q in pts[i + 1 :]:
                best = max(best, p.dist(q))
        return best

    def copy(self) -> Scene:
        new = Scene(list(self.objects), dict(self.index), self.rng_seed, random.Random())
        new.rng.setstate(self.rng.getstate())
        return new

    def drop(self, labels: Iterable[str]) -> Scene:
        gone = set(labels)
        keep = [o for o in self.objects if o.label not in gone]
        new = Scene(keep, {o.label: i for i, o in enumerate(keep)}, self.rng_seed, copy.deepcopy(self.rng))
        return new

    def mapped(self, scale: float, shift: tuple[float, float]) -> Scene:
        objs = [transform(o, scale, shift) for o in self.objects]
        new = Scene(objs, dict(self.index), self.rng_seed, copy.deepcopy(self.rng))
        return new
