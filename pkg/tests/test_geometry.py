from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euclidkit.geometry import (
    DEFAULT_TOL,
    Circle,
    DegenerateInput,
    Line,
    Point,
    Ray,
    Scene,
    Segment,
    Tolerances,
    ToolKind,
    construct,
    equivalent,
    intersect,
    residual,
    sample_point,
)
from euclidkit.geometry import ArityMismatch as GeoArity

coord = st.floats(-1.0, 2.0, allow_nan=False, allow_infinity=False)
points = st.builds(Point, coord, coord)


def far_apart(*ps, gap=1e-3):
    return all(p.dist(q) > gap for i, p in enumerate(ps) for q in ps[i + 1 :])


def test_tolerance_ordering_is_enforced():
    with pytest.raises(ValueError):
        Tolerances(eps_match=1e-10, eps_degenerate=1e-9)


def test_line_through_two_points():
    ln = construct(ToolKind.LINE, [Point(0, 0), Point(2, 0)])
    assert isinstance(ln, Line)
    assert residual(ln, Point(5, 0)) < 1e-12


def test_coincident_points_are_degenerate():
    with pytest.raises(DegenerateInput):
        construct(ToolKind.LINE, [Point(1, 1), Point(1, 1)])


def test_wrong_arity():
    with pytest.raises(GeoArity):
        construct(ToolKind.CIRCLE, [Point(0, 0)])


def test_intersect_is_not_constructive():
    with pytest.raises(ValueError):
        construct(ToolKind.INTERSECT, [Point(0, 0), Point(1, 1)])


def test_perpendicular_needs_linear_base():
    with pytest.raises(DegenerateInput):
        construct(ToolKind.PERPENDICULAR, [Point(0, 0), Point(1, 1)])


def test_compass_radius_from_other_points():
    c = construct(ToolKind.COMPASS, [Point(0, 0), Point(1, 0), Point(1, 3)])
    assert c.center == Point(0, 0) and c.radius == pytest.approx(3)


def test_unit_circles_meet_twice():
    a = Circle(Point(0, 0), 1)
    b = Circle(Point(1, 0), 1)
    pts = intersect(a, b)
    assert len(pts) == 2
    assert pts[0].x <= pts[1].x or pts[0].y <= pts[1].y
    for p in pts:
        assert p.x == pytest.approx(0.5)


def test_tangent_circles_meet_once():
    pts = intersect(Circle(Point(0, 0), 1), Circle(Point(2, 0), 1))
    assert len(pts) == 1
    assert pts[0].x == pytest.approx(1)


def test_segment_clips_intersections():
    seg = Segment(Point(0, 0), Point(0.4, 0))
    assert intersect(seg, Line(Point(1, -1), (0.0, 1.0))) == []


def test_ray_ignores_points_behind_origin():
    ray = Ray(Point(0, 0), (1.0, 0.0))
    assert intersect(ray, Circle(Point(0, 0), 1)) == [Point(1.0, 0.0)]


def test_parallel_lines_do_not_meet():
    assert intersect(Line(Point(0, 0), (1.0, 0.0)), Line(Point(0, 1), (1.0, 0.0))) == []


def test_segment_is_equivalent_to_collinear_line():
    assert equivalent(Segment(Point(0, 0), Point(1, 1)), Line(Point(2, 2), (math.sqrt(0.5), math.sqrt(0.5))))


def test_rays_with_opposite_directions_differ():
    assert not equivalent(Ray(Point(0, 0), (1.0, 0.0)), Ray(Point(0, 0), (-1.0, 0.0)))


def test_sample_point_on_circle_and_avoid():
    rng = random.Random(1)
    c = Circle(Point(0.5, 0.5), 0.2)
    p = sample_point(c, rng, [Point(0.7, 0.5)])
    assert residual(c, p) < 1e-9
    assert p.dist(Point(0.7, 0.5)) > DEFAULT_TOL.eps_separation


def test_scene_rejects_rebinding_and_copies_rng():
    sc = Scene(rng_seed=3)
    sc.add("A", Point(0, 0))
    with pytest.raises(ValueError):
        sc.add("A", Point(1, 1))
    dup = sc.copy()
    assert dup.rng.random() == sc.rng.random()
    assert sc.get("A").label == "A"


@settings(max_examples=300, deadline=None)
@given(points, points, points)
def test_bisector_points_are_equidistant(a, b, t):
    if not far_apart(a, b):
        return
    m = construct(ToolKind.PERP_BISECTOR, [a, b])
    s = (t.x - m.anchor.x) * m.dir[0] + (t.y - m.anchor.y) * m.dir[1]
    q = Point(m.anchor.x + s * m.dir[0], m.anchor.y + s * m.dir[1])
    assert abs(q.dist(a) - q.dist(b)) < 1e-9


@settings(max_examples=300, deadline=None)
@given(points, points, points)
def test_angle_bisector_splits_evenly(a, v, b):
    if not far_apart(a, v, b, gap=1e-2):
        return
    ua = ((a.x - v.x) / a.dist(v), (a.y - v.y) / a.dist(v))
    ub = ((b.x - v.x) / b.dist(v), (b.y - v.y) / b.dist(v))
    if abs(ua[0] * ub[1] - ua[1] * ub[0]) < 1e-3:
        return
    r = construct(ToolKind.ANGLE_BISECTOR, [a, v, b])
    ang = lambda u: math.acos(max(-1.0, min(1.0, u[0] * r.dir[0] + u[1] * r.dir[1])))  # noqa: E731
    assert abs(ang(ua) - ang(ub)) < 1e-9


@settings(max_examples=300, deadline=None)
@given(points, st.floats(0.05, 1.5), points, st.floats(0.05, 1.5))
def test_circle_intersections_lie_on_both(c1, r1, c2, r2):
    a, b = Circle(c1, r1), Circle(c2, r2)
    for p in intersect(a, b):
        assert residual(a, p) < 1e-9 and residual(b, p) < 1e-9
