import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull

from tools.errors import StrkitError
from tools.geometry import (
    AxisRect,
    Point,
    RotatedBox,
    aabb,
    canonical_angle,
    convex_hull,
    expand,
    iou,
    min_area_rect,
    polygon_area,
)


def random_box(rng):
    return RotatedBox(
        rng.uniform(-1, 1),
        rng.uniform(-1, 1),
        rng.uniform(0.5, 2.0),
        rng.uniform(0.5, 2.0),
        rng.uniform(-math.pi, math.pi),
    )


def chords(box, xs):
    """Lowest and highest y of a convex box on each vertical line x."""
    poly = np.array(box.polygon())
    x1, y1 = poly[:, 0, None], poly[:, 1, None]
    x2, y2 = np.roll(poly[:, 0], -1)[:, None], np.roll(poly[:, 1], -1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (xs - x1) / (x2 - x1)
        ys = y1 + t * (y2 - y1)
    crossing = (t >= 0) & (t <= 1)
    return np.where(crossing, ys, np.inf).min(axis=0), np.where(crossing, ys, -np.inf).max(axis=0)


def raster_iou(a, b, step=2.5e-4):
    """Column rasterization: exact chord lengths on vertical lines `step` apart."""
    corners = a.polygon() + b.polygon()
    x0, x1 = min(x for x, _ in corners), max(x for x, _ in corners)
    columns = int(math.ceil((x1 - x0) / step))
    xs = x0 + (np.arange(columns) + 0.5) * (x1 - x0) / columns
    (lo_a, hi_a), (lo_b, hi_b) = chords(a, xs), chords(b, xs)
    inter = np.maximum(0.0, np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b)).sum()
    union = np.maximum(0.0, hi_a - lo_a).sum() + np.maximum(0.0, hi_b - lo_b).sum() - inter
    return inter / union if union > 0 else 0.0


class TestRotatedBox:
    def test_angle_is_canonical(self):
        assert RotatedBox(0, 0, 2, 1, 3 * math.pi / 4).angle == pytest.approx(-math.pi / 4)
        assert RotatedBox(0, 0, 2, 1, -math.pi / 2).angle == pytest.approx(math.pi / 2)
        assert canonical_angle(math.pi) == pytest.approx(0.0)

    def test_corners_follow_the_width_axis(self):
        corners = RotatedBox(10, 20, 4, 2).corners()
        assert corners == [Point(8, 19), Point(12, 19), Point(12, 21), Point(8, 21)]

    def test_rejects_negative_and_non_finite(self):
        with pytest.raises(StrkitError):
            RotatedBox(0, 0, -1, 1)
        with pytest.raises(StrkitError):
            RotatedBox(float("nan"), 0, 1, 1)

    def test_degrees_constructor(self):
        box = RotatedBox.from_degrees(0, 0, 2, 1, 30)
        assert box.angle_deg == pytest.approx(30)


class TestIou:
    def test_identical_boxes(self):
        b = RotatedBox(3, 4, 10, 2, 0.3)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(RotatedBox(0, 0, 1, 1), RotatedBox(5, 5, 1, 1)) == 0.0

    def test_quarter_overlap(self):
        assert iou(RotatedBox(0, 0, 2, 2), RotatedBox(1, 1, 2, 2)) == pytest.approx(1 / 7)

    def test_half_shift(self):
        assert iou(RotatedBox(0, 0, 2, 2), RotatedBox(1, 0, 2, 2)) == pytest.approx(1 / 3)

    def test_rotated_square_inside_axis_square(self):
        diamond = RotatedBox(0, 0, math.sqrt(2), math.sqrt(2), math.pi / 4)
        square = RotatedBox(0, 0, 2, 2)
        assert iou(diamond, square) == pytest.approx(0.5)

    def test_degenerate_box_gives_zero(self):
        assert iou(RotatedBox(0, 0, 0, 2), RotatedBox(0, 0, 2, 2)) == 0.0

    def test_quarter_turn_equals_swapped_extents(self):
        a = RotatedBox(0, 0, 4, 2, math.pi / 2)
        b = RotatedBox(0, 0, 2, 4)
        assert iou(a, b) == pytest.approx(1.0)

    def test_symmetric_bit_for_bit(self, rng):
        for _ in range(500):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0

    def test_matches_rasterization(self, rng):
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=2e-3)


class TestExpand:
    def test_grows_in_box_frame(self):
        grown = expand(RotatedBox(5, 5, 10, 2, 0.2), r_v=0.5, r_h=1.0)
        assert (grown.w, grown.h) == (30, 4)
        assert (grown.cx, grown.cy, grown.angle) == (5, 5, pytest.approx(0.2))

    def test_zero_ratios_keep_box(self):
        b = RotatedBox(1, 2, 3, 4, 0.1)
        assert expand(b, 0, 0) == b

    def test_negative_ratio_rejected(self):
        with pytest.raises(StrkitError):
            expand(RotatedBox(0, 0, 1, 1), -0.1, 0)


class TestConvexHull:
    def test_square_with_interior_and_collinear_points(self):
        pts = [Point(0, 0), Point(2, 0), Point(1, 0), Point(2, 2), Point(0, 2), Point(1, 1), Point(0, 1)]
        assert convex_hull(pts) == [Point(0, 0), Point(2, 0), Point(2, 2), Point(0, 2)]

    def test_degenerate_inputs(self):
        assert convex_hull([Point(1, 1), Point(1, 1)]) == [Point(1, 1)]
        assert convex_hull([Point(0, 0), Point(3, 3)]) == [Point(0, 0), Point(3, 3)]
        with pytest.raises(StrkitError, match="empty point set"):
            convex_hull([])

    def test_matches_qhull(self, rng):
        for _ in range(50):
            coords = rng.normal(size=(int(rng.integers(3, 60)), 2))
            hull = convex_hull([Point(x, y) for x, y in coords])
            reference = ConvexHull(coords)
            assert {(p.x, p.y) for p in hull} == {tuple(coords[k]) for k in reference.vertices}
            assert polygon_area([(p.x, p.y) for p in hull]) == pytest.approx(reference.volume)
            assert hull[0] == min(hull, key=lambda p: (p.x, p.y))


def bounding_area(coords, theta):
    c, s = np.cos(theta), np.sin(theta)
    u = coords[:, 0, None] * c + coords[:, 1, None] * s
    v = -coords[:, 0, None] * s + coords[:, 1, None] * c
    return (u.max(axis=0) - u.min(axis=0)) * (v.max(axis=0) - v.min(axis=0))


class TestMinAreaRect:
    def test_axis_aligned_rectangle(self):
        box = min_area_rect([Point(0, 0), Point(4, 0), Point(4, 2), Point(0, 2), Point(1, 1)])
        assert box == RotatedBox(2, 1, 4, 2, 0.0)

    def test_diamond_prefers_quarter_pi(self):
        box = min_area_rect([Point(0, 1), Point(1, 0), Point(0, -1), Point(-1, 0)])
        assert box.area == pytest.approx(2.0)
        assert box.angle == pytest.approx(math.pi / 4)
        assert (box.cx, box.cy) == (pytest.approx(0.0, abs=1e-12), pytest.approx(0.0, abs=1e-12))

    def test_single_point(self):
        assert min_area_rect([Point(3, 4)]) == RotatedBox(3, 4, 0, 0)

    def test_segment(self):
        box = min_area_rect([Point(0, 0), Point(4, 0)])
        assert (box.cx, box.cy, box.w, box.h) == (2, 0, 4, 0)

    def test_matches_angle_sweep(self, rng):
        sweep = np.linspace(0, math.pi / 2, 100_000, endpoint=False)
        step = sweep[1] - sweep[0]
        for _ in range(100):
            coords = rng.normal(size=(int(rng.integers(3, 40)), 2)) * rng.uniform(0.5, 5, size=2)
            box = min_area_rect([Point(x, y) for x, y in coords])

            areas = bounding_area(coords, sweep)
            dips = np.flatnonzero((areas <= np.roll(areas, 1)) & (areas <= np.roll(areas, -1)))
            oracle = areas.min()
            for k in dips[np.argsort(areas[dips])[:8]]:
                refined = minimize_scalar(
                    lambda t: bounding_area(coords, np.array([t]))[0],
                    bounds=(sweep[k] - step, sweep[k] + step),
                    method="bounded",
                    options={"xatol": 1e-12},
                )
                oracle = min(oracle, refined.fun)
            assert box.area == pytest.approx(bounding_area(coords, np.array([box.angle]))[0], rel=1e-9)
            assert box.area == pytest.approx(oracle, rel=1e-6)
            assert -math.pi / 4 < box.angle <= math.pi / 4

    def test_encloses_every_point(self, rng):
        coords = rng.uniform(-10, 10, size=(30, 2))
        box = min_area_rect([Point(x, y) for x, y in coords])
        (ux, uy), (vx, vy) = box.axes()
        for x, y in coords:
            dx, dy = x - box.cx, y - box.cy
            assert abs(dx * ux + dy * uy) <= box.w / 2 + 1e-9
            assert abs(dx * vx + dy * vy) <= box.h / 2 + 1e-9


class TestAabb:
    def test_axis_box(self):
        assert aabb(RotatedBox(5, 5, 4, 2)) == AxisRect(top=4, left=3, height=2, width=4)

    def test_quarter_turn(self):
        r = aabb(RotatedBox(0, 0, 10, 2, math.pi / 2))
        assert (r.width, r.height) == (pytest.approx(2), pytest.approx(10))

    def test_covers_corners(self, rng):
        for _ in range(50):
            b = random_box(rng)
            r = aabb(b)
            for x, y in b.polygon():
                assert r.left - 1e-12 <= x <= r.right + 1e-12
                assert r.top - 1e-12 <= y <= r.bottom + 1e-12


def rigid(box, phi, tx, ty):
    c, s = math.cos(phi), math.sin(phi)
    return RotatedBox(c * box.cx - s * box.cy + tx, s * box.cx + c * box.cy + ty, box.w, box.h, box.angle + phi)


class TestProperties:
    def test_iou_invariant_under_rigid_motion(self, rng):
        for _ in range(100):
            a, b = random_box(rng), random_box(rng)
            phi, tx, ty = rng.uniform(-math.pi, math.pi), rng.uniform(-50, 50), rng.uniform(-50, 50)
            assert iou(rigid(a, phi, tx, ty), rigid(b, phi, tx, ty)) == pytest.approx(iou(a, b), abs=1e-9)

    def test_expand_matches_local_frame_oracle(self):
        box = RotatedBox(3, -2, 4, 2, math.pi / 6)
        grown = expand(box, r_v=0.0, r_h=0.25)
        (ux, uy), (vx, vy) = box.axes()
        hw, hh = box.w * 1.5 / 2, box.h / 2
        expected = [
            (box.cx + sx * hw * ux + sy * hh * vx, box.cy + sx * hw * uy + sy * hh * vy)
            for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
        ]
        for (x, y), (ex, ey) in zip(grown.polygon(), expected):
            assert (x, y) == (pytest.approx(ex), pytest.approx(ey))

    def test_expand_nests_boxes(self, rng):
        b = random_box(rng)
        small, large = expand(b, 0.2, 0.3), expand(b, 0.5, 1.0)
        assert iou(small, large) == pytest.approx(small.area / large.area)

    def test_min_area_rect_recovers_box(self, rng):
        for _ in range(100):
            b = random_box(rng)
            found = min_area_rect(b.corners())
            assert found.area == pytest.approx(b.area, rel=1e-9)
            assert (found.cx, found.cy) == (pytest.approx(b.cx), pytest.approx(b.cy))
            assert iou(found, b) == pytest.approx(1.0, abs=1e-6)

    def test_min_area_rect_area_invariant_under_rigid_motion(self, rng):
        coords = rng.normal(size=(25, 2))
        phi = 0.7
        c, s = math.cos(phi), math.sin(phi)
        moved = [Point(c * x - s * y + 4, s * x + c * y - 9) for x, y in coords]
        original = min_area_rect([Point(x, y) for x, y in coords])
        assert min_area_rect(moved).area == pytest.approx(original.area, rel=1e-6)

    def test_aabb_of_diamond(self):
        r = aabb(RotatedBox(0, 0, 1, 1, math.pi / 4))
        assert (r.width, r.height) == (pytest.approx(math.sqrt(2)), pytest.approx(math.sqrt(2)))

    def test_axis_rect_corners(self):
        assert AxisRect(top=1, left=2, height=3, width=4).corners() == [
            Point(2, 1),
            Point(6, 1),
            Point(6, 4),
            Point(2, 4),
        ]
