"""Geometry - Oriented Box Primitives

Exact 2-D operations on rotated word boxes: corner enumeration, IoU by convex
polygon clipping, expansion, convex hull and minimum-area enclosing rectangle.

Coordinates are in the image frame (origin top-left, y grows downward).
Polygons are lists of (x, y) tuples with positive signed area in the x/y
plane, which is what the clipping routine expects of its clip window.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from tools.errors import StrkitError

HALF_PI = math.pi / 2
QUARTER_PI = math.pi / 4

Polygon = List[Tuple[float, float]]


def canonical_angle(angle: float) -> float:
    """Map an angle into (-pi/2, pi/2]; a rectangle is unchanged by a half turn."""
    a = math.fmod(angle, math.pi)
    if a <= -HALF_PI:
        a += math.pi
    elif a > HALF_PI:
        a -= math.pi
    return a


def _require_finite(name: str, *values: float) -> None:
    for value in values:
        if not math.isfinite(value):
            raise StrkitError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        _require_finite("Point", self.x, self.y)


@dataclass(frozen=True)
class AxisRect:
    top: float
    left: float
    height: float
    width: float

    def __post_init__(self):
        _require_finite("AxisRect", self.top, self.left, self.height, self.width)
        if self.height < 0 or self.width < 0:
            raise StrkitError(f"AxisRect extents must be non-negative, got {self.height}x{self.width}")

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        return Point(self.left + self.width / 2, self.top + self.height / 2)

    def polygon(self) -> Polygon:
        return [
            (self.left, self.top),
            (self.right, self.top),
            (self.right, self.bottom),
            (self.left, self.bottom),
        ]

    def corners(self) -> List[Point]:
        return [Point(x, y) for x, y in self.polygon()]

    def contains_rect(self, other: "AxisRect") -> bool:
        return (
            self.left <= other.left
            and self.top <= other.top
            and other.right <= self.right
            and other.bottom <= self.bottom
        )


@dataclass(frozen=True)
class RotatedBox:
    """Oriented rectangle; `w` is measured along the `angle` direction (radians)."""

    cx: float
    cy: float
    w: float
    h: float
    angle: float = 0.0

    def __post_init__(self):
        _require_finite("RotatedBox", self.cx, self.cy, self.w, self.h, self.angle)
        if self.w < 0 or self.h < 0:
            raise StrkitError(f"RotatedBox extents must be non-negative, got {self.w}x{self.h}")
        object.__setattr__(self, "angle", canonical_angle(self.angle))

    @classmethod
    def from_degrees(cls, cx: float, cy: float, w: float, h: float, angle_deg: float) -> "RotatedBox":
        return cls(cx, cy, w, h, math.radians(angle_deg))

    @property
    def angle_deg(self) -> float:
        return math.degrees(self.angle)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> Point:
        return Point(self.cx, self.cy)

    @property
    def is_degenerate(self) -> bool:
        return self.w <= 0 or self.h <= 0

    def axes(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """Unit vectors along the width and height directions."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        return (c, s), (-s, c)

    def polygon(self) -> Polygon:
        (ux, uy), (vx, vy) = self.axes()
        hw, hh = self.w / 2, self.h / 2
        return [
            (self.cx - ux * hw - vx * hh, self.cy - uy * hw - vy * hh),
            (self.cx + ux * hw - vx * hh, self.cy + uy * hw - vy * hh),
            (self.cx + ux * hw + vx * hh, self.cy + uy * hw + vy * hh),
            (self.cx - ux * hw + vx * hh, self.cy - uy * hw + vy * hh),
        ]

    def corners(self) -> List[Point]:
        return [Point(x, y) for x, y in self.polygon()]


def polygon_area(poly: Polygon) -> float:
    """Signed shoelace area; positive for the orientation used throughout."""
    n = len(poly)
    if n < 3:
        return 0.0
    total = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return total / 2


def _side(ax: float, ay: float, bx: float, by: float, px: float, py: float) -> float:
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def clip_polygon(subject: Polygon, clip: Polygon) -> Polygon:
    """Sutherland-Hodgman clipping of `subject` against the convex window `clip`."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        source, output = output, []
        sx, sy = source[-1]
        s_side = _side(ax, ay, bx, by, sx, sy)
        for px, py in source:
            p_side = _side(ax, ay, bx, by, px, py)
            if p_side >= 0:
                if s_side < 0:
                    t = s_side / (s_side - p_side)
                    output.append((sx + t * (px - sx), sy + t * (py - sy)))
                output.append((px, py))
            elif s_side > 0:
                t = s_side / (s_side - p_side)
                output.append((sx + t * (px - sx), sy + t * (py - sy)))
            sx, sy, s_side = px, py, p_side
    return output


def intersection_area(subject: Polygon, clip: Polygon) -> float:
    """Area of the overlap of a polygon with a convex polygon."""
    return abs(polygon_area(clip_polygon(subject, clip)))


def axis_extents(b: RotatedBox) -> Tuple[float, float, float, float]:
    """(x0, y0, x1, y1) of a box whose angle is 0 or pi/2."""
    if b.angle == 0.0:
        hx, hy = b.w / 2, b.h / 2
    else:
        hx, hy = b.h / 2, b.w / 2
    return b.cx - hx, b.cy - hy, b.cx + hx, b.cy + hy


def is_axis_aligned(b: RotatedBox) -> bool:
    return b.angle == 0.0 or b.angle == HALF_PI


def _order_key(b: RotatedBox) -> Tuple[float, ...]:
    return (b.cx, b.cy, b.w, b.h, b.angle)


def iou(a: RotatedBox, b: RotatedBox) -> float:
    """Intersection over union of two rotated boxes; degenerate boxes give 0."""
    area_a = a.w * a.h
    area_b = b.w * b.h
    if area_a <= 0 or area_b <= 0:
        return 0.0
    if a == b:
        return 1.0

    if is_axis_aligned(a) and is_axis_aligned(b):
        ax0, ay0, ax1, ay1 = axis_extents(a)
        bx0, by0, bx1, by1 = axis_extents(b)
        ix = min(ax1, bx1) - max(ax0, bx0)
        iy = min(ay1, by1) - max(ay0, by0)
        inter = ix * iy if ix > 0 and iy > 0 else 0.0
    else:
        # fixed operand order keeps iou(a, b) == iou(b, a) bit for bit
        first, second = (a, b) if _order_key(a) <= _order_key(b) else (b, a)
        inter = intersection_area(first.polygon(), second.polygon())

    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def expand(b: RotatedBox, r_v: float, r_h: float) -> RotatedBox:
    """Grow each side by r times the box dimension, in the box's own frame."""
    _require_finite("expansion ratio", r_v, r_h)
    if r_v < 0 or r_h < 0:
        raise StrkitError(f"Expansion ratios must be non-negative, got r_v={r_v}, r_h={r_h}")
    return RotatedBox(b.cx, b.cy, b.w * (1 + 2 * r_h), b.h * (1 + 2 * r_v), b.angle)


def _turn(o: Tuple[float, float], a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_of_coords(coords: Polygon) -> Polygon:
    """`convex_hull` over raw (x, y) tuples."""
    if not coords:
        raise StrkitError("empty point set")

    pts = sorted(set(coords))
    if len(pts) <= 2:
        return pts

    lower: Polygon = []
    for p in pts:
        while len(lower) >= 2 and _turn(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)

    upper: Polygon = []
    for p in reversed(pts):
        while len(upper) >= 2 and _turn(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    return lower[:-1] + upper[:-1]


def convex_hull(points: Sequence[Point]) -> List[Point]:
    """Monotone-chain hull, counter-clockwise in the x/y plane, no collinear points.

    The output starts at the lexicographically smallest point.
    """
    return [Point(x, y) for x, y in hull_of_coords([(p.x, p.y) for p in points])]


def _quarter_turn(theta: float) -> float:
    """Map an edge direction into (-pi/4, pi/4]; rectangles repeat every quarter turn."""
    t = math.fmod(theta, HALF_PI)
    if t <= -QUARTER_PI:
        t += HALF_PI
    elif t > QUARTER_PI:
        t -= HALF_PI
    return t


def min_area_rect(points: Sequence[Point]) -> RotatedBox:
    """Rotating-calipers minimum-area rectangle; ties go to the smaller |angle|."""
    return min_area_rect_of_coords([(p.x, p.y) for p in points])


def min_area_rect_of_coords(coords: Polygon) -> RotatedBox:
    """`min_area_rect` over raw (x, y) tuples."""
    hull = hull_of_coords(coords)
    if len(hull) == 1:
        return RotatedBox(hull[0][0], hull[0][1], 0.0, 0.0, 0.0)

    best = None
    n = len(hull)
    for i in range(n):
        (px, py), (qx, qy) = hull[i], hull[(i + 1) % n]
        theta = _quarter_turn(math.atan2(qy - py, qx - px))
        ux, uy = math.cos(theta), math.sin(theta)
        proj_u = [x * ux + y * uy for x, y in hull]
        proj_v = [-x * uy + y * ux for x, y in hull]
        u0, u1 = min(proj_u), max(proj_u)
        v0, v1 = min(proj_v), max(proj_v)
        area = (u1 - u0) * (v1 - v0)

        if best is not None:
            tol = 1e-12 * max(best[0], 1e-300)
            if area > best[0] + tol:
                continue
            if abs(area - best[0]) <= tol and abs(theta) >= abs(best[1]):
                continue
        best = (area, theta, u0, u1, v0, v1)

    _, theta, u0, u1, v0, v1 = best
    ux, uy = math.cos(theta), math.sin(theta)
    cu, cv = (u0 + u1) / 2, (v0 + v1) / 2
    return RotatedBox(cu * ux - cv * uy, cu * uy + cv * ux, u1 - u0, v1 - v0, theta)


def aabb(b: RotatedBox) -> AxisRect:
    """Tightest axis-aligned rectangle covering the four corners."""
    if b.angle == 0.0:
        x0, y0, x1, y1 = axis_extents(b)
    else:
        poly = b.polygon()
        xs = [x for x, _ in poly]
        ys = [y for _, y in poly]
        x0, y0, x1, y1 = min(xs), min(ys), max(xs), max(ys)
    return AxisRect(top=y0, left=x0, height=y1 - y0, width=x1 - x0)
