"""Small 2-D geometry kernel shared by scene validation, graph extraction
and placement: point-in-polygon, point-to-segment distance and axis-aligned
rectangle overlap. Everything works on plain floats / (x, y) tuples."""

from __future__ import annotations

import math

Vec2 = tuple[float, float]


def seg_length(a: Vec2, b: Vec2) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def point_on_segment(a: Vec2, b: Vec2, offset: float) -> Vec2:
    """Point at arc-length ``offset`` from ``a`` along segment a->b."""
    length = seg_length(a, b)
    if length == 0.0:
        return a
    t = offset / length
    return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))


def point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    """Euclidean distance from point ``p`` to the closed segment a-b."""
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / denom
    t = max(0.0, min(1.0, t))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy)


def _orient(a: Vec2, b: Vec2, c: Vec2) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_properly_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool:
    """True if open segments ab and cd cross at an interior point."""
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def polygon_is_simple(vertices: list[Vec2]) -> bool:
    """No two non-adjacent edges intersect; adjacent edges share only the
    common vertex. Polygons this small (room shells) make O(n^2) fine."""
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a, b = edges[i]
        if seg_length(a, b) == 0.0:
            return False
        for j in range(i + 1, n):
            c, d = edges[j]
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if segments_properly_intersect(a, b, c, d):
                return False
    return True


def polygon_signed_area(vertices: list[Vec2]) -> float:
    area = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return 0.5 * area


def point_in_polygon(p: Vec2, vertices: list[Vec2], eps: float = 1e-9) -> bool:
    """Ray casting; points on the boundary count as inside."""
    n = len(vertices)
    px, py = p
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        if point_segment_distance(p, a, b) <= eps:
            return True
    inside = False
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        if (y0 > py) != (y1 > py):
            xs = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if xs > px:
                inside = not inside
    return inside


def polygon_bbox(vertices: list[Vec2]) -> tuple[float, float, float, float]:
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    return min(xs), min(ys), max(xs), max(ys)


def bbox_diagonal(vertices: list[Vec2]) -> float:
    x0, y0, x1, y1 = polygon_bbox(vertices)
    return math.hypot(x1 - x0, y1 - y0)


def rect_overlap_area(
    c1: Vec2, w1: float, d1: float, c2: Vec2, w2: float, d2: float
) -> float:
    """Overlap area of two axis-aligned rectangles given centers and full
    extents (width along x, depth along y)."""
    ox = min(c1[0] + w1 / 2, c2[0] + w2 / 2) - max(c1[0] - w1 / 2, c2[0] - w2 / 2)
    oy = min(c1[1] + d1 / 2, c2[1] + d2 / 2) - max(c1[1] - d1 / 2, c2[1] - d2 / 2)
    if ox <= 0.0 or oy <= 0.0:
        return 0.0
    return ox * oy


def rect_corners(center: Vec2, w: float, d: float) -> list[Vec2]:
    cx, cy = center
    return [
        (cx - w / 2, cy - d / 2),
        (cx + w / 2, cy - d / 2),
        (cx + w / 2, cy + d / 2),
        (cx - w / 2, cy + d / 2),
    ]


def rect_inside_polygon(
    center: Vec2, w: float, d: float, vertices: list[Vec2]
) -> bool:
    """Conservative test for convex shells: all four footprint corners
    inside. Good enough for the simple room polygons used here."""
    return all(point_in_polygon(c, vertices) for c in rect_corners(center, w, d))
