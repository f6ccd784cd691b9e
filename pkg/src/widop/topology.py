"""Topological relations between axis-aligned boxes.

Relations are computed from per-axis overlap lengths: two boxes
intersect when every axis overlaps, touch when they do not intersect
but the gap between them stays within an epsilon, and one is upper than
another when it sits at or above the other's top while their ground
footprints overlap.  Distances compare box centroids.

`qualify_all` runs every pair of boxes in a knowledge base through the
relation checks in one vectorized sweep and asserts the results; the
`register_builtins` hook exposes the same checks to rule bodies.  Both
paths share the arithmetic, so a relation asserted in bulk always
agrees with the same relation tested inside a rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import BuiltinDescriptor, EvalContext, RuleEngine
from .geometry import Box3
from .kb import KnowledgeBase

RELATION_PROPERTIES = ("Intersect", "Touch", "Upper", "Connected")


@dataclass(frozen=True)
class TopoConfig:
    touch_epsilon: float = 0.1
    distance_tolerance: float = 0.10
    overlap_epsilon: float = 1e-9
    horizontal_distance: bool = False

    def __post_init__(self) -> None:
        if self.touch_epsilon < 0 or self.distance_tolerance < 0:
            raise ValueError("epsilons must be non-negative")
        if self.overlap_epsilon <= 0:
            raise ValueError("overlap_epsilon must be positive")


def _overlaps(b1: Box3, b2: Box3) -> tuple[float, float, float]:
    return tuple(min(b1.max_corner[a], b2.max_corner[a])
                 - max(b1.min_corner[a], b2.min_corner[a]) for a in range(3))


def gap_distance(b1: Box3, b2: Box3) -> float:
    """Shortest distance between the two boxes; zero when they meet."""
    ox, oy, oz = _overlaps(b1, b2)
    gx = max(0.0, -ox)
    gy = max(0.0, -oy)
    gz = max(0.0, -oz)
    return math.sqrt(gx * gx + gy * gy + gz * gz)


def intersects(b1: Box3, b2: Box3, config: TopoConfig | None = None) -> bool:
    config = config or TopoConfig()
    return all(o > config.overlap_epsilon for o in _overlaps(b1, b2))


def touches(b1: Box3, b2: Box3, config: TopoConfig | None = None) -> bool:
    config = config or TopoConfig()
    if intersects(b1, b2, config):
        return False
    return gap_distance(b1, b2) <= config.touch_epsilon


def connected(b1: Box3, b2: Box3, config: TopoConfig | None = None) -> bool:
    config = config or TopoConfig()
    return intersects(b1, b2, config) or touches(b1, b2, config)


def is_upper(b1: Box3, b2: Box3, config: TopoConfig | None = None) -> bool:
    """True when b1 rests at or above b2's top over a shared footprint."""
    config = config or TopoConfig()
    if b1.min_corner[2] < b2.max_corner[2] - config.touch_epsilon:
        return False
    ox, oy, _ = _overlaps(b1, b2)
    return ox > config.overlap_epsilon and oy > config.overlap_epsilon


def centroid_distance(b1: Box3, b2: Box3, config: TopoConfig | None = None) -> float:
    config = config or TopoConfig()
    c1, c2 = b1.centroid, b2.centroid
    dx = c1[0] - c2[0]
    dy = c1[1] - c2[1]
    if config.horizontal_distance:
        return math.sqrt(dx * dx + dy * dy)
    dz = c1[2] - c2[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def is_distant_from(b1: Box3, b2: Box3, expected: float,
                    config: TopoConfig | None = None) -> bool:
    """Centroid distance matches `expected` within the relative tolerance."""
    config = config or TopoConfig()
    if expected <= 0:
        return False
    actual = centroid_distance(b1, b2, config)
    return abs(actual - expected) <= config.distance_tolerance * expected


# -- bulk qualification -------------------------------------------------------


def _box_items(kb: KnowledgeBase) -> list[tuple[str, Box3]]:
    return [(ind, g) for ind, g in kb.geometry_items() if isinstance(g, Box3)]


def qualify_all(kb: KnowledgeBase, config: TopoConfig | None = None) -> int:
    """Assert Intersect/Touch/Upper/Connected over every box pair; returns new count."""
    config = config or TopoConfig()
    for prop in RELATION_PROPERTIES:
        if prop not in kb.properties:
            kb.declare_property(prop, "object")
    items = _box_items(kb)
    n = len(items)
    if n < 2:
        return 0
    mins = np.array([b.min_corner for _, b in items], dtype=np.float64)
    maxs = np.array([b.max_corner for _, b in items], dtype=np.float64)
    overlap = (np.minimum(maxs[:, None, :], maxs[None, :, :])
               - np.maximum(mins[:, None, :], mins[None, :, :]))
    eps = config.overlap_epsilon
    intersect = np.all(overlap > eps, axis=2)
    gaps = np.maximum(0.0, -overlap)
    gapd = np.sqrt(gaps[:, :, 0] * gaps[:, :, 0]
                   + gaps[:, :, 1] * gaps[:, :, 1]
                   + gaps[:, :, 2] * gaps[:, :, 2])
    touch = ~intersect & (gapd <= config.touch_epsilon)
    footprint = (overlap[:, :, 0] > eps) & (overlap[:, :, 1] > eps)
    upper = (mins[:, None, 2] >= maxs[None, :, 2] - config.touch_epsilon) & footprint
    conn = intersect | touch

    added = 0
    masks = {"Intersect": intersect, "Touch": touch, "Upper": upper, "Connected": conn}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for prop in RELATION_PROPERTIES:
                if masks[prop][i, j]:
                    added += kb.assert_object(items[i][0], prop, items[j][0])
    return added


# -- rule-body access -----------------------------------------------------------


def _pair_filter(check) -> callable:
    def handler(ctx: EvalContext, args: tuple) -> bool:
        g1 = ctx.kb.geometry(args[0]) if isinstance(args[0], str) else None
        g2 = ctx.kb.geometry(args[1]) if isinstance(args[1], str) else None
        if not isinstance(g1, Box3) or not isinstance(g2, Box3):
            return False
        return check(g1, g2)
    return handler


def register_builtins(engine: RuleEngine, config: TopoConfig | None = None) -> None:
    """Expose the box relations under the topo: namespace."""
    config = config or TopoConfig()
    for name, fn in (("Intersect", intersects), ("Touch", touches),
                     ("Upper", is_upper), ("Connected", connected)):
        engine.register(BuiltinDescriptor(
            "topo", name, 2, "filter",
            _pair_filter(lambda a, b, fn=fn: fn(a, b, config)), memoize=False))

    def distant(ctx: EvalContext, args: tuple) -> bool:
        g1 = ctx.kb.geometry(args[0]) if isinstance(args[0], str) else None
        g2 = ctx.kb.geometry(args[1]) if isinstance(args[1], str) else None
        expected = args[2]
        if not isinstance(g1, Box3) or not isinstance(g2, Box3):
            return False
        if isinstance(expected, bool) or not isinstance(expected, float):
            return False
        return is_distant_from(g1, g2, expected, config)

    engine.register(BuiltinDescriptor("topo", "isDistantFrom", 3, "filter",
                                      distant, memoize=False))
