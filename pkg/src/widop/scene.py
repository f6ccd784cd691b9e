"""Synthetic railway scenes with ground truth, plus annotation scoring.

A scene is a flat ground strip along the x axis with equipment placed
on it: masts built from two vertical legs, signals built from a single
pole with a sparse lamp head, secondary signals carrying reflective
panels, and switchgear boxes.  Object points are sampled exactly on the
nominal shapes, then everything gets isotropic Gaussian noise; clutter
points are drawn uniformly over the scene volume and belong to nothing.

Ground truth is one labeled box per object.  The evaluator matches
annotations to truth greedily by horizontal centroid distance and
reports precision and recall, overall and per class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3, PointCloud
from .kb import ANY, KnowledgeBase

#: Sampling densities: points per meter of pole, per square meter of panel.
POLE_DENSITY = 80.0
SURFACE_DENSITY = 200.0
POLE_RADIUS = 0.02
MAST_LEG_OFFSET = 0.2
#: Panels hang on a bracket in front of their pole, not through it.
PANEL_STANDOFF = 0.15

#: Height ranges objects are drawn from, kept inside the concept height
#: bands with margin for measurement error on noisy clouds.
HEIGHT_RANGES: dict[str, tuple[float, float]] = {
    "BigMast": (6.4, 7.6),
    "NormalMast": (5.25, 5.9),
    "MainSignal": (4.3, 5.7),
    "Vorsignalbake": (1.7, 2.3),
    "Breakpoint_table": (1.2, 1.8),
    "Chess_board": (1.1, 1.4),
    "Schalthaus": (0.62, 0.88),
    "SchaltSchrank": (0.3, 0.4),
}

CABINET_FOOTPRINT = (0.9, 0.5)


class SceneError(Exception):
    """Raised when a scene specification cannot produce a consistent scene."""


@dataclass(frozen=True)
class Placement:
    """One object to synthesize; height None draws from the class range."""

    class_name: str
    x: float
    y: float
    height: float | None = None


@dataclass(frozen=True)
class SceneSpec:
    track_length: float = 500.0
    strip_width: float = 8.0
    noise_sigma: float = 0.02
    clutter_fraction: float = 0.05
    ground_density: float = 4.0
    seed: int = 0
    placements: tuple[Placement, ...] | None = None

    def __post_init__(self) -> None:
        if self.track_length <= 0 or self.strip_width <= 0:
            raise SceneError("track dimensions must be positive")
        if self.noise_sigma < 0 or self.clutter_fraction < 0:
            raise SceneError("noise_sigma and clutter_fraction must be non-negative")
        if self.ground_density < 0:
            raise SceneError("ground_density must be non-negative")


@dataclass(frozen=True)
class TruthObject:
    ident: str
    class_name: str
    box: Box3


@dataclass
class Scene:
    cloud: PointCloud
    truth: list[TruthObject]
    spec: SceneSpec
    structured_count: int
    clutter_count: int


def default_placements(track_length: float = 500.0) -> tuple[Placement, ...]:
    """Masts every 50 m on one side, signals and switchgear on the other."""
    out: list[Placement] = []
    k = 0
    x = 25.0
    while x < track_length - 5.0:
        cls = "BigMast" if k % 2 == 0 else "NormalMast"
        out.append(Placement(cls, x, -3.0))
        k += 1
        x += 50.0
    x = 40.0
    while x < track_length - 5.0:
        out.append(Placement("MainSignal", x, 3.0))
        x += 100.0
    k = 0
    x = 65.0
    while x < track_length - 5.0:
        cls = "Schalthaus" if k % 2 == 0 else "SchaltSchrank"
        out.append(Placement(cls, x, 3.0))
        k += 1
        x += 200.0
    return tuple(out)


# -- point samplers ------------------------------------------------------------


def _pole(rng: np.random.Generator, x: float, y: float, z0: float,
          height: float) -> np.ndarray:
    count = max(2, int(round(height * POLE_DENSITY)))
    t = rng.uniform(0.0, height, size=count)
    radius = POLE_RADIUS * np.sqrt(rng.uniform(0.0, 1.0, size=count))
    phi = rng.uniform(0.0, 2.0 * math.pi, size=count)
    pts = np.empty((count, 3))
    pts[:, 0] = x + radius * np.cos(phi)
    pts[:, 1] = y + radius * np.sin(phi)
    pts[:, 2] = z0 + t
    return pts


def _panel(rng: np.random.Generator, center: tuple[float, float, float],
           width: float, height: float) -> np.ndarray:
    """Vertical rectangle facing the track (normal along y)."""
    count = max(4, int(round(width * height * SURFACE_DENSITY)))
    pts = np.empty((count, 3))
    pts[:, 0] = center[0] + rng.uniform(-width / 2, width / 2, size=count)
    pts[:, 1] = center[1]
    pts[:, 2] = center[2] + rng.uniform(-height / 2, height / 2, size=count)
    return pts


def _blob(rng: np.random.Generator, center: tuple[float, float, float],
          size: tuple[float, float, float], count: int) -> np.ndarray:
    """Sparse filler inside a box; too thin in structure to form primitives."""
    pts = np.empty((count, 3))
    for axis in range(3):
        half = size[axis] / 2
        pts[:, axis] = center[axis] + rng.uniform(-half, half, size=count)
    return pts


def _cabinet(rng: np.random.Generator, x: float, y: float,
             height: float) -> np.ndarray:
    """Four walls plus a roof over a rectangular footprint."""
    wx, wy = CABINET_FOOTPRINT
    faces = []
    for sign in (-1.0, 1.0):
        count = max(4, int(round(wx * height * SURFACE_DENSITY)))
        face = np.empty((count, 3))
        face[:, 0] = x + rng.uniform(-wx / 2, wx / 2, size=count)
        face[:, 1] = y + sign * wy / 2
        face[:, 2] = rng.uniform(0.0, height, size=count)
        faces.append(face)
        count = max(4, int(round(wy * height * SURFACE_DENSITY)))
        face = np.empty((count, 3))
        face[:, 0] = x + sign * wx / 2
        face[:, 1] = y + rng.uniform(-wy / 2, wy / 2, size=count)
        face[:, 2] = rng.uniform(0.0, height, size=count)
        faces.append(face)
    count = max(4, int(round(wx * wy * SURFACE_DENSITY)))
    roof = np.empty((count, 3))
    roof[:, 0] = x + rng.uniform(-wx / 2, wx / 2, size=count)
    roof[:, 1] = y + rng.uniform(-wy / 2, wy / 2, size=count)
    roof[:, 2] = height
    faces.append(roof)
    return np.vstack(faces)


def _sample_object(rng: np.random.Generator, placement: Placement,
                   height: float) -> tuple[np.ndarray, Box3]:
    """Exact surface points and the nominal bounding box for one object."""
    x, y = placement.x, placement.y
    cls = placement.class_name
    if cls in ("BigMast", "NormalMast"):
        pts = np.vstack([
            _pole(rng, x - MAST_LEG_OFFSET, y, 0.0, height),
            _pole(rng, x + MAST_LEG_OFFSET, y, 0.0, height),
        ])
        r = POLE_RADIUS
        box = Box3((x - MAST_LEG_OFFSET - r, y - r, 0.0),
                   (x + MAST_LEG_OFFSET + r, y + r, height))
    elif cls == "MainSignal":
        head = (0.16, 0.12, 0.3)
        pts = np.vstack([
            _pole(rng, x, y, 0.0, height),
            _blob(rng, (x, y, height - head[2] / 2), head, count=30),
        ])
        box = Box3((x - head[0] / 2, y - head[1] / 2, 0.0),
                   (x + head[0] / 2, y + head[1] / 2, height))
    elif cls == "Vorsignalbake":
        panel_w, panel_h = 0.5, 0.6
        pts = np.vstack([
            _pole(rng, x, y, 0.0, height),
            _panel(rng, (x, y + PANEL_STANDOFF, height - panel_h / 2),
                   panel_w, panel_h),
        ])
        box = Box3((x - panel_w / 2, y - POLE_RADIUS, 0.0),
                   (x + panel_w / 2, y + PANEL_STANDOFF, height))
    elif cls == "Breakpoint_table":
        panel_w, panel_h = 0.6, 0.5
        leg = 0.25
        pts = np.vstack([
            _pole(rng, x - leg, y, 0.0, height),
            _pole(rng, x + leg, y, 0.0, height),
            _panel(rng, (x, y + PANEL_STANDOFF, height - panel_h / 2),
                   panel_w, panel_h),
        ])
        box = Box3((x - panel_w / 2, y - POLE_RADIUS, 0.0),
                   (x + panel_w / 2, y + PANEL_STANDOFF, height))
    elif cls == "Chess_board":
        panel = 0.45
        pts = np.vstack([
            _pole(rng, x, y, 0.0, height),
            _panel(rng, (x, y + PANEL_STANDOFF, height - panel / 2),
                   panel, panel),
        ])
        box = Box3((x - panel / 2, y - POLE_RADIUS, 0.0),
                   (x + panel / 2, y + PANEL_STANDOFF, height))
    elif cls in ("Schalthaus", "SchaltSchrank"):
        pts = _cabinet(rng, x, y, height)
        wx, wy = CABINET_FOOTPRINT
        box = Box3((x - wx / 2, y - wy / 2, 0.0), (x + wx / 2, y + wy / 2, height))
    else:
        raise SceneError(f"no sampler for class {placement.class_name!r}")
    return pts, box


# -- generation ------------------------------------------------------------------


def generate_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    placements = (spec.placements if spec.placements is not None
                  else default_placements(spec.track_length))

    half_w = spec.strip_width / 2
    ground_count = int(round(spec.track_length * spec.strip_width
                             * spec.ground_density))
    ground = np.empty((ground_count, 3))
    ground[:, 0] = rng.uniform(0.0, spec.track_length, size=ground_count)
    ground[:, 1] = rng.uniform(-half_w, half_w, size=ground_count)
    ground[:, 2] = 0.0

    chunks = [ground]
    nominal: list[tuple[Placement, Box3, int]] = []
    max_height = 0.0
    for placement in placements:
        height = placement.height
        if height is None:
            if placement.class_name not in HEIGHT_RANGES:
                raise SceneError(f"no height range for {placement.class_name!r}")
            lo, hi = HEIGHT_RANGES[placement.class_name]
            height = float(rng.uniform(lo, hi))
        pts, box = _sample_object(rng, placement, height)
        chunks.append(pts)
        nominal.append((placement, box, pts.shape[0]))
        max_height = max(max_height, height)

    structured = np.vstack(chunks)
    structured_count = structured.shape[0]
    if spec.noise_sigma > 0:
        structured = structured + rng.normal(0.0, spec.noise_sigma,
                                             size=structured.shape)

    clutter_count = int(round(spec.clutter_fraction * structured_count))
    if clutter_count:
        clutter = np.empty((clutter_count, 3))
        clutter[:, 0] = rng.uniform(0.0, spec.track_length, size=clutter_count)
        clutter[:, 1] = rng.uniform(-half_w, half_w, size=clutter_count)
        clutter[:, 2] = rng.uniform(0.0, max_height + 1.0, size=clutter_count)
        points = np.vstack([structured, clutter])
    else:
        points = structured

    pad = 3.0 * spec.noise_sigma
    truth = []
    offset = ground_count
    for index, (placement, box, count) in enumerate(nominal, start=1):
        padded = Box3(tuple(c - pad for c in box.min_corner),
                      tuple(c + pad for c in box.max_corner))
        truth.append(TruthObject(f"truth_{index}", placement.class_name, padded))
        if count < 20:
            raise SceneError(f"{placement.class_name} at x={placement.x} has "
                             f"only {count} points")
        own = structured[offset:offset + count]
        inside = np.mean([padded.contains(tuple(p)) for p in own])
        if inside < 0.95:
            raise SceneError(f"truth box for {placement.class_name} at "
                             f"x={placement.x} covers only {inside:.0%} of its points")
        offset += count

    for i, a in enumerate(truth):
        for b in truth[i + 1:]:
            if _boxes_overlap(a.box, b.box):
                raise SceneError(f"truth boxes {a.ident} and {b.ident} overlap")

    return Scene(PointCloud(points), truth, spec, structured_count, clutter_count)


def _boxes_overlap(a: Box3, b: Box3) -> bool:
    return all(min(a.max_corner[k], b.max_corner[k])
               > max(a.min_corner[k], b.min_corner[k]) for k in range(3))


# -- truth serialization ----------------------------------------------------------


def write_truth(path, truth: list[TruthObject]) -> None:
    kb = KnowledgeBase()
    for cls in sorted({t.class_name for t in truth}):
        kb.declare_concept(cls)
    for t in truth:
        kb.assert_class(t.ident, t.class_name)
        kb.attach_geometry(t.ident, t.box)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(kb.serialize())


def read_truth(path) -> list[TruthObject]:
    with open(path, "r", encoding="utf-8") as fh:
        kb = KnowledgeBase.deserialize(fh.read())
    out = []
    for ind, geom in kb.geometry_items():
        if not isinstance(geom, Box3):
            continue
        classes = [a.predicate for a in kb.query(ind, ANY, ANY)
                   if a.kind == "class"]
        if len(classes) != 1:
            raise SceneError(f"truth object {ind} needs exactly one class")
        out.append(TruthObject(ind, classes[0], geom))
    return out


# -- evaluation ---------------------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    ident: str
    class_name: str | None
    box: Box3


@dataclass
class ClassScore:
    true_positives: int = 0
    false_positives: int = 0
    truth_count: int = 0

    @property
    def annotated(self) -> int:
        return self.true_positives + self.false_positives

    @property
    def precision(self) -> float:
        return self.true_positives / self.annotated if self.annotated else 1.0

    @property
    def recall(self) -> float:
        return self.true_positives / self.truth_count if self.truth_count else 1.0


@dataclass
class EvaluationResult:
    per_class: dict[str, ClassScore] = field(default_factory=dict)
    matches: list[tuple[str, str, float]] = field(default_factory=list)
    annotated_count: int = 0
    truth_count: int = 0
    detected_count: int | None = None

    @property
    def true_positive_count(self) -> int:
        return len(self.matches)

    @property
    def precision(self) -> float:
        if self.annotated_count == 0:
            return 1.0
        return self.true_positive_count / self.annotated_count

    @property
    def recall(self) -> float:
        if self.truth_count == 0:
            return 1.0
        return self.true_positive_count / self.truth_count


def _horizontal_distance(a: Box3, b: Box3) -> float:
    ca, cb = a.centroid, b.centroid
    return math.hypot(ca[0] - cb[0], ca[1] - cb[1])


def _class_compatible(annotated: str, truth: str, kb: KnowledgeBase | None,
                      strict: bool) -> bool:
    if annotated == truth:
        return True
    if strict or kb is None or not kb.has_concept(truth):
        return False
    return annotated in kb.ancestors(truth)


def evaluate(annotations: list[Annotation], truth: list[TruthObject],
             match_distance: float = 1.0, kb: KnowledgeBase | None = None,
             strict: bool = False,
             detected_count: int | None = None) -> EvaluationResult:
    """Greedy one-to-one matching of annotations against ground truth.

    A pair is a candidate when the horizontal distance between box
    centroids is at most `match_distance` and the annotated class equals
    the truth class or (unless strict) is one of its ancestors in `kb`.
    Detections without any class annotation never count against
    precision; they are listed only through `detected_count`.
    """
    labeled = [a for a in annotations if a.class_name is not None]
    result = EvaluationResult(annotated_count=len(labeled),
                              truth_count=len(truth),
                              detected_count=detected_count)
    for t in truth:
        result.per_class.setdefault(t.class_name, ClassScore()).truth_count += 1

    candidates = []
    for ai, ann in enumerate(labeled):
        for ti, t in enumerate(truth):
            d = _horizontal_distance(ann.box, t.box)
            if d <= match_distance and _class_compatible(
                    ann.class_name, t.class_name, kb, strict):
                candidates.append((d, ai, ti))
    candidates.sort()
    used_a: set[int] = set()
    used_t: set[int] = set()
    for d, ai, ti in candidates:
        if ai in used_a or ti in used_t:
            continue
        used_a.add(ai)
        used_t.add(ti)
        t = truth[ti]
        result.matches.append((labeled[ai].ident, t.ident, d))
        result.per_class[t.class_name].true_positives += 1
    for ai, ann in enumerate(labeled):
        if ai not in used_a:
            result.per_class.setdefault(ann.class_name,
                                        ClassScore()).false_positives += 1
    return result


def render_report(result: EvaluationResult) -> str:
    rows = [("class", "truth", "annotated", "matched", "precision", "recall")]
    for cls in sorted(result.per_class):
        s = result.per_class[cls]
        rows.append((cls, str(s.truth_count), str(s.annotated),
                     str(s.true_positives), f"{s.precision:.3f}", f"{s.recall:.3f}"))
    widths = [max(len(r[c]) for r in rows) for c in range(6)]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip()
             for row in rows]
    lines.append("")
    if result.detected_count is not None:
        lines.append(f"detected={result.detected_count}")
    lines.append(f"annotated={result.annotated_count}")
    lines.append(f"truth={result.truth_count}")
    lines.append(f"matched={result.true_positive_count}")
    lines.append(f"precision={result.precision:.3f}")
    lines.append(f"recall={result.recall:.3f}")
    return "\n".join(lines) + "\n"
