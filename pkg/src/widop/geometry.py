"""Point-cloud primitives and geometric detectors.

Clouds live in a z-up metric frame.  Detection is grid-based: vertical
structures show up as grid cells whose points span a tall z range,
horizontal structures as compact-height clusters with a wide footprint.
Shape extraction (lines, planes) uses RANSAC with least-squares
refinement; everything is deterministic for a fixed DetectorConfig seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree


class GeometryError(ValueError):
    """Raised for malformed clouds, degenerate inputs, or bad parameters."""


def _as_float_triple(values: Sequence[float]) -> tuple[float, float, float]:
    if len(values) != 3:
        raise GeometryError(f"expected 3 coordinates, got {len(values)}")
    triple = tuple(float(v) for v in values)
    if not all(math.isfinite(v) for v in triple):
        raise GeometryError(f"coordinates must be finite, got {triple}")
    return triple  # type: ignore[return-value]


@dataclass(frozen=True)
class Box3:
    """Axis-aligned box given by its min and max corners."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "min_corner", _as_float_triple(self.min_corner))
        object.__setattr__(self, "max_corner", _as_float_triple(self.max_corner))
        for lo, hi in zip(self.min_corner, self.max_corner):
            if lo > hi:
                raise GeometryError(f"min corner exceeds max corner: {lo} > {hi}")

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Box3":
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            raise GeometryError("cannot build a box from an empty point set")
        return cls(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))

    @property
    def centroid(self) -> tuple[float, float, float]:
        return tuple((lo + hi) / 2.0 for lo, hi in zip(self.min_corner, self.max_corner))

    @property
    def extents(self) -> tuple[float, float, float]:
        return tuple(hi - lo for lo, hi in zip(self.min_corner, self.max_corner))

    def corners(self) -> list[tuple[float, float, float]]:
        """All 8 corners, in binary order of (x, y, z) min/max choices.

        Corner k picks max on axis a when bit (2 - a) of k is set, so
        corner 0 is the min corner and corner 7 the max corner.
        """
        out = []
        for k in range(8):
            out.append(tuple(
                self.max_corner[axis] if (k >> (2 - axis)) & 1 else self.min_corner[axis]
                for axis in range(3)
            ))
        return out

    def contains(self, point: Sequence[float]) -> bool:
        p = _as_float_triple(point)
        return all(lo <= v <= hi for lo, v, hi in zip(self.min_corner, p, self.max_corner))


def _canonical_direction(vec: np.ndarray) -> tuple[float, float, float]:
    """Normalize and fix the sign so the largest-magnitude component is positive."""
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise GeometryError("zero-length direction vector")
    unit = vec / norm
    pivot = int(np.argmax(np.abs(unit)))
    if unit[pivot] < 0:
        unit = -unit
    return tuple(float(v) for v in unit)


@dataclass(frozen=True)
class Line3:
    """3D line fitted to inliers: anchor point, unit direction, extent along the axis."""

    anchor: tuple[float, float, float]
    direction: tuple[float, float, float]
    inlier_count: int
    extent: tuple[float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchor", _as_float_triple(self.anchor))
        object.__setattr__(self, "direction", _canonical_direction(np.asarray(self.direction, dtype=float)))
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))
        if self.inlier_count < 0:
            raise GeometryError("inlier count must be non-negative")
        if self.extent[0] > self.extent[1]:
            raise GeometryError("line extent must be ordered (min, max)")

    def point_at(self, t: float) -> tuple[float, float, float]:
        return tuple(a + t * d for a, d in zip(self.anchor, self.direction))


@dataclass(frozen=True)
class Plane3:
    """Plane in Hessian form: points p with dot(normal, p) == offset."""

    normal: tuple[float, float, float]
    offset: float
    inlier_count: int

    def __post_init__(self) -> None:
        raw = np.asarray(self.normal, dtype=float)
        scale = float(np.linalg.norm(raw))
        unit = _canonical_direction(raw)
        # Offset belongs to the Hessian pair: rescale it with the
        # normalization and flip it with the sign canonicalization,
        # or dot(normal, p) == offset stops describing the same plane.
        offset = float(self.offset) / scale
        if float(np.dot(unit, raw)) < 0.0:
            offset = -offset
        object.__setattr__(self, "normal", unit)
        object.__setattr__(self, "offset", offset)
        if self.inlier_count < 0:
            raise GeometryError("inlier count must be non-negative")


@dataclass
class PointCloud:
    """Immutable-by-convention wrapper around an (N, 3) float64 array."""

    _points: np.ndarray

    def __init__(self, points: np.ndarray | Iterable[Sequence[float]]) -> None:
        arr = np.asarray(points, dtype=float)
        if arr.size == 0:
            arr = np.zeros((0, 3), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise GeometryError(f"point array must have shape (N, 3), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise GeometryError("point coordinates must be finite")
        self._points = arr

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return int(self._points.shape[0])

    def __iter__(self) -> Iterator[tuple[float, float, float]]:
        for row in self._points:
            yield (float(row[0]), float(row[1]), float(row[2]))

    def translated(self, offset: Sequence[float]) -> "PointCloud":
        return PointCloud(self._points + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class DetectorConfig:
    """Tunable parameters for the grid and RANSAC detectors.

    The defaults suit trackside structures a metre or taller; scenes with
    smaller street furniture need a lower vertical_extent_threshold.
    """

    grid_cell: float = 0.5
    vertical_extent_threshold: float = 1.0
    segmentation_radius: float = 1.5
    min_cell_points: int = 5
    max_cell_gap: float = 0.5
    ransac_iterations: int = 500
    inlier_distance: float = 0.05
    min_inliers: int = 20
    verticality_tolerance_deg: float = 10.0
    plane_min_extent: float = 0.2
    line_merge_distance: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("grid_cell", "vertical_extent_threshold", "segmentation_radius",
                     "inlier_distance", "plane_min_extent", "max_cell_gap",
                     "line_merge_distance"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be positive")
        if self.ransac_iterations < 1 or self.min_inliers < 2:
            raise GeometryError("ransac_iterations must be >= 1 and min_inliers >= 2")
        if self.min_cell_points < 1:
            raise GeometryError("min_cell_points must be >= 1")
        if not 0 < self.verticality_tolerance_deg < 90:
            raise GeometryError("verticality_tolerance_deg must lie in (0, 90)")


# ---------------------------------------------------------------------------
# Cloud I/O
# ---------------------------------------------------------------------------

def load_cloud(path: str) -> PointCloud:
    """Read an .xyz text file: one 'x y z' triple per line, '#' comments."""
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise GeometryError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: {exc}") from exc
    return PointCloud(np.asarray(rows, dtype=float) if rows else np.zeros((0, 3)))


def save_cloud(path: str, cloud: PointCloud) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for x, y, z in cloud:
            handle.write(f"{x!r} {y!r} {z!r}\n")


# ---------------------------------------------------------------------------
# Grid-based element detection
# ---------------------------------------------------------------------------

def _cell_indices(xy: np.ndarray, cell: float) -> np.ndarray:
    return np.floor(xy / cell).astype(np.int64)


def _group_by_cell(cells: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Map each occupied (ix, iy) cell to the indices of its points."""
    groups: dict[tuple[int, int], np.ndarray] = {}
    if cells.shape[0] == 0:
        return groups
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    sorted_cells = cells[order]
    change = np.nonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1))[0] + 1
    bounds = np.concatenate(([0], change, [sorted_cells.shape[0]]))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        key = (int(sorted_cells[lo, 0]), int(sorted_cells[lo, 1]))
        groups[key] = order[lo:hi]
    return groups


def _cluster_cells(cells: set[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    """8-connected components over a sparse set of grid cells."""
    remaining = set(cells)
    clusters = []
    while remaining:
        seed = remaining.pop()
        stack = [seed]
        members = [seed]
        while stack:
            cx, cy = stack.pop()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nb = (cx + dx, cy + dy)
                    if nb in remaining:
                        remaining.remove(nb)
                        stack.append(nb)
                        members.append(nb)
        clusters.append(members)
    return clusters


def detect_vertical_elements(cloud: PointCloud, config: DetectorConfig = DetectorConfig()) -> list[tuple[float, float]]:
    """Seed positions of vertical structures.

    Projects the cloud onto an xy grid, flags cells whose z extent
    (zmax - zmin) reaches the threshold, merges flagged cells by
    8-connectivity and returns one point-weighted centroid per cluster,
    sorted by (x, y).  Cells below min_cell_points never become
    candidates: a lone stray point above a ground return must not pass
    for a structure.  A real standing structure is also solid in z, so a
    cell whose sorted heights jump by more than max_cell_gap (a ground
    return plus one floating stray) is rejected as well.
    """
    if len(cloud) == 0:
        return []
    pts = cloud.points
    groups = _group_by_cell(_cell_indices(pts[:, :2], config.grid_cell))
    candidates = {}
    for key, idx in groups.items():
        if idx.shape[0] < config.min_cell_points:
            continue
        zs = np.sort(pts[idx, 2])
        if float(zs[-1] - zs[0]) < config.vertical_extent_threshold:
            continue
        if float(np.diff(zs).max()) > config.max_cell_gap:
            continue
        candidates[key] = idx
    seeds = []
    for cluster in _cluster_cells(set(candidates)):
        idx = np.concatenate([candidates[c] for c in cluster])
        center = pts[idx, :2].mean(axis=0)
        seeds.append((float(center[0]), float(center[1])))
    seeds.sort()
    return seeds


def detect_horizontal_elements(cloud: PointCloud, config: DetectorConfig = DetectorConfig()) -> list[tuple[float, float]]:
    """Seed positions of horizontal structures.

    The roles of the axes are exchanged relative to vertical detection:
    a horizontal element is a 3D-connected blob of occupied voxels whose
    total z extent stays below the threshold while its footprint extent
    reaches it.  Anything fused to a tall structure (a grounded pole, the
    ground sheet under a mast) inherits that structure's z extent and is
    therefore never seeded.
    """
    if len(cloud) == 0:
        return []
    pts = cloud.points
    cell = config.grid_cell
    voxels = np.floor(pts / cell).astype(np.int64)
    lo = voxels.min(axis=0)
    shape = voxels.max(axis=0) - lo + 1
    occupancy = np.zeros(shape, dtype=np.uint8)
    shifted = voxels - lo
    occupancy[shifted[:, 0], shifted[:, 1], shifted[:, 2]] = 1
    labels, count = ndimage.label(occupancy, structure=np.ones((3, 3, 3), dtype=np.uint8))
    if count == 0:
        return []
    point_labels = labels[shifted[:, 0], shifted[:, 1], shifted[:, 2]]
    seeds = []
    threshold = config.vertical_extent_threshold
    for label in range(1, count + 1):
        idx = np.nonzero(point_labels == label)[0]
        if idx.shape[0] < config.min_cell_points:
            continue
        member = pts[idx]
        z_extent = float(member[:, 2].max() - member[:, 2].min())
        if z_extent >= threshold:
            continue
        spans = member[:, :2].max(axis=0) - member[:, :2].min(axis=0)
        if float(spans.max()) < threshold:
            continue
        center = member[:, :2].mean(axis=0)
        seeds.append((float(center[0]), float(center[1])))
    seeds.sort()
    return seeds


def segment_2d(cloud: PointCloud, seed: Sequence[float], config: DetectorConfig = DetectorConfig()) -> PointCloud:
    """All points within the segmentation radius of the seed in xy, original order."""
    if len(cloud) == 0:
        return PointCloud(np.zeros((0, 3)))
    sx, sy = float(seed[0]), float(seed[1])
    pts = cloud.points
    d2 = (pts[:, 0] - sx) ** 2 + (pts[:, 1] - sy) ** 2
    return PointCloud(pts[d2 <= config.segmentation_radius ** 2])


def bounding_box(cloud: PointCloud) -> Box3:
    if len(cloud) == 0:
        raise GeometryError("cannot bound an empty cloud")
    return Box3.from_points(cloud.points)


def approximate_height(cloud: PointCloud) -> float:
    """Vertical span of the cloud: zmax - zmin."""
    if len(cloud) == 0:
        raise GeometryError("cannot measure the height of an empty cloud")
    zs = cloud.points[:, 2]
    return float(zs.max() - zs.min())


def structure_height(cloud: PointCloud, bin_width: float = 0.1,
                     min_support: int = 3,
                     support_fraction: float = 0.005) -> float:
    """Vertical span of the populated part of the cloud.

    The raw span is hostage to a single stray return floating above the
    structure.  Here the z range is cut into bins and only bins holding
    at least max(min_support, support_fraction * n) points count as part
    of the structure; the span runs over the points of those bins.  A
    cloud too small to support any bin falls back to the raw span.
    """
    if len(cloud) == 0:
        raise GeometryError("cannot measure the height of an empty cloud")
    if bin_width <= 0:
        raise GeometryError("bin_width must be positive")
    zs = cloud.points[:, 2]
    lo, hi = float(zs.min()), float(zs.max())
    if hi - lo <= bin_width:
        return hi - lo
    edges = np.arange(lo, hi + bin_width, bin_width)
    counts, _ = np.histogram(zs, bins=edges)
    needed = max(min_support, support_fraction * len(cloud))
    supported = np.nonzero(counts >= needed)[0]
    if supported.size == 0:
        return hi - lo
    mask = (zs >= edges[supported.min()]) & (zs <= edges[supported.max() + 1])
    picked = zs[mask]
    # Points of unsupported bins between the lowest and highest supported
    # bin still belong to the structure's interior span.
    return float(picked.max() - picked.min())


# ---------------------------------------------------------------------------
# RANSAC shape extraction
# ---------------------------------------------------------------------------

def _point_line_distances(pts: np.ndarray, anchors: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Distances from every point to every (anchor, unit-direction) line; (H, N)."""
    rel = pts[None, :, :] - anchors[:, None, :]
    cross = np.cross(rel, directions[:, None, :])
    return np.linalg.norm(cross, axis=2)


def _refine_line(inliers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares line: centroid plus principal direction of the inlier covariance."""
    centroid = inliers.mean(axis=0)
    centered = inliers - centroid
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    return centroid, eigvecs[:, int(np.argmax(eigvals))]


def _best_line_hypothesis(pts: np.ndarray, rng: np.random.Generator, config: DetectorConfig) -> tuple[int, np.ndarray] | None:
    n = pts.shape[0]
    if n < 2:
        return None
    i1 = rng.integers(0, n, size=config.ransac_iterations)
    i2 = rng.integers(0, n, size=config.ransac_iterations)
    deltas = pts[i2] - pts[i1]
    norms = np.linalg.norm(deltas, axis=1)
    valid = norms > 1e-12
    if not valid.any():
        return None
    anchors = pts[i1[valid]]
    dirs = deltas[valid] / norms[valid, None]
    dists = _point_line_distances(pts, anchors, dirs)
    counts = (dists <= config.inlier_distance).sum(axis=1)
    best = int(np.argmax(counts))
    if int(counts[best]) < config.min_inliers:
        return None
    mask = dists[best] <= config.inlier_distance
    return int(counts[best]), mask


def ransac_lines_3d(cloud: PointCloud, config: DetectorConfig = DetectorConfig()) -> list[Line3]:
    """Extract 3D lines by repeated RANSAC.

    Each round samples two-point hypotheses, keeps the best one if it
    gathers at least min_inliers points, refines it by least squares,
    removes the refined line's inliers and repeats.  Lines come back
    sorted by descending inlier count; the removed inlier sets are
    pairwise disjoint.
    """
    pts = cloud.points.copy()
    rng = np.random.default_rng(config.seed)
    lines: list[Line3] = []
    while pts.shape[0] >= config.min_inliers:
        hypo = _best_line_hypothesis(pts, rng, config)
        if hypo is None:
            break
        _, hypo_mask = hypo
        anchor, direction = _refine_line(pts[hypo_mask])
        dists = _point_line_distances(pts, anchor[None, :], direction[None, :])[0]
        final_mask = dists <= config.inlier_distance
        inliers = pts[final_mask]
        if inliers.shape[0] == 0:
            break
        t = (inliers - anchor) @ direction
        line = Line3(
            anchor=tuple(anchor),
            direction=tuple(direction),
            inlier_count=int(inliers.shape[0]),
            extent=(float(t.min()), float(t.max())),
        )
        lines.append(line)
        pts = pts[~final_mask]
    lines.sort(key=lambda l: -l.inlier_count)
    return lines


def _refine_plane(inliers: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares plane; returns (centroid, normal, secondary in-plane axis)."""
    centroid = inliers.mean(axis=0)
    centered = inliers - centroid
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)
    return centroid, eigvecs[:, order[0]], eigvecs[:, order[1]]


def _normal_is_vertical_plane(nz: np.ndarray | float, tolerance_deg: float) -> np.ndarray | bool:
    # A plane is vertical when its normal is (near) horizontal.
    return np.abs(nz) <= math.sin(math.radians(tolerance_deg))


def _normal_is_horizontal_plane(nz: np.ndarray | float, tolerance_deg: float) -> np.ndarray | bool:
    return np.abs(nz) >= math.cos(math.radians(tolerance_deg))


def _detect_oriented_plane(cloud: PointCloud, config: DetectorConfig, orientation: str) -> Plane3 | None:
    """Best RANSAC plane whose normal satisfies the orientation filter.

    Hypotheses are three-point samples drawn from small neighborhoods
    (an anchor plus two of its nearest neighbors), so a compact face
    keeps producing surface-aligned hypotheses even when it holds only a
    small share of the segment; scoring still counts inliers over the
    whole cloud.  Each round examines the candidate explaining the most
    not-yet-covered points and marks its support covered, so a rejected
    family of look-alike slabs (the fan of planes through a pole axis)
    costs one examination, not the whole budget, and a genuine small
    face keeps its own novel support even after a big hollow slab that
    grazed it was rejected.  An accepted plane must keep its orientation
    through refinement, keep enough inliers, be wide enough across, be
    compact rather than a metres-tall sliver, and fill its footprint
    (two parallel poles span a wide band but leave its middle empty).
    """
    pts = cloud.points
    n = pts.shape[0]
    if n < config.min_inliers or n < 3:
        return None
    rng = np.random.default_rng(config.seed)
    iters = config.ransac_iterations
    k = min(12, n)
    tree = cKDTree(pts)
    anchors = rng.integers(0, n, size=iters)
    _, neighbors = tree.query(pts[anchors], k=k)
    j1 = rng.integers(1, k, size=iters)
    j2 = rng.integers(1, k - 1, size=iters)
    j2 = j2 + (j2 >= j1)
    rows = np.arange(iters)
    p1 = pts[anchors]
    p2 = pts[neighbors[rows, j1]]
    p3 = pts[neighbors[rows, j2]]
    normals = np.cross(p2 - p1, p3 - p1)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms > 1e-12
    if not valid.any():
        return None
    normals = normals[valid] / norms[valid, None]
    anchors = p1[valid]
    # Three-point normals are noisy (the sampling baseline is a few
    # centimetres), so hypotheses are screened with the loose line
    # tolerance; the accurate refit normal is held to the tight one.
    if orientation == "vertical":
        oriented = _normal_is_vertical_plane(
            normals[:, 2], config.verticality_tolerance_deg)
    else:
        oriented = _normal_is_horizontal_plane(
            normals[:, 2], config.verticality_tolerance_deg)
    if not np.any(oriented):
        return None
    normals, anchors = normals[oriented], anchors[oriented]
    # distance of every point to every hypothesis plane: |(p - a) . n|
    rel = pts[None, :, :] - anchors[:, None, :]
    dists = np.abs(np.einsum("hnk,hk->hn", rel, normals))
    masks = dists <= config.inlier_distance
    covered = np.zeros(n, dtype=bool)
    for _ in range(15):
        novel = (masks & ~covered).sum(axis=1)
        idx = int(np.argmax(novel))
        if int(novel[idx]) < config.min_inliers:
            return None
        mask = masks[idx]
        covered |= mask
        mask_pts = pts[mask]
        _, free_normal, _ = _refine_plane(mask_pts)
        nz = float(free_normal[2])
        if orientation == "vertical" and not _normal_is_vertical_plane(
                nz, config.verticality_tolerance_deg):
            continue
        if orientation == "horizontal" and not _normal_is_horizontal_plane(
                nz, config.verticality_tolerance_deg):
            continue
        # Constrained refit: trackside faces hang plumb and cabinet
        # roofs sit level.  An unconstrained fit on a slab that bridges
        # a sign panel and the legs behind it tilts to keep both, and
        # that bridge steals half of each leg's points from line
        # evidence.  Fitting the normal in the horizontal plane (or
        # pinning it upright) with the offset at the support's median
        # forces such a slab to commit to one sheet, and the footprint
        # gates then judge that sheet honestly.  The spread axis is
        # exactly horizontal either way; any vertical leak would smear
        # a tall z extent across the histogram and hide a hollow
        # footprint.
        xy = mask_pts[:, :2] - mask_pts[:, :2].mean(axis=0)
        _evals, evecs = np.linalg.eigh(xy.T @ xy)
        if orientation == "vertical":
            normal = np.array([evecs[0, 0], evecs[1, 0], 0.0])
            axis = np.array([-normal[1], normal[0], 0.0])
        else:
            normal = np.array([0.0, 0.0, 1.0])
            axis = np.array([evecs[0, 1], evecs[1, 1], 0.0])
        scale = float(np.linalg.norm(axis))
        if scale < 1e-12:
            continue
        axis /= scale
        offset = float(np.median(mask_pts @ normal))
        final_mask = np.abs(pts @ normal - offset) <= config.inlier_distance
        covered |= final_mask
        inliers = pts[final_mask]
        if inliers.shape[0] < config.min_inliers:
            continue
        spread = inliers @ axis
        # Bound the footprint by Tukey fences rather than a fixed
        # percentile trim: a couple of clutter strays caught in the slab
        # stretch a percentile window by metres, and every later test
        # would then judge the face against a span it never claimed.
        q1, q3 = np.percentile(spread, [25.0, 75.0])
        fence = 1.5 * (q3 - q1)
        lo = max(float(spread.min()), float(q1 - fence))
        hi = min(float(spread.max()), float(q3 + fence))
        if hi - lo < config.plane_min_extent:
            continue
        # A face holds its mass in a compact height band.  The middle
        # half of a sliver riding a tall pole still spans metres of z
        # over a hand-width of horizontal spread, while a face grazed by
        # a few stray fringe points keeps its bulk inside the face, so
        # the interquartile range separates them where a full span
        # cannot.
        if orientation == "vertical":
            zlo, zhi = np.percentile(inliers[:, 2], [25.0, 75.0])
            # Both sides use bulk ranges: a full-span width is inflated
            # by ground points caught in the slab, and a curtain through
            # two pole fringes rides exactly on that inflation to sneak
            # under a full-width cap.
            if float(zhi - zlo) > 3.0 * float(q3 - q1):
                continue
        # A surface also fills its footprint, judged on the run of
        # occupied bins rather than the whole trimmed window: ground
        # scatter caught in the slab stretches the window, and a genuine
        # face must not starve on bins that only stray points own.  The
        # occupied run itself has to be wide enough, mostly full, and
        # unbroken; a pair of parallel poles leaves a hollow middle.
        bins = max(4, min(8, inliers.shape[0] // 8))
        hist, _ = np.histogram(spread, bins=bins, range=(float(lo), float(hi)))
        needed = max(3, 0.02 * inliers.shape[0])
        filled = np.nonzero(hist >= needed)[0]
        if filled.size < 2:
            continue
        first, last = int(filled[0]), int(filled[-1])
        bin_width = (float(hi) - float(lo)) / bins
        if (last - first + 1) * bin_width < config.plane_min_extent:
            continue
        span = hist[first:last + 1] >= needed
        if float(span.mean()) < 0.75:
            continue
        gap = run = 0
        for full in span:
            run = 0 if full else run + 1
            gap = max(gap, run)
        if gap >= 2:
            continue
        return Plane3(normal=tuple(normal), offset=offset,
                      inlier_count=int(inliers.shape[0]))
    return None


def detect_front_face(cloud: PointCloud, config: DetectorConfig = DetectorConfig()) -> Plane3 | None:
    """Best vertical plane in the segment, or None when nothing qualifies."""
    return _detect_oriented_plane(cloud, config, "vertical")


def detect_horizontal_plane(cloud: PointCloud, config: DetectorConfig = DetectorConfig()) -> Plane3 | None:
    """Best horizontal plane in the segment, or None when nothing qualifies."""
    return _detect_oriented_plane(cloud, config, "horizontal")


# ---------------------------------------------------------------------------
# Line relations
# ---------------------------------------------------------------------------

def line_angle_deg(l1: Line3, l2: Line3) -> float:
    """Undirected angle between two lines, in [0, 90] degrees."""
    d1 = np.asarray(l1.direction)
    d2 = np.asarray(l2.direction)
    cosine = min(1.0, abs(float(d1 @ d2)))
    return math.degrees(math.acos(cosine))


def check_parallel(l1: Line3, l2: Line3, tolerance_deg: float = 5.0) -> tuple[bool, float]:
    angle = line_angle_deg(l1, l2)
    return angle <= tolerance_deg, angle


def check_perpendicular(l1: Line3, l2: Line3, tolerance_deg: float = 5.0) -> tuple[bool, float]:
    angle = line_angle_deg(l1, l2)
    return (90.0 - angle) <= tolerance_deg, angle


def is_vertical(line: Line3, tolerance_deg: float = 10.0) -> bool:
    cosine = min(1.0, abs(float(line.direction[2])))
    return math.degrees(math.acos(cosine)) <= tolerance_deg


def merge_collinear(lines: Sequence[Line3], angle_tol_deg: float = 10.0,
                    merge_distance: float = 0.2) -> list[Line3]:
    """Collapse near-coaxial lines, keeping the strongest of each group.

    RANSAC on noisy data can re-detect the fringe of an already extracted
    pole as a second, nearly identical line.  Two lines merge when their
    directions agree within the angle tolerance and each anchor lies
    within merge_distance of the other's axis; physically separate legs
    sit farther apart and survive as distinct lines.
    """
    kept: list[Line3] = []
    for line in sorted(lines, key=lambda l: -l.inlier_count):
        duplicate = False
        for other in kept:
            if line_angle_deg(line, other) > angle_tol_deg:
                continue
            d = np.asarray(other.direction)
            rel = np.asarray(line.anchor) - np.asarray(other.anchor)
            off = rel - (rel @ d) * d
            if float(np.linalg.norm(off)) <= merge_distance:
                duplicate = True
                break
        if not duplicate:
            kept.append(line)
    return kept


def without_line_points(cloud: PointCloud, lines: Sequence[Line3],
                        distance: float = 0.05) -> PointCloud:
    """Cloud minus the points lying on any of the fitted line spans.

    Surface search runs on the remainder: a pole already explained as a
    line must not keep seeding plane hypotheses up and down its axis.
    """
    if not lines or len(cloud) == 0:
        return cloud
    pts = cloud.points
    keep = np.ones(pts.shape[0], dtype=bool)
    for line in lines:
        anchor = np.asarray(line.anchor)
        d = np.asarray(line.direction)
        t = np.clip((pts - anchor) @ d, line.extent[0], line.extent[1])
        nearest = anchor + t[:, None] * d
        keep &= np.linalg.norm(pts - nearest, axis=1) > distance
    return PointCloud(pts[keep])


def line_in_plane(line: Line3, plane: Plane3, angle_tol_deg: float = 10.0,
                  max_distance: float = 0.1) -> bool:
    """True when the line runs along the plane at small offset.

    Linear features embedded in a detected surface (the edge strips of a
    panel) describe the surface, not a free-standing pole, and should not
    be counted as one.
    """
    n = np.asarray(plane.normal)
    d = np.asarray(line.direction)
    if abs(float(n @ d)) > math.sin(math.radians(angle_tol_deg)):
        return False
    # Both ends of the fitted span must sit near the plane.  A tilted
    # plane crossing a pole midway is not a surface the pole belongs to.
    anchor = np.asarray(line.anchor)
    for t in line.extent:
        if abs(float(n @ (anchor + t * d)) - plane.offset) > max_distance:
            return False
    return True


def line_plane_support_fraction(cloud: PointCloud, line: Line3, plane: Plane3,
                                tube_radius: float = 0.05,
                                max_distance: float = 0.1) -> float:
    """Fraction of the line's supporting points that lie on the plane.

    Endpoint tests mislead here in both directions: a line skewering a
    panel diagonally drags one endpoint off the surface on the strength
    of a couple of stray points, while a tilted plane crossing a pole
    midway passes near both ends of a short fitted span.  Where the
    support itself lives settles it.  Returns 0.0 for an empty tube.
    """
    pts = cloud.points
    if pts.shape[0] == 0:
        return 0.0
    anchor = np.asarray(line.anchor)
    d = np.asarray(line.direction)
    t = np.clip((pts - anchor) @ d, line.extent[0], line.extent[1])
    nearest = anchor + t[:, None] * d
    support = pts[np.linalg.norm(pts - nearest, axis=1) <= tube_radius]
    if support.shape[0] == 0:
        return 0.0
    n = np.asarray(plane.normal)
    on_plane = np.abs(support @ n - plane.offset) <= max_distance
    return float(on_plane.mean())
