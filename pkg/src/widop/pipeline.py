"""End-to-end orchestration: detect, qualify, annotate, export.

Detection turns a point cloud into knowledge-base individuals: every
seeded segment becomes a box individual carrying its measured height,
vertical line count, and plane flags.  Qualification asserts pairwise
box relations.  Annotation runs the rule engine, which may itself call
back into detection through the processing builtins; a shared
DetectionContext caches per-cloud results so eager detection and
rule-driven detection mint identical individuals.

Running the full pipeline twice over the same inputs produces
byte-identical knowledge bases and VRML scenes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import domain, topology, vrml
from .engine import (BuiltinDescriptor, EngineConfig, EvalContext,
                     EvaluationReport, RuleEngine)
from .geometry import (Box3, DetectorConfig, PointCloud, bounding_box,
                       detect_front_face, detect_horizontal_elements,
                       detect_horizontal_plane, detect_vertical_elements,
                       is_vertical, line_plane_support_fraction, load_cloud,
                       merge_collinear,
                       ransac_lines_3d, segment_2d, structure_height,
                       without_line_points)
from .kb import KnowledgeBase
from .rules import Individual, Literal, ParsedRules, Rule, Term, load_rules
from .scene import (Annotation, EvaluationResult, TruthObject, evaluate,
                    read_truth, render_report)
from .topology import TopoConfig

_KIND_NAMES = {"vertical": "VerticalElementDetection",
               "horizontal": "HorizontalElementDetection"}

#: Vocabulary every detection result relies on.
_DETECTION_CONCEPTS = (("Geometry", None),
                       ("Vertical_BoundingBox", "Geometry"),
                       ("Horizontal_BoundingBox", "Geometry"),
                       ("Scene", None))
_DETECTION_DATA_PROPERTIES = ("hasHeight", "verticalLineCount",
                              "hasVerticalPlane", "hasHorizontalPlane",
                              "hasPointCloudFile")


def ensure_detection_vocabulary(kb: KnowledgeBase) -> None:
    for name, parent in _DETECTION_CONCEPTS:
        if not kb.has_concept(name):
            kb.declare_concept(name, parent)
    for name in _DETECTION_DATA_PROPERTIES:
        if name not in kb.properties:
            kb.declare_property(name, "data")


@dataclass(frozen=True)
class DetectionRecord:
    """Measurements for one segmented element, applied as assertions."""

    ident: str
    class_name: str
    box: Box3
    height: float
    vertical_line_count: int
    has_vertical_plane: bool
    has_horizontal_plane: bool

    def apply(self, kb: KnowledgeBase) -> None:
        kb.assert_class(self.ident, self.class_name)
        kb.attach_geometry(self.ident, self.box)
        kb.assert_data(self.ident, "hasHeight", self.height)
        kb.assert_data(self.ident, "verticalLineCount",
                       float(self.vertical_line_count))
        kb.assert_data(self.ident, "hasVerticalPlane", self.has_vertical_plane)
        kb.assert_data(self.ident, "hasHorizontalPlane", self.has_horizontal_plane)


class DetectionContext:
    """Caches detection runs per (kind, cloud) and mints stable identifiers."""

    def __init__(self, detector: DetectorConfig | None = None,
                 default_path: str | None = None) -> None:
        self.detector = detector or DetectorConfig()
        self.default_path = default_path
        self._clouds: dict[str, PointCloud] = {}
        self._cache: dict[tuple[str, str], list[DetectionRecord]] = {}
        self._counters: dict[str, int] = {}
        self._scene_ids: dict[str, str] = {}

    def cloud(self, path: str) -> PointCloud:
        if path not in self._clouds:
            self._clouds[path] = load_cloud(path)
        return self._clouds[path]

    def scene_id(self, path: str) -> str:
        if path not in self._scene_ids:
            self._scene_ids[path] = f"scene_{len(self._scene_ids) + 1}"
        return self._scene_ids[path]

    def detect(self, kb: KnowledgeBase, kind: str, path: str) -> list[DetectionRecord]:
        """Detect elements of one kind in a cloud; idempotent per target KB."""
        if kind not in _KIND_NAMES:
            raise ValueError(f"unknown detection kind: {kind!r}")
        key = (kind, path)
        if key not in self._cache:
            self._cache[key] = self._run(kind, self.cloud(path))
        ensure_detection_vocabulary(kb)
        for record in self._cache[key]:
            record.apply(kb)
        return list(self._cache[key])

    def _run(self, kind: str, cloud: PointCloud) -> list[DetectionRecord]:
        config = self.detector
        if kind == "vertical":
            seeds = detect_vertical_elements(cloud, config)
            class_name = "Vertical_BoundingBox"
        else:
            seeds = detect_horizontal_elements(cloud, config)
            class_name = "Horizontal_BoundingBox"
        records = []
        for seed in seeds:
            segment = segment_2d(cloud, seed, config)
            if len(segment) == 0:
                continue
            self._counters[kind] = self._counters.get(kind, 0) + 1
            ident = f"{_KIND_NAMES[kind]}_{self._counters[kind]}"
            # Vertical linear structure is explained first; plane search
            # then runs on the remainder, so a pole cannot keep spawning
            # tall thin slab hypotheses that crowd out a genuine face
            # behind it.  Only vertical lines are subtracted: a sloped
            # strip grazed inside a panel still belongs to the surface.
            lines = [line for line in ransac_lines_3d(segment, config)
                     if is_vertical(line, config.verticality_tolerance_deg)]
            residual = without_line_points(segment, lines,
                                           config.inlier_distance)
            front = detect_front_face(residual, config)
            # A line whose supporting points nearly all lie on the
            # detected face describes the face, not a free-standing
            # pole.  The test runs on support, not endpoints: a couple
            # of stray points can drag a fitted span's end off the
            # surface.  The bar sits high because a face yawed a few
            # degrees can still graze more than half of a genuine leg.
            if front is not None:
                lines = [line for line in lines
                         if line_plane_support_fraction(
                             segment, line, front, config.inlier_distance,
                             2.0 * config.inlier_distance) < 0.75]
            lines = merge_collinear(lines, config.verticality_tolerance_deg,
                                    config.line_merge_distance)
            records.append(DetectionRecord(
                ident=ident,
                class_name=class_name,
                box=bounding_box(segment),
                height=structure_height(segment),
                vertical_line_count=len(lines),
                has_vertical_plane=front is not None,
                has_horizontal_plane=detect_horizontal_plane(residual, config)
                is not None,
            ))
        return records


def register_processing_builtins(engine: RuleEngine, ctx: DetectionContext) -> None:
    """Expose detection to rules as proc3d generative builtins.

    Atom shape: proc3d:VerticalElementDetection(?element, ?cloudFile).
    Both positions may be unbound; an unbound file argument falls back
    to the context's default cloud.
    """
    def make_handler(kind: str):
        def handler(eval_ctx: EvalContext, bound: dict[int, object]
                    ) -> list[tuple[Term, ...]]:
            path = bound.get(2, ctx.default_path)
            if not isinstance(path, str):
                return []
            records = ctx.detect(eval_ctx.kb, kind, path)
            return [(Individual(r.ident), Literal(path)) for r in records]
        return handler

    for kind, name in _KIND_NAMES.items():
        engine.register(BuiltinDescriptor(
            "proc3d", name, 2, "generative", make_handler(kind),
            may_be_unbound=frozenset({1, 2})))


def build_engine(engine_config: EngineConfig | None = None,
                 topo_config: TopoConfig | None = None,
                 ctx: DetectionContext | None = None) -> RuleEngine:
    """Rule engine with the standard, topological, and detection builtins."""
    engine = RuleEngine(engine_config or EngineConfig())
    topology.register_builtins(engine, topo_config or TopoConfig())
    register_processing_builtins(engine, ctx or DetectionContext())
    return engine


# -- pipeline stages ---------------------------------------------------------


def run_detection(kb: KnowledgeBase, cloud_path: str,
                  ctx: DetectionContext | None = None) -> int:
    """Detect vertical and horizontal elements; returns the record count."""
    ctx = ctx or DetectionContext()
    ensure_detection_vocabulary(kb)
    scene = ctx.scene_id(cloud_path)
    kb.assert_class(scene, "Scene")
    kb.assert_data(scene, "hasPointCloudFile", cloud_path)
    vertical = ctx.detect(kb, "vertical", cloud_path)
    horizontal = ctx.detect(kb, "horizontal", cloud_path)
    return len(vertical) + len(horizontal)


def run_qualification(kb: KnowledgeBase,
                      topo_config: TopoConfig | None = None) -> int:
    return topology.qualify_all(kb, topo_config or TopoConfig())


def run_annotation(kb: KnowledgeBase, rules: list[Rule],
                   engine_config: EngineConfig | None = None,
                   topo_config: TopoConfig | None = None,
                   ctx: DetectionContext | None = None) -> EvaluationReport:
    engine = build_engine(engine_config, topo_config, ctx)
    return engine.evaluate(kb, rules)


def annotations_from_kb(kb: KnowledgeBase) -> list[Annotation]:
    """Every box individual with its most specific domain class (or None)."""
    under = "DomainConcept" if kb.has_concept("DomainConcept") else None
    out = []
    for ind, geom in kb.geometry_items():
        if not isinstance(geom, Box3):
            continue
        if kb.has_concept("Geometry") and not kb.is_instance_of(ind, "Geometry"):
            continue
        out.append(Annotation(ind, kb.most_specific_class(ind, under=under), geom))
    return out


# -- full run --------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    cloud_path: str
    kb_path: str | None = None
    rules_path: str | None = None
    out_kb: str | None = None
    out_vrml: str | None = None
    out_report: str | None = None
    truth_path: str | None = None
    colormap_path: str | None = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    topo: TopoConfig = field(default_factory=TopoConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    match_distance: float = 1.0
    strict: bool = False


@dataclass
class PipelineResult:
    kb: KnowledgeBase
    detected_count: int
    qualified_count: int
    engine_report: EvaluationReport
    annotations: list[Annotation]
    vrml_text: str
    rule_warnings: list[str]
    evaluation: EvaluationResult | None = None
    truth: list[TruthObject] | None = None


def load_kb(path: str | None) -> KnowledgeBase:
    if path is None:
        return domain.load_domain_kb()
    with open(path, "r", encoding="utf-8") as fh:
        return KnowledgeBase.deserialize(fh.read())


def load_ruleset(path: str | None) -> ParsedRules:
    if path is None:
        return domain.load_default_rules()
    return load_rules(path)


def run_all(config: PipelineConfig) -> PipelineResult:
    kb = load_kb(config.kb_path)
    ruleset = load_ruleset(config.rules_path)
    ctx = DetectionContext(config.detector, default_path=config.cloud_path)

    detected = run_detection(kb, config.cloud_path, ctx)
    qualified = run_qualification(kb, config.topo)
    report = run_annotation(kb, ruleset.rules, config.engine, config.topo, ctx)
    annotations = annotations_from_kb(kb)

    colormap = (vrml.load_colormap(config.colormap_path)
                if config.colormap_path else None)
    scene_text = vrml.export_vrml(kb, colormap)

    evaluation = None
    truth = None
    if config.truth_path is not None:
        truth = read_truth(config.truth_path)
        evaluation = evaluate(annotations, truth,
                              match_distance=config.match_distance,
                              kb=kb, strict=config.strict,
                              detected_count=detected)

    if config.out_kb is not None:
        with open(config.out_kb, "w", encoding="utf-8") as fh:
            fh.write(kb.serialize())
    if config.out_vrml is not None:
        with open(config.out_vrml, "w", encoding="utf-8") as fh:
            fh.write(scene_text)
    if config.out_report is not None:
        if evaluation is not None:
            report_text = render_report(evaluation)
        else:
            report_text = render_annotation_summary(annotations, detected)
        with open(config.out_report, "w", encoding="utf-8") as fh:
            fh.write(report_text)

    return PipelineResult(kb, detected, qualified, report, annotations,
                          scene_text, list(ruleset.warnings), evaluation, truth)


def render_annotation_summary(annotations: list[Annotation],
                              detected_count: int | None = None) -> str:
    """Counts per annotated class; used when no ground truth is available."""
    by_class: dict[str, int] = {}
    unlabeled = 0
    for ann in annotations:
        if ann.class_name is None:
            unlabeled += 1
        else:
            by_class[ann.class_name] = by_class.get(ann.class_name, 0) + 1
    lines = []
    if detected_count is not None:
        lines.append(f"detected={detected_count}")
    for cls in sorted(by_class):
        lines.append(f"{cls}={by_class[cls]}")
    lines.append(f"unannotated={unlabeled}")
    return "\n".join(lines) + "\n"
