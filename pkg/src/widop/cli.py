"""Command-line interface.

Subcommands mirror the pipeline stages (generate, detect, qualify,
annotate, plan, export-vrml, evaluate) plus `run`, which chains
detect/qualify/annotate/export and is output-identical to running the
stages one at a time.

Settings resolve in three layers: built-in defaults, then a key=value
config file (--config flag or WIDOP_CONFIG environment variable), then
command-line flags.  Exit codes: 1 usage, 2 bad input, 3 evaluation or
planning failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import pipeline, planner, scene, vrml
from .engine import EngineConfig, EngineError
from .geometry import DetectorConfig, GeometryError, save_cloud
from .kb import KBError
from .planner import PlanError
from .rules import RuleSyntaxError
from .scene import SceneError, SceneSpec
from .topology import TopoConfig

_USAGE_EXIT = 1
_INPUT_EXIT = 2
_PIPELINE_EXIT = 3

_INPUT_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError,
                 KBError, RuleSyntaxError, SceneError, GeometryError,
                 ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(_USAGE_EXIT)


class ConfigError(ValueError):
    pass


#: config-file key -> (target dataclass, field name)
_CONFIG_TARGETS = {
    "grid_cell": ("detector", "grid_cell"),
    "vertical_extent_threshold": ("detector", "vertical_extent_threshold"),
    "segmentation_radius": ("detector", "segmentation_radius"),
    "min_cell_points": ("detector", "min_cell_points"),
    "max_cell_gap": ("detector", "max_cell_gap"),
    "ransac_iterations": ("detector", "ransac_iterations"),
    "inlier_distance": ("detector", "inlier_distance"),
    "min_inliers": ("detector", "min_inliers"),
    "verticality_tolerance_deg": ("detector", "verticality_tolerance_deg"),
    "plane_min_extent": ("detector", "plane_min_extent"),
    "line_merge_distance": ("detector", "line_merge_distance"),
    "detector_seed": ("detector", "seed"),
    "touch_epsilon": ("topo", "touch_epsilon"),
    "distance_tolerance": ("topo", "distance_tolerance"),
    "overlap_epsilon": ("topo", "overlap_epsilon"),
    "horizontal_distance": ("topo", "horizontal_distance"),
    "max_iterations": ("engine", "max_iterations"),
    "engine_seed": ("engine", "seed"),
    "trace": ("engine", "trace"),
    "match_distance": ("eval", "match_distance"),
    "strict": ("eval", "strict"),
}

_INT_FIELDS = {"min_cell_points", "ransac_iterations", "min_inliers",
               "detector_seed", "max_iterations", "engine_seed"}
_BOOL_FIELDS = {"horizontal_distance", "trace", "strict"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config_file(path: str) -> dict[str, object]:
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_TARGETS:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
            try:
                if key in _BOOL_FIELDS:
                    values[key] = _parse_bool(value)
                elif key in _INT_FIELDS:
                    values[key] = int(value)
                else:
                    values[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


@dataclasses.dataclass
class Settings:
    detector: DetectorConfig
    topo: TopoConfig
    engine: EngineConfig
    match_distance: float
    strict: bool


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    layered: dict[str, object] = {}
    config_path = getattr(args, "config", None) or os.environ.get("WIDOP_CONFIG")
    if config_path:
        layered.update(read_config_file(config_path))
    for key in _CONFIG_TARGETS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            layered[key] = flag_value

    groups: dict[str, dict[str, object]] = {"detector": {}, "topo": {},
                                            "engine": {}, "eval": {}}
    for key, value in layered.items():
        target, field_name = _CONFIG_TARGETS[key]
        groups[target][field_name] = value
    return Settings(
        detector=DetectorConfig(**groups["detector"]),
        topo=TopoConfig(**groups["topo"]),
        engine=EngineConfig(**groups["engine"]),
        match_distance=float(groups["eval"].get("match_distance", 1.0)),
        strict=bool(groups["eval"].get("strict", False)),
    )


# -- option groups -------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file "
                                    "(or set WIDOP_CONFIG)")


def _add_detector_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--grid-cell", dest="grid_cell", type=float)
    g.add_argument("--vertical-extent-threshold",
                   dest="vertical_extent_threshold", type=float)
    g.add_argument("--segmentation-radius", dest="segmentation_radius",
                   type=float)
    g.add_argument("--min-cell-points", dest="min_cell_points", type=int)
    g.add_argument("--max-cell-gap", dest="max_cell_gap", type=float)
    g.add_argument("--ransac-iterations", dest="ransac_iterations", type=int)
    g.add_argument("--inlier-distance", dest="inlier_distance", type=float)
    g.add_argument("--min-inliers", dest="min_inliers", type=int)
    g.add_argument("--verticality-tolerance-deg",
                   dest="verticality_tolerance_deg", type=float)
    g.add_argument("--plane-min-extent", dest="plane_min_extent", type=float)
    g.add_argument("--line-merge-distance", dest="line_merge_distance",
                   type=float)
    g.add_argument("--detector-seed", dest="detector_seed", type=int)


def _add_topo_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("topology")
    g.add_argument("--touch-epsilon", dest="touch_epsilon", type=float)
    g.add_argument("--distance-tolerance", dest="distance_tolerance", type=float)
    g.add_argument("--overlap-epsilon", dest="overlap_epsilon", type=float)
    g.add_argument("--horizontal-distance", dest="horizontal_distance",
                   action="store_true", default=None)


def _add_engine_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    g.add_argument("--max-iterations", dest="max_iterations", type=int)
    g.add_argument("--engine-seed", dest="engine_seed", type=int)
    g.add_argument("--trace", dest="trace", action="store_true", default=None)


def _add_eval_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("evaluation")
    g.add_argument("--match-distance", dest="match_distance", type=float)
    g.add_argument("--strict", dest="strict", action="store_true", default=None)


# -- subcommands ------------------------------------------------------------------


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = SceneSpec(
        track_length=args.track_length,
        strip_width=args.strip_width,
        noise_sigma=args.noise_sigma,
        clutter_fraction=args.clutter_fraction,
        ground_density=args.ground_density,
        seed=args.seed,
    )
    result = scene.generate_scene(spec)
    save_cloud(args.out_cloud, result.cloud)
    scene.write_truth(args.out_truth, result.truth)
    print(f"points={len(result.cloud)} objects={len(result.truth)} "
          f"clutter={result.clutter_count}")
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    kb = pipeline.load_kb(args.kb)
    ctx = pipeline.DetectionContext(settings.detector, default_path=args.cloud)
    count = pipeline.run_detection(kb, args.cloud, ctx)
    with open(args.out_kb, "w", encoding="utf-8") as fh:
        fh.write(kb.serialize())
    print(f"detected={count}")
    return 0


def _cmd_qualify(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    kb = pipeline.load_kb(args.kb)
    count = pipeline.run_qualification(kb, settings.topo)
    with open(args.out_kb, "w", encoding="utf-8") as fh:
        fh.write(kb.serialize())
    print(f"relations={count}")
    return 0


def _cmd_annotate(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    kb = pipeline.load_kb(args.kb)
    ruleset = pipeline.load_ruleset(args.rules)
    for warning in ruleset.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    ctx = pipeline.DetectionContext(settings.detector, default_path=args.cloud)
    report = pipeline.run_annotation(kb, ruleset.rules, settings.engine,
                                     settings.topo, ctx)
    with open(args.out_kb, "w", encoding="utf-8") as fh:
        fh.write(kb.serialize())
    for line in report.trace:
        print(line)
    print(f"iterations={report.iterations} added={report.assertions_added}")
    return 0


def _cmd_plan(args: argparse.Namespace) -> int:
    kb = pipeline.load_kb(args.kb)
    traits = planner.characteristics_for_concept(kb, args.concept)
    if not traits:
        raise PlanError(f"no characteristics known for concept {args.concept}")
    registry = planner.registry_from_kb(kb)
    plan = planner.build_plan(registry,
                              planner.select_algorithms(registry, traits))
    print(f"concept={args.concept}")
    print("characteristics=" + ",".join(sorted(t.value for t in traits)))
    for i, step in enumerate(plan.steps, start=1):
        print(f"{i}. {step.name}")
    for edge in plan.dataflow:
        print(f"flow {edge.producer} -> {edge.consumer} [{edge.kind.value}]")
    return 0


def _cmd_export_vrml(args: argparse.Namespace) -> int:
    kb = pipeline.load_kb(args.kb)
    colormap = vrml.load_colormap(args.colormap) if args.colormap else None
    text = vrml.export_vrml(kb, colormap)
    problems = vrml.validate_vrml(text)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    boxes = text.count("geometry Box")
    print(f"boxes={boxes}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    kb = pipeline.load_kb(args.kb)
    annotations = pipeline.annotations_from_kb(kb)
    truth = scene.read_truth(args.truth)
    result = scene.evaluate(annotations, truth,
                            match_distance=settings.match_distance,
                            kb=kb, strict=settings.strict,
                            detected_count=len(annotations))
    text = scene.render_report(result)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    config = pipeline.PipelineConfig(
        cloud_path=args.cloud,
        kb_path=args.kb,
        rules_path=args.rules,
        out_kb=args.out_kb,
        out_vrml=args.out_vrml,
        out_report=args.out_report,
        truth_path=args.truth,
        colormap_path=args.colormap,
        detector=settings.detector,
        topo=settings.topo,
        engine=settings.engine,
        match_distance=settings.match_distance,
        strict=settings.strict,
    )
    result = pipeline.run_all(config)
    for warning in result.rule_warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for line in result.engine_report.trace:
        print(line)
    print(f"detected={result.detected_count} "
          f"relations={result.qualified_count} "
          f"iterations={result.engine_report.iterations} "
          f"added={result.engine_report.assertions_added}")
    if result.evaluation is not None:
        print(scene.render_report(result.evaluation), end="")
    else:
        print(pipeline.render_annotation_summary(result.annotations), end="")
    return 0


# -- wiring -------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="widop",
                     description="Detect and semantically annotate railway "
                                 "objects in 3D point clouds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a scene with ground truth")
    p.add_argument("--out-cloud", required=True)
    p.add_argument("--out-truth", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--track-length", type=float, default=500.0)
    p.add_argument("--strip-width", type=float, default=8.0)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--clutter-fraction", type=float, default=0.05)
    p.add_argument("--ground-density", type=float, default=4.0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("detect", help="detect elements into a knowledge base")
    p.add_argument("--cloud", required=True)
    p.add_argument("--kb", help="input knowledge base (default: built-in domain)")
    p.add_argument("--out-kb", required=True)
    _add_common(p)
    _add_detector_opts(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("qualify", help="assert pairwise box relations")
    p.add_argument("--kb", required=True)
    p.add_argument("--out-kb", required=True)
    _add_common(p)
    _add_topo_opts(p)
    p.set_defaults(func=_cmd_qualify)

    p = sub.add_parser("annotate", help="run the rule engine over a knowledge base")
    p.add_argument("--kb", required=True)
    p.add_argument("--rules", help="rule file (default: built-in rules)")
    p.add_argument("--out-kb", required=True)
    p.add_argument("--cloud", help="cloud for rule-driven detection builtins")
    _add_common(p)
    _add_detector_opts(p)
    _add_topo_opts(p)
    _add_engine_opts(p)
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("plan", help="derive the processing plan for a concept")
    p.add_argument("concept")
    p.add_argument("--kb", help="knowledge base (default: built-in domain)")
    _add_common(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("export-vrml", help="write the annotated scene as VRML")
    p.add_argument("--kb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--colormap", help="file of 'Class = r g b' lines")
    _add_common(p)
    p.set_defaults(func=_cmd_export_vrml)

    p = sub.add_parser("evaluate", help="score annotations against ground truth")
    p.add_argument("--kb", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", help="also write the report to this file")
    _add_common(p)
    _add_eval_opts(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="detect, qualify, annotate, export")
    p.add_argument("--cloud", required=True)
    p.add_argument("--kb", help="input knowledge base (default: built-in domain)")
    p.add_argument("--rules", help="rule file (default: built-in rules)")
    p.add_argument("--out-kb", required=True)
    p.add_argument("--out-vrml")
    p.add_argument("--out-report")
    p.add_argument("--truth")
    p.add_argument("--colormap")
    _add_common(p)
    _add_detector_opts(p)
    _add_topo_opts(p)
    _add_engine_opts(p)
    _add_eval_opts(p)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _INPUT_EXIT
    except (EngineError, PlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _PIPELINE_EXIT


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
