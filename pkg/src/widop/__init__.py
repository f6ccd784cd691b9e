"""Knowledge-driven detection and annotation of railway objects in point clouds."""

from .engine import EngineConfig, EngineError, RuleEngine
from .geometry import Box3, DetectorConfig, GeometryError, Line3, Plane3, PointCloud
from .kb import ANY, Assertion, KBError, KBParseError, KnowledgeBase
from .planner import PlanError
from .rules import Rule, RuleSyntaxError, parse_rules, parse_ruleset
from .topology import TopoConfig

__version__ = "0.1.0"

__all__ = [
    "ANY",
    "Assertion",
    "Box3",
    "DetectorConfig",
    "EngineConfig",
    "EngineError",
    "GeometryError",
    "KBError",
    "KBParseError",
    "KnowledgeBase",
    "Line3",
    "Plane3",
    "PlanError",
    "PointCloud",
    "Rule",
    "RuleEngine",
    "RuleSyntaxError",
    "TopoConfig",
    "parse_rules",
    "parse_ruleset",
    "__version__",
]
