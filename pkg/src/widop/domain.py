"""Railway domain pack: concept hierarchy, object knowledge, default rules.

The pack describes trackside equipment (masts, signals, switchgear
cabinets) together with the measurable traits that identify each kind:
a height band, the number of vertical lines a detector should find, and
whether planar faces are expected.  Height bands are half-open
intervals (min, max]; an object of height h belongs to the band with
min < h <= max.  Spacing values give the typical distance in meters
between an object and its nearest peer along the track.

Concept names double as individuals: the individual `Mast` carries the
band, spacing, and characteristics data describing the concept `Mast`.
Rules reference those punned individuals to read domain constants, so
tuning a spacing means editing one assertion, not a rule.

Algorithm individuals mirror the planner registry, which lets a plan be
rebuilt from a serialized knowledge base alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .kb import KnowledgeBase
from .planner import (AlgorithmDescriptor, Characteristic, DataKind, Registry,
                      default_registry)
from .rules import ParsedRules, Rule, parse_rules, parse_ruleset

CONCEPTS: tuple[tuple[str, str | None], ...] = (
    ("Algorithm", None),
    ("Characteristics", None),
    ("Geometry", None),
    ("Vertical_BoundingBox", "Geometry"),
    ("Horizontal_BoundingBox", "Geometry"),
    ("Scene", None),
    ("DomainConcept", None),
    ("Mast", "DomainConcept"),
    ("BigMast", "Mast"),
    ("NormalMast", "Mast"),
    ("Signals", "DomainConcept"),
    ("MainSignal", "Signals"),
    ("DistantSignal", "Signals"),
    ("SecondarySignal", "Signals"),
    ("Vorsignalbake", "SecondarySignal"),
    ("Breakpoint_table", "SecondarySignal"),
    ("Chess_board", "SecondarySignal"),
    ("Schaltanlage", "DomainConcept"),
    ("Schalthaus", "Schaltanlage"),
    ("SchaltSchrank", "Schaltanlage"),
)

DATA_PROPERTIES: tuple[str, ...] = (
    "hasHeight",
    "verticalLineCount",
    "hasVerticalPlane",
    "hasHorizontalPlane",
    "hasPointCloudFile",
    "hasInput",
    "hasOutput",
    "hasRegistryOrder",
    "heightMin",
    "heightMax",
    "hasSpacing",
    "has_Color",
    "has_Texture",
)

OBJECT_PROPERTIES: tuple[str, ...] = (
    "Intersect",
    "Touch",
    "Upper",
    "Connected",
    "hasCharacteristics",
    "isDesignedFor",
    "hasSuccessor",
)


@dataclass(frozen=True)
class HeightBand:
    """Half-open height interval (lower, upper]; upper None means unbounded."""

    lower: float
    upper: float | None

    def contains(self, height: float) -> bool:
        if height <= self.lower:
            return False
        return self.upper is None or height <= self.upper


HEIGHT_BANDS: dict[str, HeightBand] = {
    "BigMast": HeightBand(6.0, None),
    "NormalMast": HeightBand(5.0, 6.0),
    "Signals": HeightBand(4.0, 6.0),
    "MainSignal": HeightBand(4.0, 6.0),
    "DistantSignal": HeightBand(4.0, 6.0),
    "Vorsignalbake": HeightBand(1.5, 2.5),
    "Breakpoint_table": HeightBand(1.0, 2.0),
    "Chess_board": HeightBand(1.0, 1.5),
    "Schalthaus": HeightBand(0.5, 1.0),
    "SchaltSchrank": HeightBand(0.0, 0.5),
}


@dataclass(frozen=True)
class SpacingConstants:
    """Typical along-track distances between equipment, in meters."""

    mast: float = 50.0
    vorsignalbake: float = 75.0
    breakpoint_table: float = 100.0
    distant_signal: float = 1000.0
    distant_signal_short: float = 700.0


SPACINGS = SpacingConstants()

#: Measurable traits per concept subtree; children inherit from the
#: nearest profiled ancestor.
PROFILES: dict[str, tuple[Characteristic, ...]] = {
    "Mast": (Characteristic.VERTICAL_GEOMETRY, Characteristic.GEOMETRY_HEIGHT,
             Characteristic.LINES_3D),
    "Signals": (Characteristic.VERTICAL_GEOMETRY, Characteristic.GEOMETRY_HEIGHT,
                Characteristic.LINES_3D),
    "SecondarySignal": (Characteristic.VERTICAL_GEOMETRY,
                        Characteristic.GEOMETRY_HEIGHT,
                        Characteristic.LINES_3D, Characteristic.FRONT_FACE),
    "Schaltanlage": (Characteristic.VERTICAL_GEOMETRY,
                     Characteristic.GEOMETRY_HEIGHT, Characteristic.FRONT_FACE),
}

#: Detects flat-lying structures; not part of the default plan registry.
HORIZONTAL_DETECTION_ROW = AlgorithmDescriptor(
    "HorizontalObjectsDetection",
    (DataKind.POINT_CLOUD,), (DataKind.POINT_2D,),
    frozenset({Characteristic.HORIZONTAL_GEOMETRY}))


def algorithm_rows() -> list[AlgorithmDescriptor]:
    return list(default_registry()) + [HORIZONTAL_DETECTION_ROW]


def build_domain_kb() -> KnowledgeBase:
    """Assemble the full domain knowledge base from the tables above."""
    kb = KnowledgeBase()
    for name, parent in CONCEPTS:
        kb.declare_concept(name, parent)
    for name in DATA_PROPERTIES:
        kb.declare_property(name, "data")
    for name in OBJECT_PROPERTIES:
        kb.declare_property(name, "object")

    for trait in Characteristic:
        kb.assert_class(trait.value, "Characteristics")
    for concept, traits in PROFILES.items():
        for trait in traits:
            kb.assert_object(concept, "hasCharacteristics", trait.value)

    for concept, band in HEIGHT_BANDS.items():
        kb.assert_data(concept, "heightMin", band.lower)
        if band.upper is not None:
            kb.assert_data(concept, "heightMax", band.upper)

    kb.assert_data("Mast", "hasSpacing", SPACINGS.mast)
    kb.assert_data("Vorsignalbake", "hasSpacing", SPACINGS.vorsignalbake)
    kb.assert_data("Breakpoint_table", "hasSpacing", SPACINGS.breakpoint_table)
    kb.assert_data("DistantSignal", "hasSpacing", SPACINGS.distant_signal)
    kb.assert_data("DistantSignal", "hasSpacing", SPACINGS.distant_signal_short)

    for order, row in enumerate(algorithm_rows(), start=1):
        kb.assert_class(row.name, "Algorithm")
        kb.assert_data(row.name, "hasRegistryOrder", float(order))
        for kind in row.inputs:
            kb.assert_data(row.name, "hasInput", kind.value)
        for kind in row.outputs:
            kb.assert_data(row.name, "hasOutput", kind.value)
        for trait in sorted(row.designed_for, key=lambda c: c.value):
            kb.assert_object(row.name, "isDesignedFor", trait.value)
        if row.successor is not None:
            kb.assert_object(row.name, "hasSuccessor", row.successor)
    return kb


DEFAULT_RULES_TEXT = """\
// Trackside equipment classification.
//
// Every rule demands discriminative structure (vertical lines or planar
// faces) on top of its height band, so featureless boxes coming from
// stray points are never annotated.

// Masts rest on at least two vertical legs and carry no planar faces.
// moreThan is the legacy spelling of greaterThan and parses with a
// warning.
rule big_mast_by_height:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h) ^ swrlb:moreThan(?h, 6)
    ^ verticalLineCount(?v, ?n) ^ swrlb:greaterThanOrEqual(?n, 2)
    ^ hasVerticalPlane(?v, false)
    -> BigMast(?v)

rule normal_mast_by_legs:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 5) ^ swrlb:lessThanOrEqual(?h, 6)
    ^ verticalLineCount(?v, ?n) ^ swrlb:greaterThanOrEqual(?n, 2)
    ^ hasVerticalPlane(?v, false)
    -> NormalMast(?v)

// A main signal is a single free-standing pole without planar
// attachments; announcement spacing may later refine it to a distant
// signal.
rule main_signal_by_lines:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 4) ^ swrlb:lessThanOrEqual(?h, 6)
    ^ verticalLineCount(?v, ?n) ^ swrlb:equal(?n, 1)
    ^ hasVerticalPlane(?v, false)
    -> MainSignal(?v)

// A signal a typical spacing ahead of a known main signal announces it.
// The spacing values live on the DistantSignal individual.
rule distant_signal_by_spacing:
    Signals(?s) ^ MainSignal(?m) ^ hasSpacing(DistantSignal, ?d)
    ^ topo:isDistantFrom(?s, ?m, ?d)
    -> DistantSignal(?s)

// Switchgear: walk-in huts show both a front face and a roof plane,
// cabinets are knee-high boxes with a front face.
rule schalthaus_by_planes:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 0.5) ^ swrlb:lessThanOrEqual(?h, 1)
    ^ hasVerticalPlane(?v, true) ^ hasHorizontalPlane(?v, true)
    -> Schalthaus(?v)

rule schaltschrank_by_plane:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 0) ^ swrlb:lessThanOrEqual(?h, 0.5)
    ^ hasVerticalPlane(?v, true)
    -> SchaltSchrank(?v)

// Secondary signals combine one or two poles with a reflective panel.
rule vorsignalbake_by_line_and_panel:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 1.5) ^ swrlb:lessThanOrEqual(?h, 2.5)
    ^ verticalLineCount(?v, ?n) ^ swrlb:equal(?n, 1)
    ^ hasVerticalPlane(?v, true)
    -> Vorsignalbake(?v)

rule breakpoint_table_by_lines_and_panel:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 1) ^ swrlb:lessThanOrEqual(?h, 2)
    ^ verticalLineCount(?v, ?n) ^ swrlb:equal(?n, 2)
    ^ hasVerticalPlane(?v, true)
    -> Breakpoint_table(?v)

rule chess_board_by_line_and_panel:
    Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
    ^ swrlb:greaterThan(?h, 1) ^ swrlb:lessThanOrEqual(?h, 1.5)
    ^ verticalLineCount(?v, ?n) ^ swrlb:equal(?n, 1)
    ^ hasVerticalPlane(?v, true)
    -> Chess_board(?v)

// Masts repeat along the track: a two-legged box one mast spacing away
// from a known mast is a mast as well, whatever its height band says.
rule mast_chain_by_spacing:
    Mast(?m) ^ Vertical_BoundingBox(?v)
    ^ verticalLineCount(?v, ?n) ^ swrlb:greaterThanOrEqual(?n, 2)
    ^ hasSpacing(Mast, ?d) ^ topo:isDistantFrom(?m, ?v, ?d)
    -> Mast(?v)

// Touching boxes are connected; bulk qualification asserts the same.
rule touch_means_connected:
    Touch(?a, ?b) -> Connected(?a, ?b)
"""


def default_rules() -> list[Rule]:
    return parse_rules(DEFAULT_RULES_TEXT)


def default_ruleset() -> ParsedRules:
    return parse_ruleset(DEFAULT_RULES_TEXT)


# -- packaged data ---------------------------------------------------------

def packaged_kb_text() -> str:
    return resources.files("widop").joinpath("data/db_domain.kb").read_text(
        encoding="utf-8")


def packaged_rules_text() -> str:
    return resources.files("widop").joinpath("data/db_default.rules").read_text(
        encoding="utf-8")


def load_domain_kb() -> KnowledgeBase:
    """The shipped domain pack, read back through the serializer."""
    return KnowledgeBase.deserialize(packaged_kb_text())


def load_default_rules() -> ParsedRules:
    return parse_ruleset(packaged_rules_text())


def domain_registry() -> Registry:
    from .planner import registry_from_kb
    return registry_from_kb(build_domain_kb())
