"""In-memory knowledge base: concept hierarchy, properties, assertions.

The store keeps a single-parent concept hierarchy (TBox), object/data
property declarations, and a duplicate-free assertion set (ABox).
Individuals are auto-registered the first time an assertion mentions
them; detected primitives attach to individuals as geometry payloads.

Queries over class assertions are subsumption-aware: asking for a
concept also matches assertions of any of its descendants.  Asserted
sameAs links merge individuals for matching purposes without rewriting
the stored ids; differentFrom holds only where asserted.

Serialization is a line-based, TAB-separated text format.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import total_ordering

from .geometry import Box3, Line3, Plane3

log = logging.getLogger(__name__)

LiteralValue = float | bool | str
GeometryPayload = Box3 | Line3 | Plane3

RESERVED_PROPERTIES = ("sameAs", "differentFrom")

#: Wildcard marker for query patterns (None is not used because literals
#: may legitimately be empty strings or False).
ANY = object()

_FORMAT_HEADER = "# kb 1"


class KBError(Exception):
    """Raised for declaration conflicts, bad assertions, or unknown names."""


class KBParseError(KBError):
    """Raised when deserialization hits a malformed line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _valid_name(name: str) -> bool:
    if not name or not isinstance(name, str):
        return False
    if not (name[0].isalpha() or name[0] == "_"):
        return False
    return all(ch.isalnum() or ch == "_" for ch in name)


def _check_name(name: str, what: str) -> None:
    if not _valid_name(name):
        raise KBError(f"invalid {what} name: {name!r}")


def literal_sort_key(value: LiteralValue) -> tuple[int, str]:
    if isinstance(value, bool):
        return (0, "true" if value else "false")
    if isinstance(value, float):
        return (1, repr(value))
    return (2, value)


def literal_equal(a: LiteralValue, b: LiteralValue) -> bool:
    """Type-aware equality: booleans never equal numbers, numbers never equal text."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a is b
    if isinstance(a, float) or isinstance(b, float):
        return isinstance(a, float) and isinstance(b, float) and a == b
    return isinstance(a, str) and isinstance(b, str) and a == b


def literal_to_text(value: LiteralValue) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    escaped = (value.replace("\\", "\\\\").replace('"', '\\"')
               .replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r"))
    return f'"{escaped}"'


def literal_from_text(text: str) -> LiteralValue:
    if text == "true":
        return True
    if text == "false":
        return False
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"'):
            raise ValueError(f"unterminated string literal: {text!r}")
        body = text[1:-1]
        out = []
        i = 0
        escapes = {"\\": "\\", '"': '"', "t": "\t", "n": "\n", "r": "\r"}
        while i < len(body):
            ch = body[i]
            if ch == "\\":
                if i + 1 >= len(body) or body[i + 1] not in escapes:
                    raise ValueError(f"bad escape in string literal: {text!r}")
                out.append(escapes[body[i + 1]])
                i += 2
            else:
                out.append(ch)
                i += 1
        return "".join(out)
    try:
        return float(text)
    except ValueError as exc:
        raise ValueError(f"unrecognized literal: {text!r}") from exc


def _normalize_literal(value) -> LiteralValue:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        value = float(value)
        if not math.isfinite(value):
            raise KBError("numeric literals must be finite")
        return value
    if isinstance(value, str):
        return value
    raise KBError(f"unsupported literal type: {type(value).__name__}")


@total_ordering
@dataclass(frozen=True)
class Assertion:
    """One ABox fact: a class membership, an object link, or a data value.

    kind is one of 'class', 'object', 'data'.  For class assertions the
    predicate is the concept name and the object is unused (empty); for
    object assertions the object is an individual id; for data assertions
    it is a typed literal.
    """

    kind: str
    subject: str
    predicate: str
    object: LiteralValue = ""

    def __post_init__(self) -> None:
        if self.kind not in ("class", "object", "data"):
            raise KBError(f"unknown assertion kind: {self.kind!r}")
        _check_name(self.subject, "individual")
        _check_name(self.predicate, "predicate")
        if self.kind == "class":
            object.__setattr__(self, "object", "")
        elif self.kind == "object":
            _check_name(self.object, "individual")
        else:
            object.__setattr__(self, "object", _normalize_literal(self.object))

    def sort_key(self) -> tuple:
        kind_rank = {"class": 0, "object": 1, "data": 2}[self.kind]
        return (self.subject, self.predicate, kind_rank) + literal_sort_key(self.object)

    def __lt__(self, other: "Assertion") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        if self.kind == "class":
            return f"class({self.subject}, {self.predicate})"
        if self.kind == "object":
            return f"object({self.subject}, {self.predicate}, {self.object})"
        return f"data({self.subject}, {self.predicate}, {literal_to_text(self.object)})"


class KnowledgeBase:
    """Mutable concept/property/assertion store with geometry attachments."""

    def __init__(self) -> None:
        self._parents: dict[str, str | None] = {}
        self._children: dict[str, list[str]] = {}
        self._properties: dict[str, str] = {}
        self._assertions: set[Assertion] = set()
        self._by_pred: dict[str, set[Assertion]] = {}
        self._by_pred_subj: dict[tuple[str, str], set[Assertion]] = {}
        self._classes_of: dict[str, set[str]] = {}
        self._members_of: dict[str, set[str]] = {}
        self._individuals: set[str] = set()
        self._geometry: dict[str, GeometryPayload] = {}
        self._same_groups: dict[str, str] = {}

    # -- declarations -------------------------------------------------------

    def declare_concept(self, name: str, parent: str | None = None) -> None:
        _check_name(name, "concept")
        if name in self._parents:
            raise KBError(f"concept already declared: {name}")
        if name in self._properties:
            raise KBError(f"name already declared as a property: {name}")
        if parent is not None:
            if parent == name:
                raise KBError(f"concept cannot be its own parent: {name}")
            if parent not in self._parents:
                raise KBError(f"unknown parent concept: {parent}")
        self._parents[name] = parent
        self._children[name] = []
        if parent is not None:
            self._children[parent].append(name)

    def declare_property(self, name: str, kind: str) -> None:
        _check_name(name, "property")
        if kind not in ("object", "data"):
            raise KBError(f"property kind must be 'object' or 'data', got {kind!r}")
        if name in RESERVED_PROPERTIES:
            raise KBError(f"property name is reserved: {name}")
        if name in self._properties:
            raise KBError(f"property already declared: {name}")
        if name in self._parents:
            raise KBError(f"name already declared as a concept: {name}")
        self._properties[name] = kind

    @property
    def concepts(self) -> dict[str, str | None]:
        return dict(self._parents)

    @property
    def properties(self) -> dict[str, str]:
        return dict(self._properties)

    def has_concept(self, name: str) -> bool:
        return name in self._parents

    def property_kind(self, name: str) -> str:
        if name in RESERVED_PROPERTIES:
            return "object"
        if name not in self._properties:
            raise KBError(f"unknown property: {name}")
        return self._properties[name]

    # -- hierarchy ----------------------------------------------------------

    def ancestors(self, concept: str) -> list[str]:
        """The concept itself followed by its parent chain up to the root."""
        if concept not in self._parents:
            raise KBError(f"unknown concept: {concept}")
        chain = [concept]
        node = self._parents[concept]
        while node is not None:
            chain.append(node)
            node = self._parents[node]
        return chain

    def descendants(self, concept: str) -> set[str]:
        """The concept itself plus everything below it."""
        if concept not in self._parents:
            raise KBError(f"unknown concept: {concept}")
        out = set()
        stack = [concept]
        while stack:
            node = stack.pop()
            out.add(node)
            stack.extend(self._children[node])
        return out

    def is_subconcept(self, concept: str, ancestor: str) -> bool:
        """True when `ancestor` appears on `concept`'s parent chain (or equals it)."""
        return ancestor in self.ancestors(concept)

    def depth(self, concept: str) -> int:
        return len(self.ancestors(concept)) - 1

    # -- sameAs bookkeeping ---------------------------------------------------

    def _rep(self, individual: str) -> str:
        node = individual
        while node in self._same_groups:
            node = self._same_groups[node]
        return node

    def _union(self, a: str, b: str) -> None:
        ra, rb = self._rep(a), self._rep(b)
        if ra != rb:
            lo, hi = sorted((ra, rb))
            self._same_groups[hi] = lo

    def _same(self, a: str, b: str) -> bool:
        if a == b:
            return True
        if not self._same_groups:
            return False
        return self._rep(a) == self._rep(b)

    def are_same(self, a: str, b: str) -> bool:
        """True when the two ids are equal or linked through asserted sameAs."""
        return self._same(a, b)

    def same_individuals(self, individual: str) -> list[str]:
        """Every known id equivalent to the given one (including itself)."""
        if not self._same_groups:
            return [individual] if individual in self._individuals else [individual]
        rep = self._rep(individual)
        members = {i for i in self._individuals if self._rep(i) == rep}
        members.add(individual)
        return sorted(members)

    def different_partners(self, individual: str) -> list[str]:
        out = set()
        for a in self._by_pred.get("differentFrom", ()):
            if self._same(a.subject, individual):
                out.add(a.object)
            if self._same(a.object, individual):
                out.add(a.subject)
        return sorted(out)

    # -- assertions -----------------------------------------------------------

    def add(self, assertion: Assertion) -> bool:
        """Insert an assertion; returns True when it was new."""
        if assertion.kind == "class":
            if assertion.predicate not in self._parents:
                raise KBError(f"unknown concept in class assertion: {assertion.predicate}")
        else:
            kind = self.property_kind(assertion.predicate)
            if kind != assertion.kind and assertion.predicate not in RESERVED_PROPERTIES:
                raise KBError(
                    f"property {assertion.predicate} is {kind}-valued, "
                    f"got a {assertion.kind} assertion")
        if assertion in self._assertions:
            return False
        self._assertions.add(assertion)
        self._by_pred.setdefault(assertion.predicate, set()).add(assertion)
        self._by_pred_subj.setdefault((assertion.predicate, assertion.subject), set()).add(assertion)
        self._register_individual(assertion.subject)
        if assertion.kind == "class":
            self._classes_of.setdefault(assertion.subject, set()).add(assertion.predicate)
            self._members_of.setdefault(assertion.predicate, set()).add(assertion.subject)
        elif assertion.kind == "object":
            self._register_individual(assertion.object)
            if assertion.predicate == "sameAs":
                self._union(assertion.subject, assertion.object)
        return True

    def _register_individual(self, name: str) -> None:
        self._individuals.add(name)

    def assert_class(self, individual: str, concept: str) -> bool:
        return self.add(Assertion("class", individual, concept))

    def assert_object(self, subject: str, prop: str, obj: str) -> bool:
        return self.add(Assertion("object", subject, prop, obj))

    def assert_data(self, subject: str, prop: str, value: LiteralValue) -> bool:
        return self.add(Assertion("data", subject, prop, value))

    @property
    def assertions(self) -> list[Assertion]:
        return sorted(self._assertions)

    def assertion_count(self) -> int:
        return len(self._assertions)

    def individuals(self) -> list[str]:
        return sorted(self._individuals)

    # -- queries --------------------------------------------------------------

    def is_instance_of(self, individual: str, concept: str) -> bool:
        """True iff the individual is asserted into the concept or a descendant."""
        allowed = self.descendants(concept)
        for ind in (self.same_individuals(individual) if self._same_groups else (individual,)):
            if self._classes_of.get(ind, frozenset()) & allowed:
                return True
        return False

    def instances_of(self, concept: str) -> list[str]:
        """All individuals asserted into the concept or any descendant, sorted."""
        out: set[str] = set()
        for sub in self.descendants(concept):
            out |= self._members_of.get(sub, set())
        return sorted(out)

    def query(self, subject=ANY, predicate=ANY, obj=ANY) -> list[Assertion]:
        """All assertions matching the pattern, in canonical order.

        ANY fields match everything.  When the predicate names a declared
        concept, class assertions of any descendant concept match too.
        """
        if predicate is not ANY and predicate in self._parents:
            allowed = self.descendants(predicate)
            pool: list[Assertion] = []
            for concept in allowed:
                pool.extend(self._by_pred.get(concept, ()))
            candidates = [a for a in pool if a.kind == "class"]
        elif predicate is not ANY:
            if subject is not ANY and not self._same_groups:
                candidates = list(self._by_pred_subj.get((predicate, subject), ()))
            else:
                candidates = list(self._by_pred.get(predicate, ()))
        else:
            candidates = list(self._assertions)
        out = []
        for a in candidates:
            if subject is not ANY and not self._same(a.subject, subject):
                continue
            if obj is not ANY:
                if a.kind == "class":
                    continue
                if a.kind == "object":
                    if not isinstance(obj, str) or not self._same(a.object, obj):
                        continue
                elif not literal_equal(a.object, obj if not isinstance(obj, int) or isinstance(obj, bool) else float(obj)):
                    continue
            out.append(a)
        out.sort()
        return out

    def most_specific_class(self, individual: str, under: str | None = None) -> str | None:
        """Deepest directly asserted class, optionally restricted to a subtree.

        Equal-depth ties resolve lexicographically and log a warning.
        """
        classes: set[str] = set()
        for ind in (self.same_individuals(individual) if self._same_groups else (individual,)):
            classes |= self._classes_of.get(ind, set())
        if under is not None:
            allowed = self.descendants(under)
            classes &= allowed
        if not classes:
            return None
        best_depth = max(self.depth(c) for c in classes)
        deepest = sorted(c for c in classes if self.depth(c) == best_depth)
        if len(deepest) > 1:
            log.warning("individual %s has equally specific classes %s; picking %s",
                        individual, deepest, deepest[0])
        return deepest[0]

    # -- geometry attachments ---------------------------------------------------

    def attach_geometry(self, individual: str, payload: GeometryPayload) -> None:
        _check_name(individual, "individual")
        if not isinstance(payload, (Box3, Line3, Plane3)):
            raise KBError(f"unsupported geometry payload: {type(payload).__name__}")
        if "Geometry" in self._parents and not self.is_instance_of(individual, "Geometry"):
            raise KBError(f"{individual} is not asserted into a Geometry class")
        self._register_individual(individual)
        self._geometry[individual] = payload

    def geometry(self, individual: str) -> GeometryPayload | None:
        return self._geometry.get(individual)

    def geometry_items(self) -> list[tuple[str, GeometryPayload]]:
        return sorted(self._geometry.items())

    # -- lifecycle ---------------------------------------------------------------

    def copy(self) -> "KnowledgeBase":
        clone = KnowledgeBase()
        clone._parents = dict(self._parents)
        clone._children = {k: list(v) for k, v in self._children.items()}
        clone._properties = dict(self._properties)
        clone._assertions = set(self._assertions)
        clone._by_pred = {k: set(v) for k, v in self._by_pred.items()}
        clone._by_pred_subj = {k: set(v) for k, v in self._by_pred_subj.items()}
        clone._classes_of = {k: set(v) for k, v in self._classes_of.items()}
        clone._members_of = {k: set(v) for k, v in self._members_of.items()}
        clone._individuals = set(self._individuals)
        clone._geometry = dict(self._geometry)
        clone._same_groups = dict(self._same_groups)
        return clone

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (self._parents == other._parents
                and self._properties == other._properties
                and self._assertions == other._assertions
                and self._geometry == other._geometry)

    # -- serialization --------------------------------------------------------------

    def serialize(self) -> str:
        lines = [_FORMAT_HEADER]
        for name in sorted(self._parents):
            lines.append(f"C\t{name}\t{self._parents[name] or '-'}")
        for name in sorted(self._properties):
            lines.append(f"P\t{name}\t{self._properties[name]}")
        for a in sorted(self._assertions):
            if a.kind == "class":
                lines.append(f"A\tclass\t{a.subject}\t{a.predicate}")
            elif a.kind == "object":
                lines.append(f"A\tobj\t{a.subject}\t{a.predicate}\t{a.object}")
            else:
                lines.append(f"A\tdata\t{a.subject}\t{a.predicate}\t{literal_to_text(a.object)}")
        for ind, payload in sorted(self._geometry.items()):
            lines.append("G\t" + _geometry_to_record(ind, payload))
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "KnowledgeBase":
        kb = cls()
        concept_lines: list[tuple[int, str, str | None]] = []
        other_lines: list[tuple[int, list[str]]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            tag = fields[0]
            if tag == "C":
                if len(fields) != 3:
                    raise KBParseError("C record needs 2 fields", lineno)
                parent = None if fields[2] == "-" else fields[2]
                concept_lines.append((lineno, fields[1], parent))
            elif tag in ("P", "A", "G"):
                other_lines.append((lineno, fields))
            else:
                raise KBParseError(f"unknown record tag: {tag!r}", lineno)
        # Parents may be declared on later lines; insert in dependency order.
        pending = list(concept_lines)
        while pending:
            progressed = False
            still = []
            for entry in pending:
                lineno, name, parent = entry
                if parent is None or parent in kb._parents:
                    try:
                        kb.declare_concept(name, parent)
                    except KBError as exc:
                        raise KBParseError(str(exc), lineno) from exc
                    progressed = True
                else:
                    still.append(entry)
            if not progressed:
                lineno, name, parent = still[0]
                raise KBParseError(f"unknown parent concept: {parent}", lineno)
            pending = still
        for lineno, fields in other_lines:
            try:
                _apply_record(kb, fields)
            except (KBError, ValueError) as exc:
                raise KBParseError(str(exc), lineno) from exc
        return kb


def _geometry_to_record(individual: str, payload: GeometryPayload) -> str:
    if isinstance(payload, Box3):
        nums = list(payload.min_corner) + list(payload.max_corner)
        return f"{individual}\tbox\t" + " ".join(repr(v) for v in nums)
    if isinstance(payload, Line3):
        nums = list(payload.anchor) + list(payload.direction) + list(payload.extent)
        return (f"{individual}\tline\t" + " ".join(repr(v) for v in nums)
                + f" {payload.inlier_count}")
    nums = list(payload.normal) + [payload.offset]
    return (f"{individual}\tplane\t" + " ".join(repr(v) for v in nums)
            + f" {payload.inlier_count}")


def _apply_record(kb: KnowledgeBase, fields: list[str]) -> None:
    tag = fields[0]
    if tag == "P":
        if len(fields) != 3:
            raise KBError("P record needs 2 fields")
        kb.declare_property(fields[1], fields[2])
    elif tag == "A":
        if len(fields) < 2:
            raise KBError("A record needs a kind")
        kind = fields[1]
        if kind == "class":
            if len(fields) != 4:
                raise KBError("class assertion needs 2 fields")
            kb.add(Assertion("class", fields[2], fields[3]))
        elif kind == "obj":
            if len(fields) != 5:
                raise KBError("object assertion needs 3 fields")
            kb.add(Assertion("object", fields[2], fields[3], fields[4]))
        elif kind == "data":
            if len(fields) != 5:
                raise KBError("data assertion needs 3 fields")
            kb.add(Assertion("data", fields[2], fields[3], literal_from_text(fields[4])))
        else:
            raise KBError(f"unknown assertion kind: {kind!r}")
    elif tag == "G":
        if len(fields) != 4:
            raise KBError("G record needs 3 fields")
        individual, shape, payload_text = fields[1], fields[2], fields[3]
        parts = payload_text.split(" ")
        try:
            nums = [float(p) for p in parts]
        except ValueError as exc:
            raise KBError(f"bad numeric field in G record: {exc}") from exc
        if shape == "box":
            if len(nums) != 6:
                raise KBError("box record needs 6 numbers")
            payload: GeometryPayload = Box3(tuple(nums[:3]), tuple(nums[3:]))
        elif shape == "line":
            if len(nums) != 9:
                raise KBError("line record needs 9 numbers")
            payload = Line3(tuple(nums[:3]), tuple(nums[3:6]), int(nums[8]), tuple(nums[6:8]))
        elif shape == "plane":
            if len(nums) != 5:
                raise KBError("plane record needs 5 numbers")
            payload = Plane3(tuple(nums[:3]), nums[3], int(nums[4]))
        else:
            raise KBError(f"unknown geometry shape: {shape!r}")
        kb.attach_geometry(individual, payload)
