"""Independent reference implementations used to cross-check the package.

Everything here is deliberately naive: cross-product joins, scalar
per-axis interval arithmetic, exhaustive grid scans.  The only shared
code is the data-model layer (knowledge base containers and the rule
AST); all reasoning, geometry, and ordering logic is reimplemented from
first principles so that agreement with the package is evidence, not
tautology.
"""

from __future__ import annotations

import math
from collections import deque

from widop.kb import KnowledgeBase
from widop.rules import (BuiltinAtom, ClassAtom, DifferentFromAtom, Individual,
                         Literal, PropertyAtom, Rule, SameAsAtom, Variable)

# -- naive datalog fixpoint ---------------------------------------------------

# Facts are tuples:
#   ("class", individual, concept)
#   ("obj", subject, property, object_individual)
#   ("data", subject, property, canonical_value)


def canon_value(value) -> tuple[str, object]:
    """Canonical form for literal comparison: booleans before numbers."""
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, (int, float)):
        return ("num", float(value))
    return ("str", str(value))


def kb_facts(kb: KnowledgeBase) -> set[tuple]:
    facts: set[tuple] = set()
    for a in kb.assertions:
        if a.kind == "class":
            facts.add(("class", a.subject, a.predicate))
        elif a.kind == "object":
            facts.add(("obj", a.subject, a.predicate, a.object))
        elif a.kind == "data":
            facts.add(("data", a.subject, a.predicate, canon_value(a.object)))
    return facts


def _descendant_closure(kb: KnowledgeBase) -> dict[str, set[str]]:
    """concept -> all concepts at or below it, via exhaustive graph walk."""
    children: dict[str, list[str]] = {}
    for name, parent in kb.concepts.items():
        if parent is not None:
            children.setdefault(parent, []).append(name)
    closure: dict[str, set[str]] = {}
    for name in kb.concepts:
        seen = {name}
        queue = deque([name])
        while queue:
            for child in children.get(queue.popleft(), ()):
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        closure[name] = seen
    return closure


def _term_token(term):
    if isinstance(term, Variable):
        return ("var", term.name)
    if isinstance(term, Individual):
        return ("ind", term.name)
    if isinstance(term, Literal):
        return ("lit", canon_value(term.value))
    raise TypeError(f"unsupported term: {term!r}")


def _unify(token, value, binding):
    """Extend binding so token denotes value; None when impossible."""
    kind, payload = token
    if kind == "var":
        bound = binding.get(payload)
        if bound is None:
            out = dict(binding)
            out[payload] = value
            return out
        return binding if bound == value else None
    if kind == "ind":
        return binding if payload == value else None
    return binding if payload == value else None


def naive_fixpoint(kb: KnowledgeBase, rules: list[Rule]) -> set[tuple]:
    """Least fixpoint of builtin-free rules by repeated cross-product joins."""
    for rule in rules:
        for atom in list(rule.body) + list(rule.head):
            if isinstance(atom, (BuiltinAtom, SameAsAtom, DifferentFromAtom)):
                raise ValueError("oracle handles plain class/property atoms only")

    closure = _descendant_closure(kb)
    kinds = dict(kb.properties)
    facts = kb_facts(kb)

    def match_atom(atom, binding):
        results = []
        if isinstance(atom, ClassAtom):
            token = _term_token(atom.arg)
            allowed = closure.get(atom.concept, {atom.concept})
            for fact in facts:
                if fact[0] == "class" and fact[2] in allowed:
                    ext = _unify(token, fact[1], binding)
                    if ext is not None:
                        results.append(ext)
        elif isinstance(atom, PropertyAtom):
            tag = "obj" if kinds.get(atom.name) == "object" else "data"
            s_tok = _term_token(atom.subject)
            o_tok = _term_token(atom.object)
            for fact in facts:
                if fact[0] != tag or fact[2] != atom.name:
                    continue
                ext = _unify(s_tok, fact[1], binding)
                if ext is None:
                    continue
                ext = _unify(o_tok, fact[3], ext)
                if ext is not None:
                    results.append(ext)
        else:
            raise ValueError(f"unsupported atom {atom!r}")
        return results

    def ground(term, binding):
        kind, payload = _term_token(term)
        return binding[payload] if kind == "var" else payload

    changed = True
    while changed:
        changed = False
        for rule in rules:
            bindings = [dict()]
            for atom in rule.body:
                next_bindings = []
                for binding in bindings:
                    next_bindings.extend(match_atom(atom, binding))
                bindings = next_bindings
                if not bindings:
                    break
            for binding in bindings:
                for atom in rule.head:
                    if isinstance(atom, ClassAtom):
                        fact = ("class", ground(atom.arg, binding), atom.concept)
                    else:
                        tag = ("obj" if kinds.get(atom.name) == "object"
                               else "data")
                        fact = (tag, ground(atom.subject, binding), atom.name,
                                ground(atom.object, binding))
                    if fact not in facts:
                        facts.add(fact)
                        changed = True
    return facts


def apply_facts(kb: KnowledgeBase, facts: set[tuple]) -> KnowledgeBase:
    """Fresh copy of kb holding exactly the given facts (idempotent adds)."""
    out = kb.copy()
    for fact in sorted(facts, key=repr):
        if fact[0] == "class":
            out.assert_class(fact[1], fact[2])
        elif fact[0] == "obj":
            out.assert_object(fact[1], fact[2], fact[3])
        else:
            tag, value = fact[3]
            out.assert_data(fact[1], fact[2], value)
    return out


# -- interval/gap box relations ----------------------------------------------


def box_relations(lo1, hi1, lo2, hi2, touch_epsilon=0.1, overlap_epsilon=1e-9):
    """Relations between two axis-aligned boxes given as corner triples.

    Pure scalar arithmetic on raw tuples; returns a dict with keys
    intersect, touch, connected, upper (box 1 relative to box 2), and gap.
    """
    overlaps = []
    for axis in range(3):
        overlaps.append(min(hi1[axis], hi2[axis]) - max(lo1[axis], lo2[axis]))
    intersect = all(o > overlap_epsilon for o in overlaps)
    gap_sq = 0.0
    for o in overlaps:
        if o < 0:
            gap_sq += o * o
    gap = math.sqrt(gap_sq)
    touch = (not intersect) and gap <= touch_epsilon
    footprint = overlaps[0] > overlap_epsilon and overlaps[1] > overlap_epsilon
    upper = (lo1[2] >= hi2[2] - touch_epsilon) and footprint
    return {"intersect": intersect, "touch": touch,
            "connected": intersect or touch, "upper": upper, "gap": gap}


# -- execution-order checking --------------------------------------------------


def order_violations(order: list[str], selected: set[str],
                     successor_of: dict[str, str | None],
                     inputs_of: dict[str, tuple], outputs_of: dict[str, tuple],
                     raw_kinds: set) -> list[str]:
    """All the ways an execution order is invalid; empty list means valid."""
    problems = []
    if sorted(order) != sorted(selected):
        problems.append("order is not a permutation of the selection")
        return problems
    position = {name: i for i, name in enumerate(order)}
    for name in order:
        successor = successor_of.get(name)
        if successor is not None:
            if successor not in position:
                problems.append(f"{name} requires unselected {successor}")
            elif position[successor] >= position[name]:
                problems.append(f"{name} runs before its prerequisite {successor}")
        for kind in inputs_of[name]:
            if kind in raw_kinds:
                continue
            if not any(kind in outputs_of[other] and position[other] < position[name]
                       for other in order):
                problems.append(f"{name} has no earlier producer of {kind}")
    return problems


# -- grid seed scan -------------------------------------------------------------


def grid_seed_clusters(points, cell, extent_threshold, min_points, max_gap):
    """Expected seed count by exhaustive cell scan plus flood-fill clustering.

    Returns a list of cluster centroids (x, y), one per connected group
    of cells whose vertical extent and population clear the thresholds.
    Cells are connected when their indices differ by at most the number
    of cells spanned by max_gap in each direction.
    """
    cells: dict[tuple[int, int], list[float]] = {}
    coords: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for x, y, z in points:
        key = (math.floor(x / cell), math.floor(y / cell))
        cells.setdefault(key, []).append(z)
        coords.setdefault(key, []).append((x, y))
    hot = {key for key, zs in cells.items()
           if len(zs) >= min_points and max(zs) - min(zs) >= extent_threshold}
    reach = max(1, int(math.ceil(max_gap / cell)))
    clusters = []
    remaining = set(hot)
    while remaining:
        start = remaining.pop()
        group = [start]
        queue = deque([start])
        while queue:
            cx, cy = queue.popleft()
            near = [key for key in remaining
                    if abs(key[0] - cx) <= reach and abs(key[1] - cy) <= reach]
            for key in near:
                remaining.remove(key)
                group.append(key)
                queue.append(key)
        xs = [p[0] for key in group for p in coords[key]]
        ys = [p[1] for key in group for p in coords[key]]
        clusters.append((sum(xs) / len(xs), sum(ys) / len(ys)))
    return clusters
