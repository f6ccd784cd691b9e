"""Forward-chaining rule engine with pluggable builtin predicates.

Evaluation is a naive fixpoint: rules run in file order, each rule's
head assertions apply immediately, and passes repeat until a full pass
adds nothing.  Inference is monotone (facts are only added), so the
fixpoint is unique and the run is deterministic: knowledge-base
enumerations come back in canonical order and generative builtins are
memoized on their bound arguments for the duration of one evaluation.

Builtins come in two kinds.  A filter receives fully bound raw values
and answers yes/no.  A generative builtin may leave declared positions
unbound; it returns complete argument tuples and the engine binds the
open positions (and double-checks the bound ones, so a fully bound
generative call degrades to a filter).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .kb import ANY, Assertion, KnowledgeBase, literal_equal, literal_sort_key
from .rules import (Atom, BuiltinAtom, ClassAtom, DifferentFromAtom, Individual,
                    Literal, PropertyAtom, Rule, SameAsAtom, Term, Variable,
                    atom_variables)

Binding = dict[str, Term]
RawValue = float | bool | str


class EngineError(Exception):
    """Raised for registration conflicts, validation failures, or runaway runs."""


@dataclass(frozen=True)
class EngineConfig:
    max_iterations: int = 100
    seed: int = 0
    trace: bool = False

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise EngineError("max_iterations must be at least 1")


@dataclass
class EvalContext:
    """Handed to builtin handlers: the live KB plus run-scoped utilities."""

    kb: KnowledgeBase
    config: EngineConfig
    rng: random.Random


@dataclass(frozen=True)
class BuiltinDescriptor:
    namespace: str
    name: str
    arity: int
    kind: str  # 'filter' | 'generative'
    handler: Callable
    may_be_unbound: frozenset[int] = frozenset()
    memoize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("filter", "generative"):
            raise EngineError(f"builtin kind must be filter or generative: {self.kind!r}")
        if self.arity < 1:
            raise EngineError("builtin arity must be positive")
        if self.kind == "filter" and self.may_be_unbound:
            raise EngineError("filter builtins cannot declare unbound positions")
        bad = [p for p in self.may_be_unbound if not 1 <= p <= self.arity]
        if bad:
            raise EngineError(f"may_be_unbound positions out of range: {sorted(bad)}")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.namespace, self.name, self.arity)

    @property
    def display(self) -> str:
        return f"{self.namespace}:{self.name}"


@dataclass
class EvaluationReport:
    iterations: int = 0
    assertions_added: int = 0
    builtin_calls: dict[str, int] = field(default_factory=dict)
    trace: list[str] = field(default_factory=list)


def _raw(term: Term) -> RawValue:
    if isinstance(term, Individual):
        return term.name
    if isinstance(term, Literal):
        return term.value
    raise EngineError(f"cannot unwrap unbound term {term}")


def _raw_key(value: RawValue) -> tuple[int, str]:
    return literal_sort_key(value)


class RuleEngine:
    """Registry of builtins plus the fixpoint evaluator."""

    def __init__(self, config: EngineConfig | None = None,
                 register_standard: bool = True) -> None:
        self.config = config or EngineConfig()
        self._builtins: dict[tuple[str, str, int], BuiltinDescriptor] = {}
        self._aliases: dict[tuple[str, str], tuple[str, str]] = {}
        if register_standard:
            register_comparison_builtins(self)
            register_arithmetic_builtins(self)
            self.register_alias("swrlb", "moreThan", "swrlb", "greaterThan")

    # -- registry -----------------------------------------------------------

    def register(self, descriptor: BuiltinDescriptor) -> None:
        if descriptor.key in self._builtins:
            raise EngineError(f"builtin already registered: {descriptor.display}"
                              f"/{descriptor.arity}")
        self._builtins[descriptor.key] = descriptor

    def register_alias(self, namespace: str, name: str,
                       target_namespace: str, target_name: str) -> None:
        if (namespace, name) in self._aliases:
            raise EngineError(f"alias already registered: {namespace}:{name}")
        self._aliases[(namespace, name)] = (target_namespace, target_name)

    def _resolve(self, atom: BuiltinAtom) -> BuiltinDescriptor:
        ns, name = self._aliases.get((atom.namespace, atom.name),
                                     (atom.namespace, atom.name))
        desc = self._builtins.get((ns, name, len(atom.args)))
        if desc is None:
            arities = sorted(a for (n2, m2, a) in self._builtins if (n2, m2) == (ns, name))
            if arities:
                raise EngineError(
                    f"builtin {atom.namespace}:{atom.name} takes "
                    f"{'/'.join(map(str, arities))} arguments, got {len(atom.args)}")
            raise EngineError(f"unknown builtin: {atom.namespace}:{atom.name}")
        return desc

    # -- validation and scheduling -------------------------------------------

    def _validate_rule(self, rule: Rule, kb: KnowledgeBase) -> None:
        def fail(msg: str) -> None:
            raise EngineError(f"rule {rule.name}: {msg}")

        for atom in rule.body + rule.head:
            if isinstance(atom, ClassAtom):
                if not kb.has_concept(atom.concept):
                    fail(f"unknown concept {atom.concept}")
                if isinstance(atom.arg, Literal):
                    fail(f"literal argument in class atom {atom.concept}")
            elif isinstance(atom, PropertyAtom):
                if atom.name not in kb.properties:
                    fail(f"unknown property {atom.name}")
                if isinstance(atom.subject, Literal):
                    fail(f"literal subject in property atom {atom.name}")
                kind = kb.property_kind(atom.name)
                if kind == "object" and isinstance(atom.object, Literal):
                    fail(f"literal value for object property {atom.name}")
                if kind == "data" and isinstance(atom.object, Individual):
                    fail(f"individual value for data property {atom.name}")
            elif isinstance(atom, (SameAsAtom, DifferentFromAtom)):
                if isinstance(atom.left, Literal) or isinstance(atom.right, Literal):
                    fail("literal argument in identity atom")
            elif isinstance(atom, BuiltinAtom):
                self._resolve(atom)
        for atom in rule.head:
            if isinstance(atom, BuiltinAtom):
                fail("builtin atom in head")

    def _schedule(self, rule: Rule) -> list[Atom]:
        """Order body atoms so every atom sees its required variables bound."""
        remaining = list(rule.body)
        bound: set[str] = set()
        order: list[Atom] = []
        while remaining:
            chosen = None
            for atom in remaining:
                if self._ready(atom, bound):
                    chosen = atom
                    break
            if chosen is None:
                names = ", ".join(str(a) for a in remaining)
                raise EngineError(
                    f"rule {rule.name}: cannot order atoms; a built-in or identity "
                    f"atom is reached with unbound arguments ({names})")
            remaining.remove(chosen)
            order.append(chosen)
            bound |= atom_variables(chosen)
        return order

    def _ready(self, atom: Atom, bound: set[str]) -> bool:
        if isinstance(atom, (ClassAtom, PropertyAtom)):
            return True
        if isinstance(atom, (SameAsAtom, DifferentFromAtom)):
            sides = (atom.left, atom.right)
            return any(not isinstance(t, Variable) or t.name in bound for t in sides)
        desc = self._resolve(atom)
        for pos, term in enumerate(atom.args, start=1):
            if isinstance(term, Variable) and term.name not in bound:
                if desc.kind == "filter" or pos not in desc.may_be_unbound:
                    return False
        return True

    # -- evaluation -------------------------------------------------------------

    def evaluate(self, kb: KnowledgeBase, rules: Iterable[Rule]) -> EvaluationReport:
        rules = list(rules)
        for rule in rules:
            self._validate_rule(rule, kb)
        schedules = {rule.name: self._schedule(rule) for rule in rules}

        report = EvaluationReport()
        ctx = EvalContext(kb, self.config, random.Random(self.config.seed))
        memo: dict[tuple, list[tuple[Term, ...]]] = {}

        while True:
            report.iterations += 1
            added_this_pass = 0
            for rule in rules:
                for binding in self._join(ctx, schedules[rule.name], 0, {},
                                          memo, report):
                    added_this_pass += self._apply_head(ctx, rule, binding, report)
            report.assertions_added += added_this_pass
            if added_this_pass == 0:
                break
            if report.iterations >= self.config.max_iterations:
                raise EngineError(
                    f"no fixpoint after {self.config.max_iterations} iterations")
        return report

    def evaluate_single(self, kb: KnowledgeBase, rule: Rule) -> list[Assertion]:
        """One pass of one rule against a scratch copy; returns the would-be additions."""
        scratch = kb.copy()
        self._validate_rule(rule, scratch)
        schedule = self._schedule(rule)
        ctx = EvalContext(scratch, self.config, random.Random(self.config.seed))
        memo: dict[tuple, list[tuple[Term, ...]]] = {}
        report = EvaluationReport()
        out: set[Assertion] = set()
        for binding in self._join(ctx, schedule, 0, {}, memo, report):
            for atom in rule.head:
                assertion = self._head_assertion(scratch, rule, atom, binding)
                if scratch.add(assertion):
                    out.add(assertion)
        baseline = set(kb.assertions)
        return sorted(a for a in out if a not in baseline)

    # -- join ----------------------------------------------------------------------

    def _join(self, ctx: EvalContext, order: list[Atom], idx: int,
              binding: Binding, memo: dict, report: EvaluationReport
              ) -> Iterator[Binding]:
        if idx == len(order):
            yield dict(binding)
            return
        atom = order[idx]
        for extended in self._enumerate_atom(ctx, atom, binding, memo, report):
            yield from self._join(ctx, order, idx + 1, extended, memo, report)

    def _resolve_term(self, term: Term, binding: Binding) -> Term:
        if isinstance(term, Variable):
            return binding.get(term.name, term)
        return term

    def _enumerate_atom(self, ctx: EvalContext, atom: Atom, binding: Binding,
                        memo: dict, report: EvaluationReport) -> Iterator[Binding]:
        if isinstance(atom, ClassAtom):
            yield from self._enumerate_class(ctx, atom, binding)
        elif isinstance(atom, PropertyAtom):
            yield from self._enumerate_property(ctx, atom, binding)
        elif isinstance(atom, (SameAsAtom, DifferentFromAtom)):
            yield from self._enumerate_identity(ctx, atom, binding)
        else:
            yield from self._enumerate_builtin(ctx, atom, binding, memo, report)

    def _enumerate_class(self, ctx: EvalContext, atom: ClassAtom,
                         binding: Binding) -> Iterator[Binding]:
        term = self._resolve_term(atom.arg, binding)
        if isinstance(term, Variable):
            for ind in ctx.kb.instances_of(atom.concept):
                out = dict(binding)
                out[term.name] = Individual(ind)
                yield out
        elif isinstance(term, Individual):
            if ctx.kb.is_instance_of(term.name, atom.concept):
                yield binding

    def _enumerate_property(self, ctx: EvalContext, atom: PropertyAtom,
                            binding: Binding) -> Iterator[Binding]:
        kind = ctx.kb.property_kind(atom.name)
        subj = self._resolve_term(atom.subject, binding)
        obj = self._resolve_term(atom.object, binding)
        if isinstance(subj, Literal):
            return
        subj_pat = subj.name if isinstance(subj, Individual) else ANY
        if isinstance(obj, Variable):
            obj_pat = ANY
        elif isinstance(obj, Individual):
            if kind == "data":
                return
            obj_pat = obj.name
        else:
            if kind == "object":
                return
            obj_pat = obj.value
        for assertion in ctx.kb.query(subj_pat, atom.name, obj_pat):
            if assertion.kind == "class":
                continue
            out = dict(binding)
            if isinstance(subj, Variable):
                out[subj.name] = Individual(assertion.subject)
            if isinstance(obj, Variable):
                if assertion.kind == "object":
                    out[obj.name] = Individual(assertion.object)
                else:
                    out[obj.name] = Literal(assertion.object)
            yield out

    def _enumerate_identity(self, ctx: EvalContext,
                            atom: SameAsAtom | DifferentFromAtom,
                            binding: Binding) -> Iterator[Binding]:
        same = isinstance(atom, SameAsAtom)
        left = self._resolve_term(atom.left, binding)
        right = self._resolve_term(atom.right, binding)
        left_open = isinstance(left, Variable)
        right_open = isinstance(right, Variable)
        if left_open and right_open:
            raise EngineError(f"identity atom {atom} reached with both sides unbound")
        if not left_open and not right_open:
            a, b = left.name, right.name
            holds = ctx.kb.are_same(a, b) if same else b in ctx.kb.different_partners(a)
            if holds:
                yield binding
            return
        anchor = right if left_open else left
        open_var = left if left_open else right
        partners = (ctx.kb.same_individuals(anchor.name) if same
                    else ctx.kb.different_partners(anchor.name))
        for ind in partners:
            out = dict(binding)
            out[open_var.name] = Individual(ind)
            yield out

    def _enumerate_builtin(self, ctx: EvalContext, atom: BuiltinAtom,
                           binding: Binding, memo: dict,
                           report: EvaluationReport) -> Iterator[Binding]:
        desc = self._resolve(atom)
        terms = [self._resolve_term(t, binding) for t in atom.args]
        bound: dict[int, Term] = {}
        open_positions: list[tuple[int, str]] = []
        for pos, term in enumerate(terms, start=1):
            if isinstance(term, Variable):
                open_positions.append((pos, term.name))
            else:
                bound[pos] = term

        if desc.kind == "filter":
            if open_positions:
                raise EngineError(f"filter builtin {desc.display} reached with "
                                  f"unbound argument ?{open_positions[0][1]}")
            args = tuple(_raw(t) for t in terms)
            report.builtin_calls[desc.display] = report.builtin_calls.get(desc.display, 0) + 1
            if desc.handler(ctx, args):
                yield binding
            return

        raw_bound = {pos: _raw(t) for pos, t in bound.items()}
        results = None
        key = None
        if desc.memoize:
            key = (desc.namespace, desc.name, desc.arity,
                   tuple((pos, _raw_key(v)) for pos, v in sorted(raw_bound.items())))
            results = memo.get(key)
        if results is None:
            report.builtin_calls[desc.display] = report.builtin_calls.get(desc.display, 0) + 1
            results = [tuple(t) for t in desc.handler(ctx, raw_bound)]
            for row in results:
                if len(row) != desc.arity:
                    raise EngineError(f"builtin {desc.display} returned a tuple of "
                                      f"{len(row)} terms; expected {desc.arity}")
                if any(isinstance(t, Variable) for t in row):
                    raise EngineError(f"builtin {desc.display} returned an unbound term")
            if key is not None:
                memo[key] = results
        for row in results:
            if any(not _terms_match(row[pos - 1], term) for pos, term in bound.items()):
                continue
            out = dict(binding)
            for pos, var in open_positions:
                out[var] = row[pos - 1]
            yield out

    # -- head application --------------------------------------------------------------

    def _head_assertion(self, kb: KnowledgeBase, rule: Rule, atom: Atom,
                        binding: Binding) -> Assertion:
        def materialize(term: Term) -> Term:
            got = self._resolve_term(term, binding)
            if isinstance(got, Variable):
                raise EngineError(f"rule {rule.name}: head variable ?{got.name} unbound")
            return got

        if isinstance(atom, ClassAtom):
            arg = materialize(atom.arg)
            if not isinstance(arg, Individual):
                raise EngineError(f"rule {rule.name}: class atom {atom.concept} "
                                  "needs an individual argument")
            return Assertion("class", arg.name, atom.concept)
        if isinstance(atom, PropertyAtom):
            subj = materialize(atom.subject)
            obj = materialize(atom.object)
            if not isinstance(subj, Individual):
                raise EngineError(f"rule {rule.name}: property {atom.name} "
                                  "needs an individual subject")
            kind = kb.property_kind(atom.name)
            if kind == "object":
                if not isinstance(obj, Individual):
                    raise EngineError(f"rule {rule.name}: object property {atom.name} "
                                      "given a literal value")
                return Assertion("object", subj.name, atom.name, obj.name)
            if not isinstance(obj, Literal):
                raise EngineError(f"rule {rule.name}: data property {atom.name} "
                                  "given an individual value")
            return Assertion("data", subj.name, atom.name, obj.value)
        if isinstance(atom, (SameAsAtom, DifferentFromAtom)):
            left = materialize(atom.left)
            right = materialize(atom.right)
            if not isinstance(left, Individual) or not isinstance(right, Individual):
                raise EngineError(f"rule {rule.name}: identity atom needs individuals")
            prop = "sameAs" if isinstance(atom, SameAsAtom) else "differentFrom"
            return Assertion("object", left.name, prop, right.name)
        raise EngineError(f"rule {rule.name}: builtin atom in head")

    def _apply_head(self, ctx: EvalContext, rule: Rule, binding: Binding,
                    report: EvaluationReport) -> int:
        added = 0
        for atom in rule.head:
            assertion = self._head_assertion(ctx.kb, rule, atom, binding)
            if ctx.kb.add(assertion):
                added += 1
                if self.config.trace:
                    shown = " ".join(f"?{name}={binding[name]}"
                                     for name in sorted(binding))
                    report.trace.append(f"FIRE {rule.name} {shown} => {assertion}")
        return added


def _terms_match(a: Term, b: Term) -> bool:
    if isinstance(a, Individual) and isinstance(b, Individual):
        return a.name == b.name
    if isinstance(a, Literal) and isinstance(b, Literal):
        return literal_equal(a.value, b.value)
    return False


# -- standard builtins ------------------------------------------------------------------


def _numeric(value: RawValue) -> float | None:
    if isinstance(value, bool) or not isinstance(value, float):
        return None
    return value


def _comparison(op: Callable[[float, float], bool]) -> Callable:
    def handler(ctx: EvalContext, args: tuple) -> bool:
        a, b = _numeric(args[0]), _numeric(args[1])
        if a is None or b is None:
            return False
        return op(a, b)
    return handler


def _values_equal(a: RawValue, b: RawValue) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a is b
    if isinstance(a, float) and isinstance(b, float):
        return a == b
    return isinstance(a, str) and isinstance(b, str) and a == b


def register_comparison_builtins(engine: RuleEngine) -> None:
    pairs = [
        ("greaterThan", lambda a, b: a > b),
        ("greaterThanOrEqual", lambda a, b: a >= b),
        ("lessThan", lambda a, b: a < b),
        ("lessThanOrEqual", lambda a, b: a <= b),
    ]
    for name, op in pairs:
        engine.register(BuiltinDescriptor(
            "swrlb", name, 2, "filter", _comparison(op), memoize=False))
    engine.register(BuiltinDescriptor(
        "swrlb", "equal", 2, "filter",
        lambda ctx, args: _values_equal(args[0], args[1]), memoize=False))
    engine.register(BuiltinDescriptor(
        "swrlb", "notEqual", 2, "filter",
        lambda ctx, args: not _values_equal(args[0], args[1]), memoize=False))


def _arithmetic(op: Callable[..., float], operand_count: int) -> Callable:
    def handler(ctx: EvalContext, bound: dict[int, RawValue]) -> list[tuple[Term, ...]]:
        operands = []
        for pos in range(2, 2 + operand_count):
            value = _numeric(bound.get(pos))
            if value is None:
                return []
            operands.append(value)
        result = op(*operands)
        if not math.isfinite(result):
            return []
        return [tuple(Literal(v) for v in [result] + operands)]
    return handler


def register_arithmetic_builtins(engine: RuleEngine) -> None:
    engine.register(BuiltinDescriptor(
        "swrlb", "add", 3, "generative", _arithmetic(lambda a, b: a + b, 2),
        may_be_unbound=frozenset({1})))
    engine.register(BuiltinDescriptor(
        "swrlb", "subtract", 3, "generative", _arithmetic(lambda a, b: a - b, 2),
        may_be_unbound=frozenset({1})))
    engine.register(BuiltinDescriptor(
        "swrlb", "abs", 2, "generative", _arithmetic(abs, 1),
        may_be_unbound=frozenset({1})))
