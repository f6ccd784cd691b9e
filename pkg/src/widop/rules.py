"""Horn-rule DSL: terms, atoms, parser, and printer.

Rules are written one per declaration as

    rule tall_mast: Vertical_BoundingBox(?v) ^ hasHeight(?v, ?h)
        ^ swrlb:greaterThan(?h, 6) -> Mast(?v)

Variables start with '?'.  Atom arguments are variables, individual
names, or literals (numbers, true/false, double-quoted strings).
Builtin atoms carry a namespace prefix; plain atoms resolve against
the knowledge base at evaluation time, so the parser does not need to
distinguish object properties from data properties.  '//' starts a
comment running to end of line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .kb import LiteralValue, literal_equal, literal_sort_key, literal_to_text


class RuleSyntaxError(Exception):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)
        self.line = line
        self.col = col


# -- terms ---------------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class Individual:
    name: str

    def __str__(self) -> str:
        return self.name


class Literal:
    """Typed constant; equality is type-aware so 1.0 never equals true."""

    __slots__ = ("value",)

    def __init__(self, value: LiteralValue):
        if isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        self.value = value

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Literal):
            return NotImplemented
        return literal_equal(self.value, other.value)

    def __hash__(self) -> int:
        return hash(literal_sort_key(self.value))

    def __repr__(self) -> str:
        return f"Literal({self.value!r})"

    def __str__(self) -> str:
        if isinstance(self.value, float):
            return format_number(self.value)
        return literal_to_text(self.value)


Term = Variable | Individual | Literal


def format_number(value: float) -> str:
    """Integral floats print without a trailing .0 so rules stay readable."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


# -- atoms ---------------------------------------------------------------

@dataclass(frozen=True)
class ClassAtom:
    concept: str
    arg: Term

    def __str__(self) -> str:
        return f"{self.concept}({self.arg})"


@dataclass(frozen=True)
class PropertyAtom:
    """Property membership; object vs data resolves against the KB later."""

    name: str
    subject: Term
    object: Term

    def __str__(self) -> str:
        return f"{self.name}({self.subject}, {self.object})"


@dataclass(frozen=True)
class SameAsAtom:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"sameAs({self.left}, {self.right})"


@dataclass(frozen=True)
class DifferentFromAtom:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"differentFrom({self.left}, {self.right})"


@dataclass(frozen=True)
class BuiltinAtom:
    namespace: str
    name: str
    args: tuple[Term, ...]

    def __str__(self) -> str:
        inner = ", ".join(str(a) for a in self.args)
        return f"{self.namespace}:{self.name}({inner})"


Atom = ClassAtom | PropertyAtom | SameAsAtom | DifferentFromAtom | BuiltinAtom


@dataclass(frozen=True)
class Rule:
    name: str
    body: tuple[Atom, ...]
    head: tuple[Atom, ...]

    def variables(self) -> set[str]:
        return {v.name for atom in self.body + self.head for v in atom_terms(atom)
                if isinstance(v, Variable)}


def atom_terms(atom: Atom) -> tuple[Term, ...]:
    if isinstance(atom, ClassAtom):
        return (atom.arg,)
    if isinstance(atom, PropertyAtom):
        return (atom.subject, atom.object)
    if isinstance(atom, (SameAsAtom, DifferentFromAtom)):
        return (atom.left, atom.right)
    return atom.args


def atom_variables(atom: Atom) -> set[str]:
    return {t.name for t in atom_terms(atom) if isinstance(t, Variable)}


# -- tokenizer ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>//[^\n]*)
    | (?P<newline>\n)
    | (?P<arrow>->)
    | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
    | (?P<number>-?(\d+\.\d*|\.\d+|\d+)([eE][-+]?\d+)?)
    | (?P<string>"(\\.|[^"\\\n])*")
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<punct>[:^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        raw = m.group()
        if kind == "newline":
            line += 1
            col = 1
        else:
            if kind not in ("ws", "comment"):
                tokens.append(_Token(kind, raw, line, col))
            col += len(raw)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# -- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.warnings: list[str] = []

    def peek(self, offset: int = 0) -> _Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.kind != "eof" else "end of input"
            raise RuleSyntaxError(f"expected {want!r}, got {got!r}", tok.line, tok.col)
        return self.advance()

    def parse_rules(self) -> list[Rule]:
        rules = []
        while self.peek().kind != "eof":
            rules.append(self.parse_rule())
        return rules

    def parse_rule(self) -> Rule:
        self.expect("ident", "rule")
        name_tok = self.expect("ident")
        self.expect("punct", ":")
        body = self.parse_atoms(in_head=False)
        self.expect("arrow")
        head = self.parse_atoms(in_head=True)
        return Rule(name_tok.text, tuple(body), tuple(head))

    def _at_rule_start(self) -> bool:
        return (self.peek().kind == "ident" and self.peek().text == "rule"
                and self.peek(1).kind == "ident"
                and self.peek(2).kind == "punct" and self.peek(2).text == ":")

    def parse_atoms(self, in_head: bool) -> list[Atom]:
        atoms = [self.parse_atom()]
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.text == "^":
                self.advance()
                atoms.append(self.parse_atom())
                continue
            if in_head:
                if tok.kind == "eof" or self._at_rule_start():
                    return atoms
                raise RuleSyntaxError(
                    f"expected '^' or next rule, got {tok.text!r}", tok.line, tok.col)
            if tok.kind == "arrow":
                return atoms
            raise RuleSyntaxError(f"expected '^' or '->', got {tok.text!r}",
                                  tok.line, tok.col)

    def parse_atom(self) -> Atom:
        tok = self.expect("ident")
        namespace = None
        name = tok.text
        if self.peek().kind == "punct" and self.peek().text == ":":
            self.advance()
            namespace = name
            name = self.expect("ident").text
        self.expect("punct", "(")
        args = [self.parse_term()]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.advance()
            args.append(self.parse_term())
        close = self.expect("punct", ")")
        if namespace is not None:
            if namespace == "swrlb" and name == "moreThan":
                self.warnings.append(
                    f"line {tok.line}: swrlb:moreThan is a legacy alias of "
                    "swrlb:greaterThan")
            return BuiltinAtom(namespace, name, tuple(args))
        if name == "sameAs" or name == "differentFrom":
            if len(args) != 2:
                raise RuleSyntaxError(f"{name} takes 2 arguments", tok.line, tok.col)
            cls = SameAsAtom if name == "sameAs" else DifferentFromAtom
            return cls(args[0], args[1])
        if len(args) == 1:
            return ClassAtom(name, args[0])
        if len(args) == 2:
            return PropertyAtom(name, args[0], args[1])
        raise RuleSyntaxError(
            f"atom {name} has {len(args)} arguments; expected 1 or 2",
            close.line, close.col)

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "var":
            self.advance()
            return Variable(tok.text[1:])
        if tok.kind == "number":
            self.advance()
            return Literal(float(tok.text))
        if tok.kind == "string":
            self.advance()
            return Literal(_unescape(tok.text, tok))
        if tok.kind == "ident":
            self.advance()
            if tok.text == "true":
                return Literal(True)
            if tok.text == "false":
                return Literal(False)
            return Individual(tok.text)
        raise RuleSyntaxError(f"expected a term, got {tok.text!r}", tok.line, tok.col)


def _unescape(raw: str, tok: _Token) -> str:
    body = raw[1:-1]
    out = []
    i = 0
    escapes = {"\\": "\\", '"': '"', "t": "\t", "n": "\n", "r": "\r"}
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1] if i + 1 < len(body) else ""
            if nxt not in escapes:
                raise RuleSyntaxError(f"bad escape \\{nxt}", tok.line, tok.col)
            out.append(escapes[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# -- validation ----------------------------------------------------------------

def _validate(rules: list[Rule]) -> None:
    seen: set[str] = set()
    for rule in rules:
        if rule.name in seen:
            raise RuleSyntaxError(f"duplicate rule name: {rule.name}")
        seen.add(rule.name)
        if not rule.head:
            raise RuleSyntaxError(f"rule {rule.name} has an empty head")
        body_vars: set[str] = set()
        for atom in rule.body:
            body_vars |= atom_variables(atom)
        for atom in rule.head:
            if isinstance(atom, BuiltinAtom):
                raise RuleSyntaxError(
                    f"rule {rule.name}: builtins are not allowed in heads")
            loose = atom_variables(atom) - body_vars
            if loose:
                raise RuleSyntaxError(
                    f"rule {rule.name}: head variable ?{sorted(loose)[0]} "
                    "does not occur in the body")


# -- public API -------------------------------------------------------------------

@dataclass
class ParsedRules:
    rules: list[Rule]
    warnings: list[str] = field(default_factory=list)


def parse_ruleset(text: str) -> ParsedRules:
    parser = _Parser(_tokenize(text))
    rules = parser.parse_rules()
    _validate(rules)
    return ParsedRules(rules, parser.warnings)


def parse_rules(text: str) -> list[Rule]:
    return parse_ruleset(text).rules


def load_rules(path) -> ParsedRules:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_ruleset(fh.read())


def format_rule(rule: Rule) -> str:
    body = " ^ ".join(str(a) for a in rule.body)
    head = " ^ ".join(str(a) for a in rule.head)
    return f"rule {rule.name}: {body} -> {head}"


def format_rules(rules: list[Rule]) -> str:
    return "\n".join(format_rule(r) for r in rules) + "\n"
