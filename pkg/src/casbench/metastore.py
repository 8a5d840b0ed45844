"""In-memory triplestore over a Turtle subset, used to select problem instances.

Supported syntax: ``@prefix`` declarations, ``<iri>`` and ``prefix:name``
terms, ``a`` as a type shorthand, plain and ``"text"^^type`` literals, ``.``
statement terminators, ``;`` same-subject continuation, and ``#`` comments.
Blank nodes, collections, multi-line literals, language tags, and object
lists are rejected with a parse error.  Stores are immutable after parsing
and safe for concurrent queries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PrefixResolutionError, QueryError, TurtleParseError, ValidationError

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"

IRI_KIND = "iri"
PLAIN_KIND = "plain-literal"
TYPED_KIND = "typed-literal"

_SCHEME_RE = re.compile(r"[A-Za-z][A-Za-z0-9+.-]*:")
_PNAME_RE = re.compile(r"([A-Za-z][A-Za-z0-9_-]*)?:([A-Za-z_][A-Za-z0-9_-]*)?")
_LOCAL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*\Z")
_VAR_RE = re.compile(r"\?([A-Za-z_][A-Za-z0-9_]*)\Z")


@dataclass(frozen=True)
class Term:
    """An IRI or a (plain or typed) literal."""

    kind: str
    value: str
    datatype: str | None = None

    def __post_init__(self):
        if self.kind not in (IRI_KIND, PLAIN_KIND, TYPED_KIND):
            raise ValidationError(f"unknown term kind '{self.kind}'")
        if (self.datatype is not None) != (self.kind == TYPED_KIND):
            raise ValidationError("datatype is required exactly for typed literals")

    @classmethod
    def iri(cls, value: str) -> "Term":
        return cls(IRI_KIND, value)

    @classmethod
    def literal(cls, value: str, datatype: str | None = None) -> "Term":
        return cls(TYPED_KIND if datatype else PLAIN_KIND, value, datatype)

    @property
    def is_iri(self) -> bool:
        return self.kind == IRI_KIND

    def sort_key(self) -> tuple[str, str, str]:
        return (self.kind, self.value, self.datatype or "")


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Term
    object: Term

    def __post_init__(self):
        if not self.subject.is_iri:
            raise ValidationError("triple subject must be an IRI")
        if not self.predicate.is_iri:
            raise ValidationError("triple predicate must be an IRI")

    def sort_key(self):
        return (self.subject.sort_key(), self.predicate.sort_key(), self.object.sort_key())


@dataclass(frozen=True)
class Var:
    """A named query variable, written ``?name`` in text form."""

    name: str


PatternSlot = Term | Var


@dataclass(frozen=True)
class TriplePattern:
    subject: PatternSlot
    predicate: PatternSlot
    object: PatternSlot

    def slots(self) -> tuple[tuple[str, PatternSlot], ...]:
        return (("subject", self.subject), ("predicate", self.predicate), ("object", self.object))

    def variables(self) -> set[str]:
        return {slot.name for _, slot in self.slots() if isinstance(slot, Var)}


class TripleStore:
    """A set of triples with subject/predicate/object indexes.

    Equality is defined on the triple set; prefix declarations are carried
    along for serialization but do not affect identity.
    """

    def __init__(self, triples=(), prefixes: dict[str, str] | None = None):
        self._triples: set[Triple] = set(triples)
        self.prefixes: dict[str, str] = dict(prefixes or {})
        self._by_subject: dict[Term, set[Triple]] = {}
        self._by_predicate: dict[Term, set[Triple]] = {}
        self._by_object: dict[Term, set[Triple]] = {}
        for triple in self._triples:
            self._by_subject.setdefault(triple.subject, set()).add(triple)
            self._by_predicate.setdefault(triple.predicate, set()).add(triple)
            self._by_object.setdefault(triple.object, set()).add(triple)

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self):
        return iter(sorted(self._triples, key=Triple.sort_key))

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def __eq__(self, other) -> bool:
        if not isinstance(other, TripleStore):
            return NotImplemented
        return self._triples == other._triples

    def __hash__(self):
        return hash(frozenset(self._triples))

    def match(self, subject: Term | None = None, predicate: Term | None = None, object: Term | None = None):
        """Triples matching the bound slots (None = wildcard), smallest index first."""
        candidates: set[Triple] | None = None
        for bound, index in (
            (subject, self._by_subject),
            (predicate, self._by_predicate),
            (object, self._by_object),
        ):
            if bound is None:
                continue
            found = index.get(bound, set())
            candidates = found if candidates is None else candidates & found
            if not candidates:
                return []
        if candidates is None:
            candidates = self._triples
        return sorted(candidates, key=Triple.sort_key)

    def subjects_of_type(self, cls: Term) -> set[Term]:
        return {t.subject for t in self.match(predicate=Term.iri(RDF_TYPE), object=cls)}


# --------------------------------------------------------------------------
# Turtle parsing
# --------------------------------------------------------------------------


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, message: str) -> TurtleParseError:
        return TurtleParseError(message, self.line, self.col)

    def _advance(self, n: int):
        for ch in self.text[self.pos : self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n

    def skip_space(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self._advance(1)
            elif ch == "#":
                end = self.text.find("\n", self.pos)
                self._advance((end if end != -1 else len(self.text)) - self.pos)
            else:
                break

    def at_end(self) -> bool:
        self.skip_space()
        return self.pos >= len(self.text)

    def next_token(self) -> tuple[str, object]:
        """Return (kind, value); kinds: prefix-kw, iri, pname, a, string, caret, dot, semi."""
        self.skip_space()
        if self.pos >= len(self.text):
            raise self.error("unexpected end of input")
        ch = self.text[self.pos]
        if ch == ".":
            self._advance(1)
            return ("dot", ".")
        if ch == ";":
            self._advance(1)
            return ("semi", ";")
        if ch == ",":
            raise self.error("object lists (',') are not supported")
        if ch == "(" or ch == ")":
            raise self.error("collections are not supported")
        if ch == "[" or ch == "]":
            raise self.error("blank nodes are not supported")
        if self.text.startswith("_:", self.pos):
            raise self.error("blank nodes are not supported")
        if ch == "@":
            if self.text.startswith("@prefix", self.pos):
                self._advance(len("@prefix"))
                return ("prefix-kw", "@prefix")
            raise self.error("unsupported '@' directive (language tags are not supported)")
        if ch == "<":
            end = self.text.find(">", self.pos + 1)
            if end == -1 or "\n" in self.text[self.pos : end]:
                raise self.error("unterminated IRI")
            value = self.text[self.pos + 1 : end]
            if not _SCHEME_RE.match(value):
                raise self.error(f"IRI '{value}' is not absolute")
            self._advance(end + 1 - self.pos)
            return ("iri", value)
        if ch == '"':
            if self.text.startswith('"""', self.pos):
                raise self.error("multi-line literals are not supported")
            return ("string", self._scan_string())
        if ch == "^":
            if self.text.startswith("^^", self.pos):
                self._advance(2)
                return ("caret", "^^")
            raise self.error("expected '^^'")
        match = _PNAME_RE.match(self.text, self.pos)
        if match and ":" in match.group(0):
            line, col = self.line, self.col
            self._advance(len(match.group(0)))
            return ("pname", (match.group(1) or "", match.group(2) or "", line, col))
        name = re.match(r"[A-Za-z][A-Za-z0-9_-]*", self.text[self.pos :])
        if name and name.group(0) == "a":
            self._advance(1)
            return ("a", "a")
        raise self.error(f"unexpected character {ch!r}")

    def _scan_string(self) -> str:
        # self.text[self.pos] == '"'
        chunks = []
        start_line, start_col = self.line, self.col
        self._advance(1)
        while True:
            if self.pos >= len(self.text):
                raise TurtleParseError("unterminated string literal", start_line, start_col)
            ch = self.text[self.pos]
            if ch == "\n":
                raise TurtleParseError("multi-line literals are not supported", start_line, start_col)
            if ch == '"':
                self._advance(1)
                return "".join(chunks)
            if ch == "\\":
                if self.pos + 1 >= len(self.text):
                    raise self.error("dangling escape")
                esc = self.text[self.pos + 1]
                mapped = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}.get(esc)
                if mapped is None:
                    raise self.error(f"unsupported escape '\\{esc}'")
                chunks.append(mapped)
                self._advance(2)
            else:
                chunks.append(ch)
                self._advance(1)


class _TurtleParser:
    def __init__(self, text: str):
        self.scanner = _Scanner(text)
        self.prefixes: dict[str, str] = {}
        self.triples: list[Triple] = []

    def parse(self) -> TripleStore:
        while not self.scanner.at_end():
            kind, value = self.scanner.next_token()
            if kind == "prefix-kw":
                self._prefix_declaration()
            else:
                self._statement(kind, value)
        return TripleStore(self.triples, self.prefixes)

    def _prefix_declaration(self):
        kind, value = self.scanner.next_token()
        if kind != "pname" or value[1] != "":
            raise self.scanner.error("expected 'prefix:' after @prefix")
        prefix = value[0]
        kind, iri = self.scanner.next_token()
        if kind != "iri":
            raise self.scanner.error("expected <iri> in @prefix declaration")
        self._expect("dot", "expected '.' after @prefix declaration")
        self.prefixes[prefix] = iri

    def _statement(self, kind, value):
        subject = self._term(kind, value, position="subject")
        while True:
            predicate = self._predicate()
            obj = self._object()
            self.triples.append(Triple(subject, predicate, obj))
            kind, value = self.scanner.next_token()
            if kind == "dot":
                return
            if kind != "semi":
                raise self.scanner.error("expected ';' or '.' after object")

    def _predicate(self) -> Term:
        kind, value = self.scanner.next_token()
        if kind == "a":
            return Term.iri(RDF_TYPE)
        return self._term(kind, value, position="predicate")

    def _object(self) -> Term:
        kind, value = self.scanner.next_token()
        if kind == "string":
            saved = self.scanner.pos, self.scanner.line, self.scanner.col
            if not self.scanner.at_end():
                kind2, value2 = self.scanner.next_token()
                if kind2 == "caret":
                    kind3, value3 = self.scanner.next_token()
                    datatype = self._term(kind3, value3, position="datatype")
                    return Term.literal(value, datatype.value)
                self.scanner.pos, self.scanner.line, self.scanner.col = saved
            return Term.literal(value)
        return self._term(kind, value, position="object")

    def _term(self, kind, value, *, position: str) -> Term:
        if kind == "iri":
            return Term.iri(value)
        if kind == "pname":
            prefix, local, line, col = value
            if prefix not in self.prefixes:
                raise PrefixResolutionError(prefix, line, col)
            return Term.iri(self.prefixes[prefix] + local)
        if kind == "a":
            raise self.scanner.error("'a' is only valid in predicate position")
        if kind == "string":
            raise self.scanner.error(f"literal not allowed as {position}")
        raise self.scanner.error(f"unexpected token in {position} position")

    def _expect(self, kind: str, message: str):
        got, _ = self.scanner.next_token()
        if got != kind:
            raise self.scanner.error(message)


def parse_turtle(text: str) -> TripleStore:
    """Parse Turtle-subset text into an immutable TripleStore."""
    return _TurtleParser(text).parse()


def serialize_turtle(store: TripleStore) -> str:
    """Serialize a store; parsing the result yields an equal store."""
    lines = []
    for prefix in sorted(store.prefixes):
        lines.append(f"@prefix {prefix}: <{store.prefixes[prefix]}> .")
    if lines:
        lines.append("")
    by_subject: dict[Term, list[Triple]] = {}
    for triple in store:
        by_subject.setdefault(triple.subject, []).append(triple)
    for subject in sorted(by_subject, key=Term.sort_key):
        triples = by_subject[subject]
        subject_text = _term_text(subject, store.prefixes)
        for i, triple in enumerate(triples):
            prefix = f"{subject_text} " if i == 0 else "    "
            suffix = " ;" if i + 1 < len(triples) else " ."
            pred = "a" if triple.predicate.value == RDF_TYPE else _term_text(triple.predicate, store.prefixes)
            lines.append(f"{prefix}{pred} {_term_text(triple.object, store.prefixes)}{suffix}")
    return "\n".join(lines) + "\n"


def _term_text(term: Term, prefixes: dict[str, str]) -> str:
    if term.is_iri:
        return _iri_text(term.value, prefixes)
    escaped = (
        term.value.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )
    if term.kind == TYPED_KIND:
        return f'"{escaped}"^^{_iri_text(term.datatype, prefixes)}'
    return f'"{escaped}"'


def _iri_text(iri: str, prefixes: dict[str, str]) -> str:
    best: tuple[str, str] | None = None
    for prefix, base in prefixes.items():
        if iri.startswith(base) and (best is None or len(base) > len(best[1])):
            local = iri[len(base) :]
            if _LOCAL_RE.match(local):
                best = (prefix, base)
    if best is not None:
        return f"{best[0]}:{iri[len(best[1]):]}"
    return f"<{iri}>"


# --------------------------------------------------------------------------
# Queries
# --------------------------------------------------------------------------


_FILTER_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


@dataclass(frozen=True)
class NumericFilter:
    """Keeps bindings whose variable is an integer literal satisfying ``value OP constant``."""

    variable: str
    op: str
    constant: int

    def __post_init__(self):
        if self.op not in _FILTER_OPS:
            raise QueryError(f"unknown filter operator '{self.op}'")

    def admits(self, term: Term) -> bool:
        if term.is_iri:
            return False
        try:
            value = int(term.value.strip())
        except ValueError:
            return False
        return _FILTER_OPS[self.op](value, self.constant)


def parse_filter(text: str) -> NumericFilter:
    """Parse ``variable OP constant`` (the variable may carry a leading '?')."""
    match = re.match(r"\s*\??([A-Za-z_][A-Za-z0-9_]*)\s*(<=|>=|=|<|>)\s*(-?[0-9]+)\s*\Z", text)
    if match is None:
        raise QueryError(f"cannot parse filter expression '{text}'")
    return NumericFilter(match.group(1), match.group(2), int(match.group(3)))


def query(
    store: TripleStore,
    patterns: list[TriplePattern],
    numeric_filter: NumericFilter | None = None,
) -> list[dict[str, Term]]:
    """Conjunctive triple-pattern matching.

    Returns one binding per solution, each covering every variable used in
    the patterns, sorted by the bound values.  A numeric filter silently
    drops bindings whose value is not an integer literal; filtering on a
    variable that no pattern binds is an error.
    """
    if not patterns:
        raise QueryError("at least one pattern is required")
    all_vars: set[str] = set()
    for pattern in patterns:
        all_vars |= pattern.variables()
    if numeric_filter is not None and numeric_filter.variable not in all_vars:
        raise QueryError(f"filter variable '{numeric_filter.variable}' is not bound by any pattern")

    bindings: list[dict[str, Term]] = [{}]
    for pattern in patterns:
        extended: list[dict[str, Term]] = []
        for binding in bindings:
            bound = {}
            for slot_name, slot in pattern.slots():
                if isinstance(slot, Var):
                    bound[slot_name] = binding.get(slot.name)
                else:
                    bound[slot_name] = slot
            for triple in store.match(bound["subject"], bound["predicate"], bound["object"]):
                candidate = dict(binding)
                ok = True
                for slot_name, slot in pattern.slots():
                    if not isinstance(slot, Var):
                        continue
                    value = getattr(triple, slot_name)
                    if slot.name in candidate and candidate[slot.name] != value:
                        ok = False
                        break
                    candidate[slot.name] = value
                if ok:
                    extended.append(candidate)
        bindings = extended
        if not bindings:
            break

    if numeric_filter is not None:
        bindings = [b for b in bindings if numeric_filter.admits(b[numeric_filter.variable])]

    unique = {tuple(sorted((k, v.sort_key()) for k, v in b.items())): b for b in bindings}
    return [unique[key] for key in sorted(unique)]


def missing_predicate(store: TripleStore, cls: Term, predicate: Term) -> list[Term]:
    """Subjects typed ``cls`` that have no triple with the given predicate."""
    if not cls.is_iri or not predicate.is_iri:
        raise QueryError("class and predicate must be IRIs")
    subjects = store.subjects_of_type(cls)
    present = {t.subject for t in store.match(predicate=predicate)}
    return sorted(subjects - present, key=Term.sort_key)


def class_difference(store: TripleStore, first: Term, second: Term) -> list[Term]:
    """Subjects typed ``first`` but not typed ``second``, sorted."""
    if not first.is_iri or not second.is_iri:
        raise QueryError("class terms must be IRIs")
    return sorted(store.subjects_of_type(first) - store.subjects_of_type(second), key=Term.sort_key)


def parse_pattern_text(text: str, prefixes: dict[str, str]) -> TriplePattern:
    """Parse ``?s sd:hasDegree ?d`` style pattern text (three whitespace-separated slots)."""
    parts = text.split()
    if len(parts) != 3:
        raise QueryError(f"pattern must have exactly three terms: '{text}'")
    return TriplePattern(*(_slot_from_text(p, prefixes) for p in parts))


def _slot_from_text(text: str, prefixes: dict[str, str]) -> PatternSlot:
    var = _VAR_RE.match(text)
    if var:
        return Var(var.group(1))
    if text == "a":
        return Term.iri(RDF_TYPE)
    if text.startswith("<") and text.endswith(">"):
        return Term.iri(text[1:-1])
    if text.startswith('"'):
        if not text.endswith('"') or len(text) < 2:
            raise QueryError(f"unterminated literal in pattern: {text}")
        return Term.literal(text[1:-1])
    match = _PNAME_RE.match(text)
    if match and match.end() == len(text):
        prefix = match.group(1) or ""
        if prefix not in prefixes:
            raise PrefixResolutionError(prefix)
        return Term.iri(prefixes[prefix] + (match.group(2) or ""))
    raise QueryError(f"cannot parse pattern term '{text}'")
