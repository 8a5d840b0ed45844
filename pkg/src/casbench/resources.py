"""Problem-instance database: SD-Tables on disk and the files inside them.

A resource root contains one directory per SD-Table, each holding one XML
file per problem instance (``<root>/<Table>/<Name>.xml``).  The instance
schema is deliberately small: a root ``Instance`` element with a ``vars``
child (comma-separated symbols), a ``basis`` child holding one ``poly``
element per polynomial, and any number of additional leaf elements that are
kept verbatim as free-form attributes.  This schema is a stand-in, not a
normative format; see README.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigurationError,
    NotFoundError,
    PolynomialParseError,
    ResourceFormatError,
    ValidationError,
)

NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
VARIABLE_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*\Z")

RESOURCE_SUFFIX = ".xml"


# --------------------------------------------------------------------------
# Polynomial expression trees
#
# Grammar (no unary minus; integer literals are unsigned):
#   expr   := term (('+'|'-') term)*
#   term   := factor ('*' factor)*
#   factor := base ('^' uint)?
#   base   := int | var | '(' expr ')'
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Integer:
    value: int


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Power:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Product:
    factors: tuple["Node", ...]


@dataclass(frozen=True)
class Sum:
    """Signed terms; the leading term always carries sign +1."""

    terms: tuple[tuple[int, "Node"], ...]


Node = Integer | Variable | Power | Product | Sum

_TOKEN_RE = re.compile(r"\s*(?:(?P<int>[0-9]+)|(?P<name>[A-Za-z][A-Za-z0-9]*)|(?P<op>[-+*^()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            # only trailing whitespace left, or an illegal character
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise PolynomialParseError(f"illegal character {text[bad]!r}", bad)
        kind = match.lastgroup
        value = match.group(kind)
        tokens.append((kind, value, match.start(kind)))
        pos = match.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _PolynomialParser:
    def __init__(self, text: str, variables: set[str]):
        self.tokens = _tokenize(text)
        self.index = 0
        self.variables = variables

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def advance(self) -> tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def parse(self) -> Node:
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "eof":
            raise PolynomialParseError(f"unexpected {value!r}", offset)
        return node

    def expr(self) -> Node:
        terms = [(1, self.term())]
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                terms.append((1 if value == "+" else -1, self.term()))
            else:
                break
        if len(terms) == 1:
            return terms[0][1]
        return Sum(tuple(terms))

    def term(self) -> Node:
        factors = [self.factor()]
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "*":
                self.advance()
                factors.append(self.factor())
            else:
                break
        if len(factors) == 1:
            return factors[0]
        return Product(tuple(factors))

    def factor(self) -> Node:
        base = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            kind, value, offset = self.advance()
            if kind != "int":
                raise PolynomialParseError("exponent must be an unsigned integer", offset)
            return Power(base, int(value))
        return base

    def base(self) -> Node:
        kind, value, offset = self.advance()
        if kind == "int":
            return Integer(int(value))
        if kind == "name":
            if value not in self.variables:
                raise ValidationError(f"unknown identifier '{value}' in polynomial")
            return Variable(value)
        if kind == "op" and value == "(":
            node = self.expr()
            kind, value, offset = self.advance()
            if not (kind == "op" and value == ")"):
                raise PolynomialParseError("expected ')'", offset)
            return node
        if kind == "eof":
            raise PolynomialParseError("unexpected end of input", offset)
        raise PolynomialParseError(f"unexpected {value!r}", offset)


def parse_polynomial(text: str, variables: list[str] | tuple[str, ...]) -> Node:
    """Parse polynomial text over the given variables into an expression tree.

    Raises PolynomialParseError (with offset) on grammar violations and
    ValidationError when an identifier is not a declared variable.
    """
    if not text.strip():
        raise PolynomialParseError("empty polynomial", 0)
    return _PolynomialParser(text, set(variables)).parse()


def serialize_polynomial(node: Node) -> str:
    """Render a tree with canonical spacing (none); re-parsing is the identity."""
    if isinstance(node, Integer):
        return str(node.value)
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Power):
        base = serialize_polynomial(node.base)
        if isinstance(node.base, (Sum, Product, Power)):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Product):
        parts = []
        for factor in node.factors:
            text = serialize_polynomial(factor)
            if isinstance(factor, (Sum, Product)):
                text = f"({text})"
            parts.append(text)
        return "*".join(parts)
    if isinstance(node, Sum):
        (first_sign, first), *rest = node.terms
        if first_sign != 1:
            raise ValidationError("leading sum term must be positive")
        chunks = [_wrap_sum_term(first)]
        for sign, term in rest:
            chunks.append("+" if sign == 1 else "-")
            chunks.append(_wrap_sum_term(term))
        return "".join(chunks)
    raise TypeError(f"not a polynomial node: {node!r}")


def _wrap_sum_term(term: Node) -> str:
    text = serialize_polynomial(term)
    return f"({text})" if isinstance(term, Sum) else text


# --------------------------------------------------------------------------
# SD-Tables and problem instances
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SDTable:
    """A named directory of resource files, one file per instance."""

    name: str
    root: Path
    entries: dict[str, Path] = field(default_factory=dict)

    def __post_init__(self):
        if not NAME_RE.match(self.name):
            raise ValidationError(f"invalid SD-Table name '{self.name}'")

    def entry_path(self, name: str) -> Path:
        try:
            return self.entries[name]
        except KeyError:
            raise NotFoundError(f"no instance '{name}' in SD-Table '{self.name}'") from None


@dataclass(frozen=True)
class ProblemInstance:
    """One named input record: variables, polynomial basis, free attributes."""

    name: str
    table: str
    variables: tuple[str, ...]
    basis: tuple[str, ...]
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not NAME_RE.match(self.name):
            raise ValidationError(f"invalid instance name '{self.name}'")
        if not self.variables:
            raise ValidationError(f"instance '{self.name}' declares no variables")
        seen = set()
        for var in self.variables:
            if not VARIABLE_RE.match(var):
                raise ValidationError(f"invalid variable name '{var}' in instance '{self.name}'")
            if var in seen:
                raise ValidationError(f"duplicate variable '{var}' in instance '{self.name}'")
            seen.add(var)
        if not self.basis:
            raise ValidationError(f"instance '{self.name}' has an empty basis")
        for poly in self.basis:
            parse_polynomial(poly, self.variables)


def scan_tables(root: Path | str) -> list[SDTable]:
    """Discover SD-Tables under a resource root.

    One table per immediate subdirectory with at least one resource file;
    tables and their entries are sorted lexicographically, so repeated scans
    of an unchanged tree return identical results.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"resource root '{root}' is not a readable directory")
    tables = []
    for sub in sorted(root.iterdir()):
        if not sub.is_dir() or not NAME_RE.match(sub.name):
            continue
        entries = {
            path.stem: path
            for path in sorted(sub.iterdir())
            if path.is_file() and path.suffix == RESOURCE_SUFFIX and NAME_RE.match(path.stem)
        }
        if entries:
            tables.append(SDTable(name=sub.name, root=sub, entries=entries))
    return tables


def find_table(tables: list[SDTable], name: str) -> SDTable:
    for table in tables:
        if table.name == name:
            return table
    known = ", ".join(t.name for t in tables) or "none"
    raise NotFoundError(f"no SD-Table '{name}' (known: {known})")


def load_instance(table: SDTable, name: str) -> ProblemInstance:
    """Load and validate one instance from a scanned table."""
    path = table.entry_path(name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read resource file '{path}': {exc}") from exc
    return parse_instance_xml(text, name=name, table=table.name)


def parse_instance_xml(text: str, *, name: str, table: str) -> ProblemInstance:
    """Parse instance XML text; see the module docstring for the schema."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ResourceFormatError(f"malformed resource XML: {exc.msg.split(':')[0]}", line, column) from exc
    if root.tag != "Instance":
        raise ResourceFormatError(f"expected root element 'Instance', found '{root.tag}'")

    variables: tuple[str, ...] | None = None
    basis: tuple[str, ...] | None = None
    attributes: dict[str, str] = {}
    for child in root:
        if child.tag == "vars":
            if variables is not None:
                raise ResourceFormatError("duplicate 'vars' element")
            raw = (child.text or "").strip()
            variables = tuple(part.strip() for part in raw.split(",")) if raw else ()
        elif child.tag == "basis":
            if basis is not None:
                raise ResourceFormatError("duplicate 'basis' element")
            polys = []
            for poly in child:
                if poly.tag != "poly":
                    raise ResourceFormatError(f"unexpected element '{poly.tag}' inside 'basis'")
                polys.append((poly.text or "").strip())
            basis = tuple(polys)
        else:
            if len(child):
                raise ResourceFormatError(f"attribute element '{child.tag}' must be a leaf")
            if child.tag in attributes:
                raise ResourceFormatError(f"duplicate attribute element '{child.tag}'")
            attributes[child.tag] = child.text or ""
    if variables is None:
        raise ResourceFormatError("missing 'vars' element")
    if basis is None:
        raise ResourceFormatError("missing 'basis' element")
    return ProblemInstance(name=name, table=table, variables=variables, basis=basis, attributes=attributes)


def serialize_instance(instance: ProblemInstance) -> str:
    """Render an instance back to its resource-file XML form."""
    root = ET.Element("Instance")
    ET.SubElement(root, "vars").text = ",".join(instance.variables)
    basis = ET.SubElement(root, "basis")
    for poly in instance.basis:
        ET.SubElement(basis, "poly").text = poly
    for key, value in instance.attributes.items():
        ET.SubElement(root, key).text = value
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    return ET.tostring(root, encoding="unicode") + "\n"


def write_instance(instance: ProblemInstance, resource_root: Path | str) -> Path:
    """Write an instance file under ``<root>/<table>/<name>.xml``."""
    directory = Path(resource_root) / instance.table
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{instance.name}{RESOURCE_SUFFIX}"
    path.write_text(serialize_instance(instance), encoding="utf-8")
    return path
