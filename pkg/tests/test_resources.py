"""Resource scanning, instance loading, and the polynomial grammar."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casbench.errors import (
    ConfigurationError,
    NotFoundError,
    PolynomialParseError,
    ResourceFormatError,
    ValidationError,
)
from casbench.resources import (
    Integer,
    Power,
    ProblemInstance,
    Product,
    Sum,
    Variable,
    load_instance,
    parse_instance_xml,
    parse_polynomial,
    scan_tables,
    serialize_instance,
    serialize_polynomial,
    write_instance,
)


# --------------------------------------------------------------------------
# scan_tables
# --------------------------------------------------------------------------


def test_scan_finds_tables_sorted(resource_root):
    tables = scan_tables(resource_root)
    assert [t.name for t in tables] == ["COMP", "IntPS", "MEM", "NAP", "SET"]
    intps = next(t for t in tables if t.name == "IntPS")
    assert list(intps.entries) == ["Amrhein", "Caprasse"]


def test_scan_empty_root(tmp_path):
    assert scan_tables(tmp_path) == []


def test_scan_skips_tables_without_resources(tmp_path):
    (tmp_path / "Empty").mkdir()
    (tmp_path / "Full").mkdir()
    (tmp_path / "Full" / "One.xml").write_text("<Instance/>")
    (tmp_path / "Full" / "notes.txt").write_text("not a resource")
    assert [t.name for t in scan_tables(tmp_path)] == ["Full"]


def test_scan_missing_root(tmp_path):
    with pytest.raises(ConfigurationError, match="nowhere"):
        scan_tables(tmp_path / "nowhere")


def test_scan_is_deterministic(resource_root):
    assert scan_tables(resource_root) == scan_tables(resource_root)


# --------------------------------------------------------------------------
# load_instance
# --------------------------------------------------------------------------


def test_load_caprasse_variables(tables):
    intps = next(t for t in tables if t.name == "IntPS")
    instance = load_instance(intps, "Caprasse")
    assert instance.variables == ("x", "y", "z", "t")
    assert len(instance.basis) == 4
    assert instance.attributes["degree"] == "56"
    assert list(instance.attributes) == ["degree", "degreeList", "lengthsList"]


def test_load_unknown_name(tables):
    intps = next(t for t in tables if t.name == "IntPS")
    with pytest.raises(NotFoundError, match="Missing"):
        load_instance(intps, "Missing")


def test_undeclared_variable_is_named():
    xml = "<Instance><vars>x,y</vars><basis><poly>x+w</poly></basis></Instance>"
    with pytest.raises(ValidationError, match="'w'"):
        parse_instance_xml(xml, name="Bad", table="IntPS")


def test_minimal_single_variable_instance():
    xml = "<Instance><vars>x</vars><basis><poly>x</poly></basis></Instance>"
    instance = parse_instance_xml(xml, name="Tiny", table="IntPS")
    assert instance.variables == ("x",)
    assert instance.basis == ("x",)


def test_malformed_xml_reports_position():
    with pytest.raises(ResourceFormatError) as info:
        parse_instance_xml("<Instance><vars>x</vars>", name="X", table="T")
    assert info.value.line >= 1


@pytest.mark.parametrize(
    "xml, message",
    [
        ("<Wrong/>", "Instance"),
        ("<Instance><basis><poly>x</poly></basis></Instance>", "vars"),
        ("<Instance><vars>x</vars></Instance>", "basis"),
        ("<Instance><vars>x</vars><basis></basis></Instance>", "empty basis"),
        ("<Instance><vars></vars><basis><poly>x</poly></basis></Instance>", "no variables"),
        ("<Instance><vars>x,x</vars><basis><poly>x</poly></basis></Instance>", "duplicate"),
        ("<Instance><vars>x</vars><basis><oops/></basis></Instance>", "oops"),
        ("<Instance><vars>x</vars><basis><poly>x</poly></basis><meta><sub/></meta></Instance>", "leaf"),
    ],
)
def test_schema_violations(xml, message):
    with pytest.raises((ResourceFormatError, ValidationError), match=message):
        parse_instance_xml(xml, name="X", table="T")


def test_instance_round_trip(tables, tmp_path):
    intps = next(t for t in tables if t.name == "IntPS")
    for name in intps.entries:
        instance = load_instance(intps, name)
        text = serialize_instance(instance)
        again = parse_instance_xml(text, name=instance.name, table=instance.table)
        assert again == instance


def test_write_instance_round_trip(tmp_path):
    instance = ProblemInstance(
        name="Demo",
        table="IntPS",
        variables=("a", "b"),
        basis=("a^2+b", "a*b-3"),
        attributes={"degree": "4", "note": "hand made"},
    )
    write_instance(instance, tmp_path)
    [table] = scan_tables(tmp_path)
    assert load_instance(table, "Demo") == instance


# --------------------------------------------------------------------------
# polynomial grammar
# --------------------------------------------------------------------------


def test_parse_example_tree():
    tree = parse_polynomial("x^2+3*y", ["x", "y"])
    assert tree == Sum(
        (
            (1, Power(Variable("x"), 2)),
            (1, Product((Integer(3), Variable("y")))),
        )
    )


def test_caprasse_style_polynomial_has_four_terms():
    tree = parse_polynomial("x^2*y^2-2*x^2-2*y^2+x*y*z*t", ["x", "y", "z", "t"])
    assert isinstance(tree, Sum)
    assert len(tree.terms) == 4
    assert [sign for sign, _ in tree.terms] == [1, -1, -1, 1]


def test_dangling_operator_offset():
    with pytest.raises(PolynomialParseError) as info:
        parse_polynomial("x+", ["x"])
    assert info.value.offset == 2


def test_whitespace_is_insignificant():
    spaced = parse_polynomial(" x ^ 2 + 3 * y ", ["x", "y"])
    tight = parse_polynomial("x^2+3*y", ["x", "y"])
    assert spaced == tight


def test_parenthesized_expressions():
    tree = parse_polynomial("(x+y)^2*(3+z)", ["x", "y", "z"])
    assert serialize_polynomial(tree) == "(x+y)^2*(3+z)"
    assert parse_polynomial(serialize_polynomial(tree), ["x", "y", "z"]) == tree


@pytest.mark.parametrize(
    "text, offset",
    [
        ("", 0),
        ("   ", 0),
        ("-x", 0),
        ("x+", 2),
        ("x*", 2),
        ("x^", 2),
        ("x^y", 2),
        ("(x", 2),
        ("x)", 1),
        ("x y", 2),
        ("2.5", 1),
    ],
)
def test_grammar_violations(text, offset):
    with pytest.raises(PolynomialParseError) as info:
        parse_polynomial(text, ["x", "y"])
    assert info.value.offset == offset


def test_unknown_identifier_is_validation_error():
    with pytest.raises(ValidationError, match="'q'"):
        parse_polynomial("x+q", ["x"])


# hypothesis: trees in parser-canonical shape (sums/products flattened by
# construction, leading sum sign positive) round-trip through text

_leaves = st.one_of(
    st.integers(min_value=0, max_value=10**9).map(Integer),
    st.sampled_from(["x", "y", "z", "t"]).map(Variable),
)


def _powers(children):
    return st.tuples(children, st.integers(min_value=0, max_value=20)).map(lambda p: Power(*p))


def _products(children):
    return st.lists(children, min_size=2, max_size=4).map(lambda f: Product(tuple(f)))


def _sums(children):
    signs = st.sampled_from([1, -1])
    return st.tuples(
        children, st.lists(st.tuples(signs, children), min_size=1, max_size=4)
    ).map(lambda p: Sum(((1, p[0]), *p[1])))


_trees = st.recursive(_leaves, lambda c: st.one_of(_powers(c), _products(c), _sums(c)), max_leaves=25)


@settings(max_examples=200, deadline=None)
@given(_trees)
def test_serialize_parse_round_trip(tree):
    text = serialize_polynomial(tree)
    assert parse_polynomial(text, ["x", "y", "z", "t"]) == tree


@settings(max_examples=200, deadline=None)
@given(_trees, st.sampled_from("?!@#$.&,~"), st.integers(min_value=0, max_value=10**6))
def test_illegal_character_always_rejected(tree, bad_char, seed):
    text = serialize_polynomial(tree)
    position = seed % (len(text) + 1)
    mutated = text[:position] + bad_char + text[position:]
    with pytest.raises(PolynomialParseError):
        parse_polynomial(mutated, ["x", "y", "z", "t"])
