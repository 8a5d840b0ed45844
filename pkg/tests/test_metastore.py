"""Turtle parsing, round-trips, and pattern queries checked against a naive join."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casbench.errors import PrefixResolutionError, QueryError, TurtleParseError
from casbench.metastore import (
    RDF_TYPE,
    Term,
    Triple,
    TriplePattern,
    TripleStore,
    Var,
    class_difference,
    missing_predicate,
    parse_filter,
    parse_pattern_text,
    parse_turtle,
    query,
    serialize_turtle,
)
from conftest import CAPRASSE_TTL

SD = "http://symbolicdata.org/Data/Model/"
CAPRASSE_IRI = "http://symbolicdata.org/Data/PolynomialSystems/Caprasse"


def _caprasse_store():
    return parse_turtle(CAPRASSE_TTL)


# --------------------------------------------------------------------------
# brute-force oracle: nested-loop join over every triple
# --------------------------------------------------------------------------


def brute_force_query(store, patterns, numeric_filter=None):
    triples = list(store)
    solutions = []

    def extend(index, binding):
        if index == len(patterns):
            solutions.append(binding)
            return
        pattern = patterns[index]
        for triple in triples:
            candidate = dict(binding)
            ok = True
            for slot_name, slot in pattern.slots():
                value = getattr(triple, slot_name)
                if isinstance(slot, Var):
                    if slot.name in candidate and candidate[slot.name] != value:
                        ok = False
                        break
                    candidate[slot.name] = value
                elif slot != value:
                    ok = False
                    break
            if ok:
                extend(index + 1, candidate)

    extend(0, {})
    if numeric_filter is not None:
        solutions = [b for b in solutions if numeric_filter.admits(b[numeric_filter.variable])]
    unique = {tuple(sorted((k, v.sort_key()) for k, v in b.items())): b for b in solutions}
    return [unique[key] for key in sorted(unique)]


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def test_caprasse_block_has_six_triples_one_subject():
    store = _caprasse_store()
    assert len(store) == 6
    assert {t.subject for t in store} == {Term.iri(CAPRASSE_IRI)}


def test_empty_document():
    store = parse_turtle("")
    assert len(store) == 0


def test_undeclared_prefix_is_named():
    with pytest.raises(PrefixResolutionError, match="'x'"):
        parse_turtle("x:a x:b x:c .")


def test_comments_and_typed_literals():
    store = parse_turtle(
        "@prefix ex: <http://example.org/> .\n"
        "# a comment line\n"
        'ex:thing ex:size "56"^^ex:integer . # trailing comment\n'
    )
    [triple] = list(store)
    assert triple.object == Term.literal("56", datatype="http://example.org/integer")


@pytest.mark.parametrize(
    "text, message",
    [
        ("_:b <http://e/p> <http://e/o> .", "blank nodes"),
        ("<http://e/s> <http://e/p> (1 2) .", "collections"),
        ('<http://e/s> <http://e/p> """long""" .', "multi-line"),
        ('<http://e/s> <http://e/p> "x"@en .', "language tags"),
        ('<http://e/s> <http://e/p> "a", "b" .', "object lists"),
        ("<http://e/s> <http://e/p> <http://e/o>", "end of input"),
        ("<relative> <http://e/p> <http://e/o> .", "not absolute"),
        ("<http://e/s> <http://e/p> a .", "predicate position"),
        ('<http://e/s> "literal" <http://e/o> .', "literal not allowed"),
        ('<http://e/s> <http://e/p> "open .', "unterminated"),
        ("a <http://e/p> <http://e/o> .", "predicate position"),
    ],
)
def test_rejected_syntax(text, message):
    with pytest.raises(TurtleParseError, match=message):
        parse_turtle(text)


def test_parse_error_carries_position():
    with pytest.raises(TurtleParseError) as info:
        parse_turtle("@prefix ex: <http://example.org/> .\nex:a ex:b (oops) .")
    assert info.value.line == 2


def test_duplicate_triples_collapse():
    text = "@prefix e: <http://e/> .\ne:s e:p e:o .\ne:s e:p e:o .\n"
    assert len(parse_turtle(text)) == 1


# --------------------------------------------------------------------------
# queries on the worked metadata example
# --------------------------------------------------------------------------


def test_degree_query_returns_56():
    store = _caprasse_store()
    pattern = TriplePattern(Var("s"), Term.iri(SD + "hasDegree"), Var("d"))
    [binding] = query(store, [pattern])
    assert binding["d"] == Term.literal("56")
    assert binding["s"] == Term.iri(CAPRASSE_IRI)


def test_degree_filter_at_most_36_is_empty():
    store = _caprasse_store()
    pattern = TriplePattern(Var("s"), Term.iri(SD + "hasDegree"), Var("d"))
    assert query(store, [pattern], numeric_filter=parse_filter("d <= 36")) == []


def test_all_variable_pattern_on_empty_store():
    pattern = TriplePattern(Var("s"), Var("p"), Var("o"))
    assert query(TripleStore(), [pattern]) == []


def test_all_variable_pattern_counts_store():
    store = _caprasse_store()
    pattern = TriplePattern(Var("s"), Var("p"), Var("o"))
    assert len(query(store, [pattern])) == len(store)


def test_filter_on_unbound_variable_rejected():
    store = _caprasse_store()
    pattern = TriplePattern(Var("s"), Var("p"), Var("o"))
    with pytest.raises(QueryError, match="'zz'"):
        query(store, [pattern], numeric_filter=parse_filter("zz < 5"))


def test_non_numeric_literals_are_excluded_not_errors():
    store = _caprasse_store()
    pattern = TriplePattern(Var("s"), Var("p"), Var("o"))
    bindings = query(store, [pattern], numeric_filter=parse_filter("o >= 0"))
    assert [b["o"].value for b in bindings] == ["56"]


def test_membership_pattern_without_variables():
    store = _caprasse_store()
    pattern = TriplePattern(Term.iri(CAPRASSE_IRI), Term.iri(RDF_TYPE), Term.iri(SD + "IntPS"))
    assert query(store, [pattern]) == [{}]


def test_missing_predicate_present_and_absent():
    store = _caprasse_store()
    intps = Term.iri(SD + "IntPS")
    assert missing_predicate(store, intps, Term.iri(SD + "hasDegree")) == []
    assert missing_predicate(store, intps, Term.iri(SD + "hasDimension")) == [Term.iri(CAPRASSE_IRI)]
    assert missing_predicate(TripleStore(), intps, Term.iri(SD + "hasDegree")) == []


def test_class_difference():
    a, b = Term.iri("http://e/A"), Term.iri("http://e/B")
    x, y = Term.iri("http://e/X"), Term.iri("http://e/Y")
    rdf_type = Term.iri(RDF_TYPE)
    store = TripleStore([Triple(x, rdf_type, a), Triple(x, rdf_type, b), Triple(y, rdf_type, a)])
    assert class_difference(store, a, b) == [y]
    assert class_difference(store, a, a) == []
    caprasse = _caprasse_store()
    assert class_difference(caprasse, Term.iri(SD + "IntPS"), Term.iri(SD + "ModPS")) == [
        Term.iri(CAPRASSE_IRI)
    ]


def test_pattern_text_parsing():
    prefixes = {"sd": SD}
    pattern = parse_pattern_text("?s sd:hasDegree ?d", prefixes)
    assert pattern == TriplePattern(Var("s"), Term.iri(SD + "hasDegree"), Var("d"))
    with pytest.raises(QueryError):
        parse_pattern_text("?s sd:hasDegree", prefixes)
    with pytest.raises(PrefixResolutionError):
        parse_pattern_text("?s nope:p ?o", prefixes)


# --------------------------------------------------------------------------
# randomized oracle equivalence and round-trips
# --------------------------------------------------------------------------


def _random_store(rng: random.Random, max_triples: int = 60) -> TripleStore:
    subjects = [Term.iri(f"http://e/s{i}") for i in range(5)]
    predicates = [Term.iri(f"http://e/p{i}") for i in range(4)] + [Term.iri(RDF_TYPE)]
    objects = (
        subjects
        + [Term.literal(str(n)) for n in (1, 7, 56, 900)]
        + [Term.literal(w) for w in ("red", "blue")]
        + [Term.literal("3", datatype="http://e/int")]
    )
    count = rng.randrange(0, max_triples)
    triples = [
        Triple(rng.choice(subjects), rng.choice(predicates), rng.choice(objects)) for _ in range(count)
    ]
    return TripleStore(triples)


def _random_patterns(rng: random.Random) -> list[TriplePattern]:
    names = ["a", "b", "c"]
    subjects = [Term.iri(f"http://e/s{i}") for i in range(5)]
    predicates = [Term.iri(f"http://e/p{i}") for i in range(4)]
    objects = subjects + [Term.literal(str(n)) for n in (1, 7, 56)]

    def slot(pool):
        if rng.random() < 0.6:
            return Var(rng.choice(names))
        return rng.choice(pool)

    return [
        TriplePattern(slot(subjects), slot(predicates), slot(objects))
        for _ in range(rng.randrange(1, 4))
    ]


def test_query_matches_brute_force_oracle():
    rng = random.Random(20260810)
    for _ in range(100):
        store = _random_store(rng)
        patterns = _random_patterns(rng)
        numeric = parse_filter("a < 60") if rng.random() < 0.3 and any(
            "a" in p.variables() for p in patterns
        ) else None
        assert query(store, patterns, numeric_filter=numeric) == brute_force_query(
            store, patterns, numeric
        )


def test_query_is_invariant_under_triple_order():
    rng = random.Random(7)
    triples = list(_random_store(rng, max_triples=40))
    patterns = [TriplePattern(Var("a"), Var("b"), Var("c"))]
    shuffled = triples[:]
    rng.shuffle(shuffled)
    assert query(TripleStore(triples), patterns) == query(TripleStore(shuffled), patterns)


_iri_terms = st.sampled_from([Term.iri(f"http://example.org/node{i}") for i in range(6)])
_literals = st.one_of(
    st.text(
        alphabet=st.characters(min_codepoint=32, max_codepoint=1000, blacklist_characters=""),
        max_size=12,
    ).map(Term.literal),
    st.sampled_from(['a "quoted" value', "tab\there", "line\nbreak", "back\\slash"]).map(Term.literal),
    st.sampled_from(["0", "56", "900"]).map(lambda v: Term.literal(v, datatype="http://www.w3.org/2001/XMLSchema#integer")),
)
_triples = st.builds(Triple, _iri_terms, _iri_terms, st.one_of(_iri_terms, _literals))


@settings(max_examples=150, deadline=None)
@given(st.lists(_triples, max_size=25), st.booleans())
def test_turtle_round_trip(triples, with_prefix):
    prefixes = {"ex": "http://example.org/"} if with_prefix else {}
    store = TripleStore(triples, prefixes)
    assert parse_turtle(serialize_turtle(store)) == store
