import json

import pytest

from nswlab.errors import InputError
from nswlab.instances import FAMILIES, generate, instance_digest, parse_instance, serialize_instance


def test_roundtrip_byte_exact():
    for family in FAMILIES:
        inst = generate(family, 2, 3, 11)
        text = serialize_instance(inst)
        again = serialize_instance(parse_instance(text))
        assert text == again


def test_generator_determinism():
    a = serialize_instance(generate("rank", 2, 4, 7))
    b = serialize_instance(generate("rank", 2, 4, 7))
    assert a == b
    c = serialize_instance(generate("rank", 2, 4, 8))
    assert a != c


def test_coverage_covers_inside_universe():
    inst = generate("coverage", 2, 3, 1)
    for val in inst.valuations:
        for cover in val.covers:
            assert all(0 <= e < val.universe_size for e in cover)


def test_kmatching_edges_one_vertex_per_part():
    inst = generate("kmatching", 2, 3, 2, {"k": 3})
    for val in inst.valuations:
        assert val.k == 3
        for _, vs, _ in val.hyperedges:
            assert len(vs) == val.k - 1


def test_minimal_document_parses():
    doc = {
        "schema_version": 1,
        "n": 1,
        "m": 1,
        "metadata": {},
        "valuations": [
            {
                "kind": "weighted_matroid_rank",
                "matroid": {"type": "uniform", "ground_size": 1, "rank": 1},
                "weights": [1.0],
            }
        ],
    }
    inst = parse_instance(json.dumps(doc))
    assert inst.n == 1 and inst.m == 1


def test_negative_weight_rejected_with_path():
    doc = {
        "schema_version": 1,
        "n": 1,
        "m": 2,
        "valuations": [
            {
                "kind": "weighted_matroid_rank",
                "matroid": {"type": "uniform", "ground_size": 2, "rank": 1},
                "weights": [1.0, -0.5],
            }
        ],
    }
    with pytest.raises(InputError, match="/valuations/0"):
        parse_instance(json.dumps(doc))


def test_unknown_schema_version_rejected():
    with pytest.raises(InputError, match="schema_version"):
        parse_instance(json.dumps({"schema_version": 99, "n": 1, "m": 0, "valuations": []}))


def test_bad_matroid_type_has_path():
    doc = {
        "schema_version": 1,
        "n": 1,
        "m": 1,
        "valuations": [
            {"kind": "weighted_matroid_rank", "matroid": {"type": "mystery"}, "weights": [1.0]}
        ],
    }
    with pytest.raises(InputError, match="/valuations/0/matroid"):
        parse_instance(json.dumps(doc))


def test_digest_stable():
    inst = generate("rank", 2, 3, 5)
    assert instance_digest(inst) == instance_digest(parse_instance(serialize_instance(inst)))


def test_explicit_matroid_roundtrip():
    doc = {
        "schema_version": 1,
        "n": 1,
        "m": 2,
        "metadata": {},
        "valuations": [
            {
                "kind": "weighted_matroid_rank",
                "matroid": {
                    "type": "explicit",
                    "ground_size": 2,
                    "independent_sets": [[], [0], [1]],
                },
                "weights": [1.0, 2.0],
            }
        ],
    }
    text = json.dumps(doc)
    inst = parse_instance(text)
    assert serialize_instance(parse_instance(serialize_instance(inst))) == serialize_instance(inst)
