from __future__ import annotations

import copy
import json

import pytest

from euclidkit.bank import (
    DuplicateId,
    SchemaError,
    bank_from_dict,
    default_bank_path,
    instantiate,
    knowledge_for,
)
from euclidkit.geometry import ToolKind


@pytest.fixture()
def raw():
    return json.loads(default_bank_path().read_text(encoding="utf-8"))


def test_bundled_corpus_shape(bank):
    assert len(bank) >= 20
    assert {"alpha-rhombus-in-rectangle", "gamma-lozenge", "theta-angle-54", "alpha-circle-in-square"} <= {
        s.id for s in bank
    }
    assert bank.pack_order[0] == "Seed"


def test_missing_field_names_field_and_location(raw):
    del raw["problems"][3]["statement"]
    with pytest.raises(SchemaError) as info:
        bank_from_dict(raw, "b.json")
    assert info.value.field == "statement"
    assert "problems[3]" in info.value.location


def test_duplicate_ids(raw):
    raw["problems"].append(copy.deepcopy(raw["problems"][0]))
    with pytest.raises(DuplicateId):
        bank_from_dict(raw)


def test_reference_outside_whitelist(raw):
    p = next(p for p in raw["problems"] if p["id"] == "tut-parallelogram")
    p["tools"] = ["line"]
    with pytest.raises(SchemaError, match="whitelist"):
        bank_from_dict(raw)


def test_target_must_occur_in_statement(raw):
    raw["problems"][0]["target"] = "Q9"
    with pytest.raises(SchemaError, match="target"):
        bank_from_dict(raw)


def test_unbound_reference_identifier(raw):
    raw["problems"][0]["references"][0] = "line(A, Zed) -> l\n" + raw["problems"][0]["references"][0]
    with pytest.raises(SchemaError, match="references"):
        bank_from_dict(raw)


def test_round_trip_through_dict(bank):
    data = {"format_version": 1, "pack_order": list(bank.pack_order), "problems": [s.to_dict() for s in bank]}
    again = bank_from_dict(data)
    assert [s.to_dict() for s in again] == data["problems"]


def test_instantiation_is_deterministic(bank):
    for spec in bank:
        a, b = instantiate(spec, 7), instantiate(spec, 7)
        assert [(o.label, repr(o)) for o in a] == [(o.label, repr(o)) for o in b]


def test_instances_differ_across_seeds(bank):
    spec = bank.get("alpha-circle-in-square")
    assert repr(instantiate(spec, 0).get("A")) != repr(instantiate(spec, 1).get("A"))


def test_instances_fit_the_unit_box(bank):
    for spec in bank:
        for seed in range(3):
            for p in instantiate(spec, seed).points():
                assert -1e-9 <= p.x <= 1 + 1e-9 and -1e-9 <= p.y <= 1 + 1e-9


def test_hidden_names_are_not_initial(bank):
    for spec in bank:
        scene = instantiate(spec, 0)
        assert set(spec.hidden).isdisjoint(o.label for o in scene)
        assert {o.label for o in scene} == spec.initial_labels()


def test_line_family_follows_line_tool(bank):
    spec = bank.get("tut-parallelogram")
    assert spec.allows(ToolKind.RAY) and spec.allows(ToolKind.INTERSECT)
    assert not spec.allows(ToolKind.CIRCLE)


def test_knowledge_grows_by_pack(bank):
    sizes = []
    for pack in bank.pack_order[1:]:
        spec = next(s for s in bank if s.pack == pack)
        kb = knowledge_for(spec, bank)
        assert spec.id not in kb.ids
        assert all(bank.pack_index(e.spec.pack) < bank.pack_index(pack) for e in kb)
        sizes.append(len(kb))
    assert sizes == sorted(sizes)
    first = next(s for s in bank if s.pack == "Tutorial")
    assert knowledge_for(first, bank).ids == list(bank.seed_ids)
