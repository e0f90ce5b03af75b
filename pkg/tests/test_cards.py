import copy
import random

import pytest

from breachsim.cards import (
    AttackStage,
    CardDatabaseError,
    detection_matches,
    draw_attack_scenario,
    initial_procedure_split,
    load_registry_dict,
)

from conftest import GOLDEN_SCENARIO


def test_default_registry_counts(registry):
    assert len(registry.attack_cards) == 32
    assert len(registry.procedures) == 11
    assert len(registry.injects) == 9
    by_stage = {stage: len(registry.attacks_in_stage(stage)) for stage in AttackStage}
    assert by_stage == {
        AttackStage.INITIAL_COMPROMISE: 10,
        AttackStage.PIVOT_ESCALATE: 7,
        AttackStage.C2_EXFIL: 6,
        AttackStage.PERSISTENCE: 9,
    }
    assert registry.source_hash


def test_every_procedure_detects_something(registry):
    covered = set()
    for card in registry.attack_cards:
        assert card.detection, card.id
        covered |= card.detection
    assert covered == set(registry.procedure_ids)


def test_empty_document_rejected():
    with pytest.raises(CardDatabaseError):
        load_registry_dict({"version": "1", "attack_cards": [], "procedures": [], "injects": []})


def test_unknown_detection_reference_names_the_card(cards_doc):
    doc = copy.deepcopy(cards_doc)
    phish = next(c for c in doc["attack_cards"] if c["id"] == "phish")
    phish["detection"] = ["nonexistent_procedure"]
    with pytest.raises(CardDatabaseError, match="phish"):
        load_registry_dict(doc)


def test_duplicate_id_rejected(cards_doc):
    doc = copy.deepcopy(cards_doc)
    doc["attack_cards"][1]["id"] = doc["attack_cards"][0]["id"]
    with pytest.raises(CardDatabaseError, match="duplicate id"):
        load_registry_dict(doc)


def test_unknown_field_rejected(cards_doc):
    doc = copy.deepcopy(cards_doc)
    doc["procedures"][0]["surprise"] = True
    with pytest.raises(CardDatabaseError, match="unknown fields"):
        load_registry_dict(doc)


def test_bad_stage_count_rejected(cards_doc):
    doc = copy.deepcopy(cards_doc)
    doc["attack_cards"] = [c for c in doc["attack_cards"] if c["id"] != "phish"]
    with pytest.raises(CardDatabaseError, match="initial_compromise"):
        load_registry_dict(doc)


def test_bad_inject_effect_rejected(cards_doc):
    doc = copy.deepcopy(cards_doc)
    doc["injects"][0]["effect"] = {"kind": "promote_to_established"}
    with pytest.raises(CardDatabaseError):
        load_registry_dict(doc)


def test_scenario_draw_is_deterministic(registry):
    a = draw_attack_scenario(registry, random.Random(123))
    b = draw_attack_scenario(registry, random.Random(123))
    assert [c.id for c in a] == [c.id for c in b]
    assert [c.stage for c in a] == list(AttackStage)


def test_golden_scenario_is_drawable(registry):
    # The worked-example scenario is a legal draw: some seed produces it.
    target = set(GOLDEN_SCENARIO)
    for seed in range(200000):
        scenario = draw_attack_scenario(registry, random.Random(seed))
        if {c.id for c in scenario} == target:
            return
    pytest.fail("golden scenario never drawn")


def test_scenario_draw_uniform_within_stage(registry):
    rng = random.Random(0)
    counts = {c.id: 0 for c in registry.attacks_in_stage(AttackStage.INITIAL_COMPROMISE)}
    n = 10_000
    for _ in range(n):
        counts[draw_attack_scenario(registry, rng)[0].id] += 1
    for card_id, count in counts.items():
        assert abs(count / n - 0.1) < 0.02, card_id


@pytest.mark.parametrize("k,expected_other", [(4, 7), (0, 11), (11, 0)])
def test_initial_procedure_split_sizes(registry, k, expected_other):
    established, other = initial_procedure_split(registry, random.Random(5), k=k)
    assert len(established) == k
    assert len(other) == expected_other
    assert set(established) | set(other) == set(registry.procedure_ids)
    assert not set(established) & set(other)


def test_initial_procedure_split_deterministic(registry):
    a = initial_procedure_split(registry, random.Random(9), k=4)
    b = initial_procedure_split(registry, random.Random(9), k=4)
    assert a == b


def test_split_k_out_of_range(registry):
    with pytest.raises(ValueError):
        initial_procedure_split(registry, random.Random(0), k=12)


def test_detection_matches_golden_pairings(registry):
    scenario = [registry.attack(cid) for cid in GOLDEN_SCENARIO]
    hits = detection_matches(registry, "server_analysis", scenario, [])
    assert "application_shimming" in [c.id for c in hits]
    hits = detection_matches(
        registry, "ueba", scenario, ["application_shimming", "http_as_exfil"]
    )
    assert "credential_stuffing_pe" in [c.id for c in hits]
    hits = detection_matches(registry, "isolation", scenario, [])
    assert [c.id for c in hits] == ["http_as_exfil"]
    hits = detection_matches(registry, "memory_analysis", scenario, [])
    assert "external_cloud_access" in [c.id for c in hits]


def test_detection_matches_excludes_revealed_and_orders_by_stage(registry):
    scenario = [registry.attack(cid) for cid in GOLDEN_SCENARIO]
    all_ids = [c.id for c in scenario]
    for pid in registry.procedure_ids:
        assert detection_matches(registry, pid, scenario, all_ids) == []
        hits = detection_matches(registry, pid, scenario, [])
        orders = [c.stage.order for c in hits]
        assert orders == sorted(orders)


def test_detection_matches_unknown_procedure(registry):
    scenario = [registry.attack(cid) for cid in GOLDEN_SCENARIO]
    with pytest.raises(KeyError):
        detection_matches(registry, "not_a_procedure", scenario, [])
