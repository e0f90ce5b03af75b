import random
from fractions import Fraction

import pytest

from breachsim.cards import InjectKind
from breachsim.engine import (
    RulesError,
    ScriptedDice,
    Status,
    apply_inject,
    available_procedures,
    new_game,
    new_game_from_setup,
    resolve_attempt,
    success_probability,
)

from conftest import (
    GOLDEN_CHOICES,
    GOLDEN_DICE,
    GOLDEN_ESTABLISHED,
    GOLDEN_INJECT_ORDER,
    GOLDEN_SCENARIO,
)


def golden_state(registry, dice=GOLDEN_DICE, inject_order=GOLDEN_INJECT_ORDER, seed=0):
    return new_game_from_setup(
        registry, GOLDEN_SCENARIO, GOLDEN_ESTABLISHED, inject_order, dice=dice, seed=seed
    )


def test_success_probability_exact():
    assert success_probability(3) == Fraction(13, 20)
    assert success_probability(0) == Fraction(10, 20)
    assert success_probability(3) - success_probability(0) == Fraction(3, 20)


def test_new_game_is_deterministic(registry):
    a = new_game(registry, 77)
    b = new_game(registry, 77)
    assert a.scenario_ids() == b.scenario_ids()
    assert a.established == b.established
    assert a.inject_pile == b.inject_pile


def test_new_game_initial_shape(registry):
    state = new_game(registry, 3)
    assert state.revealed == []
    assert len(available_procedures(state)) == 11
    assert len(state.inject_pile) == 9
    assert len(set(state.inject_pile)) == 9
    assert state.turn == 1
    assert state.consecutive_failures == 0
    assert state.status is Status.IN_PROGRESS


def test_cooldown_exclusion_window(registry):
    # 11 procedures cycled far apart: the used one is back exactly on turn t+4.
    state = golden_state(registry, dice=[2] * 10)
    assert "endpoint_analysis" in available_procedures(state)
    resolve_attempt(state, "endpoint_analysis")  # turn 1
    for filler in ("siem_log_analysis", "server_analysis", "firewall_log_review"):
        assert "endpoint_analysis" not in available_procedures(state)
        resolve_attempt(state, filler)  # turns 2, 3, 4
    assert "endpoint_analysis" in available_procedures(state)  # turn 5


def test_golden_turn_one_failure(registry):
    state = golden_state(registry)
    rec = resolve_attempt(state, "endpoint_analysis")
    assert (rec.natural, rec.modifier, rec.success) == (4, 3, False)
    assert state.consecutive_failures == 1


def test_golden_turn_two_reveal(registry):
    state = golden_state(registry, dice=(4, 16))
    resolve_attempt(state, "endpoint_analysis")
    rec = resolve_attempt(state, "server_analysis")
    assert rec.success and rec.natural + rec.modifier == 19
    assert rec.revealed == "application_shimming"
    assert state.consecutive_failures == 0


def test_natural_one_draws_inject(registry):
    state = golden_state(registry, dice=(1,))
    rec = resolve_attempt(state, "siem_log_analysis")
    assert not rec.success and rec.natural == 1 and rec.modifier == 0
    assert rec.inject == GOLDEN_INJECT_ORDER[0]
    assert rec.inject_cause.value == "natural_roll"


def test_natural_twenty_success_and_inject(registry):
    state = golden_state(registry, dice=(20,))
    rec = resolve_attempt(state, "ueba")
    assert rec.success and rec.revealed == "credential_stuffing_pe"
    assert rec.inject is not None
    assert rec.inject_cause.value == "natural_roll"


def test_three_failures_inject_and_reset(registry):
    state = golden_state(registry, dice=(2, 2, 2))
    resolve_attempt(state, "siem_log_analysis")
    resolve_attempt(state, "firewall_log_review")
    assert state.consecutive_failures == 2
    rec = resolve_attempt(state, "network_threat_hunting")
    assert rec.inject is not None
    assert rec.inject_cause.value == "three_failures"
    assert state.consecutive_failures == 0


def test_empty_pile_skips_draw(registry):
    state = golden_state(registry, dice=(1, 2), inject_order=())
    rec = resolve_attempt(state, "siem_log_analysis")
    assert rec.inject is None and rec.inject_cause is None


def test_success_with_no_match_resets_streak(registry):
    # Crisis Management detects none of the golden scenario cards.
    state = golden_state(registry, dice=(2, 19))
    resolve_attempt(state, "siem_log_analysis")
    rec = resolve_attempt(state, "crisis_management")
    assert rec.success and rec.revealed is None
    assert state.consecutive_failures == 0


def test_unavailable_procedure_is_protocol_error(registry):
    state = golden_state(registry, dice=(2, 2))
    resolve_attempt(state, "isolation")
    with pytest.raises(RulesError):
        resolve_attempt(state, "isolation")


def test_terminal_state_rejects_operations(registry):
    state = golden_state(registry, dice=(19, 19, 19, 19))
    for choice in ("server_analysis", "isolation", "ueba", "memory_analysis"):
        resolve_attempt(state, choice)
    assert state.status is Status.VICTORY
    with pytest.raises(RulesError):
        resolve_attempt(state, "siem_log_analysis")
    with pytest.raises(RulesError):
        available_procedures(state)


def test_loss_after_ten_turns(registry):
    state = golden_state(registry, dice=[2] * 10, inject_order=())
    order = list(registry.procedure_ids)
    for turn in range(10):
        resolve_attempt(state, order[turn % 11])
    assert state.status is Status.LOSS
    assert state.turns_played == 10


def test_apply_inject_pentest(registry):
    state = golden_state(registry)
    report = apply_inject(state, registry.inject("it_was_a_pentest"))
    assert state.status is Status.PENTEST
    assert report.changes == {"status": "pentest"}


def test_apply_inject_promote(registry):
    state = golden_state(registry)
    report = apply_inject(state, registry.inject("siem_analyst_returns"))
    assert "siem_log_analysis" in state.established
    assert report.changes == {"established_added": "siem_log_analysis"}


def test_apply_inject_restore_no_target(registry):
    state = golden_state(registry)
    report = apply_inject(state, registry.inject("give_random_procedure"))
    assert report.changes == {}
    assert "no effect" in report.note


def test_apply_inject_remove_then_restore(registry):
    state = golden_state(registry, seed=4)
    report = apply_inject(state, registry.inject("take_one_procedure_away"))
    removed = report.changes["removed"]
    assert removed in state.removed
    assert removed not in available_procedures(state)
    report = apply_inject(state, registry.inject("give_random_procedure"))
    assert report.changes == {"restored_from_removed": removed}
    assert not state.removed


def test_apply_inject_extend_cooldown(registry):
    state = golden_state(registry, dice=(2, 2))
    resolve_attempt(state, "ueba")
    assert state.cooldowns["ueba"] == 3
    report = apply_inject(state, registry.inject("bobby_the_intern"))
    assert state.cooldowns["ueba"] == 6
    assert report.changes["cooldown_extended"] == "ueba"


def test_removed_procedure_stays_gone(registry):
    state = golden_state(registry, dice=[2] * 10, inject_order=(), seed=11)
    report = apply_inject(state, registry.inject("take_one_procedure_away"))
    removed = report.changes["removed"]
    order = [pid for pid in registry.procedure_ids if pid != removed]
    for turn in range(10):
        assert removed not in available_procedures(state)
        resolve_attempt(state, order[turn % len(order)])
    assert state.status is Status.LOSS


def test_scripted_dice_bounds():
    with pytest.raises(ValueError):
        ScriptedDice([0])
    with pytest.raises(ValueError):
        ScriptedDice([21])


def test_success_rule_exhaustive(registry):
    # success <=> natural + modifier >= 11, for every natural and both modifiers
    for natural in range(1, 21):
        for established in (False, True):
            established_ids = GOLDEN_ESTABLISHED if established else ()
            state = new_game_from_setup(
                registry, GOLDEN_SCENARIO, established_ids, (), dice=(natural,)
            )
            rec = resolve_attempt(state, "endpoint_analysis")
            modifier = 3 if established else 0
            assert rec.modifier == modifier
            assert rec.success == (natural + modifier >= 11)


def test_full_determinism_of_history(registry):
    choices = []
    rng = random.Random(42)
    state = new_game(registry, 1234)
    while state.status is Status.IN_PROGRESS:
        avail = available_procedures(state)
        pick = avail[rng.randrange(len(avail))]
        choices.append(pick)
        resolve_attempt(state, pick)
    replayed = new_game(registry, 1234)
    for pick in choices:
        resolve_attempt(replayed, pick)
    assert [r.to_dict() for r in replayed.history] == [r.to_dict() for r in state.history]
    assert replayed.status is state.status


def test_golden_full_trajectory(registry, golden_setup):
    state = golden_state(registry)
    records = [resolve_attempt(state, pid) for pid in GOLDEN_CHOICES]
    assert [r.success for r in records] == [False, True, False, True, True, True]
    assert [r.revealed for r in records] == [
        None, "application_shimming", None, "http_as_exfil",
        "credential_stuffing_pe", "external_cloud_access",
    ]
    assert [r.inject for r in records] == [
        None, None, "lead_handler_has_a_baby", None, "honeypots_deployed", None,
    ]
    assert state.status is Status.VICTORY
    assert state.turns_played == 6
