"""Deterministic game-state machine: dice, cooldowns, failure streaks, injects.

All randomness in a game (scenario draw, established split, inject pile
shuffle, dice, random inject targets) comes from a single seeded stream in a
fixed draw order, so a game is fully determined by (registry, seed, choices).
For golden replays the dice can be swapped for a scripted sequence while the
rest of the setup is pinned explicitly.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Protocol, Sequence

from .cards import (
    AttackCard,
    AttackStage,
    CardRegistry,
    InjectCard,
    InjectKind,
    detection_matches,
    draw_attack_scenario,
    initial_procedure_split,
)

COOLDOWN_TURNS = 3
MAX_TURNS = 10
SUCCESS_THRESHOLD = 11
ESTABLISHED_MODIFIER = 3
SERIALIZATION_VERSION = "1"


class RulesError(Exception):
    """Protocol violation: acting on a terminal game or picking an unavailable procedure."""


class Status(Enum):
    IN_PROGRESS = "in_progress"
    VICTORY = "victory"
    LOSS = "loss"
    PENTEST = "pentest"


class InjectCause(Enum):
    NATURAL_ROLL = "natural_roll"
    THREE_FAILURES = "three_failures"


class DiceSource(Protocol):
    def roll(self) -> int: ...


class SeededDice:
    """d20 rolls drawn from the game's random stream."""

    def __init__(self, rng: random.Random) -> None:
        self._rng = rng

    def roll(self) -> int:
        return self._rng.randint(1, 20)


class ScriptedDice:
    """Fixed dice sequence for golden-game replays."""

    def __init__(self, values: Sequence[int]) -> None:
        for v in values:
            if not 1 <= v <= 20:
                raise ValueError(f"scripted die must be in 1..20, got {v}")
        self._values = list(values)
        self._index = 0

    def roll(self) -> int:
        if self._index >= len(self._values):
            raise RulesError("scripted dice sequence exhausted")
        value = self._values[self._index]
        self._index += 1
        return value


@dataclass(frozen=True)
class EffectReport:
    """What an inject changed, for announcements and logs."""

    inject_id: str
    kind: InjectKind
    changes: dict[str, object]
    note: str

    def to_dict(self) -> dict:
        return {
            "inject_id": self.inject_id,
            "kind": self.kind.value,
            "changes": self.changes,
            "note": self.note,
        }


@dataclass(frozen=True)
class TurnRecord:
    turn: int
    procedure: str
    natural: int
    modifier: int
    success: bool
    revealed: Optional[str] = None
    inject: Optional[str] = None
    inject_cause: Optional[InjectCause] = None
    inject_effect: Optional[EffectReport] = None

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "procedure": self.procedure,
            "natural": self.natural,
            "modifier": self.modifier,
            "success": self.success,
            "revealed": self.revealed,
            "inject": self.inject,
            "inject_cause": self.inject_cause.value if self.inject_cause else None,
            "inject_effect": self.inject_effect.to_dict() if self.inject_effect else None,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TurnRecord":
        effect = raw.get("inject_effect")
        return cls(
            turn=raw["turn"],
            procedure=raw["procedure"],
            natural=raw["natural"],
            modifier=raw["modifier"],
            success=raw["success"],
            revealed=raw.get("revealed"),
            inject=raw.get("inject"),
            inject_cause=InjectCause(raw["inject_cause"]) if raw.get("inject_cause") else None,
            inject_effect=EffectReport(
                inject_id=effect["inject_id"],
                kind=InjectKind(effect["kind"]),
                changes=effect["changes"],
                note=effect["note"],
            )
            if effect
            else None,
        )


@dataclass
class GameState:
    registry: CardRegistry
    seed: int
    scenario: list[AttackCard]
    revealed: list[str]
    established: set[str]
    cooldowns: dict[str, int]
    removed: set[str]
    consecutive_failures: int
    inject_pile: list[str]
    rng: random.Random
    dice: DiceSource
    turn: int = 1
    last_used_procedure: Optional[str] = None
    pending_cooldown_extra: int = 0
    status: Status = Status.IN_PROGRESS
    history: list[TurnRecord] = field(default_factory=list)

    @property
    def turns_played(self) -> int:
        return len(self.history)

    def scenario_ids(self) -> list[str]:
        return [c.id for c in self.scenario]

    def unrevealed(self) -> list[AttackCard]:
        return [c for c in self.scenario if c.id not in self.revealed]


def new_game(registry: CardRegistry, seed: int, k_established: int = 4) -> GameState:
    """Start a seeded game. Draw order: scenario, established split, inject shuffle."""
    rng = random.Random(seed)
    scenario = draw_attack_scenario(registry, rng)
    established, _other = initial_procedure_split(registry, rng, k_established)
    pile = [card.id for card in registry.injects]
    rng.shuffle(pile)
    return GameState(
        registry=registry,
        seed=seed,
        scenario=scenario,
        revealed=[],
        established=set(established),
        cooldowns={},
        removed=set(),
        consecutive_failures=0,
        inject_pile=pile,
        rng=rng,
        dice=SeededDice(rng),
    )


def new_game_from_setup(
    registry: CardRegistry,
    scenario_ids: Sequence[str],
    established_ids: Sequence[str],
    inject_order: Sequence[str],
    dice: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> GameState:
    """Start a game with an explicitly pinned setup (golden replays, oracles).

    ``dice``, when given, scripts the d20 rolls; the seeded stream still backs
    any random inject targets.
    """
    scenario = [registry.attack(cid) for cid in scenario_ids]
    if len(scenario) != 4 or {c.stage for c in scenario} != set(AttackStage):
        raise ValueError("scenario must contain exactly one card per stage")
    scenario.sort(key=lambda c: c.stage.order)
    for pid in established_ids:
        if not registry.has_procedure(pid):
            raise ValueError(f"unknown procedure {pid!r}")
    rng = random.Random(seed)
    return GameState(
        registry=registry,
        seed=seed,
        scenario=scenario,
        revealed=[],
        established=set(established_ids),
        cooldowns={},
        removed=set(),
        consecutive_failures=0,
        inject_pile=list(inject_order),
        rng=rng,
        dice=ScriptedDice(dice) if dice is not None else SeededDice(rng),
    )


def available_procedures(state: GameState) -> list[str]:
    """Procedures off cooldown and not removed, in registry order."""
    if state.status is not Status.IN_PROGRESS:
        raise RulesError("game is over")
    return [
        pid
        for pid in state.registry.procedure_ids
        if state.cooldowns.get(pid, 0) == 0 and pid not in state.removed
    ]


def success_probability(modifier: int) -> Fraction:
    """Exact success chance for a d20 attempt with the given modifier."""
    count = sum(1 for n in range(1, 21) if n + modifier >= SUCCESS_THRESHOLD)
    return Fraction(count, 20)


def apply_inject(state: GameState, inject: InjectCard) -> EffectReport:
    """Apply a drawn inject's effect. Returns a report of every change made."""
    effect = inject.effect
    changes: dict[str, object] = {}
    note = ""
    if effect.kind is InjectKind.END_AS_PENTEST:
        state.status = Status.PENTEST
        changes["status"] = Status.PENTEST.value
        note = "The whole exercise is declared a penetration test; the game ends."
    elif effect.kind is InjectKind.PROMOTE_TO_ESTABLISHED:
        assert effect.procedure is not None
        if effect.procedure in state.established:
            note = f"{state.registry.procedure(effect.procedure).name} is already Established; no effect."
        else:
            state.established.add(effect.procedure)
            changes["established_added"] = effect.procedure
            note = f"{state.registry.procedure(effect.procedure).name} is now an Established procedure (+3)."
    elif effect.kind is InjectKind.REMOVE_PROCEDURE:
        candidates = [
            pid
            for pid in state.registry.procedure_ids
            if state.cooldowns.get(pid, 0) == 0 and pid not in state.removed
        ]
        if not candidates:
            note = "No procedure available to remove; no effect."
        else:
            target = candidates[state.rng.randrange(len(candidates))]
            state.removed.add(target)
            changes["removed"] = target
            note = f"{state.registry.procedure(target).name} is removed for the rest of the game."
    elif effect.kind is InjectKind.RESTORE_PROCEDURE:
        candidates = [
            pid
            for pid in state.registry.procedure_ids
            if pid in state.removed or state.cooldowns.get(pid, 0) > 0
        ]
        if not candidates:
            note = "Nothing is removed or on cooldown; no effect."
        else:
            target = candidates[state.rng.randrange(len(candidates))]
            if target in state.removed:
                state.removed.discard(target)
                changes["restored_from_removed"] = target
            else:
                state.cooldowns[target] = 0
                changes["cooldown_cleared"] = target
            note = f"{state.registry.procedure(target).name} is available again."
    elif effect.kind is InjectKind.REVEAL_STAGE_HINT:
        pending = state.unrevealed()
        if pending:
            stage = min(pending, key=lambda c: c.stage.order).stage
            changes["stage_hint"] = stage.value
            note = f"Leaked data points to undetected activity in the {stage.display_name} stage."
        else:
            note = "Nothing left to hint at; no effect."
    elif effect.kind is InjectKind.SILENCE_DEFENDER:
        assert effect.turns is not None and effect.selector is not None
        changes["silence_turns"] = effect.turns
        changes["silence_selector"] = effect.selector
        note = f"A defender is pulled away and cannot speak for {effect.turns} turn(s)."
    elif effect.kind is InjectKind.EXTEND_LAST_COOLDOWN:
        assert effect.extra_turns is not None
        target = state.last_used_procedure
        if target is None:
            note = "No procedure has been used yet; no effect."
        elif state.cooldowns.get(target, 0) > 0:
            state.cooldowns[target] += effect.extra_turns
            changes["cooldown_extended"] = target
            changes["extra_turns"] = effect.extra_turns
            note = f"Cooldown of {state.registry.procedure(target).name} extended by {effect.extra_turns} turns."
        else:
            state.pending_cooldown_extra += effect.extra_turns
            changes["cooldown_extended"] = target
            changes["extra_turns"] = effect.extra_turns
            note = f"Cooldown of {state.registry.procedure(target).name} extended by {effect.extra_turns} turns."
    elif effect.kind is InjectKind.NO_MECHANICAL_EFFECT:
        note = "No mechanical effect."
    return EffectReport(inject_id=inject.id, kind=effect.kind, changes=changes, note=note)


def resolve_attempt(state: GameState, procedure_id: str) -> TurnRecord:
    """Resolve one full turn: roll, reveal/streak, inject, cooldowns, status."""
    if state.status is not Status.IN_PROGRESS:
        raise RulesError("game is over")
    if procedure_id not in available_procedures(state):
        raise RulesError(f"procedure {procedure_id!r} is on cooldown or removed")

    this_turn = state.turn
    natural = state.dice.roll()
    modifier = ESTABLISHED_MODIFIER if procedure_id in state.established else 0
    success = natural + modifier >= SUCCESS_THRESHOLD
    state.last_used_procedure = procedure_id

    revealed_id: Optional[str] = None
    if success:
        matches = detection_matches(state.registry, procedure_id, state.scenario, state.revealed)
        if matches:
            revealed_id = matches[0].id
            state.revealed.append(revealed_id)
        state.consecutive_failures = 0
    else:
        state.consecutive_failures += 1

    victory = len(state.revealed) == len(state.scenario)

    inject_id: Optional[str] = None
    cause: Optional[InjectCause] = None
    report: Optional[EffectReport] = None
    if not victory:
        if natural in (1, 20):
            cause = InjectCause.NATURAL_ROLL
        elif state.consecutive_failures >= 3:
            cause = InjectCause.THREE_FAILURES
        if state.consecutive_failures >= 3:
            # Streak is consumed once it triggers, whatever the draw is attributed to.
            state.consecutive_failures = 0
        if cause is not None and state.inject_pile:
            inject_id = state.inject_pile.pop(0)
            report = apply_inject(state, state.registry.inject(inject_id))
        elif cause is not None:
            cause = None  # pile empty: no draw, no inject recorded

    for pid in list(state.cooldowns):
        if pid != procedure_id and state.cooldowns[pid] > 0:
            state.cooldowns[pid] -= 1
    state.cooldowns[procedure_id] = COOLDOWN_TURNS + state.pending_cooldown_extra
    state.pending_cooldown_extra = 0

    if victory:
        state.status = Status.VICTORY
    elif state.status is Status.IN_PROGRESS:
        if this_turn >= MAX_TURNS:
            state.status = Status.LOSS
        else:
            state.turn = this_turn + 1

    record = TurnRecord(
        turn=this_turn,
        procedure=procedure_id,
        natural=natural,
        modifier=modifier,
        success=success,
        revealed=revealed_id,
        inject=inject_id,
        inject_cause=cause,
        inject_effect=report,
    )
    state.history.append(record)
    return record
