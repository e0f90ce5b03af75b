"""Card database: types, loading/validation, scenario draws, detection lookups.

The deck is data-driven: all card definitions, detection mappings, and inject
effects live in a JSON document (see ``data/cards.json`` for the bundled
default and ``docs/card-database.md`` for the schema). The loader is strict:
unknown fields, bad counts, duplicate ids, and dangling detection references
are all rejected with errors naming the offending entry.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence


class AttackStage(Enum):
    """The four breach stages, in fixed scenario order."""

    INITIAL_COMPROMISE = "initial_compromise"
    PIVOT_ESCALATE = "pivot_escalate"
    C2_EXFIL = "c2_exfil"
    PERSISTENCE = "persistence"

    @property
    def order(self) -> int:
        return _STAGE_ORDER[self]

    @property
    def display_name(self) -> str:
        return _STAGE_NAMES[self]


_STAGE_ORDER = {
    AttackStage.INITIAL_COMPROMISE: 0,
    AttackStage.PIVOT_ESCALATE: 1,
    AttackStage.C2_EXFIL: 2,
    AttackStage.PERSISTENCE: 3,
}

_STAGE_NAMES = {
    AttackStage.INITIAL_COMPROMISE: "Initial Compromise",
    AttackStage.PIVOT_ESCALATE: "Pivot and Escalate",
    AttackStage.C2_EXFIL: "C2 and Exfiltration",
    AttackStage.PERSISTENCE: "Persistence",
}

# Expected deck composition for the standard 52-card deck.
EXPECTED_STAGE_COUNTS = {
    AttackStage.INITIAL_COMPROMISE: 10,
    AttackStage.PIVOT_ESCALATE: 7,
    AttackStage.C2_EXFIL: 6,
    AttackStage.PERSISTENCE: 9,
}
EXPECTED_PROCEDURE_COUNT = 11
EXPECTED_INJECT_COUNT = 9


class CardDatabaseError(ValueError):
    """Raised when a card database document violates the schema or deck invariants."""


@dataclass(frozen=True)
class AttackCard:
    id: str
    name: str
    stage: AttackStage
    detection: frozenset[str]


@dataclass(frozen=True)
class ProcedureCard:
    id: str
    name: str
    aliases: tuple[str, ...] = ()

    def matches_name(self, text: str) -> bool:
        lowered = text.lower()
        return lowered == self.name.lower() or any(lowered == a.lower() for a in self.aliases)


class InjectKind(Enum):
    END_AS_PENTEST = "end_as_pentest"
    PROMOTE_TO_ESTABLISHED = "promote_to_established"
    REMOVE_PROCEDURE = "remove_procedure"
    RESTORE_PROCEDURE = "restore_procedure"
    REVEAL_STAGE_HINT = "reveal_stage_hint"
    SILENCE_DEFENDER = "silence_defender"
    EXTEND_LAST_COOLDOWN = "extend_last_cooldown"
    NO_MECHANICAL_EFFECT = "no_mechanical_effect"


@dataclass(frozen=True)
class InjectEffect:
    kind: InjectKind
    procedure: Optional[str] = None  # promote_to_established
    turns: Optional[int] = None  # silence_defender
    selector: Optional[str] = None  # silence_defender: leader_or_random | highest_skill
    extra_turns: Optional[int] = None  # extend_last_cooldown


@dataclass(frozen=True)
class InjectCard:
    id: str
    name: str
    effect: InjectEffect


@dataclass(frozen=True)
class CardRegistry:
    """Immutable, validated card database. Safe to share across games."""

    attack_cards: tuple[AttackCard, ...]
    procedures: tuple[ProcedureCard, ...]
    injects: tuple[InjectCard, ...]
    source_hash: str = ""
    version: str = "1"
    _attack_by_id: dict[str, AttackCard] = field(default_factory=dict, repr=False, compare=False)
    _procedure_by_id: dict[str, ProcedureCard] = field(default_factory=dict, repr=False, compare=False)
    _inject_by_id: dict[str, InjectCard] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_attack_by_id", {c.id: c for c in self.attack_cards})
        object.__setattr__(self, "_procedure_by_id", {p.id: p for p in self.procedures})
        object.__setattr__(self, "_inject_by_id", {i.id: i for i in self.injects})

    @property
    def procedure_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.procedures)

    def attack(self, card_id: str) -> AttackCard:
        return self._attack_by_id[card_id]

    def procedure(self, procedure_id: str) -> ProcedureCard:
        return self._procedure_by_id[procedure_id]

    def inject(self, inject_id: str) -> InjectCard:
        return self._inject_by_id[inject_id]

    def has_procedure(self, procedure_id: str) -> bool:
        return procedure_id in self._procedure_by_id

    def attacks_in_stage(self, stage: AttackStage) -> tuple[AttackCard, ...]:
        return tuple(c for c in self.attack_cards if c.stage is stage)

    def to_canonical_dict(self) -> dict:
        """Stable dict form, used by tests to detect silent mutation acceptance."""
        return {
            "attack_cards": [
                {"id": c.id, "name": c.name, "stage": c.stage.value, "detection": sorted(c.detection)}
                for c in self.attack_cards
            ],
            "procedures": [
                {"id": p.id, "name": p.name, "aliases": list(p.aliases)} for p in self.procedures
            ],
            "injects": [
                {
                    "id": i.id,
                    "name": i.name,
                    "effect": {
                        "kind": i.effect.kind.value,
                        "procedure": i.effect.procedure,
                        "turns": i.effect.turns,
                        "selector": i.effect.selector,
                        "extra_turns": i.effect.extra_turns,
                    },
                }
                for i in self.injects
            ],
        }


def _require_fields(entry: dict, required: set[str], optional: set[str], where: str) -> None:
    if not isinstance(entry, dict):
        raise CardDatabaseError(f"{where}: expected an object, got {type(entry).__name__}")
    missing = required - entry.keys()
    if missing:
        raise CardDatabaseError(f"{where}: missing fields {sorted(missing)}")
    unknown = entry.keys() - required - optional
    if unknown:
        raise CardDatabaseError(f"{where}: unknown fields {sorted(unknown)}")


def _parse_effect(raw: dict, where: str) -> InjectEffect:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise CardDatabaseError(f"{where}: effect must be an object with a 'kind'")
    try:
        kind = InjectKind(raw["kind"])
    except ValueError:
        raise CardDatabaseError(f"{where}: unknown effect kind {raw['kind']!r}") from None
    params = {k: v for k, v in raw.items() if k != "kind"}
    allowed: dict[InjectKind, set[str]] = {
        InjectKind.PROMOTE_TO_ESTABLISHED: {"procedure"},
        InjectKind.SILENCE_DEFENDER: {"turns", "selector"},
        InjectKind.EXTEND_LAST_COOLDOWN: {"extra_turns"},
    }
    expected = allowed.get(kind, set())
    if params.keys() != expected:
        raise CardDatabaseError(
            f"{where}: effect {kind.value!r} takes parameters {sorted(expected)}, got {sorted(params)}"
        )
    effect = InjectEffect(kind=kind, **params)
    if effect.turns is not None and (not isinstance(effect.turns, int) or effect.turns < 1):
        raise CardDatabaseError(f"{where}: silence turns must be an integer >= 1")
    if effect.extra_turns is not None and (not isinstance(effect.extra_turns, int) or effect.extra_turns < 1):
        raise CardDatabaseError(f"{where}: extra_turns must be an integer >= 1")
    if effect.selector is not None and effect.selector not in ("leader_or_random", "highest_skill"):
        raise CardDatabaseError(f"{where}: unknown silence selector {effect.selector!r}")
    return effect


def load_registry_dict(doc: dict, source_hash: str = "") -> CardRegistry:
    """Build and validate a CardRegistry from a parsed card-database document."""
    _require_fields(doc, {"version", "attack_cards", "procedures", "injects"}, set(), "document root")
    for key in ("attack_cards", "procedures", "injects"):
        if not isinstance(doc[key], list):
            raise CardDatabaseError(f"document root: {key!r} must be a list")

    procedures: list[ProcedureCard] = []
    seen_ids: set[str] = set()
    for raw in doc["procedures"]:
        where = f"procedure {raw.get('id', '<no id>')!r}" if isinstance(raw, dict) else "procedure entry"
        _require_fields(raw, {"id", "name"}, {"aliases"}, where)
        if raw["id"] in seen_ids:
            raise CardDatabaseError(f"{where}: duplicate id")
        seen_ids.add(raw["id"])
        procedures.append(
            ProcedureCard(id=raw["id"], name=raw["name"], aliases=tuple(raw.get("aliases", ())))
        )
    if len(procedures) != EXPECTED_PROCEDURE_COUNT:
        raise CardDatabaseError(
            f"expected {EXPECTED_PROCEDURE_COUNT} procedure cards, got {len(procedures)}"
        )
    procedure_ids = {p.id for p in procedures}

    attack_cards: list[AttackCard] = []
    names_by_stage: dict[AttackStage, set[str]] = {s: set() for s in AttackStage}
    for raw in doc["attack_cards"]:
        where = f"attack card {raw.get('id', '<no id>')!r}" if isinstance(raw, dict) else "attack card entry"
        _require_fields(raw, {"id", "name", "stage", "detection"}, set(), where)
        if raw["id"] in seen_ids:
            raise CardDatabaseError(f"{where}: duplicate id")
        seen_ids.add(raw["id"])
        try:
            stage = AttackStage(raw["stage"])
        except ValueError:
            raise CardDatabaseError(f"{where}: unknown stage {raw['stage']!r}") from None
        detection = raw["detection"]
        if not isinstance(detection, list) or not detection:
            raise CardDatabaseError(f"{where}: detection must be a non-empty list")
        if len(set(detection)) != len(detection):
            raise CardDatabaseError(f"{where}: duplicate entries in detection list")
        for proc_id in detection:
            if proc_id not in procedure_ids:
                raise CardDatabaseError(f"{where}: detection references unknown procedure {proc_id!r}")
        if raw["name"] in names_by_stage[stage]:
            raise CardDatabaseError(f"{where}: duplicate name {raw['name']!r} within stage {stage.value}")
        names_by_stage[stage].add(raw["name"])
        attack_cards.append(
            AttackCard(id=raw["id"], name=raw["name"], stage=stage, detection=frozenset(detection))
        )

    for stage, expected in EXPECTED_STAGE_COUNTS.items():
        actual = sum(1 for c in attack_cards if c.stage is stage)
        if actual != expected:
            raise CardDatabaseError(
                f"stage {stage.value}: expected {expected} attack cards, got {actual}"
            )

    covered = set().union(*(c.detection for c in attack_cards)) if attack_cards else set()
    useless = procedure_ids - covered
    if useless:
        raise CardDatabaseError(f"procedures detect nothing: {sorted(useless)}")

    injects: list[InjectCard] = []
    for raw in doc["injects"]:
        where = f"inject {raw.get('id', '<no id>')!r}" if isinstance(raw, dict) else "inject entry"
        _require_fields(raw, {"id", "name", "effect"}, set(), where)
        if raw["id"] in seen_ids:
            raise CardDatabaseError(f"{where}: duplicate id")
        seen_ids.add(raw["id"])
        effect = _parse_effect(raw["effect"], where)
        if effect.kind is InjectKind.PROMOTE_TO_ESTABLISHED and effect.procedure not in procedure_ids:
            raise CardDatabaseError(f"{where}: promotes unknown procedure {effect.procedure!r}")
        injects.append(InjectCard(id=raw["id"], name=raw["name"], effect=effect))
    if len(injects) != EXPECTED_INJECT_COUNT:
        raise CardDatabaseError(f"expected {EXPECTED_INJECT_COUNT} inject cards, got {len(injects)}")

    return CardRegistry(
        attack_cards=tuple(attack_cards),
        procedures=tuple(procedures),
        injects=tuple(injects),
        source_hash=source_hash,
        version=str(doc["version"]),
    )


def load_registry(path: str | Path) -> CardRegistry:
    """Load a card database from a JSON file."""
    data = Path(path).read_bytes()
    source_hash = hashlib.sha256(data).hexdigest()
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CardDatabaseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CardDatabaseError(f"{path}: document root must be an object")
    return load_registry_dict(doc, source_hash=source_hash)


def default_registry() -> CardRegistry:
    """Load the bundled default 52-card deck."""
    ref = resources.files("breachsim.data").joinpath("cards.json")
    data = ref.read_bytes()
    return load_registry_dict(json.loads(data), source_hash=hashlib.sha256(data).hexdigest())


def draw_attack_scenario(registry: CardRegistry, rng: random.Random) -> list[AttackCard]:
    """Draw one attack card per stage, uniformly within each stage, in stage order."""
    scenario = []
    for stage in AttackStage:
        pool = registry.attacks_in_stage(stage)
        scenario.append(pool[rng.randrange(len(pool))])
    return scenario


def initial_procedure_split(
    registry: CardRegistry, rng: random.Random, k: int = 4
) -> tuple[list[str], list[str]]:
    """Split procedures into k established and the rest, both in registry order."""
    ids = registry.procedure_ids
    if not 0 <= k <= len(ids):
        raise ValueError(f"k must be in 0..{len(ids)}, got {k}")
    chosen = set(rng.sample(range(len(ids)), k))
    established = [pid for i, pid in enumerate(ids) if i in chosen]
    other = [pid for i, pid in enumerate(ids) if i not in chosen]
    return established, other


def detection_matches(
    registry: CardRegistry,
    procedure_id: str,
    scenario: Sequence[AttackCard],
    revealed: Iterable[str],
) -> list[AttackCard]:
    """Unrevealed scenario cards detectable by the procedure, in stage order."""
    if not registry.has_procedure(procedure_id):
        raise KeyError(f"unknown procedure {procedure_id!r}")
    revealed_set = set(revealed)
    hits = [
        card
        for card in scenario
        if card.id not in revealed_set and procedure_id in card.detection
    ]
    return sorted(hits, key=lambda c: c.stage.order)
