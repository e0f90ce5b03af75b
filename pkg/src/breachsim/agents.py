"""Defender roles, team structures, system-message templates, scripted policies.

The six shipped team structures all field five defenders and differ in
leadership (centralized / decentralized / hybrid) and expertise mix
(homogeneous / heterogeneous). Scripted policies stand in for LLM players in
tests and baselines; the decision-extraction protocol is a literal
``CHOOSE: <procedure name>`` marker in the chat.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .cards import CardRegistry, ProcedureCard
from .engine import GameState, available_procedures, detection_matches

CHOICE_MARKER = "CHOOSE:"


class Skill(Enum):
    LEADER = "leader"
    EXPERT = "expert"
    BEGINNER = "beginner"
    MEMBER = "member"


# Relative seniority, used by the "most skilled handler" inject selector.
SKILL_RANK = {Skill.EXPERT: 3, Skill.LEADER: 2, Skill.MEMBER: 1, Skill.BEGINNER: 0}


class Specialty(Enum):
    ENDPOINT = "endpoint"
    NETWORK_TRAFFIC = "network_traffic"
    LOG_BEHAVIOR = "log_behavior"
    DECEPTION_CONTAINMENT = "deception_containment"
    INCIDENT_RESPONSE = "incident_response"
    GENERALIST = "generalist"


# Editable default responsibility text per role; adjust to taste for new roles.
ROLE_RESPONSIBILITIES: dict[str, str] = {
    "team_leader": (
        "Coordinate the team's discussion, weigh everyone's input, and make the "
        "final call on which procedure to run each turn."
    ),
    "team_member": (
        "Bring a generalist's perspective: consider all investigative angles and "
        "support whichever procedure best fits the evidence so far."
    ),
    "endpoint_security_expert": (
        "Advocate for host-level investigation: endpoint telemetry, process "
        "behavior, and anti-malware findings are your home turf."
    ),
    "network_traffic_expert": (
        "Watch the wire: exfiltration channels, command-and-control beacons, and "
        "anomalous flows are where your analysis shines."
    ),
    "log_behavior_expert": (
        "Mine the logs: authentication trails, SIEM correlation, and user "
        "behavior analytics are your strongest tools."
    ),
    "deception_containment_expert": (
        "Think in traps and boundaries: honeypots, isolation, and containment "
        "moves that box the attacker in."
    ),
    "incident_response_expert": (
        "Keep the response disciplined: triage, prioritization, and crisis "
        "management so the team never loses the thread."
    ),
    "generalist_expert": (
        "Use your broad experience to steer the investigation and mentor the "
        "less experienced handlers on the team."
    ),
    "beginner": (
        "You are new to incident response. Ask questions, learn from the "
        "experienced handlers, and contribute observations where you can."
    ),
}


@dataclass(frozen=True)
class RoleSpec:
    role_name: str
    responsibilities: str
    skill: Skill
    specialty: Optional[Specialty] = None


@dataclass(frozen=True)
class TeamStructure:
    name: str
    defenders: tuple[RoleSpec, ...]

    def __post_init__(self) -> None:
        if len(self.defenders) != 5:
            raise ValueError(f"team {self.name!r} must field exactly 5 defenders")
        leaders = [d for d in self.defenders if d.skill is Skill.LEADER]
        if len(leaders) > 1:
            raise ValueError(f"team {self.name!r} has more than one leader")

    @property
    def leader(self) -> Optional[RoleSpec]:
        for d in self.defenders:
            if d.skill is Skill.LEADER:
                return d
        return None


def _role(name: str, key: str, skill: Skill, specialty: Specialty) -> RoleSpec:
    return RoleSpec(
        role_name=name,
        responsibilities=ROLE_RESPONSIBILITIES[key],
        skill=skill,
        specialty=specialty,
    )


def _leader() -> RoleSpec:
    return _role("Team Leader", "team_leader", Skill.LEADER, Specialty.GENERALIST)


def _member(i: int) -> RoleSpec:
    return _role(f"Team Member {i}", "team_member", Skill.MEMBER, Specialty.GENERALIST)


def _beginner(i: int) -> RoleSpec:
    return _role(f"Beginner Analyst {i}", "beginner", Skill.BEGINNER, Specialty.GENERALIST)


def _specialist(skill: Skill, specialty: Specialty) -> RoleSpec:
    names = {
        Specialty.ENDPOINT: ("Endpoint Security Expert", "endpoint_security_expert"),
        Specialty.NETWORK_TRAFFIC: ("Network Traffic Analysis Expert", "network_traffic_expert"),
        Specialty.LOG_BEHAVIOR: ("Log and Behavioral Analysis Expert", "log_behavior_expert"),
        Specialty.DECEPTION_CONTAINMENT: ("Deception and Containment Expert", "deception_containment_expert"),
        Specialty.INCIDENT_RESPONSE: ("Incident Response Expert", "incident_response_expert"),
    }
    name, key = names[specialty]
    return _role(name, key, skill, specialty)


def _generalist_expert(i: int) -> RoleSpec:
    return _role(f"Senior Analyst {i}", "generalist_expert", Skill.EXPERT, Specialty.GENERALIST)


def homogeneous_centralized() -> TeamStructure:
    return TeamStructure("Homo-Cen", (_leader(), _member(1), _member(2), _member(3), _member(4)))


def heterogeneous_centralized() -> TeamStructure:
    return TeamStructure(
        "Hetero-Cen",
        (
            _leader(),
            _specialist(Skill.EXPERT, Specialty.ENDPOINT),
            _specialist(Skill.EXPERT, Specialty.NETWORK_TRAFFIC),
            _specialist(Skill.EXPERT, Specialty.LOG_BEHAVIOR),
            _specialist(Skill.EXPERT, Specialty.DECEPTION_CONTAINMENT),
        ),
    )


def homogeneous_decentralized() -> TeamStructure:
    return TeamStructure("Homo-Dec", tuple(_member(i) for i in range(1, 6)))


def heterogeneous_decentralized() -> TeamStructure:
    return TeamStructure(
        "Hetero-Dec",
        (
            _specialist(Skill.EXPERT, Specialty.ENDPOINT),
            _specialist(Skill.EXPERT, Specialty.NETWORK_TRAFFIC),
            _specialist(Skill.EXPERT, Specialty.LOG_BEHAVIOR),
            _specialist(Skill.EXPERT, Specialty.DECEPTION_CONTAINMENT),
            _specialist(Skill.EXPERT, Specialty.INCIDENT_RESPONSE),
        ),
    )


def homogeneous_hybrid() -> TeamStructure:
    return TeamStructure(
        "Homo-Hyb",
        (
            _generalist_expert(1),
            _generalist_expert(2),
            _generalist_expert(3),
            _beginner(1),
            _beginner(2),
        ),
    )


def heterogeneous_hybrid() -> TeamStructure:
    return TeamStructure(
        "Hetero-Hyb",
        (
            _specialist(Skill.EXPERT, Specialty.ENDPOINT),
            _specialist(Skill.EXPERT, Specialty.NETWORK_TRAFFIC),
            _specialist(Skill.EXPERT, Specialty.LOG_BEHAVIOR),
            _beginner(1),
            _beginner(2),
        ),
    )


STRUCTURES = {
    "homo-cen": homogeneous_centralized,
    "hetero-cen": heterogeneous_centralized,
    "homo-dec": homogeneous_decentralized,
    "hetero-dec": heterogeneous_decentralized,
    "homo-hyb": homogeneous_hybrid,
    "hetero-hyb": heterogeneous_hybrid,
}


def team_structure(name: str) -> TeamStructure:
    key = name.strip().lower()
    if key not in STRUCTURES:
        raise KeyError(f"unknown team structure {name!r}; known: {sorted(STRUCTURES)}")
    return STRUCTURES[key]()


@dataclass(frozen=True)
class PublicTurnFact:
    """One past turn's outcome as the defenders saw it (no hidden information)."""

    turn: int
    procedure_name: str
    natural: int
    modifier: int
    success: bool
    revealed_name: Optional[str]
    inject_name: Optional[str]


@dataclass(frozen=True)
class DefenderView:
    """Everything a defender may see. Never includes unrevealed attack cards."""

    turn: int
    available: tuple[tuple[str, str, bool], ...]  # (procedure id, name, established)
    revealed: tuple[str, ...]  # attack card display names
    history: tuple[PublicTurnFact, ...]
    notices: tuple[str, ...] = ()

    def available_ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _, _ in self.available)


def defender_view(state: GameState, notices: Sequence[str] = ()) -> DefenderView:
    """Project the public slice of a game state for the defenders."""
    avail = available_procedures(state)
    registry = state.registry
    history = tuple(
        PublicTurnFact(
            turn=r.turn,
            procedure_name=registry.procedure(r.procedure).name,
            natural=r.natural,
            modifier=r.modifier,
            success=r.success,
            revealed_name=registry.attack(r.revealed).name if r.revealed else None,
            inject_name=registry.inject(r.inject).name if r.inject else None,
        )
        for r in state.history
    )
    return DefenderView(
        turn=state.turn,
        available=tuple(
            (pid, registry.procedure(pid).name, pid in state.established) for pid in avail
        ),
        revealed=tuple(registry.attack(cid).name for cid in state.revealed),
        history=history,
        notices=tuple(notices),
    )


CAPTAIN_TEMPLATE = """\
Welcome to Backdoors & Breaches! You are the Incident Captain, running a
simulated cyber breach for a team of Defenders. You control the game: you set
the hidden attack scenario, narrate events, adjudicate dice rolls, track
cooldowns and modifiers, and introduce inject events when the rules call for
them. Keep the game within the 10-turn limit, answer the Defenders' questions,
and give hints without handing over answers.

[Sequence of Game]

Stay in character and keep the game moving. Do not reveal any hidden attack
details unless the Defenders' actions specifically uncover them.

The hidden attack cards for this game scenario are as follows:

[Incident Cards]

The available procedure cards are divided into Established and Other
Procedures:

[Procedure Cards]
"""

DEFENDER_TEMPLATE = """\
Welcome to Backdoors & Breaches! You are a [Role Name]. Defenders work
together to uncover the four hidden attack cards, one per breach stage
(Initial Compromise, Pivot and Escalate, C2 and Exfiltration, Persistence),
within 10 turns.

Game mechanics: each turn the team selects one Procedure card and rolls a
20-sided dice. Established procedures add +3 to the roll; Other procedures add
nothing. A final roll of 11 or higher succeeds, and a success reveals a hidden
attack card if the chosen procedure is one of its detection methods. Failures
build a consecutive-failure count, and three in a row (or a natural 1 or 20)
trigger an Inject event. Every used procedure goes on a 3-turn cooldown.

Your responsibilities as a [Role Name]:
[Role Responsibilities]

The available procedure cards are divided into Established and Other
Procedures:

[Procedure Cards]

Victory condition: the Defenders win by uncovering all four attack cards
within 10 turns; otherwise the breach goes undetected and the game is lost.
Collaborate, share your reasoning, and help the team pick the best procedure
each turn.
"""

_PLACEHOLDER_RE = re.compile(
    r"\[(Role Name|Role Responsibilities|Sequence of Game|Incident Cards|Procedure Cards)\]"
)

SEQUENCE_OF_GAME = """\
Sequence of game: (1) set the scenario by selecting one hidden attack card per
stage and narrating the initial compromise without naming any card; (2)
introduce the procedure cards and which are Established (+3) vs Other (+0);
(3) each turn, announce the turn number, cooldowns, and any category changes,
then ask the Defenders to pick one procedure; (4) roll a d20, apply the
modifier, and succeed on 11 or higher; (5) on success reveal one matching
hidden card (if any) and reset the failure count, on failure increase it; (6)
draw an inject on a natural 1 or 20 or after three consecutive failures, and
apply its effect; (7) put the used procedure on a 3-turn cooldown and track
the turn count; (8) end with a victory or loss announcement, a JSON game
summary, and the keyword END_GAME."""


@dataclass(frozen=True)
class PromptConfig:
    """Everything the templates need: card names and the game sequence text."""

    established_names: tuple[str, ...]
    other_names: tuple[str, ...]
    scenario_names: tuple[str, ...] = ()  # captain only
    sequence_text: str = SEQUENCE_OF_GAME


class TemplateKind(Enum):
    CAPTAIN = "captain"
    DEFENDER = "defender"


def render_system_message(
    kind: TemplateKind, role: Optional[RoleSpec], config: PromptConfig
) -> str:
    """Fill a system-message template. Captain text embeds the hidden cards;
    defender text never does."""
    procedures_block = "Established (+3): " + ", ".join(config.established_names)
    procedures_block += "\nOther (+0): " + ", ".join(config.other_names)
    if kind is TemplateKind.CAPTAIN:
        if not config.scenario_names:
            raise ValueError("captain template requires the hidden scenario")
        incident_block = "\n".join(f"- {name}" for name in config.scenario_names)
        text = CAPTAIN_TEMPLATE
        replacements = {
            "Sequence of Game": config.sequence_text,
            "Incident Cards": incident_block,
            "Procedure Cards": procedures_block,
        }
    else:
        if role is None:
            raise ValueError("defender template requires a role")
        text = DEFENDER_TEMPLATE
        replacements = {
            "Role Name": role.role_name,
            "Role Responsibilities": role.responsibilities,
            "Procedure Cards": procedures_block,
        }
    for key, value in replacements.items():
        text = text.replace(f"[{key}]", value)
    leftover = _PLACEHOLDER_RE.search(text)
    if leftover:
        raise ValueError(f"unresolved placeholder {leftover.group(0)}")
    return text


class Policy(Enum):
    RANDOM_VALID = "random"
    GREEDY = "greedy"
    ORACLE = "oracle"


def scripted_choice(
    policy: Policy,
    view: DefenderView,
    rng: random.Random,
    oracle_state: Optional[GameState] = None,
) -> str:
    """Pick a procedure id under a scripted policy.

    RandomValid: uniform over available. Greedy: first available Established
    procedure in registry order, else first available. Oracle: needs the full
    game state; picks the available procedure detecting the earliest-stage
    unrevealed card, falling back to Greedy when nothing matches.
    """
    available = view.available_ids()
    if not available:
        raise RuntimeError("no available procedure: stalemate")
    if policy is Policy.RANDOM_VALID:
        return available[rng.randrange(len(available))]
    if policy is Policy.GREEDY:
        for pid, _name, established in view.available:
            if established:
                return pid
        return available[0]
    if oracle_state is None:
        raise ValueError("oracle policy requires the full game state")
    best: Optional[tuple[int, int, str]] = None
    for index, pid in enumerate(available):
        matches = detection_matches(
            oracle_state.registry, pid, oracle_state.scenario, oracle_state.revealed
        )
        if matches:
            key = (matches[0].stage.order, index, pid)
            if best is None or key < best:
                best = key
    if best is not None:
        return best[2]
    return scripted_choice(Policy.GREEDY, view, rng)


@dataclass(frozen=True)
class ParsedChoice:
    procedure_id: Optional[str]
    reason: Optional[str] = None  # set when no decision was extracted


def parse_procedure_choice(
    message: str,
    available: Sequence[ProcedureCard],
    all_procedures: Sequence[ProcedureCard] = (),
) -> ParsedChoice:
    """Extract the team's decision from free-form chat.

    A decision is exactly one available procedure's name (case-insensitive,
    whole phrase) after the last ``CHOOSE:`` marker. Naming an unavailable
    procedure or several procedures yields no decision, with a reason.
    """
    marker_at = message.upper().rfind(CHOICE_MARKER)
    if marker_at < 0:
        return ParsedChoice(None, "no decision marker")
    tail = message[marker_at + len(CHOICE_MARKER):]

    def names_in_tail(cards: Sequence[ProcedureCard]) -> list[ProcedureCard]:
        hits = []
        for card in cards:
            for name in (card.name, *card.aliases):
                if re.search(rf"(?<!\w){re.escape(name)}(?!\w)", tail, re.IGNORECASE):
                    hits.append(card)
                    break
        return hits

    hits = names_in_tail(available)
    if len(hits) == 1:
        return ParsedChoice(hits[0].id)
    if len(hits) > 1:
        return ParsedChoice(None, f"ambiguous: {', '.join(c.name for c in hits)}")
    available_ids = {c.id for c in available}
    unavailable = [c for c in all_procedures if c.id not in available_ids]
    if names_in_tail(unavailable):
        return ParsedChoice(None, "unavailable")
    return ParsedChoice(None, "no procedure named")
