"""Run one full game: captain protocol, defender chat, decisions, log emission.

The captain (code-driven by default, optionally LLM-backed for narrative) sets
the hidden scenario, announces each turn, adjudicates via the engine, and ends
with a JSON summary plus the END_GAME terminator. Defenders are bound to
scripted policies or to an LLM transport; the designated decider must emit a
``CHOOSE: <procedure>`` line each turn. Protocol breakdowns never raise: they
produce an Invalid outcome with a diagnostic reason.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import jsonschema

from .agents import (
    CHOICE_MARKER,
    DefenderView,
    ParsedChoice,
    Policy,
    PromptConfig,
    RoleSpec,
    SKILL_RANK,
    Skill,
    TeamStructure,
    TemplateKind,
    defender_view,
    parse_procedure_choice,
    render_system_message,
    scripted_choice,
)
from .cards import CardRegistry, InjectKind
from .engine import (
    GameState,
    ScriptedDice,
    Status,
    TurnRecord,
    available_procedures,
    new_game,
    new_game_from_setup,
    resolve_attempt,
)
from .gateway import ChatMessage, ChatRequest, Transport, complete

LOG_VERSION = "1"
END_GAME_KEYWORD = "END_GAME"


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    PENTEST = "pentest"
    INVALID = "invalid"


_STATUS_TO_OUTCOME = {
    Status.VICTORY: Outcome.SUCCESS,
    Status.LOSS: Outcome.FAILURE,
    Status.PENTEST: Outcome.PENTEST,
}


@dataclass(frozen=True)
class Budgets:
    per_turn_messages: int = 16
    per_game_messages: int = 240

    def __post_init__(self) -> None:
        if self.per_turn_messages < 1 or self.per_game_messages < 1:
            raise ValueError("budgets must be strictly positive")


@dataclass(frozen=True)
class ScriptedBinding:
    policy: Policy = Policy.GREEDY


@dataclass(frozen=True)
class FixedChoicesBinding:
    """Decider replays a fixed per-turn choice list (golden games)."""

    choices: tuple[str, ...]


@dataclass(frozen=True)
class LLMBinding:
    transport: Transport
    model: str = "gpt-4o"
    temperature: float = 1.0
    keep_last: int = 30


Binding = Union[ScriptedBinding, FixedChoicesBinding, LLMBinding]


@dataclass(frozen=True)
class TeamBindings:
    """Who plays each seat: the captain plus all five defenders."""

    defenders: Binding | dict[str, Binding]
    captain: Optional[Binding] = None  # None: scripted captain narration

    @classmethod
    def scripted(cls, policy: Policy = Policy.GREEDY) -> "TeamBindings":
        return cls(defenders=ScriptedBinding(policy))

    def for_defender(self, role_name: str) -> Binding:
        if isinstance(self.defenders, dict):
            try:
                return self.defenders[role_name]
            except KeyError:
                raise KeyError(f"no binding for defender {role_name!r}") from None
        return self.defenders


@dataclass(frozen=True)
class GameSetup:
    """Explicitly pinned setup for golden games and oracle experiments."""

    scenario_ids: tuple[str, ...]
    established_ids: tuple[str, ...]
    inject_order: tuple[str, ...]
    forced_dice: Optional[tuple[int, ...]] = None


@dataclass
class ChatSession:
    """Mutable per-game chat bookkeeping: transcript, budgets, silencing."""

    structure: TeamStructure
    budgets: Budgets
    rng: random.Random
    preamble: list[dict] = field(default_factory=list)
    turn_transcripts: list[list[dict]] = field(default_factory=list)
    epilogue: list[dict] = field(default_factory=list)
    messages_used: int = 0
    turn_messages_used: int = 0
    silenced: dict[str, int] = field(default_factory=dict)
    unavailable_strikes: int = 0
    captain_messages: list[str] = field(default_factory=list)
    budget_exhausted: bool = False

    def start_turn(self) -> None:
        self.turn_transcripts.append([])
        self.turn_messages_used = 0
        self.unavailable_strikes = 0
        for name in list(self.silenced):
            self.silenced[name] -= 1
            if self.silenced[name] <= 0:
                del self.silenced[name]

    def say(self, speaker: str, content: str, where: Optional[list[dict]] = None) -> None:
        if where is None:
            where = self.turn_transcripts[-1] if self.turn_transcripts else self.preamble
        where.append({"speaker": speaker, "content": content})
        self.messages_used += 1
        self.turn_messages_used += 1
        if speaker == "Incident Captain":
            self.captain_messages.append(content)
        if (
            self.messages_used > self.budgets.per_game_messages
            or self.turn_messages_used > self.budgets.per_turn_messages
        ):
            self.budget_exhausted = True

    def speaking_defenders(self) -> list[RoleSpec]:
        return [d for d in self.structure.defenders if d.role_name not in self.silenced]

    def silence(self, role_name: str, turns: int) -> None:
        self.silenced[role_name] = max(self.silenced.get(role_name, 0), turns)


def detect_invalid(session: ChatSession, status: Status) -> Optional[str]:
    """Reason the game must be scored Invalid, if any."""
    if status is Status.IN_PROGRESS:
        if any(END_GAME_KEYWORD in text for text in session.captain_messages):
            return "premature END_GAME"
        if session.budget_exhausted:
            return "no decision"
    if session.unavailable_strikes >= 3:
        return "protocol violation"
    return None


def pick_decider(structure: TeamStructure, session: ChatSession, turn: int) -> RoleSpec:
    """Leader for centralized teams, first expert for hybrid, rotating otherwise.
    A silenced decider's duty falls to the next eligible defender."""
    speakers = session.speaking_defenders() or list(structure.defenders)
    leader = structure.leader
    if leader is not None:
        return leader if leader in speakers else speakers[0]
    experts = [d for d in structure.defenders if d.skill is Skill.EXPERT]
    beginners = [d for d in structure.defenders if d.skill is Skill.BEGINNER]
    if experts and beginners:  # hybrid composition
        speaking_experts = [d for d in experts if d in speakers]
        return speaking_experts[0] if speaking_experts else speakers[0]
    return speakers[(turn - 1) % len(speakers)]


def _silence_target(
    structure: TeamStructure, session: ChatSession, selector: str
) -> RoleSpec:
    if selector == "leader_or_random":
        if structure.leader is not None:
            return structure.leader
        return structure.defenders[session.rng.randrange(len(structure.defenders))]
    return max(structure.defenders, key=lambda d: SKILL_RANK[d.skill])


def _procedure_names(registry: CardRegistry, ids: Sequence[str]) -> str:
    return ", ".join(registry.procedure(pid).name for pid in ids)


def _turn_announcement(state: GameState, registry: CardRegistry) -> str:
    lines = [f"Turn {state.turn} of 10."]
    cooling = [
        f"{registry.procedure(pid).name} ({turns} more turn{'s' if turns > 1 else ''})"
        for pid, turns in sorted(state.cooldowns.items())
        if turns > 0
    ]
    if cooling:
        lines.append("On cooldown: " + ", ".join(sorted(cooling)) + ".")
    if state.removed:
        lines.append("Removed from play: " + _procedure_names(registry, sorted(state.removed)) + ".")
    avail = available_procedures(state)
    established = [pid for pid in avail if pid in state.established]
    other = [pid for pid in avail if pid not in state.established]
    lines.append("Available Established (+3): " + (_procedure_names(registry, established) or "none") + ".")
    lines.append("Available Other (+0): " + (_procedure_names(registry, other) or "none") + ".")
    lines.append("Discuss and select one procedure for this turn.")
    return " ".join(lines)


def _result_announcement(state: GameState, record: TurnRecord) -> str:
    registry = state.registry
    total = record.natural + record.modifier
    parts = [
        f"{registry.procedure(record.procedure).name}: rolled {record.natural} "
        f"+{record.modifier} = {total}."
    ]
    if record.success and record.revealed:
        parts.append(f"Success! You have uncovered {registry.attack(record.revealed).name}.")
    elif record.success:
        parts.append("Success, but this procedure matches nothing still hidden.")
    else:
        parts.append("The attempt fails; nothing new is revealed.")
    if record.inject:
        parts.append(f"Inject event: {registry.inject(record.inject).name}.")
        if record.inject_effect and record.inject_effect.note:
            parts.append(record.inject_effect.note)
    return " ".join(parts)


def _view_text(view: DefenderView) -> str:
    lines = [f"Turn {view.turn}."]
    avail = [
        f"{name} ({'+3' if established else '+0'})" for _pid, name, established in view.available
    ]
    lines.append("Available procedures: " + ", ".join(avail) + ".")
    lines.append(
        "Revealed attack cards so far: " + (", ".join(view.revealed) or "none") + "."
    )
    for fact in view.history[-3:]:
        outcome = "success" if fact.success else "failure"
        extra = f", revealed {fact.revealed_name}" if fact.revealed_name else ""
        extra += f", inject {fact.inject_name}" if fact.inject_name else ""
        lines.append(
            f"Turn {fact.turn}: {fact.procedure_name} rolled {fact.natural}+{fact.modifier}, "
            f"{outcome}{extra}."
        )
    lines.extend(view.notices)
    return "\n".join(lines)


def _llm_defender_message(
    binding: LLMBinding,
    system_message: str,
    view: DefenderView,
    discussion: Sequence[dict],
    is_decider: bool,
) -> str:
    instruction = (
        f"You are the decider this turn. Weigh the discussion and end your message "
        f"with a line '{CHOICE_MARKER} <procedure name>' naming exactly one available procedure."
        if is_decider
        else "Contribute your analysis in two or three sentences. Do not make the final call."
    )
    discussion_text = "\n".join(f"{m['speaker']}: {m['content']}" for m in discussion)
    content = _view_text(view)
    if discussion_text:
        content += "\n\nDiscussion so far:\n" + discussion_text
    content += "\n\n" + instruction
    request = ChatRequest(
        model=binding.model,
        temperature=binding.temperature,
        messages=(
            ChatMessage(role="system", content=system_message),
            ChatMessage(role="user", content=content),
        ),
    )
    return complete(request, binding.transport, keep_last=binding.keep_last)


def _scripted_defender_message(defender: RoleSpec, view: DefenderView, index: int) -> str:
    suggestion = view.available[(view.turn + index) % len(view.available)][1]
    return f"From my seat as {defender.role_name}, {suggestion} looks informative this turn."


@dataclass
class GameLog:
    """Serialized setup + trajectory + summary; the unit of replay and aggregation."""

    structure: str
    seed: int
    k_established: int
    card_db_hash: str
    established: list[str]
    other: list[str]
    captain_private: dict
    preamble: list[dict]
    trajectory: list[dict]
    epilogue: list[dict]
    outcome: Outcome
    turns_played: int
    invalid_reason: Optional[str] = None
    forced_dice: Optional[list[int]] = None
    version: str = LOG_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "setup": {
                "structure": self.structure,
                "seed": self.seed,
                "k_established": self.k_established,
                "card_db_hash": self.card_db_hash,
                "established": self.established,
                "other": self.other,
                "forced_dice": self.forced_dice,
                "captain_private": self.captain_private,
            },
            "preamble": self.preamble,
            "trajectory": self.trajectory,
            "epilogue": self.epilogue,
            "summary": {
                "outcome": self.outcome.value,
                "turns_played": self.turns_played,
                "invalid_reason": self.invalid_reason,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GameLog":
        validate_game_log(raw)
        setup = raw["setup"]
        summary = raw["summary"]
        return cls(
            structure=setup["structure"],
            seed=setup["seed"],
            k_established=setup["k_established"],
            card_db_hash=setup["card_db_hash"],
            established=list(setup["established"]),
            other=list(setup["other"]),
            captain_private=setup["captain_private"],
            preamble=list(raw["preamble"]),
            trajectory=list(raw["trajectory"]),
            epilogue=list(raw["epilogue"]),
            outcome=Outcome(summary["outcome"]),
            turns_played=summary["turns_played"],
            invalid_reason=summary.get("invalid_reason"),
            forced_dice=setup.get("forced_dice"),
            version=raw["version"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "GameLog":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def redacted_dict(self) -> dict:
        """Log without the captain-private section, for sharing."""
        out = self.to_dict()
        out["setup"] = {k: v for k, v in out["setup"].items() if k != "captain_private"}
        return out

    def records(self) -> list[TurnRecord]:
        return [TurnRecord.from_dict(entry["record"]) for entry in self.trajectory]


_MESSAGE_SCHEMA = {
    "type": "object",
    "required": ["speaker", "content"],
    "additionalProperties": False,
    "properties": {"speaker": {"type": "string"}, "content": {"type": "string"}},
}

GAME_LOG_SCHEMA = {
    "type": "object",
    "required": ["version", "setup", "preamble", "trajectory", "epilogue", "summary"],
    "additionalProperties": False,
    "properties": {
        "version": {"type": "string"},
        "setup": {
            "type": "object",
            "required": [
                "structure",
                "seed",
                "k_established",
                "card_db_hash",
                "established",
                "other",
                "captain_private",
            ],
            "additionalProperties": False,
            "properties": {
                "structure": {"type": "string"},
                "seed": {"type": "integer"},
                "k_established": {"type": "integer"},
                "card_db_hash": {"type": "string"},
                "established": {"type": "array", "items": {"type": "string"}},
                "other": {"type": "array", "items": {"type": "string"}},
                "forced_dice": {
                    "type": ["array", "null"],
                    "items": {"type": "integer", "minimum": 1, "maximum": 20},
                },
                "captain_private": {
                    "type": "object",
                    "required": ["scenario", "inject_order"],
                    "additionalProperties": False,
                    "properties": {
                        "scenario": {"type": "array", "items": {"type": "string"}},
                        "inject_order": {"type": "array", "items": {"type": "string"}},
                    },
                },
            },
        },
        "preamble": {"type": "array", "items": _MESSAGE_SCHEMA},
        "trajectory": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["record", "transcript"],
                "additionalProperties": False,
                "properties": {
                    "record": {
                        "type": "object",
                        "required": ["turn", "procedure", "natural", "modifier", "success"],
                    },
                    "transcript": {"type": "array", "items": _MESSAGE_SCHEMA},
                },
            },
        },
        "epilogue": {"type": "array", "items": _MESSAGE_SCHEMA},
        "summary": {
            "type": "object",
            "required": ["outcome", "turns_played"],
            "additionalProperties": False,
            "properties": {
                "outcome": {"enum": [o.value for o in Outcome]},
                "turns_played": {"type": "integer", "minimum": 0},
                "invalid_reason": {"type": ["string", "null"]},
            },
        },
    },
}


def validate_game_log(raw: dict) -> None:
    """Raise jsonschema.ValidationError if the document is not a game log."""
    jsonschema.validate(raw, GAME_LOG_SCHEMA)


def run_game(
    registry: CardRegistry,
    structure: TeamStructure,
    bindings: TeamBindings,
    seed: int,
    budgets: Optional[Budgets] = None,
    k_established: int = 4,
    setup: Optional[GameSetup] = None,
    forced_dice: Optional[Sequence[int]] = None,
) -> GameLog:
    """Play one full game and return its log. Never raises for protocol
    breakdowns; those become Invalid outcomes with a reason."""
    budgets = budgets or Budgets()
    if setup is not None:
        if forced_dice is None:
            forced_dice = setup.forced_dice
        state = new_game_from_setup(
            registry,
            setup.scenario_ids,
            setup.established_ids,
            setup.inject_order,
            dice=forced_dice,
            seed=seed,
        )
    else:
        state = new_game(registry, seed, k_established)
        if forced_dice is not None:
            state.dice = ScriptedDice(forced_dice)
    inject_order = list(state.inject_pile)
    established_order = [pid for pid in registry.procedure_ids if pid in state.established]
    other_order = [pid for pid in registry.procedure_ids if pid not in state.established]

    session = ChatSession(
        structure=structure, budgets=budgets, rng=random.Random(seed ^ 0xC0FFEE)
    )
    policy_rng = random.Random(seed ^ 0x5EED)

    captain_prompt = PromptConfig(
        established_names=tuple(registry.procedure(p).name for p in established_order),
        other_names=tuple(registry.procedure(p).name for p in other_order),
        scenario_names=tuple(card.name for card in state.scenario),
    )
    defender_prompt = PromptConfig(
        established_names=captain_prompt.established_names,
        other_names=captain_prompt.other_names,
    )
    captain_system = render_system_message(TemplateKind.CAPTAIN, None, captain_prompt)
    defender_systems = {
        d.role_name: render_system_message(TemplateKind.DEFENDER, d, defender_prompt)
        for d in structure.defenders
    }

    def captain_say(content: str, where: Optional[list[dict]] = None) -> None:
        if isinstance(bindings.captain, LLMBinding):
            request = ChatRequest(
                model=bindings.captain.model,
                temperature=bindings.captain.temperature,
                messages=(
                    ChatMessage(role="system", content=captain_system),
                    ChatMessage(
                        role="user",
                        content="Announce the following to the Defenders in your own words, "
                        "without revealing hidden attack details:\n" + content,
                    ),
                ),
            )
            content = complete(
                request, bindings.captain.transport, keep_last=bindings.captain.keep_last
            )
        session.say("Incident Captain", content, where)

    invalid_reason: Optional[str] = None
    captain_say(
        "A breach is underway at your organization. Signs of an initial compromise "
        "have surfaced, and three further attack stages remain hidden. You have 10 "
        "turns to uncover all four attack cards.",
        where=session.preamble,
    )
    captain_say(
        "Established procedures (+3 to the roll): "
        + ", ".join(captain_prompt.established_names)
        + ". Other procedures (+0): "
        + ", ".join(captain_prompt.other_names)
        + ". Categories may shift during play.",
        where=session.preamble,
    )
    invalid_reason = detect_invalid(session, state.status)

    trajectory: list[dict] = []
    pending_notices: list[str] = []
    while state.status is Status.IN_PROGRESS and invalid_reason is None:
        session.start_turn()
        captain_say(_turn_announcement(state, registry))
        invalid_reason = detect_invalid(session, state.status)
        if invalid_reason:
            break

        view = defender_view(state, pending_notices)
        pending_notices = []
        decider = pick_decider(structure, session, state.turn)
        discussion = session.turn_transcripts[-1]

        for index, defender in enumerate(session.speaking_defenders()):
            if defender is decider:
                continue
            binding = bindings.for_defender(defender.role_name)
            if isinstance(binding, LLMBinding):
                text = _llm_defender_message(
                    binding, defender_systems[defender.role_name], view, discussion, False
                )
            else:
                text = _scripted_defender_message(defender, view, index)
            session.say(defender.role_name, text)
            if session.budget_exhausted:
                break

        chosen: Optional[str] = None
        no_marker_rounds = 0
        available_cards = [registry.procedure(pid) for pid in view.available_ids()]
        while chosen is None and not session.budget_exhausted:
            binding = bindings.for_defender(decider.role_name)
            if isinstance(binding, LLMBinding):
                text = _llm_defender_message(
                    binding, defender_systems[decider.role_name], view, discussion, True
                )
            else:
                if isinstance(binding, FixedChoicesBinding):
                    index = len(state.history)
                    if index >= len(binding.choices):
                        session.budget_exhausted = True
                        break
                    pick = binding.choices[index]
                else:
                    pick = scripted_choice(binding.policy, view, policy_rng, oracle_state=state)
                text = (
                    f"Weighing the discussion, I'll make the call. "
                    f"{CHOICE_MARKER} {registry.procedure(pick).name}"
                )
            session.say(decider.role_name, text)
            parsed: ParsedChoice = parse_procedure_choice(
                text, available_cards, registry.procedures
            )
            if parsed.procedure_id is not None:
                chosen = parsed.procedure_id
            elif parsed.reason == "unavailable":
                session.unavailable_strikes += 1
                if session.unavailable_strikes >= 3:
                    break
            else:
                no_marker_rounds += 1
                if no_marker_rounds >= 2:
                    session.budget_exhausted = True

        invalid_reason = detect_invalid(session, state.status)
        if invalid_reason or chosen is None:
            invalid_reason = invalid_reason or "no decision"
            break

        record = resolve_attempt(state, chosen)
        captain_say(_result_announcement(state, record))
        effect = record.inject_effect
        if effect is not None and effect.kind is InjectKind.SILENCE_DEFENDER:
            target = _silence_target(structure, session, str(effect.changes["silence_selector"]))
            turns = int(effect.changes["silence_turns"])  # type: ignore[arg-type]
            session.silence(target.role_name, turns)
            captain_say(f"{target.role_name} is unavailable for the next {turns} turn(s).")
        if effect is not None and "stage_hint" in effect.changes:
            pending_notices.append(str(effect.note))
        trajectory.append(
            {"record": record.to_dict(), "transcript": session.turn_transcripts[-1]}
        )
        invalid_reason = detect_invalid(session, state.status)

    outcome = (
        Outcome.INVALID if invalid_reason else _STATUS_TO_OUTCOME.get(state.status, Outcome.INVALID)
    )
    if outcome is Outcome.INVALID and invalid_reason is None:
        invalid_reason = "game did not reach a terminal status"

    summary_payload = {
        "outcome": outcome.value,
        "turns_played": state.turns_played,
        "revealed": [registry.attack(cid).name for cid in state.revealed],
    }
    if invalid_reason is None:
        closing = {
            Outcome.SUCCESS: "All four attack cards are revealed: the breach is uncovered!",
            Outcome.FAILURE: "Ten turns have passed and the breach went undetected.",
            Outcome.PENTEST: "Stand down: the whole incident was a scheduled penetration test.",
        }[outcome]
        session.say("Incident Captain", closing, where=session.epilogue)
        session.say(
            "Incident Captain",
            "Game summary: " + json.dumps(summary_payload, sort_keys=True),
            where=session.epilogue,
        )
        session.say("Incident Captain", END_GAME_KEYWORD, where=session.epilogue)
    else:
        session.say(
            "Incident Captain",
            f"The session is scored invalid: {invalid_reason}.",
            where=session.epilogue,
        )

    return GameLog(
        structure=structure.name,
        seed=seed,
        k_established=len(established_order),
        card_db_hash=registry.source_hash,
        established=established_order,
        other=other_order,
        captain_private={
            "scenario": state.scenario_ids(),
            "inject_order": inject_order,
        },
        preamble=session.preamble,
        trajectory=trajectory,
        epilogue=session.epilogue,
        outcome=outcome,
        turns_played=state.turns_played,
        invalid_reason=invalid_reason,
        forced_dice=list(forced_dice) if forced_dice is not None else None,
    )
