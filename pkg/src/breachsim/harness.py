"""Batch experiments, outcome aggregation, replay verification, rate estimates.

A batch plays N games per team structure at seeds base..base+N-1, writes one
log file per game (``<structure>_<seed>.json``), and folds the outcomes into a
Success/Failure/Pentest/Invalid table. Logs already on disk are skipped so
interrupted batches resume cleanly. Everything here is deterministic for
scripted bindings.
"""
from __future__ import annotations

import json
import math
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .agents import Policy, defender_view, scripted_choice, team_structure
from .cards import CardRegistry
from .engine import (
    GameState,
    Status,
    new_game,
    new_game_from_setup,
    resolve_attempt,
)
from .orchestration import (
    Budgets,
    GameLog,
    GameSetup,
    Outcome,
    TeamBindings,
    run_game,
)

OUTCOME_COLUMNS = ("Success", "Failure", "Pentest", "Invalid")
_OUTCOME_TO_COLUMN = {
    Outcome.SUCCESS: "Success",
    Outcome.FAILURE: "Failure",
    Outcome.PENTEST: "Pentest",
    Outcome.INVALID: "Invalid",
}


@dataclass
class OutcomeTable:
    """Per-structure outcome counts, rendered in the standard four-column layout."""

    counts: dict[str, Counter] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def add(self, structure: str, outcome: Outcome) -> None:
        self.counts.setdefault(structure, Counter())[_OUTCOME_TO_COLUMN[outcome]] += 1

    def add_error(self, message: str) -> None:
        self.errors.append(message)

    def total(self, structure: str) -> int:
        return sum(self.counts.get(structure, Counter()).values())

    def row(self, structure: str) -> tuple[int, int, int, int]:
        c = self.counts.get(structure, Counter())
        return tuple(c.get(col, 0) for col in OUTCOME_COLUMNS)  # type: ignore[return-value]

    def render(self) -> str:
        name_width = max([len("Team"), *(len(s) for s in self.counts)], default=4)
        header = f"{'Team':<{name_width}}  " + "  ".join(f"{c:>7}" for c in OUTCOME_COLUMNS)
        lines = [header, "-" * len(header)]
        for structure in sorted(self.counts):
            cells = "  ".join(f"{v:>7}" for v in self.row(structure))
            lines.append(f"{structure:<{name_width}}  {cells}")
        if self.errors:
            lines.append("")
            lines.append("Errors (excluded from counts):")
            lines.extend(f"  {e}" for e in self.errors)
        return "\n".join(lines)


@dataclass(frozen=True)
class BatchSpec:
    """What to run: which structures, how many seeded games each, and who plays."""

    structures: tuple[str, ...]
    games_per_structure: int = 20
    base_seed: int = 0
    policy: str = "greedy"
    k_established: int = 4
    per_turn_messages: int = 16
    per_game_messages: int = 240

    def __post_init__(self) -> None:
        if self.games_per_structure < 1:
            raise ValueError("games_per_structure must be >= 1")
        for name in self.structures:
            team_structure(name)  # validates the name
        Policy(self.policy)

    @classmethod
    def from_file(cls, path: str | Path) -> "BatchSpec":
        raw = json.loads(Path(path).read_text())
        raw["structures"] = tuple(raw["structures"])
        return cls(**raw)

    def budgets(self) -> Budgets:
        return Budgets(self.per_turn_messages, self.per_game_messages)


def _run_one(
    registry: CardRegistry, spec: BatchSpec, structure_name: str, seed: int
) -> GameLog:
    structure = team_structure(structure_name)
    bindings = TeamBindings.scripted(Policy(spec.policy))
    try:
        return run_game(
            registry,
            structure,
            bindings,
            seed,
            budgets=spec.budgets(),
            k_established=spec.k_established,
        )
    except Exception as exc:  # infrastructure crash: score the game, keep the batch
        return GameLog(
            structure=structure.name,
            seed=seed,
            k_established=spec.k_established,
            card_db_hash=registry.source_hash,
            established=[],
            other=[],
            captain_private={"scenario": [], "inject_order": []},
            preamble=[],
            trajectory=[],
            epilogue=[],
            outcome=Outcome.INVALID,
            turns_played=0,
            invalid_reason=f"infrastructure failure: {exc}",
        )


def run_batch(
    registry: CardRegistry,
    spec: BatchSpec,
    out_dir: Optional[str | Path] = None,
    workers: int = 1,
) -> tuple[OutcomeTable, list[GameLog]]:
    """Play the whole batch; returns the aggregated table and all logs in
    (structure, seed) order. With ``out_dir``, each log is flushed to
    ``<structure>_<seed>.json`` as soon as its game finishes, and existing
    files are reused instead of replayed."""
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    jobs: list[tuple[str, int]] = [
        (team_structure(name).name, spec.base_seed + i)
        for name in spec.structures
        for i in range(spec.games_per_structure)
    ]

    def play(job: tuple[str, int]) -> GameLog:
        structure_name, seed = job
        if out_path is not None:
            log_file = out_path / f"{structure_name}_{seed}.json"
            if log_file.exists():
                return GameLog.load(log_file)
        log = _run_one(registry, spec, structure_name, seed)
        if out_path is not None:
            log.save(out_path / f"{structure_name}_{seed}.json")
        return log

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(play, jobs))
    else:
        logs = [play(job) for job in jobs]

    logs.sort(key=lambda log: (log.structure, log.seed))
    table = summarize(logs)
    return table, logs


def summarize(logs: Sequence[GameLog]) -> OutcomeTable:
    table = OutcomeTable()
    for log in logs:
        table.add(log.structure, log.outcome)
    return table


def summarize_dir(directory: str | Path) -> OutcomeTable:
    """Aggregate every ``*.json`` log in a directory; malformed files land in
    the errors footer instead of the counts."""
    table = OutcomeTable()
    for path in sorted(Path(directory).glob("*.json")):
        try:
            log = GameLog.load(path)
        except Exception as exc:
            table.add_error(f"{path.name}: {exc}")
            continue
        table.add(log.structure, log.outcome)
    return table


@dataclass(frozen=True)
class ReplayReport:
    passed: bool
    turns_checked: int
    message: str
    diverging_turn: Optional[int] = None
    diverging_field: Optional[str] = None


_RECORD_FIELDS = ("procedure", "natural", "modifier", "success", "revealed", "inject", "inject_cause")


def replay_verify(log: GameLog, registry: CardRegistry) -> ReplayReport:
    """Re-run the engine on the log's setup and recorded choices; pass iff the
    regenerated turn records equal the recorded ones field by field."""
    if log.card_db_hash and registry.source_hash and log.card_db_hash != registry.source_hash:
        return ReplayReport(
            False, 0, "card database hash differs from the one the log was played with"
        )
    private = log.captain_private
    if log.forced_dice is not None:
        state = new_game_from_setup(
            registry,
            private["scenario"],
            log.established,
            private["inject_order"],
            dice=log.forced_dice,
            seed=log.seed,
        )
    else:
        # Seeded game: re-deriving from the seed reproduces the exact random
        # stream (scenario, split, pile, dice). Cross-check the recorded setup.
        state = new_game(registry, log.seed, log.k_established)
        if state.scenario_ids() != list(private["scenario"]):
            return ReplayReport(False, 0, "recorded scenario does not match the seed",
                                diverging_field="scenario")
        if sorted(state.established) != sorted(log.established):
            return ReplayReport(False, 0, "recorded established split does not match the seed",
                                diverging_field="established")
        if state.inject_pile != list(private["inject_order"]):
            return ReplayReport(False, 0, "recorded inject order does not match the seed",
                                diverging_field="inject_order")

    recorded = [entry["record"] for entry in log.trajectory]
    for i, rec in enumerate(recorded):
        if state.status is not Status.IN_PROGRESS:
            return ReplayReport(
                False, i, f"game ended early on replay at turn {rec['turn']}",
                diverging_turn=rec["turn"], diverging_field="status",
            )
        regenerated = resolve_attempt(state, rec["procedure"]).to_dict()
        for field_name in _RECORD_FIELDS:
            if regenerated.get(field_name) != rec.get(field_name):
                return ReplayReport(
                    False,
                    i,
                    f"turn {rec['turn']}: field {field_name!r} diverges "
                    f"(recorded {rec.get(field_name)!r}, replayed {regenerated.get(field_name)!r})",
                    diverging_turn=rec["turn"],
                    diverging_field=field_name,
                )

    expected_outcome = {
        Status.VICTORY: Outcome.SUCCESS,
        Status.LOSS: Outcome.FAILURE,
        Status.PENTEST: Outcome.PENTEST,
    }.get(state.status)
    if log.outcome is not Outcome.INVALID and expected_outcome is not log.outcome:
        return ReplayReport(
            False,
            len(recorded),
            f"summary outcome {log.outcome.value!r} does not match replayed "
            f"status {state.status.value!r}",
            diverging_field="outcome",
        )
    return ReplayReport(True, len(recorded), f"replay ok: {len(recorded)} turns verified")


def play_policy_game(
    registry: CardRegistry,
    policy: Policy,
    seed: int,
    k_established: int = 4,
    setup: Optional[GameSetup] = None,
) -> GameState:
    """Engine-only game under a scripted policy (no chat layer)."""
    if setup is not None:
        state = new_game_from_setup(
            registry,
            setup.scenario_ids,
            setup.established_ids,
            setup.inject_order,
            dice=setup.forced_dice,
            seed=seed,
        )
    else:
        state = new_game(registry, seed, k_established)
    policy_rng = random.Random(seed ^ 0x5EED)
    while state.status is Status.IN_PROGRESS:
        view = defender_view(state)
        choice = scripted_choice(policy, view, policy_rng, oracle_state=state)
        resolve_attempt(state, choice)
    return state


@dataclass(frozen=True)
class RateStats:
    """Empirical per-attempt and per-game statistics with standard errors."""

    games: int
    attempts: int
    established_attempts: int
    established_success_rate: float
    established_success_se: float
    other_attempts: int
    other_success_rate: float
    other_success_se: float
    natural_edge_rate: float  # frequency of natural 1 or 20
    natural_edge_se: float
    win_rate: float
    win_rate_se: float
    mean_turns: float


def _rate(successes: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return math.nan, math.nan
    p = successes / trials
    return p, math.sqrt(p * (1 - p) / trials)


def estimate_rates(
    registry: CardRegistry,
    policy: Policy,
    n_games: int,
    seed: int = 0,
    k_established: int = 4,
    setup: Optional[GameSetup] = None,
) -> RateStats:
    """Monte Carlo estimates over ``n_games`` seeded games (seeds seed..seed+n-1)."""
    if n_games < 1:
        raise ValueError("n_games must be >= 1")
    attempts = est_attempts = est_success = other_attempts = other_success = 0
    edges = wins = total_turns = 0
    for i in range(n_games):
        state = play_policy_game(registry, policy, seed + i, k_established, setup)
        for record in state.history:
            attempts += 1
            if record.modifier > 0:
                est_attempts += 1
                est_success += record.success
            else:
                other_attempts += 1
                other_success += record.success
            edges += record.natural in (1, 20)
        wins += state.status is Status.VICTORY
        total_turns += state.turns_played
    est_rate, est_se = _rate(est_success, est_attempts)
    other_rate, other_se = _rate(other_success, other_attempts)
    edge_rate, edge_se = _rate(edges, attempts)
    win_rate, win_se = _rate(wins, n_games)
    return RateStats(
        games=n_games,
        attempts=attempts,
        established_attempts=est_attempts,
        established_success_rate=est_rate,
        established_success_se=est_se,
        other_attempts=other_attempts,
        other_success_rate=other_rate,
        other_success_se=other_se,
        natural_edge_rate=edge_rate,
        natural_edge_se=edge_se,
        win_rate=win_rate,
        win_rate_se=win_se,
        mean_turns=total_turns / n_games,
    )
