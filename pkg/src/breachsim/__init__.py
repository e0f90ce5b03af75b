"""Deterministic Backdoors & Breaches incident-response tabletop simulator."""

from .cards import (
    AttackCard,
    AttackStage,
    CardDatabaseError,
    CardRegistry,
    InjectCard,
    InjectEffect,
    InjectKind,
    ProcedureCard,
    default_registry,
    detection_matches,
    draw_attack_scenario,
    initial_procedure_split,
    load_registry,
)
from .engine import (
    GameState,
    RulesError,
    ScriptedDice,
    SeededDice,
    Status,
    TurnRecord,
    apply_inject,
    available_procedures,
    new_game,
    new_game_from_setup,
    resolve_attempt,
    success_probability,
)
from .agents import (
    DefenderView,
    Policy,
    RoleSpec,
    Skill,
    Specialty,
    TeamStructure,
    TemplateKind,
    defender_view,
    parse_procedure_choice,
    render_system_message,
    scripted_choice,
    team_structure,
)
from .orchestration import (
    Budgets,
    GameLog,
    GameSetup,
    LLMBinding,
    Outcome,
    ScriptedBinding,
    TeamBindings,
    detect_invalid,
    run_game,
    validate_game_log,
)
from .harness import (
    BatchSpec,
    OutcomeTable,
    RateStats,
    ReplayReport,
    estimate_rates,
    play_policy_game,
    replay_verify,
    run_batch,
    summarize,
    summarize_dir,
)

__version__ = "0.1.0"
