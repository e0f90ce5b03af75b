"""Command-line surface: validate-cards, play, batch, replay, stats.

Exit codes: 0 success, 1 validation or replay failure, 2 usage error.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

import click

from .agents import Policy, team_structure
from .cards import CardDatabaseError, CardRegistry, default_registry, load_registry
from .gateway import Cassette, CassetteMode, CassetteTransport, GatewayConfig, LiveTransport
from .harness import BatchSpec, replay_verify, run_batch, summarize_dir
from .orchestration import Budgets, GameLog, GameSetup, LLMBinding, TeamBindings, run_game


def _registry(cards: Optional[str]) -> CardRegistry:
    return load_registry(cards) if cards else default_registry()


@click.group()
def main() -> None:
    """Deterministic Backdoors & Breaches incident-response simulator."""


@main.command("validate-cards")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def validate_cards(file: str) -> None:
    """Validate a card database document."""
    try:
        registry = load_registry(file)
    except CardDatabaseError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"ok: {len(registry.attack_cards)} attack cards, "
        f"{len(registry.procedures)} procedures, {len(registry.injects)} injects "
        f"(sha256 {registry.source_hash[:12]})"
    )


@main.command("play")
@click.option("--structure", required=True, help="Team structure, e.g. homo-cen.")
@click.option("--seed", type=int, required=True)
@click.option("--policy", default="greedy", help="Scripted policy: random, greedy, oracle.")
@click.option("--llm", "llm_config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Gateway config file; binds all agents to the live endpoint.")
@click.option("--cassette", type=click.Path(dir_okay=False), default=None,
              help="Cassette file for LLM record/replay.")
@click.option("--cassette-mode", type=click.Choice(["record", "replay"]), default="replay")
@click.option("--forced-dice", default=None, help="Comma-separated d20 values for a scripted game.")
@click.option("--k-established", type=int, default=4)
@click.option("--cards", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the game log here.")
def play(
    structure: str,
    seed: int,
    policy: str,
    llm_config: Optional[str],
    cassette: Optional[str],
    cassette_mode: str,
    forced_dice: Optional[str],
    k_established: int,
    cards: Optional[str],
    out: Optional[str],
) -> None:
    """Play one game and print its summary."""
    registry = _registry(cards)
    try:
        team = team_structure(structure)
    except KeyError as exc:
        raise click.UsageError(str(exc)) from exc

    recording: Optional[Cassette] = None
    if llm_config is not None:
        config = GatewayConfig.from_file(llm_config)
        transport = LiveTransport(config)
        if cassette is not None:
            if cassette_mode == "replay":
                recording = Cassette.load(cassette, CassetteMode.REPLAY)
                transport = CassetteTransport(recording)
            else:
                recording = Cassette(mode=CassetteMode.RECORD)
                transport = CassetteTransport(recording, inner=transport)
        binding = LLMBinding(
            transport=transport, model=config.model, temperature=config.temperature,
            keep_last=config.keep_last_messages,
        )
        bindings = TeamBindings(defenders=binding, captain=binding)
    else:
        try:
            bindings = TeamBindings.scripted(Policy(policy))
        except ValueError as exc:
            raise click.UsageError(f"unknown policy {policy!r}") from exc

    dice: Optional[list[int]] = None
    if forced_dice is not None:
        try:
            dice = [int(v) for v in forced_dice.split(",") if v.strip()]
        except ValueError as exc:
            raise click.UsageError(f"bad --forced-dice value: {forced_dice!r}") from exc

    log = run_game(
        registry, team, bindings, seed, k_established=k_established, forced_dice=dice
    )
    if recording is not None and cassette is not None and cassette_mode == "record":
        recording.save(cassette)
    if out:
        log.save(out)
        click.echo(f"log written to {out}")
    click.echo(
        f"{log.structure} seed {log.seed}: {log.outcome.value} in {log.turns_played} turn(s)"
        + (f" ({log.invalid_reason})" if log.invalid_reason else "")
    )


@main.command("batch")
@click.option("--spec", "spec_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=1)
def batch(spec_file: str, out_dir: str, workers: int) -> None:
    """Run a batch of games from a spec file and print the outcome table."""
    try:
        spec = BatchSpec.from_file(spec_file)
    except (ValueError, KeyError, TypeError) as exc:
        raise click.UsageError(f"bad batch spec: {exc}") from exc
    registry = default_registry()
    table, logs = run_batch(registry, spec, out_dir=out_dir, workers=workers)
    click.echo(table.render())
    click.echo(f"{len(logs)} logs in {out_dir}")


@main.command("replay")
@click.argument("log_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--cards", type=click.Path(exists=True, dir_okay=False), default=None)
def replay(log_file: str, cards: Optional[str]) -> None:
    """Verify that a game log replays exactly."""
    registry = _registry(cards)
    try:
        log = GameLog.load(log_file)
    except Exception as exc:
        click.echo(f"cannot parse log: {exc}", err=True)
        sys.exit(1)
    report = replay_verify(log, registry)
    click.echo(report.message)
    if not report.passed:
        sys.exit(1)


@main.command("stats")
@click.option("--dir", "directory", required=True, type=click.Path(exists=True, file_okay=False))
def stats(directory: str) -> None:
    """Aggregate the logs in a directory into an outcome table."""
    table = summarize_dir(directory)
    click.echo(table.render())


if __name__ == "__main__":
    main()
