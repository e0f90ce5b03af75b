import json

import pytest
from click.testing import CliRunner

from breachsim.cli import main

from conftest import DATA_DIR


@pytest.fixture()
def runner():
    return CliRunner()


def cards_path():
    from pathlib import Path

    return Path(__file__).parents[1] / "src" / "breachsim" / "data" / "cards.json"


def test_validate_cards_ok(runner):
    result = runner.invoke(main, ["validate-cards", str(cards_path())])
    assert result.exit_code == 0
    assert "32 attack cards" in result.output


def test_validate_cards_bad_file(runner, tmp_path):
    doc = json.loads(cards_path().read_text())
    doc["procedures"].pop()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    result = runner.invoke(main, ["validate-cards", str(bad)])
    assert result.exit_code == 1
    assert "invalid" in result.output


def test_validate_cards_missing_file_is_usage_error(runner):
    result = runner.invoke(main, ["validate-cards", "no/such/file.json"])
    assert result.exit_code == 2


def test_play_scripted(runner, tmp_path):
    out = tmp_path / "game.json"
    result = runner.invoke(
        main,
        ["play", "--structure", "homo-cen", "--seed", "11", "--policy", "greedy",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    assert out.exists()
    assert "Homo-Cen seed 11" in result.output


def test_play_unknown_structure_is_usage_error(runner):
    result = runner.invoke(main, ["play", "--structure", "nope", "--seed", "1"])
    assert result.exit_code == 2


def test_play_unknown_policy_is_usage_error(runner):
    result = runner.invoke(
        main, ["play", "--structure", "homo-cen", "--seed", "1", "--policy", "psychic"]
    )
    assert result.exit_code == 2


def test_play_forced_dice(runner, tmp_path):
    out = tmp_path / "forced.json"
    result = runner.invoke(
        main,
        ["play", "--structure", "homo-cen", "--seed", "0", "--policy", "oracle",
         "--forced-dice", "15,15,15,15,15,15,15,15,15,15", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    raw = json.loads(out.read_text())
    assert raw["setup"]["forced_dice"][0] == 15

    replay = runner.invoke(main, ["replay", str(out)])
    assert replay.exit_code == 0, replay.output


def test_batch_replay_stats_pipeline(runner, tmp_path):
    spec = {
        "structures": ["homo-cen", "homo-dec"],
        "games_per_structure": 3,
        "base_seed": 40,
        "policy": "random",
    }
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps(spec))
    out_dir = tmp_path / "logs"

    result = runner.invoke(main, ["batch", "--spec", str(spec_file), "--out", str(out_dir)])
    assert result.exit_code == 0, result.output
    assert "Homo-Cen" in result.output and "Homo-Dec" in result.output

    logs = sorted(out_dir.glob("*.json"))
    assert len(logs) == 6
    for log in logs:
        replay = runner.invoke(main, ["replay", str(log)])
        assert replay.exit_code == 0, replay.output

    stats = runner.invoke(main, ["stats", "--dir", str(out_dir)])
    assert stats.exit_code == 0
    assert "Success" in stats.output


def test_replay_golden_log(runner):
    result = runner.invoke(main, ["replay", str(DATA_DIR / "golden_game.json")])
    assert result.exit_code == 0
    assert "6 turns" in result.output


def test_replay_tampered_log_fails(runner, tmp_path):
    raw = json.loads((DATA_DIR / "golden_game.json").read_text())
    raw["trajectory"][1]["record"]["natural"] = 3
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(raw))
    result = runner.invoke(main, ["replay", str(tampered)])
    assert result.exit_code == 1
    assert "natural" in result.output


def test_bad_batch_spec_is_usage_error(runner, tmp_path):
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps({"structures": ["homo-cen"], "games_per_structure": 0}))
    result = runner.invoke(main, ["batch", "--spec", str(spec_file), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
