import json
from pathlib import Path

import pytest

from breachsim import default_registry
from breachsim.orchestration import GameSetup

DATA_DIR = Path(__file__).parent / "data"

# The worked example game: setup, forced dice, and the six recorded choices.
GOLDEN_SCENARIO = (
    "external_cloud_access",
    "credential_stuffing_pe",
    "http_as_exfil",
    "application_shimming",
)
GOLDEN_ESTABLISHED = ("server_analysis", "endpoint_analysis", "crisis_management", "isolation")
GOLDEN_INJECT_ORDER = (
    "lead_handler_has_a_baby",
    "honeypots_deployed",
    "it_was_a_pentest",
    "data_uploaded_to_pastebin",
    "siem_analyst_returns",
    "take_one_procedure_away",
    "give_random_procedure",
    "bobby_the_intern",
    "legal_takes_handler",
)
GOLDEN_DICE = (4, 16, 1, 14, 20, 15)
GOLDEN_CHOICES = (
    "endpoint_analysis",
    "server_analysis",
    "siem_log_analysis",
    "isolation",
    "ueba",
    "memory_analysis",
)


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture()
def golden_setup():
    return GameSetup(
        scenario_ids=GOLDEN_SCENARIO,
        established_ids=GOLDEN_ESTABLISHED,
        inject_order=GOLDEN_INJECT_ORDER,
        forced_dice=GOLDEN_DICE,
    )


@pytest.fixture(scope="session")
def cards_doc():
    path = Path(__file__).parents[1] / "src" / "breachsim" / "data" / "cards.json"
    return json.loads(path.read_text())
