import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aimmimic.profile import build_profile  # noqa: E402
from aimmimic.simulator import Scenario, SkillModel, simulate_campaign  # noqa: E402


@pytest.fixture(scope="session")
def bootstrap_traces():
    return simulate_campaign(SkillModel(), Scenario(), 16, 7, player_id="A")


@pytest.fixture(scope="session")
def bootstrap_profile(bootstrap_traces):
    return build_profile(bootstrap_traces)
