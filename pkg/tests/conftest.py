import importlib.util
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmst.sandbox import Sandbox

STUB_COMMAND = (sys.executable, "-m", "mmst.runner_stub")
PRODUCTION_COMMAND = (sys.executable, "-m", "mmst_runner")

HAS_PRODUCTION_RUNNER = importlib.util.find_spec("mmst_runner") is not None


def runner_commands() -> list:
    commands = [pytest.param(STUB_COMMAND, id="stub")]
    commands.append(
        pytest.param(
            PRODUCTION_COMMAND,
            id="production",
            marks=pytest.mark.skipif(
                not HAS_PRODUCTION_RUNNER, reason="production runner not installed"
            ),
        )
    )
    return commands


@pytest.fixture(scope="session")
def stub_sandbox():
    with Sandbox(STUB_COMMAND) as sandbox:
        yield sandbox
