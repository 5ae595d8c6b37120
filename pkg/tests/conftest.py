import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RECORDS, line
    if not RECORDS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RECORDS):
        terminalreporter.write_line(line(RECORDS[num]))
