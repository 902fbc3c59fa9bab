from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from euclidkit.bank import load_bank  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--run-remote", action="store_true", default=False, help="run tests that call a live chat endpoint")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-remote"):
        return
    skip = pytest.mark.skip(reason="needs --run-remote")
    for item in items:
        if "remote" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def bank():
    return load_bank()


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES
