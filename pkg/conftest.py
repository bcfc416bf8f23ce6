import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo run at full operating scale")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point the output directory and run ledger at a per-test temp dir"""
    from src.settings import get_settings

    monkeypatch.setenv("MVTEST_OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("MVTEST_THREADS", "1")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
