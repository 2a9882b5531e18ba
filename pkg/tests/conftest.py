"""Shared fixtures: the checked-in fixture tree copied into tmp, live services."""

from __future__ import annotations

import os
import shutil
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(autouse=True)
def _no_crash_env(monkeypatch):
    monkeypatch.delenv("CTIMP_CRASH_POINT", raising=False)
    monkeypatch.delenv("CTIMP_CONFIG", raising=False)


@pytest.fixture()
def fixture_tree(tmp_path: Path) -> Path:
    """Copy the checked-in fixtures into tmp; returns the config path."""
    for name in ("config.toml", "map.json", "native_rules.toml",
                 "policies.toml", "threats.toml", "auth.log"):
        shutil.copy(FIXTURES / name, tmp_path / name)
    shutil.copytree(FIXTURES / "feeds", tmp_path / "feeds")
    return tmp_path / "config.toml"


@pytest.fixture()
def service(fixture_tree):
    from ctimp.platform import PlatformService, load_config

    instance = PlatformService(load_config(fixture_tree))
    yield instance
    instance.close()


@pytest.fixture()
def cycled_service(service):
    """A service that has completed one pipeline cycle."""
    report = service.run_cycle()
    assert report.aborted is None
    return service
