import json
from pathlib import Path

import numpy as np
import pytest

from ngi.scene import build_scene, load_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    if "acceptance" not in report.keywords:
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _acceptance.append((props["criterion"], report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(_acceptance, key=lambda t: t[0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {crit}  {detail}")


def config(name):
    cfg, _ = load_config(CONFIGS / f"{name}.json")
    return cfg


@pytest.fixture(scope="session")
def minimal_scene():
    return build_scene(config("minimal_1d"), CONFIGS)


@pytest.fixture(scope="session")
def canonical_scene():
    return build_scene(config("canonical_1d"), CONFIGS)


@pytest.fixture(scope="session")
def imaging_scene():
    return build_scene(config("imaging_2d"), CONFIGS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_config(tmp_path, cfg, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p
