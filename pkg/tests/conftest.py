"""Shared fixtures and the acceptance-suite result banner."""

from __future__ import annotations

from pathlib import Path

import pytest

from detailscribe.clients import ScriptedChatClient
from detailscribe.dataset import PromptRecord
from detailscribe.diffusion import MockBackend, make_schedule
from detailscribe.offline import CannedClient
from detailscribe.pipeline import Services


def repo_root() -> Path:
    return Path(__file__).resolve().parents[1]


@pytest.fixture
def reference_dataset_path() -> Path:
    return repo_root() / "data" / "interacting.jsonl"


@pytest.fixture
def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


@pytest.fixture
def record() -> PromptRecord:
    return PromptRecord(
        topic="cat-sail",
        prompt="A cat sails across the sea in a large seashell, holding a mast.",
        scenario="functional",
        subclass="tool-manipulation",
    )


@pytest.fixture
def mock_services() -> Services:
    return Services(
        backend=MockBackend(image_shape=(3, 16, 16)),
        schedule=make_schedule("linear", 50),
        llm=CannedClient(model_id="canned-llm", multimodal=False),
        mllm=CannedClient(model_id="canned-mllm", multimodal=True),
    )


def critic_response(refined_prompt: str) -> str:
    """Minimal well-formed critique response carrying a chosen refined prompt."""
    return (
        "1. The interaction is unclear. Correction: depict the contact.\n"
        f"<{refined_prompt}>"
    )


def scripted_critic(refined_prompt: str, repeats: int = 64) -> ScriptedChatClient:
    return ScriptedChatClient([critic_response(refined_prompt)] * repeats)


# ---------------------------------------------------------------------------
# acceptance banner: one PASS/FAIL line per criterion test

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        _ACCEPTANCE_RESULTS[name] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        outcome = _ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"ACCEPTANCE {outcome}: {name}")
