import json
import sys
from pathlib import Path

import numpy as np
import pytest

from calsynth.llm import TaskSpec
from calsynth.metrics import PredictionRecord

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"


def load_task(name: str) -> TaskSpec:
    return TaskSpec.load(FIXTURES / "tasks" / f"{name}.json")


def golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


def random_records(rng: np.random.Generator, n: int, with_text: bool = False):
    scores = rng.uniform(size=n)
    # occasionally snap to bin edges so the boundary convention gets exercised
    snap = rng.uniform(size=n) < 0.2
    scores[snap] = np.round(scores[snap], 1)
    labels = rng.integers(0, 2, size=n)
    return [
        PredictionRecord(
            id=f"r{i}", score=float(s), true_label=str(int(y)),
            text=f"utterance number {i}" if with_text else None,
        )
        for i, (s, y) in enumerate(zip(scores, labels))
    ]


def fixture_dataset(n: int = 100, seed: int = 3) -> list[PredictionRecord]:
    """A miscalibrated toy corpus: scores are too extreme for the labels they carry."""
    rng = np.random.default_rng(seed)
    true_p = rng.uniform(0.05, 0.95, size=n)
    labels = rng.uniform(size=n) < true_p
    z = np.log(true_p / (1 - true_p))
    scores = 1 / (1 + np.exp(-2.5 * z))
    return [
        PredictionRecord(id=f"doc{i}", score=float(s), true_label=str(int(y)),
                         text=f"sample utterance {i}")
        for i, (s, y) in enumerate(zip(scores, labels))
    ]


@pytest.fixture
def tc_task() -> TaskSpec:
    return load_task("tc")


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(name, rows):
        path = tmp_path / name
        path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
        return path
    return _write


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
