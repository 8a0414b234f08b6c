"""Prediction records, reliability diagrams and expected calibration error.

Two diagram views are supported. ``score`` bins records by the positive-class
score and uses the empirical positive-label fraction as the accuracy proxy;
``maxprob`` bins by the max-class probability and uses the fraction of
correct predictions (the classical ECE).

Bins are equal width over [0, 1] with half-open intervals ``(lower, upper]``;
the first bin is closed at 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, InvalidParam, InvalidScore, ShapeMismatch

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class LabelSpace:
    """Names of the two classes; ``score`` is always P(positive)."""

    negative: str = "0"
    positive: str = "1"

    def __post_init__(self):
        if self.negative == self.positive:
            raise InvalidParam("class names must be distinct")

    def __contains__(self, label: str) -> bool:
        return label in (self.negative, self.positive)

    def other(self, label: str) -> str:
        return self.negative if label == self.positive else self.positive

    @classmethod
    def parse(cls, text: str) -> "LabelSpace":
        """Parse ``"NEG,POS"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2 or not all(parts):
            raise InvalidParam(f"expected 'NEGATIVE,POSITIVE', got {text!r}")
        return cls(negative=parts[0], positive=parts[1])


BINARY = LabelSpace()


def _label_str(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    score: float
    true_label: str
    text: str | None = None
    predicted_label: str | None = None

    def prediction(self, labels: LabelSpace = BINARY) -> str:
        if self.predicted_label is not None:
            return self.predicted_label
        return labels.positive if self.score > 0.5 else labels.negative

    def to_dict(self) -> dict:
        out = {"id": self.id, "score": self.score, "true_label": self.true_label}
        if self.text is not None:
            out["text"] = self.text
        if self.predicted_label is not None:
            out["predicted_label"] = self.predicted_label
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "PredictionRecord":
        try:
            rid, score, label = obj["id"], obj["score"], obj["true_label"]
        except KeyError as exc:
            raise InvalidParam(f"record is missing key {exc.args[0]!r}") from None
        try:
            score = float(score)
        except (TypeError, ValueError):
            raise InvalidScore(f"record {rid}: score {score!r} is not a number") from None
        pred = obj.get("predicted_label")
        text = obj.get("text")
        return cls(
            id=str(rid),
            score=score,
            true_label=_label_str(label),
            text=text if text not in ("", None) else None,
            predicted_label=_label_str(pred) if pred not in ("", None) else None,
        )


class DiagramMode(str, Enum):
    SCORE = "score"
    MAXPROB = "maxprob"


@dataclass(frozen=True)
class BinningConfig:
    num_bins: int = 10
    mode: DiagramMode = DiagramMode.SCORE
    labels: LabelSpace = BINARY

    def __post_init__(self):
        if int(self.num_bins) != self.num_bins or self.num_bins < 2:
            raise InvalidParam(f"num_bins must be an integer >= 2, got {self.num_bins}")
        object.__setattr__(self, "mode", DiagramMode(self.mode))


@dataclass(frozen=True)
class Bin:
    index: int
    lower: float
    upper: float
    count: int
    weight: float
    confidence: float
    accuracy: float
    gap: float
    # positions into the record list the diagram was built from
    members: tuple[int, ...] = field(default=(), compare=False, repr=False)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "lower": self.lower,
            "upper": self.upper,
            "count": self.count,
            "confidence": self.confidence,
            "accuracy": self.accuracy,
            "gap": self.gap,
        }


@dataclass(frozen=True)
class ReliabilityDiagram:
    bins: tuple[Bin, ...]
    n: int
    ece: float
    data_accuracy: float
    data_confidence: float
    mode: DiagramMode = DiagramMode.SCORE

    @property
    def num_bins(self) -> int:
        return len(self.bins)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(b.weight for b in self.bins)

    def bin(self, index: int) -> Bin:
        """Bin by its 1-based index."""
        return self.bins[index - 1]

    @classmethod
    def from_bins(cls, bins: Sequence[Bin], n: int,
                  mode: DiagramMode = DiagramMode.SCORE) -> "ReliabilityDiagram":
        bins = tuple(bins)
        return cls(
            bins=bins,
            n=n,
            ece=math.fsum(b.weight * abs(b.gap) for b in bins),
            data_accuracy=math.fsum(b.weight * b.accuracy for b in bins),
            data_confidence=math.fsum(b.weight * b.confidence for b in bins),
            mode=DiagramMode(mode),
        )

    def to_dict(self) -> dict:
        return {"bins": [b.to_dict() for b in self.bins], "n": self.n, "ece": self.ece}

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["index", "lower", "upper", "count", "confidence", "accuracy", "gap"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for b in self.bins:
            writer.writerow(b.to_dict())
        return buf.getvalue()


def bin_edges(num_bins: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, num_bins + 1)


def assign_bins(values: Iterable[float], num_bins: int) -> np.ndarray:
    """0-based bin position of each value under the (lower, upper] convention."""
    edges = bin_edges(num_bins)
    idx = np.searchsorted(edges, np.asarray(values, dtype=float), side="left") - 1
    return np.clip(idx, 0, num_bins - 1)


def _check_records(records: Sequence[PredictionRecord], labels: LabelSpace):
    if not records:
        raise EmptyInput("no prediction records")
    for r in records:
        if not (0.0 <= r.score <= 1.0):  # also rejects NaN
            raise InvalidScore(f"record {r.id}: score {r.score} outside [0, 1]")
        if r.true_label not in labels:
            raise InvalidParam(
                f"record {r.id}: label {r.true_label!r} not in "
                f"({labels.negative!r}, {labels.positive!r})"
            )


def bin_records(records: Sequence[PredictionRecord],
                config: BinningConfig = BinningConfig()) -> ReliabilityDiagram:
    labels = config.labels
    _check_records(records, labels)
    n = len(records)
    m_bins = config.num_bins

    if config.mode is DiagramMode.SCORE:
        values = [r.score for r in records]
        hits = [r.true_label == labels.positive for r in records]
    else:
        values = [max(r.score, 1.0 - r.score) for r in records]
        hits = [r.prediction(labels) == r.true_label for r in records]

    positions = assign_bins(values, m_bins)
    members: list[list[int]] = [[] for _ in range(m_bins)]
    for i, pos in enumerate(positions):
        members[pos].append(i)

    edges = bin_edges(m_bins)
    bins = []
    for m in range(m_bins):
        lower, upper = float(edges[m]), float(edges[m + 1])
        idx = members[m]
        count = len(idx)
        if count:
            conf = math.fsum(values[i] for i in idx) / count
            conf = min(max(conf, lower), upper)
            acc = sum(hits[i] for i in idx) / count
        else:
            conf, acc = 0.5 * (lower + upper), 0.0
        bins.append(Bin(
            index=m + 1, lower=lower, upper=upper, count=count, weight=count / n,
            confidence=conf, accuracy=acc, gap=acc - conf, members=tuple(idx),
        ))
    return ReliabilityDiagram.from_bins(bins, n, config.mode)


def ece(diagram: ReliabilityDiagram) -> float:
    return math.fsum(b.weight * abs(b.gap) for b in diagram.bins)


def check_paired(a: ReliabilityDiagram, b: ReliabilityDiagram):
    if a.num_bins != b.num_bins:
        raise ShapeMismatch(f"bin counts differ: {a.num_bins} vs {b.num_bins}")
    for x, y in zip(a.bins, b.bins):
        if abs(x.weight - y.weight) > WEIGHT_TOL:
            raise ShapeMismatch(f"bin {x.index} weights differ: {x.weight} vs {y.weight}")


def conf_gap(a: ReliabilityDiagram, b: ReliabilityDiagram) -> float:
    """Occupancy-weighted confidence distance between two bin-paired diagrams."""
    check_paired(a, b)
    return math.fsum(x.weight * abs(x.confidence - y.confidence)
                     for x, y in zip(a.bins, b.bins))


def accuracy(records: Sequence[PredictionRecord], labels: LabelSpace = BINARY) -> float:
    if not records:
        raise EmptyInput("no prediction records")
    return sum(r.prediction(labels) == r.true_label for r in records) / len(records)


# --- file formats -----------------------------------------------------------

def load_records(path: str | Path) -> list[PredictionRecord]:
    """Read records from JSON Lines (``.jsonl``/``.json``) or CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            return [PredictionRecord.from_dict(row) for row in csv.DictReader(fh)]
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidParam(f"{path}:{lineno}: {exc.msg}") from None
            records.append(PredictionRecord.from_dict(obj))
    return records


def dump_records(records: Iterable[PredictionRecord]) -> str:
    return "".join(json.dumps(r.to_dict()) + "\n" for r in records)
