"""Miscalibrated-bin selection, quadrant strategy and retraining-set assembly.

A bin is *Low* when its mean score is at most 0.5 and *High* otherwise. Bins
above the diagonal (positive gap) are treated as under-confident and bins
below it as over-confident, for every score range. The synthetic target
probability moves down for over-confident bins and up for under-confident
ones, which is away from the decision boundary for Low/Over and High/Under
and towards it for Low/Under and High/Over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import CountMismatch, InvalidParam, ZeroGap
from .metrics import BINARY, Bin, DiagramMode, LabelSpace, PredictionRecord, ReliabilityDiagram

DEFAULT_THRESHOLD = 0.03
CLAMP = (0.01, 0.99)


class Quadrant(str, Enum):
    LOW_OVER = "LowOver"
    LOW_UNDER = "LowUnder"
    HIGH_OVER = "HighOver"
    HIGH_UNDER = "HighUnder"

    @property
    def overconfident(self) -> bool:
        return self in (Quadrant.LOW_OVER, Quadrant.HIGH_OVER)

    @property
    def towards_boundary(self) -> bool:
        return self in (Quadrant.LOW_UNDER, Quadrant.HIGH_OVER)


class AssemblyMode(str, Enum):
    SYNTHESIS = "synthesis"
    SYNTHESIS_PLUS = "synthesis-plus"


def percent(p: float) -> int:
    """Whole percent, halves rounded up."""
    return int(math.floor(p * 100.0 + 0.5 + 1e-9))


@dataclass(frozen=True)
class GenerationSpec:
    bin_index: int
    quadrant: Quadrant
    alpha: float
    source_confidence: float
    target_probability: float  # positive-class score the synthetic texts should carry
    dominant_class: str
    secondary_class: str
    target_primary_pct: int
    sample_count: int
    exemplars: tuple[PredictionRecord, ...] = field(default=())

    @property
    def spec_id(self) -> str:
        return f"bin{self.bin_index}"

    @property
    def target_secondary_pct(self) -> int:
        return 100 - self.target_primary_pct

    @property
    def exemplar_primary_pct(self) -> int:
        """The bin's average score, expressed for the dominant class."""
        p = self.source_confidence if self.dominant_is_positive else 1.0 - self.source_confidence
        return min(max(percent(p), 1), 99)

    @property
    def dominant_is_positive(self) -> bool:
        return self.source_confidence > 0.5

    def to_dict(self) -> dict:
        return {
            "bin_index": self.bin_index,
            "quadrant": self.quadrant.value,
            "alpha": self.alpha,
            "source_confidence": self.source_confidence,
            "target_probability": self.target_probability,
            "dominant_class": self.dominant_class,
            "secondary_class": self.secondary_class,
            "target_primary_pct": self.target_primary_pct,
            "target_secondary_pct": self.target_secondary_pct,
            "sample_count": self.sample_count,
            "exemplars": [
                {"id": r.id, "text": r.text, "score": r.score, "true_label": r.true_label}
                for r in self.exemplars
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GenerationSpec":
        try:
            return cls(
                bin_index=int(obj["bin_index"]),
                quadrant=Quadrant(obj["quadrant"]),
                alpha=float(obj["alpha"]),
                source_confidence=float(obj["source_confidence"]),
                target_probability=float(obj.get("target_probability", math.nan)),
                dominant_class=str(obj["dominant_class"]),
                secondary_class=str(obj["secondary_class"]),
                target_primary_pct=int(obj["target_primary_pct"]),
                sample_count=int(obj["sample_count"]),
                exemplars=tuple(PredictionRecord.from_dict(e) for e in obj.get("exemplars", [])),
            )
        except (KeyError, ValueError) as exc:
            raise InvalidParam(f"malformed generation spec: {exc}") from None


def select_target_bins(diagram: ReliabilityDiagram, threshold: float = DEFAULT_THRESHOLD) -> list[int]:
    if not (threshold >= 0):
        raise InvalidParam(f"threshold must be >= 0, got {threshold}")
    return [b.index for b in diagram.bins if b.count > 0 and abs(b.gap) > threshold]


def quadrant_of(confidence: float, gap: float) -> Quadrant:
    if gap == 0:
        raise ZeroGap("bin lies on the diagonal; it is not a target")
    low = confidence <= 0.5
    if gap < 0:
        return Quadrant.LOW_OVER if low else Quadrant.HIGH_OVER
    return Quadrant.LOW_UNDER if low else Quadrant.HIGH_UNDER


def classify_bin(b: Bin) -> Quadrant:
    if b.count == 0:
        raise InvalidParam(f"bin {b.index} is empty")
    return quadrant_of(b.confidence, b.gap)


def target_probability(confidence: float, quadrant: Quadrant, alpha: float) -> float:
    if not (0.0 <= confidence <= 1.0):
        raise InvalidParam(f"confidence must lie in [0, 1], got {confidence}")
    if not (alpha >= 0):
        raise InvalidParam(f"alpha must be >= 0, got {alpha}")
    shifted = confidence - alpha if Quadrant(quadrant).overconfident else confidence + alpha
    return min(max(shifted, CLAMP[0]), CLAMP[1])


def build_generation_specs(diagram: ReliabilityDiagram, records: Sequence[PredictionRecord],
                           threshold: float = DEFAULT_THRESHOLD, alpha: float | None = None,
                           labels: LabelSpace = BINARY) -> list[GenerationSpec]:
    """One spec per target bin; ``alpha=None`` uses each bin's |gap|."""
    if diagram.mode is not DiagramMode.SCORE:
        raise InvalidParam("targeting needs a score-mode diagram")
    if len(records) != diagram.n:
        raise InvalidParam(f"diagram was built from {diagram.n} records, got {len(records)}")
    specs = []
    for index in select_target_bins(diagram, threshold):
        b = diagram.bin(index)
        quad = classify_bin(b)
        a = abs(b.gap) if alpha is None else alpha
        target = target_probability(b.confidence, quad, a)
        positive_dominant = b.confidence > 0.5
        dominant = labels.positive if positive_dominant else labels.negative
        primary = target if positive_dominant else 1.0 - target
        specs.append(GenerationSpec(
            bin_index=index,
            quadrant=quad,
            alpha=a,
            source_confidence=b.confidence,
            target_probability=target,
            dominant_class=dominant,
            secondary_class=labels.other(dominant),
            target_primary_pct=min(max(percent(primary), 1), 99),
            sample_count=b.count,
            exemplars=tuple(records[i] for i in b.members),
        ))
    return specs


# --- assembly ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainingItem:
    id: str
    text: str | None
    label: str
    synthetic: bool = False

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "label": self.label, "synthetic": self.synthetic}


def _synthetic_label(item) -> str:
    label = getattr(item, "relabeled_class", None)
    return label if label is not None else item.exemplar_class


def assemble(original: Sequence[PredictionRecord], synthetic: Iterable, specs: Sequence[GenerationSpec],
             mode: AssemblyMode | str, strict: bool = False) -> list[TrainingItem]:
    """Build the retraining set.

    ``synthetic`` items are matched to specs by ``spec_id``; more than
    ``sample_count`` items for a spec are truncated, fewer raise
    CountMismatch when ``strict`` and are used as-is otherwise.
    Synthesis drops every exemplar (by id) and adds the synthetic texts;
    SynthesisPlus keeps all originals.
    """
    from .llm import strip_annotation

    mode = AssemblyMode(mode)
    grouped: dict[str, list] = {s.spec_id: [] for s in specs}
    for item in synthetic:
        if item.spec_id in grouped:
            grouped[item.spec_id].append(item)

    chosen = []
    for spec in specs:
        items = grouped[spec.spec_id]
        if strict and len(items) < spec.sample_count:
            raise CountMismatch(
                f"{spec.spec_id}: expected {spec.sample_count} synthetic texts, got {len(items)}"
            )
        chosen.extend((spec.spec_id, j, item) for j, item in enumerate(items[: spec.sample_count]))

    if mode is AssemblyMode.SYNTHESIS:
        dropped = {r.id for s in specs for r in s.exemplars}
        kept = [r for r in original if r.id not in dropped]
    else:
        kept = list(original)

    out = [TrainingItem(r.id, r.text, r.true_label) for r in kept]
    out += [TrainingItem(f"syn-{spec_id}-{j}", strip_annotation(item.text),
                         _synthetic_label(item), synthetic=True)
            for spec_id, j, item in chosen]
    return out
