"""One-dimensional logistic toy: simulate, fit, target miscalibrated bins, inject, refit.

Stage 0 fits the simulated data. Targets are the stage-0 bins whose gap
exceeds the threshold; for each target bin, in ascending order, synthetic
points are drawn from a left-truncated normal matched to that bin's members
and added cumulatively before refitting. Every stage reports ACC and ECE on
the training set it was fitted on, and additionally on the original points.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from ._logistic import irls, sigmoid
from .errors import InvalidParam
from .metrics import BinningConfig, DiagramMode, PredictionRecord, ReliabilityDiagram, bin_records
from .targeting import select_target_bins


@dataclass(frozen=True)
class ToyModel:
    beta0: float
    beta1: float
    converged: bool
    iterations: int

    def predict_proba(self, x):
        return sigmoid(self.beta0 + self.beta1 * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ToyDataset:
    x: np.ndarray
    y: np.ndarray
    seed: int | None = None
    range: tuple[float, float] = (-10.0, 10.0)

    @property
    def points(self) -> list[tuple[float, int]]:
        return list(zip(self.x.tolist(), self.y.astype(int).tolist()))

    def __len__(self):
        return len(self.x)

    def extended(self, x, y) -> "ToyDataset":
        return ToyDataset(np.concatenate([self.x, x]), np.concatenate([self.y, y]),
                          self.seed, self.range)


@dataclass(frozen=True)
class TruncNormalSpec:
    mu: float
    sd: float
    n: int
    lower: float
    label: int

    def __post_init__(self):
        if not (self.sd > 0) or math.isinf(self.sd):
            raise InvalidParam(f"sd must be positive, got {self.sd}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParam(f"n must be a positive integer, got {self.n}")
        if self.label not in (0, 1):
            raise InvalidParam(f"label must be 0 or 1, got {self.label}")
        if math.isnan(self.mu) or math.isnan(self.lower):
            raise InvalidParam("mu and lower must be numbers")


def simulate(n: int, lo: float, hi: float, beta0: float, beta1: float, seed: int) -> ToyDataset:
    """x ~ Uniform(lo, hi); y ~ Bernoulli(sigmoid(beta0 + beta1 x))."""
    if int(n) != n or n < 1:
        raise InvalidParam(f"n must be a positive integer, got {n}")
    if not lo < hi:
        raise InvalidParam(f"need lo < hi, got ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=n)
    y = (rng.uniform(size=n) < sigmoid(beta0 + beta1 * x)).astype(int)
    return ToyDataset(x, y, seed, (lo, hi))


def fit_logistic(data: ToyDataset, ridge: float = 0.0) -> ToyModel:
    res = irls(data.x, data.y, max_iter=100, tol=1e-8, ridge=ridge, max_norm=1e4)
    return ToyModel(float(res.intercept), float(res.slope), res.converged, res.iterations)


def sample_trunc_normal(spec: TruncNormalSpec, seed) -> np.ndarray:
    """Inverse-CDF draws from Normal(mu, sd) conditioned on x >= lower."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=spec.n)
    # work in the upper tail so that a far-right bound keeps precision
    tail = ndtr(-(spec.lower - spec.mu) / spec.sd)
    x = spec.mu - spec.sd * ndtri(tail * (1.0 - u))
    return np.maximum(x, spec.lower)


def toy_records(data: ToyDataset, model: ToyModel) -> list[PredictionRecord]:
    scores = model.predict_proba(data.x)
    return [PredictionRecord(id=str(i), score=float(s), true_label=str(int(y)))
            for i, (s, y) in enumerate(zip(scores, data.y))]


def toy_diagram(data: ToyDataset, model: ToyModel, num_bins: int) -> ReliabilityDiagram:
    return bin_records(toy_records(data, model), BinningConfig(num_bins, DiagramMode.SCORE))


def toy_accuracy(data: ToyDataset, model: ToyModel) -> float:
    pred = (model.predict_proba(data.x) > 0.5).astype(int)
    return float(np.mean(pred == data.y))


def _bin_sd(xs: np.ndarray, b, model: ToyModel) -> float:
    if len(xs) > 1 and np.std(xs, ddof=1) > 0:
        return float(np.std(xs, ddof=1))
    # single member: SD of a uniform spread over the bin's x-extent under the fit
    lo, hi = (np.clip([b.lower, b.upper], 1e-12, 1 - 1e-12))
    width = abs((math.log(hi / (1 - hi)) - math.log(lo / (1 - lo))) / model.beta1)
    return width / math.sqrt(12.0) if width > 0 and math.isfinite(width) else 1e-3


def bin_trunc_spec(data: ToyDataset, diagram: ReliabilityDiagram, index: int,
                   model: ToyModel) -> TruncNormalSpec:
    """Sampler for one target bin: member mean/SD, truncated at the smallest member."""
    b = diagram.bin(index)
    members = np.array(b.members, dtype=int)
    xs, ys = data.x[members], data.y[members]
    mu = float(np.mean(xs))
    positives = int(ys.sum())
    if 2 * positives > len(ys):
        label = 1
    elif 2 * positives < len(ys):
        label = 0
    else:
        label = int(model.predict_proba(mu) > 0.5)
    return TruncNormalSpec(mu=mu, sd=_bin_sd(xs, b, model), n=len(xs),
                           lower=float(xs.min()), label=label)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 300
    range: tuple[float, float] = (-10.0, 10.0)
    beta_true: tuple[float, float] = (-1.0, 2.0)
    num_bins: int = 5
    threshold: float = 0.03
    seed: int = 42
    ridge: float = 0.0


@dataclass
class Stage:
    label: str
    beta0: float
    beta1: float
    acc: float
    ece: float
    acc_original: float
    ece_original: float
    n_train: int
    injected_bins: list[int]
    synthetic: list[dict] = field(default_factory=list)
    diagram: ReliabilityDiagram | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["diagram"] = self.diagram.to_dict() if self.diagram else None
        return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    targets: list[int]
    stages: list[Stage]

    @property
    def initial(self) -> Stage:
        return self.stages[0]

    @property
    def final(self) -> Stage:
        return self.stages[-1]

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "targets": self.targets,
            "stages": [s.to_dict() for s in self.stages],
        }


def _stage(label, model, train, original, num_bins, injected, synthetic=()):
    diagram = toy_diagram(train, model, num_bins)
    return Stage(
        label=label, beta0=model.beta0, beta1=model.beta1,
        acc=toy_accuracy(train, model), ece=diagram.ece,
        acc_original=toy_accuracy(original, model),
        ece_original=toy_diagram(original, model, num_bins).ece,
        n_train=len(train), injected_bins=list(injected),
        synthetic=list(synthetic), diagram=diagram,
    )


def run_experiment(config: ExperimentConfig = ExperimentConfig()) -> ExperimentReport:
    lo, hi = config.range
    b0, b1 = config.beta_true
    data = simulate(config.n, lo, hi, b0, b1, config.seed)
    model = fit_logistic(data, config.ridge)
    base = _stage("original", model, data, data, config.num_bins, [])
    stages = [base]

    base_model = model
    targets = select_target_bins(base.diagram, config.threshold)
    seeds = np.random.SeedSequence(config.seed).spawn(len(targets))
    train = data
    injected: list[int] = []
    for index, child in zip(targets, seeds):
        spec = bin_trunc_spec(data, base.diagram, index, base_model)
        xs = sample_trunc_normal(spec, child)
        train = train.extended(xs, np.full(spec.n, spec.label))
        model = fit_logistic(train, config.ridge)
        injected.append(index)
        stages.append(_stage(
            "+bins " + ",".join(map(str, injected)), model, train, data,
            config.num_bins, injected,
            [{"bin": index, **asdict(spec)}],
        ))
    return ExperimentReport(config, targets, stages)


def curve_csv(report: ExperimentReport, points: int = 201) -> str:
    """Fitted curves of every stage plus the true curve, sampled on a grid."""
    lo, hi = report.config.range
    grid = np.linspace(lo, hi, points)
    b0, b1 = report.config.beta_true
    cols = {"x": grid, "true": sigmoid(b0 + b1 * grid)}
    for i, s in enumerate(report.stages):
        cols[f"stage{i}"] = sigmoid(s.beta0 + s.beta1 * grid)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    writer.writerows(zip(*(c.tolist() for c in cols.values())))
    return buf.getvalue()
