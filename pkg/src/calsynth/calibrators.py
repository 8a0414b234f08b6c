"""Post-hoc calibration baselines: isotonic regression, Platt scaling, temperature scaling.

Every calibrator is fitted on ``(score, outcome)`` pairs where ``score`` is the
positive-class probability and ``outcome`` is 1 for a positive label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._logistic import irls, sigmoid
from .errors import EmptyInput, InvalidParam, OneClass
from .metrics import BINARY, LabelSpace, PredictionRecord

SCORE_EPS = 1e-9
T_BRACKET = (0.05, 20.0)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def logit(score):
    s = np.clip(np.asarray(score, dtype=float), SCORE_EPS, 1.0 - SCORE_EPS)
    return np.log(s / (1.0 - s))


def _as_arrays(pairs: Iterable[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no (score, outcome) pairs")
    scores, outcomes = (np.asarray(col, dtype=float) for col in zip(*pairs))
    if np.any((scores < 0) | (scores > 1)) or np.any(np.isnan(scores)):
        raise InvalidParam("scores must lie in [0, 1]")
    if np.any((outcomes != 0) & (outcomes != 1)):
        raise InvalidParam("outcomes must be 0 or 1")
    return scores, outcomes


def _require_both(outcomes: np.ndarray):
    if outcomes.min() == outcomes.max():
        raise OneClass("both outcome classes must be present")


def pairs_from_records(records: Sequence[PredictionRecord],
                       labels: LabelSpace = BINARY) -> list[tuple[float, int]]:
    return [(r.score, int(r.true_label == labels.positive)) for r in records]


# --- isotonic ---------------------------------------------------------------

@dataclass(frozen=True)
class IsotonicMap:
    breakpoints: tuple[tuple[float, float], ...]

    def __call__(self, score):
        return apply_isotonic(self, score)

    def to_dict(self) -> dict:
        return {"method": "isotonic", "breakpoints": [list(bp) for bp in self.breakpoints]}


def pava(values: Sequence[float], weights: Sequence[float] | None = None) -> np.ndarray:
    """Weighted pool-adjacent-violators: the non-decreasing least-squares fit."""
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    # each block: [mean, weight, length]
    blocks: list[list[float]] = []
    for v, w in zip(values, weights):
        blocks.append([v, w, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2, n2 = blocks.pop()
            m1, w1, n1 = blocks.pop()
            wt = w1 + w2
            blocks.append([(m1 * w1 + m2 * w2) / wt, wt, n1 + n2])
    return np.concatenate([np.full(int(n), m) for m, _, n in blocks])


def fit_isotonic(pairs: Iterable[tuple[float, float]]) -> IsotonicMap:
    scores, outcomes = _as_arrays(pairs)
    uniq, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    means = np.bincount(inverse, weights=outcomes) / counts
    fitted = np.clip(pava(means, counts), 0.0, 1.0)
    return IsotonicMap(tuple((float(u), float(f)) for u, f in zip(uniq, fitted)))


def apply_isotonic(iso: IsotonicMap, score):
    """Right-continuous step function; flat beyond the outermost breakpoints."""
    xs = np.array([bp[0] for bp in iso.breakpoints])
    ys = np.array([bp[1] for bp in iso.breakpoints])
    pos = np.clip(np.searchsorted(xs, np.asarray(score, dtype=float), side="right") - 1,
                  0, len(xs) - 1)
    out = ys[pos]
    return float(out) if np.ndim(out) == 0 else out


# --- Platt ------------------------------------------------------------------

@dataclass(frozen=True)
class PlattParams:
    a: float
    b: float

    def __call__(self, score):
        return apply_platt(self, score)

    def to_dict(self) -> dict:
        return {"method": "platt", "a": self.a, "b": self.b}


def fit_platt(pairs: Iterable[tuple[float, float]]) -> PlattParams:
    """Maximum-likelihood sigmoid(a*z + b) on the log-odds z of each score."""
    scores, outcomes = _as_arrays(pairs)
    _require_both(outcomes)
    res = irls(logit(scores), outcomes, max_iter=200, tol=1e-8)
    return PlattParams(a=float(res.slope), b=float(res.intercept))


def apply_platt(params: PlattParams, score):
    out = sigmoid(params.a * logit(score) + params.b)
    return float(out) if np.ndim(out) == 0 else out


# --- temperature ------------------------------------------------------------

@dataclass(frozen=True)
class Temperature:
    t: float

    def __post_init__(self):
        if not (self.t > 0) or math.isinf(self.t):
            raise InvalidParam(f"temperature must be positive, got {self.t}")

    def __call__(self, score):
        return apply_temperature(self, score)

    def to_dict(self) -> dict:
        return {"method": "temperature", "t": self.t}


def temperature_nll(t: float, z: np.ndarray, outcomes: np.ndarray) -> float:
    eta = z / t
    return float(np.sum(np.logaddexp(0.0, eta) - outcomes * eta))


def golden_section(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_temperature(pairs: Iterable[tuple[float, float]]) -> Temperature:
    scores, outcomes = _as_arrays(pairs)
    _require_both(outcomes)
    z = logit(scores)
    t = golden_section(lambda t: temperature_nll(t, z, outcomes), *T_BRACKET)
    return Temperature(t)


def apply_temperature(temp: Temperature, score):
    """sigmoid(logit(score) / t); scores of exactly 0 or 1 are clamped by 1e-9."""
    out = sigmoid(logit(score) / temp.t)
    return float(out) if np.ndim(out) == 0 else out


# --- serialization ----------------------------------------------------------

METHODS = ("isotonic", "platt", "temperature")
_FITTERS = {"isotonic": fit_isotonic, "platt": fit_platt, "temperature": fit_temperature}


def fit(method: str, pairs) -> IsotonicMap | PlattParams | Temperature:
    try:
        fitter = _FITTERS[method]
    except KeyError:
        raise InvalidParam(f"unknown calibration method {method!r}") from None
    return fitter(pairs)


def from_dict(obj: dict) -> IsotonicMap | PlattParams | Temperature:
    method = obj.get("method")
    try:
        if method == "isotonic":
            return IsotonicMap(tuple((float(x), float(y)) for x, y in obj["breakpoints"]))
        if method == "platt":
            return PlattParams(a=float(obj["a"]), b=float(obj["b"]))
        if method == "temperature":
            return Temperature(t=float(obj["t"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParam(f"malformed {method} calibrator: {exc}") from None
    raise InvalidParam(f"unknown calibration method {method!r}")
