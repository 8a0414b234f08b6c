"""PAC sample-size formulas and the ECE bound derived from Hoeffding's inequality.

All logarithms are natural. Sample sizes round up so that the returned integer
meets the bound. Monte Carlo checks use numpy's PCG64 generator
(``numpy.random.default_rng(seed)``), which is reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GapDominates, InvalidParam
from .metrics import ReliabilityDiagram, check_paired


@dataclass(frozen=True)
class AccuracyBound:
    epsilon_a: float
    delta_a: float
    n: int


@dataclass(frozen=True)
class BoundReport:
    epsilon_a: float
    delta_a: float
    conf_gap: float
    epsilon_ece: float
    delta_ece: float
    n_ece: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecompositionReport:
    lhs: float
    rhs: float
    holds: bool


def _check_epsilon(epsilon: float):
    if not (epsilon > 0) or math.isinf(epsilon):
        raise InvalidParam(f"epsilon must be a positive finite number, got {epsilon}")


def _check_n(n: int, minimum: int = 0):
    if int(n) != n or n < minimum:
        raise InvalidParam(f"n must be an integer >= {minimum}, got {n}")


def min_sample_size(epsilon: float, delta: float) -> int:
    """Smallest n with ``2 exp(-2 epsilon^2 n) <= delta``."""
    _check_epsilon(epsilon)
    if not (0 < delta <= 2):
        raise InvalidParam(f"delta must lie in (0, 2], got {delta}")
    return max(0, math.ceil(math.log(2.0 / delta) / (2.0 * epsilon ** 2)))


def accuracy_uncertainty(epsilon: float, n: int) -> float:
    """Hoeffding tail ``2 exp(-2 epsilon^2 n)``."""
    _check_epsilon(epsilon)
    _check_n(n)
    return 2.0 * math.exp(-2.0 * epsilon ** 2 * n)


def accuracy_bound(epsilon_a: float, n: int) -> AccuracyBound:
    return AccuracyBound(epsilon_a, accuracy_uncertainty(epsilon_a, n), int(n))


def ece_bound(epsilon_a: float, n: int, conf_gap: float) -> BoundReport:
    _check_epsilon(epsilon_a)
    _check_n(n, 1)
    if not (conf_gap >= 0) or math.isinf(conf_gap):
        raise InvalidParam(f"conf_gap must be >= 0, got {conf_gap}")
    delta_a = accuracy_uncertainty(epsilon_a, n)
    return BoundReport(
        epsilon_a=epsilon_a,
        delta_a=delta_a,
        conf_gap=conf_gap,
        epsilon_ece=epsilon_a + conf_gap,
        delta_ece=2.0 * delta_a,
        n_ece=int(n),
    )


def ece_min_sample_size(epsilon_ece: float, delta_ece: float, conf_gap: float) -> int:
    if not (conf_gap >= 0):
        raise InvalidParam(f"conf_gap must be >= 0, got {conf_gap}")
    if not (0 < delta_ece <= 4):
        raise InvalidParam(f"delta_ece must lie in (0, 4], got {delta_ece}")
    slack = epsilon_ece - conf_gap
    if not (slack > 0):
        raise GapDominates(
            f"epsilon_ece={epsilon_ece} does not exceed the confidence gap {conf_gap}"
        )
    return max(0, math.ceil(math.log(4.0 / delta_ece) / (2.0 * slack ** 2)))


def simulate_hoeffding(p: float, n: int, epsilon: float, trials: int, seed: int) -> float:
    """Empirical P(|mean of n Bernoulli(p) draws - p| > epsilon) over ``trials`` samples.

    The sum of n Bernoulli draws is drawn directly as a Binomial(n, p) variate,
    one per trial, from a single PCG64 stream seeded by ``seed``.
    """
    if not (0 < p < 1):
        raise InvalidParam(f"p must lie in (0, 1), got {p}")
    _check_n(n, 1)
    _check_n(trials, 1)
    _check_epsilon(epsilon)
    rng = np.random.default_rng(seed)
    means = rng.binomial(n, p, size=trials) / n
    return float(np.mean(np.abs(means - p) > epsilon))


def decomposition_check(a: ReliabilityDiagram, b: ReliabilityDiagram) -> DecompositionReport:
    """Check ECE(a) - ECE(b) <= sum w|acc_a - acc_b| + sum w|conf_a - conf_b| on paired bins."""
    check_paired(a, b)
    lhs = a.ece - b.ece
    rhs = math.fsum(x.weight * abs(x.accuracy - y.accuracy) for x, y in zip(a.bins, b.bins)) \
        + math.fsum(x.weight * abs(x.confidence - y.confidence) for x, y in zip(a.bins, b.bins))
    return DecompositionReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-12)
