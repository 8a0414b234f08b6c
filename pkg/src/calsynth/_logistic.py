"""One-feature logistic regression by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OneClass, Separable


@dataclass
class IRLSResult:
    intercept: float
    slope: float
    converged: bool
    iterations: int
    nll_trace: list[float] = field(default_factory=list)


def sigmoid(z):
    # logistic function without overflow for large |z|
    return np.exp(-np.logaddexp(0.0, -np.asarray(z, dtype=float)))


def neg_log_likelihood(intercept: float, slope: float, x, y) -> float:
    eta = intercept + slope * np.asarray(x, dtype=float)
    return float(np.sum(np.logaddexp(0.0, eta) - np.asarray(y, dtype=float) * eta))


def check_separation(x: np.ndarray, y: np.ndarray):
    """Raise if the two classes are linearly separable along x (MLE diverges)."""
    pos, neg = x[y == 1], x[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise OneClass("both outcome classes must be present")
    if np.ptp(x) == 0:
        return
    if neg.max() < pos.min() or pos.max() < neg.min():
        raise Separable("outcomes are perfectly separated by the feature")


def irls(x, y, *, max_iter: int = 100, tol: float = 1e-8, ridge: float = 0.0,
         max_norm: float = 1e4) -> IRLSResult:
    """Maximum-likelihood (intercept, slope) for P(y=1|x) = sigmoid(intercept + slope*x).

    Newton steps are halved until the negative log-likelihood does not
    increase, so the recorded trace is non-increasing. ``tol`` applies to the
    Euclidean norm of the gradient of the summed NLL.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    check_separation(x, y)

    design = np.column_stack([np.ones_like(x), x])
    beta = np.zeros(2)

    def objective(b):
        eta = design @ b
        return float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * ridge * b @ b)

    current = objective(beta)
    trace = [current]
    for it in range(1, max_iter + 1):
        p = sigmoid(design @ beta)
        grad = design.T @ (p - y) + ridge * beta
        if np.linalg.norm(grad) < tol:
            return IRLSResult(beta[0], beta[1], True, it - 1, trace)
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None]) + ridge * np.eye(2)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]

        t = 1.0
        for _ in range(60):
            candidate = beta - t * step
            value = objective(candidate)
            if value <= current:
                break
            t *= 0.5
        else:
            # no descent possible at machine precision: at the optimum
            return IRLSResult(beta[0], beta[1], True, it, trace)
        beta, current = candidate, value
        trace.append(current)
        if np.linalg.norm(beta) > max_norm:
            raise Separable(f"parameter norm exceeded {max_norm:g}; likelihood is unbounded")

    p = sigmoid(design @ beta)
    grad = design.T @ (p - y) + ridge * beta
    return IRLSResult(beta[0], beta[1], bool(np.linalg.norm(grad) < tol), max_iter, trace)
