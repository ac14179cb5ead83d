"""Evaluation metrics comparing offline estimates to ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    ConfigurationError,
    DegenerateTestError,
    UndefinedCorrelationError,
    UndefinedLiftError,
)


@dataclass(frozen=True)
class LiftPair:
    """True vs estimated lift for one evaluation unit (a day or a policy)."""

    unit_key: str
    truth_lift: float
    estimated_lift: float


def ctr_lift(v_policy: float, v_logging: float) -> float:
    """Relative CTR change of a policy vs the logging policy, in percent."""
    if v_logging <= 0:
        raise UndefinedLiftError("lift undefined for non-positive logging value")
    return (v_policy / v_logging - 1.0) * 100.0


def ctr_diff(v_policy: float, v_logging: float) -> float:
    """Absolute CTR difference in percentage points."""
    return (v_policy - v_logging) * 100.0


def _arrays(pairs: list[LiftPair]) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise ConfigurationError("no lift pairs")
    truth = np.array([p.truth_lift for p in pairs], dtype=np.float64)
    est = np.array([p.estimated_lift for p in pairs], dtype=np.float64)
    return truth, est


def mda(pairs: list[LiftPair]) -> float:
    """Percentage of pairs whose estimated lift has the true lift's sign.

    A lift of exactly zero matches only zero.
    """
    truth, est = _arrays(pairs)
    return float(np.mean(np.sign(truth) == np.sign(est)) * 100.0)


def rmse(pairs: list[LiftPair]) -> float:
    """Root mean squared error between true and estimated lifts."""
    truth, est = _arrays(pairs)
    return float(np.sqrt(np.mean((truth - est) ** 2)))


def pearson(pairs: list[LiftPair]) -> float:
    """Sample Pearson correlation between the two lift series."""
    truth, est = _arrays(pairs)
    if len(pairs) < 2:
        raise ConfigurationError("pearson needs at least 2 pairs")
    if truth.std() == 0 or est.std() == 0:
        raise UndefinedCorrelationError("zero variance in a lift series")
    t = truth - truth.mean()
    e = est - est.mean()
    return float(np.sum(t * e) / np.sqrt(np.sum(t**2) * np.sum(e**2)))


def paired_ttest(errors_a, errors_b) -> tuple[float, float]:
    """Two-sided paired t-test on per-unit errors of two methods.

    Returns (t statistic, p-value) with n-1 degrees of freedom.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if len(a) != len(b) or len(a) < 2:
        raise ConfigurationError("need equal-length error lists with n >= 2")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0:
        raise DegenerateTestError("zero-variance differences")
    n = len(d)
    t = float(d.mean() / (sd / np.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return t, p
