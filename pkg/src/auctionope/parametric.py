"""Parametric baseline: closed-form score distributions and their APS.

Fits candidate families to per-segment score samples by maximum
likelihood, selects the best by log-likelihood, and derives bin-hazard
propensities from the fitted CDF on the same grid the discrete model uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError, FitDegenerateError, NoFitError
from .dpm import DEFAULT_APS_FLOOR, BinTable

FAMILIES = ("Normal", "LogNormal", "Beta", "Gamma", "Exponential")
_N_PARAMS = {"Normal": 2, "LogNormal": 2, "Beta": 2, "Gamma": 2, "Exponential": 1}
_BETA_MARGIN = 1e-6


@dataclass(frozen=True)
class ParametricFit:
    """Maximum-likelihood fit of one distribution family.

    ``rescale`` holds the (lo, width) affine map applied before fitting a
    Beta; log-likelihood and AIC are always in original data units.
    """

    family: str
    params: tuple[float, ...]
    log_likelihood: float
    n: int
    aic: float
    rescale: tuple[float, float] | None = None

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.family == "Normal":
            mu, sigma = self.params
            return stats.norm.cdf(x, mu, sigma)
        if self.family == "LogNormal":
            mu, sigma = self.params
            out = np.zeros_like(x)
            pos = x > 0
            out[pos] = stats.norm.cdf(np.log(x[pos]), mu, sigma)
            return out
        if self.family == "Exponential":
            (rate,) = self.params
            return np.where(x > 0, 1.0 - np.exp(-rate * np.maximum(x, 0)), 0.0)
        if self.family == "Gamma":
            shape, scale = self.params
            return stats.gamma.cdf(x, shape, scale=scale)
        if self.family == "Beta":
            a, b = self.params
            lo, width = self.rescale
            y = np.clip((x - lo) / width, 0.0, 1.0)
            return stats.beta.cdf(y, a, b)
        raise ConfigurationError(f"unknown family {self.family!r}")


def _check_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if len(s) == 0:
        raise FitDegenerateError("no samples")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise FitDegenerateError("scores must be finite and positive")
    return s


def fit_family(scores, family: str) -> ParametricFit:
    """MLE fit of one family; closed-form where the MLE has one."""
    s = _check_scores(scores)
    n = len(s)
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown family {family!r}; choose from {FAMILIES}")

    rescale = None
    if family == "Normal":
        mu = float(s.mean())
        var = float(s.var())  # MLE variance, ddof=0
        if var == 0:
            raise FitDegenerateError("zero-variance samples for Normal")
        sigma = math.sqrt(var)
        params = (mu, sigma)
        ll = float(np.sum(stats.norm.logpdf(s, mu, sigma)))
    elif family == "LogNormal":
        logs = np.log(s)
        mu = float(logs.mean())
        var = float(logs.var())
        if var == 0:
            raise FitDegenerateError("zero-variance samples for LogNormal")
        sigma = math.sqrt(var)
        params = (mu, sigma)
        ll = float(np.sum(stats.norm.logpdf(logs, mu, sigma) - logs))
    elif family == "Exponential":
        rate = 1.0 / float(s.mean())
        params = (rate,)
        ll = float(n * math.log(rate) - rate * s.sum())
    elif family == "Gamma":
        if s.var() == 0:
            raise FitDegenerateError("zero-variance samples for Gamma")
        shape, _, scale = stats.gamma.fit(s, floc=0)
        params = (float(shape), float(scale))
        ll = float(np.sum(stats.gamma.logpdf(s, shape, scale=scale)))
    else:  # Beta on the segment's observed range, with a small margin
        lo, hi = float(s.min()), float(s.max())
        if hi == lo:
            raise FitDegenerateError("zero-variance samples for Beta")
        span = hi - lo
        lo -= _BETA_MARGIN * span
        width = span * (1.0 + 2.0 * _BETA_MARGIN)
        y = (s - lo) / width
        a, b, _, _ = stats.beta.fit(y, floc=0, fscale=1)
        params = (float(a), float(b))
        rescale = (lo, width)
        # Jacobian keeps the likelihood comparable across families.
        ll = float(np.sum(stats.beta.logpdf(y, a, b)) - n * math.log(width))

    if not math.isfinite(ll):
        raise FitDegenerateError(f"non-finite log-likelihood for {family}")
    aic = 2.0 * _N_PARAMS[family] - 2.0 * ll
    return ParametricFit(family=family, params=params, log_likelihood=ll, n=n,
                         aic=aic, rescale=rescale)


def select_best_fit(scores, families: tuple[str, ...] = FAMILIES) -> ParametricFit:
    """Fit every family that can fit and keep the highest log-likelihood.

    Ties break in the fixed family order; AIC is carried on each fit for
    reporting but never drives selection.
    """
    best: ParametricFit | None = None
    for family in families:
        try:
            fit = fit_family(scores, family)
        except FitDegenerateError:
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    if best is None:
        raise NoFitError("every candidate family failed to fit")
    return best


def parametric_aps(
    fit: ParametricFit,
    bins: BinTable,
    score,
    aps_floor: float = DEFAULT_APS_FLOOR,
):
    """Bin-hazard propensity from the fitted CDF on a shared bin grid.

    For the bin l holding the (clamped) score this is
    (F(b_l) - F(b_{l-1})) / (1 - F(b_{l-1})), floored at ``aps_floor``;
    a vanishing denominator means the tail is certainly won and returns 1.
    """
    scalar = np.isscalar(score)
    s = np.atleast_1d(np.asarray(score, dtype=np.float64))
    F = fit.cdf(bins.edges)
    idx = bins.assign(s)
    denom = 1.0 - F[idx - 1]
    num = F[idx] - F[idx - 1]
    out = np.where(denom < 1e-12, 1.0, np.maximum(num / np.maximum(denom, 1e-300), aps_floor))
    out = np.minimum(out, 1.0)
    return float(out[0]) if scalar else out


def fit_to_doc(fit: ParametricFit, segment_key: str, bins: BinTable) -> dict:
    """Segment entry for the shared versioned JSON model document."""
    return {
        "key": segment_key,
        "model_type": "parametric",
        "family": fit.family,
        "params": list(fit.params),
        "rescale": list(fit.rescale) if fit.rescale else None,
        "log_likelihood": fit.log_likelihood,
        "aic": fit.aic,
        "n": fit.n,
        "edges": bins.edges.tolist(),
    }
