"""Off-policy value estimators over reward/importance-weight samples."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnsupportedOperationError
from .dpm import ApsTable
from .logdata import Dataset


@dataclass(frozen=True)
class WeightedSamples:
    """Columnar (reward, importance weight) pairs for one policy."""

    rewards: np.ndarray
    weights: np.ndarray
    impression_ids: np.ndarray | None = None

    def __post_init__(self):
        if len(self.rewards) != len(self.weights):
            raise ConfigurationError("rewards and weights must align")
        if len(self.weights) and (not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0)):
            raise ConfigurationError("weights must be positive and finite")

    @property
    def n(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class PolicyEstimate:
    policy_name: str
    estimator: str
    value: float
    n: int
    effective_sample_size: float
    cap_threshold: float | None = None
    max_weight_precap: float = 0.0


def weights_from_aps(
    data: Dataset,
    policy: str,
    aps_eval: ApsTable,
    aps_log: ApsTable,
    segment_feature: str = "segment_key",
) -> WeightedSamples:
    """Per-record weight = eval APS of the shown ad / logging APS of it."""
    if policy not in data.score_eval:
        raise ConfigurationError(f"policy {policy!r} not in dataset: {data.policy_names}")
    segments = data.segment_feature(segment_feature)
    num = aps_eval.aps_many(segments, data.score_eval[policy])
    den = aps_log.aps_many(segments, data.score_logging)
    return WeightedSamples(
        rewards=data.reward.astype(np.float64),
        weights=num / den,
        impression_ids=data.impression_id,
    )


def _ess(weights: np.ndarray) -> float:
    return float(weights.sum() ** 2 / np.sum(weights**2))


def ips(samples: WeightedSamples, policy_name: str = "") -> PolicyEstimate:
    """Plain inverse-propensity estimate: mean of w*r. Can exceed 1."""
    if samples.n == 0:
        raise ConfigurationError("no samples")
    value = float(np.mean(samples.weights * samples.rewards))
    if value > 1.0:
        warnings.warn(f"IPS estimate {value:.4g} exceeds 1; reported as-is", stacklevel=2)
    return PolicyEstimate(
        policy_name=policy_name,
        estimator="IPS",
        value=value,
        n=samples.n,
        effective_sample_size=_ess(samples.weights),
        max_weight_precap=float(samples.weights.max()),
    )


def snips(samples: WeightedSamples, policy_name: str = "") -> PolicyEstimate:
    """Self-normalized estimate: sum(w*r) / sum(w)."""
    if samples.n == 0:
        raise ConfigurationError("no samples")
    w = samples.weights
    value = float(np.sum(w * samples.rewards) / np.sum(w))
    return PolicyEstimate(
        policy_name=policy_name,
        estimator="SNIPS",
        value=value,
        n=samples.n,
        effective_sample_size=_ess(w),
        max_weight_precap=float(w.max()),
    )


def capped_snips(
    samples: WeightedSamples,
    cap_percentile: float = 99.0,
    policy_name: str = "",
) -> PolicyEstimate:
    """SNIPS after clipping weights at an empirical percentile.

    The threshold is the linear-interpolated order statistic of the raw
    weights over the whole batch; 100 reproduces plain SNIPS.
    """
    if samples.n == 0:
        raise ConfigurationError("no samples")
    if not 0.0 < cap_percentile <= 100.0:
        raise ConfigurationError("cap_percentile must be in (0, 100]")
    raw = samples.weights
    threshold = float(np.percentile(raw, cap_percentile))
    capped = np.minimum(raw, threshold)
    value = float(np.sum(capped * samples.rewards) / np.sum(capped))
    return PolicyEstimate(
        policy_name=policy_name,
        estimator="CappedSNIPS",
        value=value,
        n=samples.n,
        effective_sample_size=_ess(capped),
        cap_threshold=threshold,
        max_weight_precap=float(raw.max()),
    )


def deterministic_ips(data: Dataset, policy: str) -> PolicyEstimate:
    """Exact 0/1-propensity IPS; only credits impressions where the
    evaluation policy agrees with the logging policy, so it can never
    exceed the logged mean reward."""
    if data.agreement is None or policy not in data.agreement:
        raise UnsupportedOperationError(
            "deterministic_ips needs policy-agreement flags, which only "
            "simulator-produced datasets carry"
        )
    agree = data.agreement[policy]
    value = float(np.mean(agree * data.reward.astype(np.float64)))
    n_agree = int(agree.sum())
    return PolicyEstimate(
        policy_name=policy,
        estimator="DeterministicIPS",
        value=value,
        n=data.n,
        effective_sample_size=float(max(n_agree, 1)),
        max_weight_precap=1.0,
    )
