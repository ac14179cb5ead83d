"""Impression-log data model: ingestion, validation, and segment grouping.

The canonical on-disk format is a UTF-8 CSV with header columns
``impression_id, timestamp_ms, segment_key, reward, score_logging,
score_eval.<policy>..., market_price``. Multiple ``score_eval.<policy>``
columns are allowed; a missing market price is an empty field.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DatasetEmptyError, SchemaError

MS_PER_DAY = 86_400_000
EVAL_PREFIX = "score_eval."


@dataclass(frozen=True)
class ColumnMapping:
    """Maps canonical column names onto the columns of an external CSV."""

    impression_id: str = "impression_id"
    timestamp_ms: str = "timestamp_ms"
    segment_key: str = "segment_key"
    reward: str = "reward"
    score_logging: str = "score_logging"
    market_price: str = "market_price"
    eval_prefix: str = EVAL_PREFIX


@dataclass(frozen=True)
class ImpressionRecord:
    """One logged auction outcome (the shown ad and its context)."""

    impression_id: str
    timestamp_ms: int
    segment_key: str
    reward: int
    score_logging: float
    score_eval: dict[str, float]
    market_price: float | None = None

    def __post_init__(self):
        if self.reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {self.reward}")
        if self.market_price is not None and self.score_logging < self.market_price:
            raise ValueError("winner consistency: score_logging < market_price")


@dataclass
class Dataset:
    """Columnar, immutable-after-construction collection of impressions.

    ``agreement`` maps each evaluation policy to a boolean array marking
    auctions where that policy picks the same winner as the logging policy.
    Only simulator-produced datasets carry it; it is not part of the
    canonical CSV and is dropped on write.
    """

    impression_id: np.ndarray
    timestamp_ms: np.ndarray
    segment_key: np.ndarray
    reward: np.ndarray
    score_logging: np.ndarray
    score_eval: dict[str, np.ndarray]
    market_price: np.ndarray  # NaN where absent
    agreement: dict[str, np.ndarray] | None = None
    n_rejected: int = 0
    reject_reasons: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.impression_id)
        if n == 0:
            raise DatasetEmptyError("dataset has no records")
        for name, col in self.score_eval.items():
            if len(col) != n:
                raise SchemaError(f"score_eval.{name} length mismatch")

    @property
    def n(self) -> int:
        return len(self.impression_id)

    @property
    def policy_names(self) -> list[str]:
        return list(self.score_eval.keys())

    def has_market_price(self) -> bool:
        return bool(np.all(np.isfinite(self.market_price)))

    def record(self, i: int) -> ImpressionRecord:
        mp = float(self.market_price[i])
        return ImpressionRecord(
            impression_id=str(self.impression_id[i]),
            timestamp_ms=int(self.timestamp_ms[i]),
            segment_key=str(self.segment_key[i]),
            reward=int(self.reward[i]),
            score_logging=float(self.score_logging[i]),
            score_eval={p: float(c[i]) for p, c in self.score_eval.items()},
            market_price=None if np.isnan(mp) else mp,
        )

    def subset(self, idx: np.ndarray) -> "Dataset":
        """View of the records selected by a boolean mask or index array."""
        return Dataset(
            impression_id=self.impression_id[idx],
            timestamp_ms=self.timestamp_ms[idx],
            segment_key=self.segment_key[idx],
            reward=self.reward[idx],
            score_logging=self.score_logging[idx],
            score_eval={p: c[idx] for p, c in self.score_eval.items()},
            market_price=self.market_price[idx],
            agreement=None if self.agreement is None
            else {p: a[idx] for p, a in self.agreement.items()},
        )

    def scores(self, source: str) -> np.ndarray:
        """Score column for ``source`` in {"logging", <policy name>}."""
        if source == "logging":
            return self.score_logging
        if source not in self.score_eval:
            raise ConfigurationError(f"unknown policy {source!r}; have {self.policy_names}")
        return self.score_eval[source]

    def segment_feature(self, feature: str) -> np.ndarray:
        """Per-record segment labels for a declared segmentation feature."""
        if feature == "segment_key":
            return self.segment_key
        if feature == "day":
            days = self.timestamp_ms // MS_PER_DAY
            base = days.min()
            return np.array([f"day{d - base:03d}" for d in days], dtype=object)
        raise ConfigurationError(
            f"unknown segmentation feature {feature!r}; declared: segment_key, day"
        )

    @classmethod
    def from_records(cls, records: list[ImpressionRecord]) -> "Dataset":
        if not records:
            raise DatasetEmptyError("no records")
        policies = list(records[0].score_eval.keys())
        for r in records:
            if list(r.score_eval.keys()) != policies:
                raise SchemaError("inconsistent score_eval policies across records")
        return cls(
            impression_id=np.array([r.impression_id for r in records], dtype=object),
            timestamp_ms=np.array([r.timestamp_ms for r in records], dtype=np.int64),
            segment_key=np.array([r.segment_key for r in records], dtype=object),
            reward=np.array([r.reward for r in records], dtype=np.int8),
            score_logging=np.array([r.score_logging for r in records], dtype=np.float64),
            score_eval={
                p: np.array([r.score_eval[p] for r in records], dtype=np.float64)
                for p in policies
            },
            market_price=np.array(
                [np.nan if r.market_price is None else r.market_price for r in records],
                dtype=np.float64,
            ),
        )


def ingest_csv(
    path: str | Path,
    mapping: ColumnMapping | None = None,
    reject_report_path: str | Path | None = None,
) -> Dataset:
    """Read and validate a canonical (or column-mapped) impression log.

    Rows failing validation are quarantined to a sidecar CSV next to the
    input (``<stem>.rejects.csv`` unless ``reject_report_path`` is given)
    and counted on the returned dataset; they are never silently dropped.
    """
    mapping = mapping or ColumnMapping()
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            dtype={mapping.impression_id: str, mapping.segment_key: str},
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError:
        raise DatasetEmptyError(f"{path} is empty") from None
    if len(frame) == 0:
        raise DatasetEmptyError(f"{path} has a header but no rows")

    for canonical in ("impression_id", "timestamp_ms", "segment_key", "reward", "score_logging"):
        col = getattr(mapping, canonical)
        if col not in frame.columns:
            raise SchemaError(f"missing column {col!r} (canonical {canonical!r})")
    eval_cols = [c for c in frame.columns if c.startswith(mapping.eval_prefix)]
    policies = [c[len(mapping.eval_prefix):] for c in eval_cols]

    n = len(frame)
    reward = pd.to_numeric(frame[mapping.reward], errors="coerce").to_numpy(dtype=np.float64)
    score_log = pd.to_numeric(frame[mapping.score_logging], errors="coerce").to_numpy(np.float64)
    if mapping.market_price in frame.columns:
        market = pd.to_numeric(frame[mapping.market_price], errors="coerce").to_numpy(np.float64)
        market_given = frame[mapping.market_price].notna().to_numpy()
    else:
        market = np.full(n, np.nan)
        market_given = np.zeros(n, dtype=bool)
    evals = {
        p: pd.to_numeric(frame[mapping.eval_prefix + p], errors="coerce").to_numpy(np.float64)
        for p in policies
    }

    # Reason precedence mirrors column order; one reason reported per row.
    reasons = np.full(n, "", dtype=object)

    def flag(mask: np.ndarray, reason: str):
        mask = mask & (reasons == "")
        reasons[mask] = reason

    flag(~np.isin(reward, (0.0, 1.0)), "reward not in {0,1}")
    flag(~np.isfinite(score_log) | (score_log < 0), "non-finite or negative score_logging")
    for p in policies:
        flag(~np.isfinite(evals[p]) | (evals[p] < 0), f"non-finite or negative score_eval.{p}")
    flag(market_given & (~np.isfinite(market) | (market < 0)), "non-finite or negative market_price")
    flag(market_given & np.isfinite(market) & (market > score_log), "winner consistency")

    bad = reasons != ""
    rejects = [(int(i) + 2, str(reasons[i])) for i in np.flatnonzero(bad)]  # +2: header is line 1
    if rejects:
        report = Path(reject_report_path) if reject_report_path else path.with_suffix(".rejects.csv")
        with open(report, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["line", "reason"])
            w.writerows(rejects)
    keep = ~bad
    if not keep.any():
        raise DatasetEmptyError(f"{path}: all {n} rows failed validation")

    market_kept = market[keep].copy()
    market_kept[~market_given[keep]] = np.nan
    return Dataset(
        impression_id=frame[mapping.impression_id].to_numpy(dtype=object)[keep],
        timestamp_ms=pd.to_numeric(frame[mapping.timestamp_ms]).to_numpy(np.int64)[keep],
        segment_key=frame[mapping.segment_key].to_numpy(dtype=object)[keep],
        reward=reward[keep].astype(np.int8),
        score_logging=score_log[keep],
        score_eval={p: evals[p][keep] for p in policies},
        market_price=market_kept,
        n_rejected=len(rejects),
        reject_reasons=rejects,
    )


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset in the canonical CSV format (round-trips exactly)."""
    cols = {
        "impression_id": data.impression_id,
        "timestamp_ms": data.timestamp_ms,
        "segment_key": data.segment_key,
        "reward": data.reward.astype(int),
        "score_logging": data.score_logging,
    }
    for p in data.policy_names:
        cols[EVAL_PREFIX + p] = data.score_eval[p]
    cols["market_price"] = data.market_price
    frame = pd.DataFrame(cols)
    frame.to_csv(path, index=False, lineterminator="\n", float_format=None)


def group_by_segment(data: Dataset, feature: str) -> dict[str, np.ndarray]:
    """Partition record indices by segment label, preserving input order.

    Keys appear in first-occurrence order; the index lists are disjoint
    and their union covers every record.
    """
    labels = data.segment_feature(feature)
    groups: dict[str, list[int]] = {}
    for i, key in enumerate(labels):
        groups.setdefault(str(key), []).append(i)
    return {k: np.array(v, dtype=np.int64) for k, v in groups.items()}
