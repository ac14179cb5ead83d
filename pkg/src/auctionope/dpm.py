"""Discrete market-price model over quantile bins, and APS lookup.

The model discretizes the score axis into right-closed intervals
(b_{l-1}, b_l], estimates the per-bin probability mass of the market
price, and exposes the conditional winning probability h_l = p_l / S(b_{l-1})
as the approximate propensity score for any query score.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    EmptySegmentError,
    InvariantError,
    ModeMismatchError,
    UnknownSegmentError,
)
from .logdata import Dataset, group_by_segment

DEFAULT_Z_ALPHA_SQ = 3.8416  # (1.96)^2, two-sided 95% normal quantile squared
DEFAULT_APS_FLOOR = 1e-6
SERIALIZATION_VERSION = 1


def adaptive_bin_count(n: int, z_alpha_sq: float = DEFAULT_Z_ALPHA_SQ) -> int:
    """Largest bin count whose per-bin winning-rate CI meets the accuracy target.

    Returns floor((n / z_alpha_sq)^(1/3)), clamped to at least 1. Integer
    cube bracketing avoids float cube-root edge cases.
    """
    if n <= 0:
        raise EmptySegmentError("cannot size bins for an empty segment")
    if z_alpha_sq <= 0:
        raise ConfigurationError("z_alpha_sq must be positive")
    x = n / z_alpha_sq
    L = int(x ** (1.0 / 3.0))
    while L > 0 and L**3 > x:
        L -= 1
    while (L + 1) ** 3 <= x:
        L += 1
    return max(L, 1)


@dataclass(frozen=True)
class BinTable:
    """Right-closed quantile bins V_l = (b_{l-1}, b_l] with per-bin counts."""

    edges: np.ndarray  # length L+1, strictly increasing
    counts: np.ndarray  # length L, int64

    @property
    def L(self) -> int:
        return len(self.counts)

    def assign(self, scores: np.ndarray) -> np.ndarray:
        """1-based bin index per score; out-of-range clamps to boundary bins."""
        idx = np.searchsorted(self.edges, scores, side="left")
        return np.clip(idx, 1, self.L)


@dataclass(frozen=True)
class DpmModel:
    """Fitted market-price landscape for one segment.

    Arrays S and W have length L+1 (values at every edge b_0..b_L);
    p and h have length L (one value per bin).
    """

    segment_key: str
    bins: BinTable
    p: np.ndarray
    S: np.ndarray
    W: np.ndarray
    h: np.ndarray
    aps_floor: float = DEFAULT_APS_FLOOR

    @property
    def L(self) -> int:
        return self.bins.L

    def validate(self, atol: float = 1e-9) -> None:
        L = self.L
        e = self.bins.edges
        if len(e) != L + 1 or L < 1:
            raise InvariantError("edges must have L+1 entries with L >= 1")
        if not np.all(np.diff(e) > 0):
            raise InvariantError("bin edges must be strictly increasing")
        if abs(self.p.sum() - 1.0) > atol:
            raise InvariantError(f"sum(p) = {self.p.sum()} != 1")
        if np.max(np.abs(self.W + self.S - 1.0)) > atol:
            raise InvariantError("W + S != 1 at some edge")
        if abs(self.S[0] - 1.0) > atol or abs(self.W[0]) > atol:
            raise InvariantError("S(b0) != 1 or W(b0) != 0")
        if np.any(np.diff(self.W) < -atol) or np.any(np.diff(self.S) > atol):
            raise InvariantError("W must be nondecreasing and S nonincreasing")
        if np.max(np.abs(self.p - (self.S[:-1] - self.S[1:]))) > atol:
            raise InvariantError("p_l != S(b_{l-1}) - S(b_l)")
        if np.any(self.h <= 0) or np.any(self.h > 1 + atol):
            raise InvariantError("h must lie in (0, 1]")
        surv = np.cumprod(1.0 - self.h)
        if np.max(np.abs(surv - self.S[1:])) > atol:
            raise InvariantError("S(b_l) != prod_{j<=l}(1 - h_j)")

    def aps(self, score: float | np.ndarray) -> float | np.ndarray:
        """Approximate propensity of a score: floored hazard of its bin."""
        bin_idx = self.bins.assign(np.asarray(score, dtype=np.float64))
        out = np.maximum(self.h[bin_idx - 1], self.aps_floor)
        return float(out) if np.isscalar(score) else out


def fit_dpm(
    scores,
    L: int,
    aps_floor: float = DEFAULT_APS_FLOOR,
    segment_key: str = "",
) -> DpmModel:
    """Fit one discrete price model by equal-frequency binning.

    Edges are empirical quantiles at ranks l/L; b_0 sits just below the
    minimum so every training score lands in a bin. When ties leave fewer
    than L distinct edges, L is reduced with a warning.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64))
    n = len(s)
    if n == 0:
        raise EmptySegmentError("cannot fit a model on zero scores")
    if L < 1:
        raise ConfigurationError("L must be >= 1")
    L = min(L, n)

    # Inner edge b_l is the ceil(l*n/L)-th order statistic, so bin l holds
    # the slice of ~n/L sorted samples ending there.
    ranks = np.ceil(np.arange(1, L + 1) * n / L).astype(np.int64) - 1
    inner = s[ranks]
    uniq = np.unique(inner)
    if len(uniq) < L:
        warnings.warn(
            f"tied quantile edges reduced bin count from {L} to {len(uniq)}"
            f"{f' (segment {segment_key})' if segment_key else ''}",
            stacklevel=2,
        )
        inner = uniq
        L = len(inner)
    b0 = np.nextafter(s[0], -np.inf)
    edges = np.concatenate(([b0], inner))

    right = np.searchsorted(s, edges, side="right")
    counts = np.diff(right)
    tail = n - right  # samples strictly above each edge
    S = tail / n
    W = (n - tail) / n
    p = counts / n
    h = counts / np.maximum(tail[:-1], 1)  # S(b_{l-1})*n, never 0 after edge dedupe
    model = DpmModel(
        segment_key=segment_key,
        bins=BinTable(edges=edges, counts=counts.astype(np.int64)),
        p=p,
        S=S,
        W=W,
        h=h,
        aps_floor=aps_floor,
    )
    model.validate()
    return model


@dataclass(frozen=True)
class SegmentationChoice:
    feature: str
    r_squared: float
    degenerate: bool = False


def select_segmentation(
    data: Dataset,
    candidate_features: list[str],
    score_field: str = "logging",
) -> SegmentationChoice:
    """Pick the segmentation whose groups explain the most score variance.

    Computes ANOVA R^2 = SSB / SST per candidate and returns the argmax;
    ties break in candidate order. All-identical scores are flagged
    degenerate with R^2 = 0.
    """
    if not candidate_features:
        raise ConfigurationError("need at least one candidate feature")
    scores = data.scores(score_field)
    grand = scores.mean()
    sst = float(np.sum((scores - grand) ** 2))
    if sst == 0.0:
        return SegmentationChoice(candidate_features[0], 0.0, degenerate=True)
    best: SegmentationChoice | None = None
    for feature in candidate_features:
        groups = group_by_segment(data, feature)
        ssb = sum(len(idx) * (scores[idx].mean() - grand) ** 2 for idx in groups.values())
        r2 = float(ssb / sst)
        if best is None or r2 > best.r_squared:
            best = SegmentationChoice(feature, r2)
    return best


@dataclass
class ApsTable:
    """Per-segment fitted models serving APS lookups for one policy."""

    policy_name: str
    models: dict[str, DpmModel]
    metadata: dict = field(default_factory=dict)

    def aps(self, segment: str, score: float) -> float:
        if segment not in self.models:
            raise UnknownSegmentError(f"segment {segment!r} not in table for {self.policy_name!r}")
        return float(self.models[segment].aps(float(score)))

    def aps_many(self, segments: np.ndarray, scores: np.ndarray) -> np.ndarray:
        """Vectorized lookup across mixed segments."""
        out = np.empty(len(scores), dtype=np.float64)
        segs = np.asarray(segments, dtype=object)
        for key, model in self.models.items():
            mask = segs == key
            if mask.any():
                out[mask] = model.aps(scores[mask])
        covered = np.isin(segs, list(self.models.keys()))
        if not covered.all():
            missing = sorted(set(segs[~covered]))
            raise UnknownSegmentError(f"segments not in table: {missing}")
        return out

    def validate(self) -> None:
        for model in self.models.values():
            model.validate()


def fit_dpm_segmented(
    data: Dataset,
    score_source: str,
    market_price_mode: str = "winner_proxy",
    z_alpha_sq: float = DEFAULT_Z_ALPHA_SQ,
    aps_floor: float = DEFAULT_APS_FLOOR,
    segment_feature: str = "segment_key",
    static_bins: int | None = None,
) -> ApsTable:
    """Fit one model per segment; bin counts are adaptive unless pinned.

    Training samples are logged market prices in ``runner_up`` mode (every
    record must carry one) or the shown ads' ``score_source`` scores in
    ``winner_proxy`` mode.
    """
    if market_price_mode not in ("runner_up", "winner_proxy"):
        raise ConfigurationError(f"unknown market_price_mode {market_price_mode!r}")
    if market_price_mode == "runner_up":
        if not data.has_market_price():
            raise ModeMismatchError(
                "runner_up mode requires market_price on every record; "
                "use winner_proxy for logs without runner-up scores"
            )
        train = data.market_price
    else:
        train = data.scores(score_source)
    groups = group_by_segment(data, segment_feature)
    models = {}
    for key, idx in groups.items():
        L = static_bins if static_bins is not None else adaptive_bin_count(len(idx), z_alpha_sq)
        models[key] = fit_dpm(train[idx], L, aps_floor=aps_floor, segment_key=key)
    return ApsTable(
        policy_name=score_source,
        models=models,
        metadata={
            "market_price_mode": market_price_mode,
            "segment_feature": segment_feature,
            "z_alpha_sq": z_alpha_sq,
            "static_bins": static_bins,
            # Each policy's model is fitted on that policy's scores of the
            # logged shown ads (winner_proxy) or on logged market prices.
            "training_field": "market_price" if market_price_mode == "runner_up" else score_source,
        },
    )


def aps(table: ApsTable, segment: str, score: float) -> float:
    """Approximate propensity score of (segment, score) under a fitted table."""
    return table.aps(segment, score)


# --- serialization ---------------------------------------------------------


def table_to_doc(table: ApsTable) -> dict:
    return {
        "version": SERIALIZATION_VERSION,
        "model_type": "dpm",
        "policy": table.policy_name,
        "metadata": table.metadata,
        "segments": [
            {
                "key": key,
                "aps_floor": m.aps_floor,
                "edges": m.bins.edges.tolist(),
                "counts": m.bins.counts.tolist(),
                "p": m.p.tolist(),
                "S": m.S.tolist(),
                "W": m.W.tolist(),
                "h": m.h.tolist(),
            }
            for key, m in table.models.items()
        ],
    }


def table_from_doc(doc: dict) -> ApsTable:
    if doc.get("version") != SERIALIZATION_VERSION:
        raise ConfigurationError(f"unsupported model document version {doc.get('version')!r}")
    models = {}
    for seg in doc["segments"]:
        model = DpmModel(
            segment_key=seg["key"],
            bins=BinTable(
                edges=np.asarray(seg["edges"], dtype=np.float64),
                counts=np.asarray(seg["counts"], dtype=np.int64),
            ),
            p=np.asarray(seg["p"], dtype=np.float64),
            S=np.asarray(seg["S"], dtype=np.float64),
            W=np.asarray(seg["W"], dtype=np.float64),
            h=np.asarray(seg["h"], dtype=np.float64),
            aps_floor=float(seg["aps_floor"]),
        )
        model.validate()
        models[seg["key"]] = model
    return ApsTable(policy_name=doc["policy"], models=models, metadata=doc.get("metadata", {}))


def save_table(table: ApsTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table_to_doc(table), indent=1, sort_keys=True))


def load_table(path: str | Path) -> ApsTable:
    return table_from_doc(json.loads(Path(path).read_text()))
