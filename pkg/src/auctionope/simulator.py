"""Seeded winner-takes-all auction worlds with exact counterfactual truth.

Every random draw comes from a counter-based generator keyed by
(seed, purpose, policy), so adding policies never perturbs existing
streams and a single uniform draw per (auction, candidate) couples the
realized rewards of all policies (common random numbers).
"""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .logdata import MS_PER_DAY, Dataset

# Purpose ids for independent random streams.
_STREAM_CTR = 1
_STREAM_BID = 2
_STREAM_POLICY_NOISE = 3
_STREAM_REWARD = 4

_T0_DAY = 19_600  # arbitrary fixed epoch day for synthetic timestamps


@dataclass(frozen=True)
class PolicySpec:
    """A scoring function: pCTR = true_ctr^alignment * exp(sigma * g).

    alignment=1, sigma=0 is an oracle scorer; alignment=0 ignores ad
    quality entirely; negative alignment prefers bad ads. Together the two
    knobs control a policy's true lift over any logging policy.
    """

    name: str
    sigma: float = 1.0
    alignment: float = 1.0
    # Share another policy's noise stream (e.g. the logging policy's) to
    # model a candidate that tweaks an existing scorer rather than being an
    # unrelated model; lift is then driven by the alignment difference.
    noise_from: str | None = None


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_auctions: int
    policy_specs: tuple[PolicySpec, ...]
    logging_policy: str = "logging"
    n_candidates: int = 8
    n_segments: int = 4
    n_days: int = 14
    base_ctr: float = 0.001
    noise_sigma: float = 1.0  # bid log-normal scale
    ctr_beta_a: float = 2.0
    ctr_beta_b: float = 5.0

    def validate(self) -> None:
        if self.n_auctions < 1 or self.n_candidates < 2 or self.n_segments < 1:
            raise ConfigurationError("counts must be positive (n_candidates >= 2)")
        if not 0.0 < self.base_ctr < 1.0:
            raise ConfigurationError("base_ctr must be in (0, 1)")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be nonnegative")
        names = [p.name for p in self.policy_specs]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate policy names: {names}")
        if self.logging_policy not in names:
            raise ConfigurationError(
                f"logging policy {self.logging_policy!r} missing from policy_specs"
            )
        if self.n_days > self.n_auctions:
            raise ConfigurationError("n_days cannot exceed n_auctions")

    @property
    def eval_policies(self) -> list[str]:
        return [p.name for p in self.policy_specs if p.name != self.logging_policy]


def _rng(seed: int, *ids: int) -> np.random.Generator:
    key = np.random.SeedSequence([seed, *ids]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _policy_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _day_index(n: int, n_days: int) -> np.ndarray:
    return (np.arange(n, dtype=np.int64) * n_days) // n


@dataclass(frozen=True)
class PolicyOutcome:
    """Per-auction results of running one policy's scorer over the world."""

    winner: np.ndarray  # candidate index, ties broken by lowest index
    winner_ctr: np.ndarray  # true CTR of the chosen candidate
    realized: np.ndarray  # coupled Bernoulli reward of the chosen candidate
    score_of_logged_winner: np.ndarray  # this policy's score for pi_0's winner
    winner_score: np.ndarray


@dataclass
class SimulationWorld:
    config: SimConfig
    segment_key: np.ndarray
    day: np.ndarray
    outcomes: dict[str, PolicyOutcome]
    market_price: np.ndarray  # second-highest logging score per auction
    mean_true_ctr: float = 0.0

    @property
    def n(self) -> int:
        return self.config.n_auctions


def build_world(config: SimConfig) -> SimulationWorld:
    """Materialize candidate pools, policy scores, winners, and rewards."""
    config.validate()
    n, c, seed = config.n_auctions, config.n_candidates, config.seed

    beta = _rng(seed, _STREAM_CTR).beta(config.ctr_beta_a, config.ctr_beta_b, size=(n, c))
    scale = config.base_ctr * (config.ctr_beta_a + config.ctr_beta_b) / config.ctr_beta_a
    ctr = np.clip(beta * scale, 1e-12, 1.0)
    bids = _rng(seed, _STREAM_BID).lognormal(0.0, config.noise_sigma, size=(n, c))
    u = _rng(seed, _STREAM_REWARD).random(size=(n, c))

    rows = np.arange(n)

    def policy_scores(spec: PolicySpec) -> np.ndarray:
        stream = _policy_id(spec.noise_from or spec.name)
        g = _rng(seed, _STREAM_POLICY_NOISE, stream).standard_normal(size=(n, c))
        return bids * ctr**spec.alignment * np.exp(spec.sigma * g)

    log_spec = next(p for p in config.policy_specs if p.name == config.logging_policy)
    logging_scores = policy_scores(log_spec)
    w0 = np.argmax(logging_scores, axis=1)
    market_price = np.partition(logging_scores, c - 2, axis=1)[:, c - 2]

    outcomes: dict[str, PolicyOutcome] = {}
    for spec in config.policy_specs:
        scores = logging_scores if spec.name == config.logging_policy else policy_scores(spec)
        winner = np.argmax(scores, axis=1)  # np.argmax ties break to the lowest index
        outcomes[spec.name] = PolicyOutcome(
            winner=winner.astype(np.int32),
            winner_ctr=ctr[rows, winner],
            realized=(u[rows, winner] < ctr[rows, winner]).astype(np.int8),
            score_of_logged_winner=scores[rows, w0],
            winner_score=scores[rows, winner],
        )
    segment = (np.arange(n, dtype=np.int64) * config.n_segments) // n
    return SimulationWorld(
        config=config,
        segment_key=np.array([f"seg{int(s):02d}" for s in segment], dtype=object),
        day=_day_index(n, config.n_days),
        outcomes=outcomes,
        market_price=market_price,
        mean_true_ctr=float(ctr.mean()),
    )


@dataclass
class GroundTruth:
    """Exact counterfactual values, overall and per contiguous day block.

    ``realized`` is the coupled-Bernoulli replay value; ``expected`` is the
    click-noise-free mean true CTR of each policy's winners. Daily values
    use the expected form so day-level lift signs are exact.
    """

    realized: dict[str, float]
    expected: dict[str, float]
    daily: list[dict] = field(default_factory=list)  # policy, day, impressions, clicks, value
    per_segment: dict[str, dict[str, float]] = field(default_factory=dict)


def _ground_truth(world: SimulationWorld) -> GroundTruth:
    cfg = world.config
    truth = GroundTruth(
        realized={name: float(o.realized.mean()) for name, o in world.outcomes.items()},
        expected={name: float(o.winner_ctr.mean()) for name, o in world.outcomes.items()},
    )
    for name, o in world.outcomes.items():
        truth.per_segment[name] = {}
        for seg in dict.fromkeys(world.segment_key):
            mask = world.segment_key == seg
            truth.per_segment[name][seg] = float(o.winner_ctr[mask].mean())
        for d in range(cfg.n_days):
            mask = world.day == d
            truth.daily.append(
                {
                    "policy": name,
                    "day": d,
                    "impressions": int(mask.sum()),
                    "clicks": int(o.realized[mask].sum()),
                    "value": float(o.winner_ctr[mask].mean()),
                }
            )
    return truth


def simulate(config: SimConfig) -> tuple[Dataset, GroundTruth]:
    """Generate a logged dataset under the logging policy plus exact truth."""
    world = build_world(config)
    return dataset_from_world(world), _ground_truth(world)


def dataset_from_world(world: SimulationWorld) -> Dataset:
    cfg = world.config
    n = world.n
    log = world.outcomes[cfg.logging_policy]
    day_start = np.searchsorted(world.day, np.arange(cfg.n_days), side="left")
    offset = np.arange(n, dtype=np.int64) - day_start[world.day]
    ts = (_T0_DAY + world.day) * MS_PER_DAY + offset
    eval_names = cfg.eval_policies
    return Dataset(
        impression_id=np.array([f"imp{i:08d}" for i in range(n)], dtype=object),
        timestamp_ms=ts,
        segment_key=world.segment_key,
        reward=log.realized,
        score_logging=log.winner_score,
        score_eval={p: world.outcomes[p].score_of_logged_winner for p in eval_names},
        market_price=world.market_price,
        agreement={p: world.outcomes[p].winner == log.winner for p in eval_names},
    )


def counterfactual_value(world: SimulationWorld, policy: str) -> float:
    """Exact replay value of a policy: mean coupled realized reward."""
    if policy not in world.outcomes:
        raise ConfigurationError(f"unknown policy {policy!r}")
    return float(world.outcomes[policy].realized.mean())


@dataclass(frozen=True)
class DailyTruth:
    policy: str
    day: int
    impressions: int
    value: float  # expected (true-CTR) value of the policy on the day
    value_logging: float
    lift_pct: float  # relative lift in percent
    diff_points: float  # absolute difference in percentage points


def make_ab_schedule(world: SimulationWorld, n_days: int) -> list[DailyTruth]:
    """Per-day true lifts of every evaluation policy vs the logging policy."""
    cfg = world.config
    if n_days > world.n or n_days < 1:
        raise ConfigurationError("n_days must be in [1, n_auctions]")
    day = _day_index(world.n, n_days)
    log = world.outcomes[cfg.logging_policy]
    out = []
    for name in cfg.eval_policies:
        o = world.outcomes[name]
        for d in range(n_days):
            mask = day == d
            v = float(o.winner_ctr[mask].mean())
            v0 = float(log.winner_ctr[mask].mean())
            out.append(
                DailyTruth(
                    policy=name,
                    day=d,
                    impressions=int(mask.sum()),
                    value=v,
                    value_logging=v0,
                    lift_pct=(v / v0 - 1.0) * 100.0,
                    diff_points=(v - v0) * 100.0,
                )
            )
    return out


def expected_lift(config: SimConfig, policy: str) -> float:
    """Overall true relative lift (%) of a policy under this config."""
    world = build_world(config)
    v = world.outcomes[policy].winner_ctr.mean()
    v0 = world.outcomes[config.logging_policy].winner_ctr.mean()
    return float((v / v0 - 1.0) * 100.0)


def calibrate_alignment(
    base_config: SimConfig,
    target_lift_pct: float,
    alignment_range: tuple[float, float] = (-1.0, 4.0),
    tol: float = 0.1,
    max_iter: int = 40,
) -> float:
    """Bisect a shared-noise policy's alignment to hit a target true lift.

    The probe policy reuses the logging policy's noise stream, so lift is
    a monotone increasing function of alignment.
    """
    probe = "calibration-probe"
    log_spec = next(
        p for p in base_config.policy_specs if p.name == base_config.logging_policy
    )

    def lift_at(alignment: float) -> float:
        spec = PolicySpec(probe, log_spec.sigma, alignment, noise_from=log_spec.name)
        cfg = dataclasses.replace(
            base_config, policy_specs=tuple(base_config.policy_specs) + (spec,)
        )
        return expected_lift(cfg, probe)

    lo, hi = alignment_range
    if not lift_at(lo) <= target_lift_pct <= lift_at(hi):
        raise ConfigurationError(
            f"target lift {target_lift_pct}% outside reachable range "
            f"[{lift_at(lo):.2f}%, {lift_at(hi):.2f}%]"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        lift = lift_at(mid)
        if abs(lift - target_lift_pct) < tol:
            return mid
        if lift < target_lift_pct:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
