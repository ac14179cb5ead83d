"""Acceptance gate: ten end-to-end criteria with pinned tolerances.

Each test prints a single PASS/FAIL line. Criteria that sweep many
simulator replications pin their seeds so reruns are bit-identical.
"""
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
import yaml

from auctionope import pipeline
from auctionope.cli import EXIT_OK, main
from auctionope.config import config_from_dict
from auctionope.dpm import adaptive_bin_count, fit_dpm, fit_dpm_segmented
from auctionope.estimators import (
    WeightedSamples,
    capped_snips,
    deterministic_ips,
    ips,
    snips,
    weights_from_aps,
)
from auctionope.metrics import LiftPair, ctr_lift, mda, paired_ttest
from auctionope.simulator import (
    PolicySpec,
    SimConfig,
    build_world,
    dataset_from_world,
    make_ab_schedule,
)

MS_PER_DAY = 86_400_000


def _verdict(num: int, label: str, ok: bool, detail: str = "") -> None:
    print(f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {label}"
          f"{' | ' + detail if detail else ''}")
    assert ok, f"criterion {num} failed: {label} {detail}"


# ---------------------------------------------------------------- criterion 1


def test_criterion_01_dpm_invariant_suite():
    t0 = time.time()
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(200):
        n = int(rng.integers(100, 100_001))
        kind = rng.integers(0, 3)
        if kind == 0:
            scores = rng.lognormal(0.0, 1.5, n)
        elif kind == 1:
            scores = rng.uniform(1e-6, 10.0, n)
        else:
            scores = np.round(rng.gamma(2.0, 3.0, n), 2) + 1e-9  # heavy ties
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit_dpm(scores, adaptive_bin_count(n))
        model.validate(atol=1e-9)  # raises on any violated invariant
    elapsed = time.time() - t0
    ok = elapsed < 30.0
    _verdict(1, "DPM invariants hold to 1e-9 on 200 random datasets", ok,
             f"elapsed {elapsed:.1f}s < 30s")


# ---------------------------------------------------------------- criterion 2


def test_criterion_02_adaptive_sizing_floor_rule():
    t0 = time.time()
    rng = np.random.default_rng(2)
    ns = np.unique(np.concatenate([
        rng.integers(1, 10**7 + 1, size=10_000),
        [1, 2, 3, 10_000, 500_000, 10**7],
    ]))
    for n in ns:
        L = adaptive_bin_count(int(n))
        x = n / 3.8416
        # integer cube-bracketing oracle for floor(x^(1/3)), clamped to 1
        lo = 1
        while (lo + 1) ** 3 <= x:
            lo += 1
        assert L == lo, (n, L, lo)
    elapsed = time.time() - t0
    _verdict(2, "adaptive_bin_count matches floor((n/3.8416)^(1/3)) oracle",
             elapsed < 5.0, f"{len(ns)} points, elapsed {elapsed:.1f}s < 5s")


@pytest.mark.xfail(
    strict=True,
    reason=(
        "the stated n-range for L in [48, 50] is wrong at the bottom: "
        "3.8416 * 48^3 = 424850.227, so n = 424849 and n = 424850 give "
        "L = 47 under the floor rule; the true lower bound is 424851. "
        "The floor rule itself is verified exhaustively above."
    ),
)
def test_criterion_02b_stated_range_endpoints():
    for n in range(424_849, 424_852):
        assert 48 <= adaptive_bin_count(n) <= 50, (n, adaptive_bin_count(n))
    assert adaptive_bin_count(509_591) == 50


# ---------------------------------------------------------------- criterion 3


def test_criterion_03_quantile_binning_oracle():
    t0 = time.time()
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 10_001))
        L = int(rng.integers(1, 16))
        scores = rng.lognormal(0.0, 1.0, n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit_dpm(scores, L)
        # brute force: sort, slice into L runs of ceil(l*n/L) cumulative
        # length, and assign each score to the first slice whose max
        # bounds it from above
        s = np.sort(scores)
        bounds = [s[int(np.ceil(l * n / model.L)) - 1] for l in range(1, model.L + 1)]
        brute = np.empty(n, dtype=int)
        for i, x in enumerate(scores):
            for l, b in enumerate(bounds, start=1):
                if x <= b:
                    brute[i] = l
                    break
            else:
                brute[i] = model.L
        np.testing.assert_array_equal(model.bins.assign(scores), brute)
    elapsed = time.time() - t0
    _verdict(3, "fit_dpm assignments match brute-force sort-and-slice",
             elapsed < 10.0, f"elapsed {elapsed:.1f}s < 10s")


# ---------------------------------------------------------------- criterion 4


def test_criterion_04_deterministic_collapse():
    t0 = time.time()
    strict_checked = 0
    for seed in range(50):
        cfg = SimConfig(
            seed=seed,
            n_auctions=100_000,
            policy_specs=(
                PolicySpec("logging", sigma=1.0),
                PolicySpec("pi", sigma=1.2, alignment=0.8),
            ),
            n_candidates=6,
            base_ctr=0.02,
        )
        world = build_world(cfg)
        data = dataset_from_world(world)
        logged = float(data.reward.mean())
        est = deterministic_ips(data, "pi")
        assert est.value <= logged + 1e-15, seed
        disagree = ~data.agreement["pi"]
        if np.any(disagree & (data.reward == 1)):
            assert est.value < logged, seed
            strict_checked += 1
    elapsed = time.time() - t0
    _verdict(4, "deterministic replay never exceeds the logged reward",
             elapsed < 60.0,
             f"50 seeds, strict on {strict_checked}, elapsed {elapsed:.1f}s < 60s")


# -------------------------------------------------- shared heavy-run helpers


STRESS_POLICIES = (
    PolicySpec("logging", sigma=1.0, alignment=1.0),
    PolicySpec("e1", sigma=0.6, alignment=1.0),
    PolicySpec("e2", sigma=1.2, alignment=0.6),
    PolicySpec("e3", sigma=1.0, alignment=1.3),
)


def _stress_config(seed: int, n: int, n_segments: int = 4) -> SimConfig:
    return SimConfig(
        seed=seed,
        n_auctions=n,
        policy_specs=STRESS_POLICIES,
        n_candidates=10,
        n_segments=n_segments,
        n_days=14,
        base_ctr=0.02,
        noise_sigma=0.5,
        ctr_beta_a=0.8,
        ctr_beta_b=5.0,
    )


def _lift_errors(world, data, static_bins=None):
    """Squared lift error per (policy, estimator) for one replication."""
    cfg = world.config
    kwargs = {"static_bins": static_bins} if static_bins is not None else {}
    tab_log = fit_dpm_segmented(data, "logging", **kwargs)
    logged = float(data.reward.mean())
    v0 = world.outcomes[cfg.logging_policy].winner_ctr.mean()
    out = {}
    for policy in cfg.eval_policies:
        tab = fit_dpm_segmented(data, policy, **kwargs)
        samples = weights_from_aps(data, policy, tab, tab_log)
        truth = (world.outcomes[policy].winner_ctr.mean() / v0 - 1.0) * 100.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for name, est in (
                ("ips", ips(samples)),
                ("snips", snips(samples)),
                ("capped_snips", capped_snips(samples, 99.0)),
            ):
                lift = ctr_lift(est.value, logged)
                out.setdefault(name, []).append((lift - truth) ** 2)
    return {k: float(np.mean(v)) for k, v in out.items()}


# ---------------------------------------------------------------- criterion 5


def test_criterion_05_estimator_stability_ordering():
    t0 = time.time()
    per_rep = {"ips": [], "snips": [], "capped_snips": []}
    for rep in range(30):
        world = build_world(_stress_config(100 + rep, 1_000_000))
        errors = _lift_errors(world, dataset_from_world(world))
        for name, err in errors.items():
            per_rep[name].append(err)
    rmse = {k: float(np.sqrt(np.mean(v))) for k, v in per_rep.items()}
    _, p_is = paired_ttest(per_rep["ips"], per_rep["snips"])
    _, p_sc = paired_ttest(per_rep["snips"], per_rep["capped_snips"])
    elapsed = time.time() - t0
    ok = (
        rmse["ips"] > rmse["snips"] > rmse["capped_snips"]
        and p_is < 0.05
        and p_sc < 0.05
        and elapsed < 600.0
    )
    _verdict(
        5,
        "RMSE(IPS) > RMSE(SNIPS) > RMSE(CappedSNIPS), gaps at p < 0.05",
        ok,
        f"RMSE {rmse['ips']:.1f} > {rmse['snips']:.1f} > "
        f"{rmse['capped_snips']:.1f}, p {p_is:.2e}/{p_sc:.2e}, "
        f"elapsed {elapsed:.0f}s < 600s",
    )


# ---------------------------------------------------------------- criterion 6


def test_criterion_06_binning_ablation_ordering():
    t0 = time.time()
    settings = {"adaptive": None, "100": 100, "1000": 1000, "10000": 10000}
    per_rep = {k: [] for k in settings}
    for rep in range(30):
        world = build_world(_stress_config(200 + rep, 500_000, n_segments=1))
        data = dataset_from_world(world)
        for label, static in settings.items():
            err = _lift_errors(world, data, static_bins=static)["capped_snips"]
            per_rep[label].append(err)
    rmse = {k: float(np.sqrt(np.mean(v))) for k, v in per_rep.items()}
    best_static = min(rmse[k] for k in ("100", "1000", "10000"))
    elapsed = time.time() - t0
    ok = rmse["adaptive"] <= best_static * 1.05 and elapsed < 600.0
    _verdict(
        6,
        "adaptive binning RMSE <= best static binning (5% tie margin)",
        ok,
        f"adaptive {rmse['adaptive']:.2f} vs static min {best_static:.2f}, "
        f"elapsed {elapsed:.0f}s < 600s",
    )


# ---------------------------------------------------------------- criterion 7


def _separated_config(seed: int) -> SimConfig:
    # shared-noise candidates calibrated to roughly +30% / +10% / -10% lift
    return SimConfig(
        seed=seed,
        n_auctions=140_000,
        policy_specs=(
            PolicySpec("logging", sigma=1.5, alignment=1.0),
            PolicySpec("up30", sigma=1.5, alignment=2.53, noise_from="logging"),
            PolicySpec("up10", sigma=1.5, alignment=1.35, noise_from="logging"),
            PolicySpec("dn10", sigma=1.5, alignment=0.72, noise_from="logging"),
        ),
        n_candidates=12,
        n_segments=4,
        n_days=14,
        base_ctr=0.05,
        noise_sigma=0.5,
        ctr_beta_a=0.8,
        ctr_beta_b=5.0,
    )


def test_criterion_07_directional_accuracy_and_separability(tmp_path):
    t0 = time.time()
    perfect = 0
    for rep in range(30):
        cfg = _separated_config(300 + rep)
        world = build_world(cfg)
        data = dataset_from_world(world)
        truth = {(r.policy, r.day): r.lift_pct for r in make_ab_schedule(world, 14)}
        day = (data.timestamp_ms // MS_PER_DAY)
        day = day - day.min()
        tab_log = fit_dpm_segmented(data, "logging")
        pairs = []
        for policy in cfg.eval_policies:
            tab = fit_dpm_segmented(data, policy)
            samples = weights_from_aps(data, policy, tab, tab_log)
            for d in range(14):
                mask = day == d
                sub = WeightedSamples(samples.rewards[mask], samples.weights[mask])
                lift = ctr_lift(capped_snips(sub, 99.0).value, float(data.reward[mask].mean()))
                pairs.append(LiftPair(f"{policy}/d{d}", truth[(policy, d)], lift))
        perfect += mda(pairs) == 100.0

    # near-identical policies: the report must flag low separability
    doc = {
        "output_dir": str(tmp_path),
        "simulation": {
            "seed": 7,
            "n_auctions": 20_000,
            "n_candidates": 12,
            "n_segments": 4,
            "n_days": 14,
            "base_ctr": 0.05,
            "noise_sigma": 0.5,
            "ctr_beta_a": 0.8,
            "ctr_beta_b": 5.0,
            "policies": [
                {"name": "logging", "sigma": 1.5, "alignment": 1.0},
                {"name": "twin", "sigma": 1.5, "alignment": 1.0, "noise_from": "logging"},
            ],
        },
    }
    cfg = config_from_dict(doc)
    pipeline.run_simulate(cfg)
    pipeline.run_evaluate(cfg)
    pipeline.run_report(cfg)
    truths = [abs(r.lift_pct) for r in make_ab_schedule(build_world(cfg.simulation), 14)]
    assert max(truths) < 1.0  # the fixture really is near-identical
    flagged = "LOW SEPARABILITY" in (tmp_path / pipeline.REPORT_MD).read_text()

    elapsed = time.time() - t0
    ok = perfect >= 27 and flagged and elapsed < 600.0
    _verdict(
        7,
        "daily MDA 100% in >= 27/30 seeds at lifts {+30,+10,-10}%, "
        "near-identical run flagged",
        ok,
        f"perfect seeds {perfect}/30, flagged={flagged}, "
        f"elapsed {elapsed:.0f}s < 600s",
    )


# ---------------------------------------------------------------- criterion 8


def test_criterion_08_metric_arithmetic():
    t0 = time.time()
    lift = ctr_lift(0.001434, 0.001065)
    pairs = [LiftPair(str(i), 1.0, 1.0) for i in range(13)] + [LiftPair("13", 1.0, -1.0)]
    acc = mda(pairs)
    elapsed = time.time() - t0
    ok = abs(lift - 34.65) <= 0.01 and abs(acc - 92.9) <= 0.05 and elapsed < 1.0
    _verdict(8, "ctr_lift and MDA fixtures at pinned tolerances", ok,
             f"lift {lift:.3f}% ~ 34.65, mda {acc:.2f}% ~ 92.9")


# ---------------------------------------------------------------- criterion 9


def test_criterion_09_snips_identities():
    t0 = time.time()
    # identical-policy evaluation reproduces the logged empirical CTR exactly
    cfg = _separated_config(42)
    data = dataset_from_world(build_world(cfg))
    alias_scores = {"same": data.score_logging}
    alias = type(data)(
        impression_id=data.impression_id,
        timestamp_ms=data.timestamp_ms,
        segment_key=data.segment_key,
        reward=data.reward,
        score_logging=data.score_logging,
        score_eval=alias_scores,
        market_price=data.market_price,
    )
    tab_log = fit_dpm_segmented(alias, "logging")
    tab_same = fit_dpm_segmented(alias, "same")
    samples = weights_from_aps(alias, "same", tab_same, tab_log)
    identity_ok = snips(samples).value == float(data.reward.mean())

    # weight-rescaling invariance to 1e-12 on 1000 random weight vectors
    rng = np.random.default_rng(9)
    scale_ok = True
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        w = rng.lognormal(0.0, 2.0, n)
        r = rng.integers(0, 2, n).astype(float)
        c = float(rng.uniform(1e-3, 1e3))
        a = snips(WeightedSamples(r, w)).value
        b = snips(WeightedSamples(r, w * c)).value
        if abs(a - b) > 1e-12:
            scale_ok = False
            break
    elapsed = time.time() - t0
    ok = identity_ok and scale_ok and elapsed < 5.0
    _verdict(9, "SNIPS identity and rescaling invariance", ok,
             f"identity={identity_ok}, scale={scale_ok}, elapsed {elapsed:.1f}s < 5s")


# --------------------------------------------------------------- criterion 10


def test_criterion_10_end_to_end_determinism(tmp_path):
    t0 = time.time()
    outputs = []
    for run in ("run_a", "run_b"):
        out = tmp_path / run
        doc = {
            "output_dir": str(out),
            "simulation": {
                "seed": 31,
                "n_auctions": 1_000_000,
                "n_candidates": 8,
                "n_segments": 4,
                "n_days": 14,
                "base_ctr": 0.02,
                "noise_sigma": 0.5,
                "ctr_beta_a": 0.8,
                "ctr_beta_b": 5.0,
                "policies": [
                    {"name": "logging", "sigma": 1.0, "alignment": 1.0},
                    {"name": "cand", "sigma": 1.0, "alignment": 1.5, "noise_from": "logging"},
                ],
            },
            "baseline": {"enabled": True},
            "estimators": {"estimators": ["ips", "snips", "capped_snips"]},
        }
        cfg_path = tmp_path / f"{run}.yaml"
        cfg_path.write_text(yaml.safe_dump(doc))
        for stage in ("simulate", "evaluate", "report"):
            assert main([stage, "-c", str(cfg_path)]) == EXIT_OK, stage
        outputs.append(out)
    a, b = outputs
    same = all(
        (a / name).read_bytes() == (b / name).read_bytes()
        for name in (
            pipeline.METRICS_CSV,
            pipeline.REPORT_MD,
            pipeline.ESTIMATES_CSV,
            pipeline.SUMMARY_TXT,
        )
    )
    elapsed = time.time() - t0
    ok = same and elapsed < 120.0
    _verdict(10, "two full pipeline runs are byte-identical",
             ok, f"elapsed {elapsed:.0f}s < 120s")
