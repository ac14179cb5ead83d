"""End-to-end experiment stages: simulate, evaluate, report, ablate.

Each stage reads and writes plain CSV/JSON/Markdown artifacts in the
configured output directory so runs are reproducible and inspectable.
All stages are deterministic for a fixed config.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import dpm as dpm_mod
from . import estimators as est_mod
from . import metrics as met_mod
from .config import ExperimentConfig, dump_config
from .dpm import ApsTable, BinTable, fit_dpm_segmented, select_segmentation
from .errors import (
    ConfigurationError,
    DegenerateTestError,
    MissingArtifactError,
    UndefinedCorrelationError,
)
from .logdata import EVAL_PREFIX, MS_PER_DAY, Dataset, ingest_csv, write_csv
from .parametric import ParametricFit, fit_to_doc, parametric_aps, select_best_fit
from .simulator import build_world, dataset_from_world, _ground_truth

LOG_CSV = "log.csv"
GROUND_TRUTH_CSV = "ground_truth.csv"
AGREEMENT_CSV = "agreement.csv"
WORLD_META_JSON = "world_meta.json"
ESTIMATES_CSV = "estimates.csv"
DAILY_ESTIMATES_CSV = "daily_estimates.csv"
METRICS_CSV = "metrics.csv"
SUMMARY_TXT = "summary.txt"
EFFECTIVE_CONFIG = "effective_config.yaml"
DAILY_TREND_CSV = "daily_trend.csv"
REPORT_MD = "report.md"

ARTIFACT_VERSION = 1


# --- simulate ---------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig) -> Path:
    """Write the logged dataset, exact ground truth, and world metadata."""
    if cfg.simulation is None:
        raise ConfigurationError("simulate stage requires a simulation config")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = build_world(cfg.simulation)
    data = dataset_from_world(world)
    truth = _ground_truth(world)

    write_csv(data, out / LOG_CSV)
    pd.DataFrame(truth.daily).to_csv(out / GROUND_TRUTH_CSV, index=False, lineterminator="\n")
    agree = pd.DataFrame({"impression_id": data.impression_id})
    for p, flags in data.agreement.items():
        agree[f"agree.{p}"] = flags.astype(int)
    agree.to_csv(out / AGREEMENT_CSV, index=False, lineterminator="\n")
    meta = {
        "version": ARTIFACT_VERSION,
        "config": {
            **{k: v for k, v in cfg.simulation.__dict__.items() if k != "policy_specs"},
            "policies": [s.__dict__ for s in cfg.simulation.policy_specs],
        },
        "realized_values": truth.realized,
        "expected_values": truth.expected,
    }
    (out / WORLD_META_JSON).write_text(json.dumps(meta, indent=1, sort_keys=True))
    dump_config(cfg, out / EFFECTIVE_CONFIG)
    return out


# --- evaluate ---------------------------------------------------------------


@dataclass
class ParametricApsTable:
    """Parametric counterpart of an ApsTable on the shared DPM bin grid."""

    policy_name: str
    fits: dict[str, tuple[ParametricFit, BinTable]]
    aps_floor: float

    def aps_many(self, segments: np.ndarray, scores: np.ndarray) -> np.ndarray:
        out = np.empty(len(scores), dtype=np.float64)
        segs = np.asarray(segments, dtype=object)
        for key, (fit, bins) in self.fits.items():
            mask = segs == key
            if mask.any():
                out[mask] = parametric_aps(fit, bins, scores[mask], aps_floor=self.aps_floor)
        return out


@dataclass
class EvaluationResult:
    segment_feature: str
    segmentation_r2: float
    estimates: pd.DataFrame  # method, policy, estimator, value, ...
    daily: pd.DataFrame  # method, policy, estimator, day, value, logged_ctr, lift
    tables: dict[str, dict[str, object]] = field(default_factory=dict)


def _day_labels(data: Dataset) -> np.ndarray:
    days = data.timestamp_ms // MS_PER_DAY
    return days - days.min()


def _estimate(name: str, samples, cap_percentile: float, policy: str):
    if name == "ips":
        return est_mod.ips(samples, policy_name=policy)
    if name == "snips":
        return est_mod.snips(samples, policy_name=policy)
    if name == "capped_snips":
        return est_mod.capped_snips(samples, cap_percentile, policy_name=policy)
    raise ConfigurationError(f"unknown estimator {name!r}")


def evaluate_dataset(data: Dataset, cfg: ExperimentConfig) -> EvaluationResult:
    """Fit landscape models and compute every configured estimate in memory."""
    choice = select_segmentation(data, cfg.dpm.segmentation_candidates, "logging")
    seg_feature = choice.feature
    fit_kwargs = dict(
        market_price_mode=cfg.dpm.market_price_mode,
        z_alpha_sq=cfg.dpm.z_alpha_sq,
        aps_floor=cfg.dpm.aps_floor,
        segment_feature=seg_feature,
        static_bins=cfg.dpm.static_bins,
    )
    dpm_tables: dict[str, ApsTable] = {
        "logging": fit_dpm_segmented(data, "logging", **fit_kwargs)
    }
    for p in data.policy_names:
        dpm_tables[p] = fit_dpm_segmented(data, p, **fit_kwargs)
    for table in dpm_tables.values():
        table.validate()

    methods: dict[str, dict[str, object]] = {"dpm": dpm_tables}
    if cfg.baseline.enabled:
        par_tables: dict[str, ParametricApsTable] = {}
        for source, table in dpm_tables.items():
            fits = {}
            train = data.market_price if cfg.dpm.market_price_mode == "runner_up" \
                else data.scores(source)
            segments = data.segment_feature(seg_feature)
            for key, model in table.models.items():
                fit = select_best_fit(train[segments == key], tuple(cfg.baseline.families))
                fits[key] = (fit, model.bins)
            par_tables[source] = ParametricApsTable(source, fits, cfg.dpm.aps_floor)
        methods["parametric"] = par_tables

    day = _day_labels(data)
    n_days = int(day.max()) + 1
    day_masks = [day == d for d in range(n_days)]
    day_logged = [float(data.reward[m].mean()) for m in day_masks]
    rows, daily_rows = [], []
    for method, tables in methods.items():
        for policy in data.policy_names:
            if set(cfg.estimators.estimators) - {"deterministic_ips"}:
                samples = est_mod.weights_from_aps(
                    data, policy, tables[policy], tables["logging"], seg_feature
                )
            for name in cfg.estimators.estimators:
                if name == "deterministic_ips":
                    if method != "dpm":
                        continue  # exact replay has no landscape model
                    e = est_mod.deterministic_ips(data, policy)
                else:
                    e = _estimate(name, samples, cfg.estimators.cap_percentile, policy)
                rows.append(
                    {
                        "method": method,
                        "policy": policy,
                        "estimator": name,
                        "value": e.value,
                        "n": e.n,
                        "ess": e.effective_sample_size,
                        "cap_threshold": e.cap_threshold,
                        "max_weight_precap": e.max_weight_precap,
                    }
                )
                for d in range(n_days):
                    mask = day_masks[d]
                    logged = day_logged[d]
                    if name == "deterministic_ips":
                        ed = est_mod.deterministic_ips(data.subset(mask), policy)
                    else:
                        sub_samples = est_mod.WeightedSamples(
                            rewards=samples.rewards[mask], weights=samples.weights[mask]
                        )
                        ed = _estimate(name, sub_samples, cfg.estimators.cap_percentile, policy)
                    lift = _lift(ed.value, logged, cfg.metrics.lift_mode)
                    daily_rows.append(
                        {
                            "method": method,
                            "policy": policy,
                            "estimator": name,
                            "day": d,
                            "n": int(mask.sum()),
                            "value": ed.value,
                            "logged_ctr": logged,
                            "lift": lift,
                        }
                    )
    return EvaluationResult(
        segment_feature=seg_feature,
        segmentation_r2=choice.r_squared,
        estimates=pd.DataFrame(rows),
        daily=pd.DataFrame(daily_rows),
        tables=methods,
    )


def _lift(v_policy: float, v_logging: float, mode: str) -> float:
    if mode == "absolute":
        return met_mod.ctr_diff(v_policy, v_logging)
    return met_mod.ctr_lift(v_policy, v_logging)


def truth_daily_lifts(truth_frame: pd.DataFrame, lift_mode: str) -> pd.DataFrame:
    """Per-(policy, day) true lifts vs the logging policy's daily value."""
    log_rows = truth_frame[truth_frame["policy"] == "logging"].set_index("day")["value"]
    out = []
    for (policy, d), grp in truth_frame.groupby(["policy", "day"], sort=True):
        if policy == "logging":
            continue
        v = float(grp["value"].iloc[0])
        out.append(
            {
                "policy": policy,
                "day": int(d),
                "truth_lift": _lift(v, float(log_rows.loc[d]), lift_mode),
            }
        )
    return pd.DataFrame(out)


def compute_metrics(
    daily: pd.DataFrame, truth_lifts: pd.DataFrame, lift_mode: str
) -> pd.DataFrame:
    """Method x estimator metric table over pooled per-day lift pairs."""
    rows = []
    merged = daily.merge(truth_lifts, on=["policy", "day"], how="inner")
    for (method, estimator), grp in merged.groupby(["method", "estimator"], sort=True):
        pairs = [
            met_mod.LiftPair(f"{r.policy}/d{r.day}", r.truth_lift, r.lift)
            for r in grp.itertuples()
        ]
        try:
            corr = met_mod.pearson(pairs)
        except (UndefinedCorrelationError, ConfigurationError):
            corr = float("nan")
        rows.append(
            {
                "method": method,
                "estimator": estimator,
                "mda": met_mod.mda(pairs),
                "rmse": met_mod.rmse(pairs),
                "pearson": corr,
                "n_pairs": len(pairs),
                "lift_mode": lift_mode,
            }
        )
    return pd.DataFrame(rows)


def _load_dataset_for_eval(cfg: ExperimentConfig, out: Path) -> tuple[Dataset, pd.DataFrame | None]:
    if cfg.simulation is not None:
        log_path = out / LOG_CSV
        if not log_path.exists():
            raise MissingArtifactError(f"{log_path} not found; run the simulate stage first")
        data = ingest_csv(log_path)
        truth = pd.read_csv(out / GROUND_TRUTH_CSV) if (out / GROUND_TRUTH_CSV).exists() else None
        agree_path = out / AGREEMENT_CSV
        if agree_path.exists():
            agree = pd.read_csv(agree_path)
            data.agreement = {
                c[len("agree."):]: agree[c].to_numpy(dtype=bool)
                for c in agree.columns
                if c.startswith("agree.")
            }
    else:
        log_path = Path(cfg.external_data.log_csv)
        if not log_path.exists():
            raise MissingArtifactError(f"external log {log_path} not found")
        data = ingest_csv(log_path)
        truth = None
        if cfg.external_data.ground_truth_csv:
            truth = pd.read_csv(cfg.external_data.ground_truth_csv)
    return data, truth


def run_evaluate(cfg: ExperimentConfig) -> Path:
    """Fit models, write estimates, per-day estimates, and metrics."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data, truth = _load_dataset_for_eval(cfg, out)
    result = evaluate_dataset(data, cfg)

    result.estimates.to_csv(out / ESTIMATES_CSV, index=False, lineterminator="\n")
    result.daily.to_csv(out / DAILY_ESTIMATES_CSV, index=False, lineterminator="\n")
    for source, table in result.tables["dpm"].items():
        dpm_mod.save_table(table, out / f"model_dpm_{source}.json")
    if "parametric" in result.tables:
        for source, ptable in result.tables["parametric"].items():
            doc = {
                "version": dpm_mod.SERIALIZATION_VERSION,
                "model_type": "parametric",
                "policy": source,
                "segments": [
                    fit_to_doc(fit, key, bins) for key, (fit, bins) in ptable.fits.items()
                ],
            }
            (out / f"model_parametric_{source}.json").write_text(
                json.dumps(doc, indent=1, sort_keys=True)
            )

    if truth is not None:
        lifts = truth_daily_lifts(truth, cfg.metrics.lift_mode)
        metrics = compute_metrics(result.daily, lifts, cfg.metrics.lift_mode)
        metrics.to_csv(out / METRICS_CSV, index=False, lineterminator="\n")
        (out / SUMMARY_TXT).write_text(_summary_table(metrics, cfg))
    dump_config(cfg, out / EFFECTIVE_CONFIG)
    return out


def headline_estimator(cfg: ExperimentConfig) -> str:
    names = [e for e in cfg.estimators.estimators if e != "deterministic_ips"]
    return "capped_snips" if "capped_snips" in names else names[-1]


def _summary_table(metrics: pd.DataFrame, cfg: ExperimentConfig) -> str:
    head = headline_estimator(cfg)
    sub = metrics[metrics["estimator"] == head]
    methods = list(sub["method"])
    lines = [
        f"Estimator: {head} (cap at p{cfg.estimators.cap_percentile:g})",
        f"Lift mode: {cfg.metrics.lift_mode}",
        "",
        f"{'Metric':<24}" + "".join(f"{m:>14}" for m in methods),
    ]
    for label, col, fmt in (
        ("MDA (%)", "mda", "{:14.1f}"),
        ("RMSE (pts)", "rmse", "{:14.3f}"),
        ("Pearson", "pearson", "{:14.3f}"),
    ):
        vals = "".join(fmt.format(v) for v in sub[col])
        lines.append(f"{label:<24}{vals}")
    return "\n".join(lines) + "\n"


# --- report -----------------------------------------------------------------


def run_report(cfg: ExperimentConfig) -> Path:
    """Emit daily-trend plot data and a human-readable Markdown summary."""
    out = Path(cfg.output_dir)
    daily_path = out / DAILY_ESTIMATES_CSV
    if not daily_path.exists():
        raise MissingArtifactError(f"{daily_path} not found; run the evaluate stage first")
    daily = pd.read_csv(daily_path)
    head = headline_estimator(cfg)
    sub = daily[daily["estimator"] == head]

    trend = sub.pivot_table(
        index=["policy", "day"], columns="method", values="lift", sort=True
    ).rename(columns=lambda m: f"{m}_lift").reset_index()
    truth = None
    if cfg.simulation is not None and (out / GROUND_TRUTH_CSV).exists():
        truth = pd.read_csv(out / GROUND_TRUTH_CSV)
    elif cfg.external_data is not None and cfg.external_data.ground_truth_csv:
        truth = pd.read_csv(cfg.external_data.ground_truth_csv)
    if truth is not None:
        lifts = truth_daily_lifts(truth, cfg.metrics.lift_mode)
        trend = trend.merge(lifts, on=["policy", "day"], how="left")
    trend.to_csv(out / DAILY_TREND_CSV, index=False, lineterminator="\n")

    lines = ["# Evaluation report", ""]
    lines.append(f"- headline estimator: `{head}`")
    lines.append(f"- lift mode: {cfg.metrics.lift_mode}")
    lines.append(f"- t-test error mode: {cfg.metrics.ttest_mode}")
    metrics_path = out / METRICS_CSV
    if metrics_path.exists():
        metrics = pd.read_csv(metrics_path)
        lines += ["", "## Metrics vs ground truth", ""]
        cols = list(metrics.columns)
        lines.append("| " + " | ".join(cols) + " |")
        lines.append("|" + "|".join("---" for _ in cols) + "|")
        for r in metrics.itertuples(index=False):
            cells = [f"{v:.3f}" if isinstance(v, float) else str(v) for v in r]
            lines.append("| " + " | ".join(cells) + " |")

    lines += ["", "## Per-policy direction calls", ""]
    alpha = cfg.metrics.separability_alpha
    for policy, grp in sub[sub["method"] == "dpm"].groupby("policy", sort=True):
        series = grp.sort_values("day")["lift"].to_numpy()
        mean = float(series.mean())
        try:
            _, p = met_mod.paired_ttest(series, np.zeros_like(series))
            separable = p < alpha
        except (DegenerateTestError, ConfigurationError):
            p, separable = float("nan"), False
        if separable:
            call = "improvement" if mean > 0 else "degradation"
            lines.append(
                f"- **{policy}**: mean daily lift {mean:+.2f} -> {call} (p={p:.4f})"
            )
        else:
            lines.append(
                f"- **{policy}**: mean daily lift {mean:+.2f} -> LOW SEPARABILITY, "
                f"no direction claimed (p={p:.4f} >= {alpha})"
            )
    (out / REPORT_MD).write_text("\n".join(lines) + "\n")
    return out


# --- ablate -----------------------------------------------------------------


def run_ablate_bins(cfg: ExperimentConfig, bin_settings: list[str]) -> pd.DataFrame:
    """Re-evaluate under each binning strategy; one metrics row per cell."""
    import dataclasses

    out = Path(cfg.output_dir)
    data, truth = _load_dataset_for_eval(cfg, out)
    if truth is None:
        raise MissingArtifactError("bin ablation needs ground truth")
    lifts = truth_daily_lifts(truth, cfg.metrics.lift_mode)
    head = headline_estimator(cfg)
    rows = []
    for setting in bin_settings:
        static = None if setting == "adaptive" else int(setting)
        cell = dataclasses.replace(cfg, dpm=dataclasses.replace(cfg.dpm, static_bins=static))
        result = evaluate_dataset(data, cell)
        metrics = compute_metrics(result.daily, lifts, cfg.metrics.lift_mode)
        row = metrics[(metrics["method"] == "dpm") & (metrics["estimator"] == head)].iloc[0]
        rows.append({"bins": setting, "rmse": row["rmse"], "mda": row["mda"]})
    frame = pd.DataFrame(rows)
    frame.to_csv(out / "ablation_bins.csv", index=False, lineterminator="\n")
    return frame


def run_ablate_estimators(cfg: ExperimentConfig, names: list[str]) -> pd.DataFrame:
    """One metrics row per estimator under the configured binning."""
    import dataclasses

    out = Path(cfg.output_dir)
    data, truth = _load_dataset_for_eval(cfg, out)
    if truth is None:
        raise MissingArtifactError("estimator ablation needs ground truth")
    lifts = truth_daily_lifts(truth, cfg.metrics.lift_mode)
    cell = dataclasses.replace(
        cfg, estimators=dataclasses.replace(cfg.estimators, estimators=list(names))
    )
    result = evaluate_dataset(data, cell)
    metrics = compute_metrics(result.daily, lifts, cfg.metrics.lift_mode)
    sub = metrics[metrics["method"] == "dpm"].set_index("estimator")
    rows = [
        {"estimator": n, "rmse": sub.loc[n, "rmse"], "mda": sub.loc[n, "mda"]}
        for n in names
    ]
    frame = pd.DataFrame(rows)
    frame.to_csv(out / "ablation_estimators.csv", index=False, lineterminator="\n")
    return frame
