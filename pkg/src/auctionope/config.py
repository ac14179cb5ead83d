"""Experiment configuration: YAML-backed dataclasses with strict keys."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .dpm import DEFAULT_APS_FLOOR, DEFAULT_Z_ALPHA_SQ
from .parametric import FAMILIES
from .simulator import PolicySpec, SimConfig

ESTIMATOR_NAMES = ("ips", "snips", "capped_snips", "deterministic_ips")


@dataclass
class DpmSettings:
    market_price_mode: str = "winner_proxy"
    z_alpha_sq: float = DEFAULT_Z_ALPHA_SQ
    aps_floor: float = DEFAULT_APS_FLOOR
    segmentation_candidates: list[str] = field(default_factory=lambda: ["segment_key"])
    static_bins: int | None = None  # None selects adaptive sizing


@dataclass
class BaselineSettings:
    enabled: bool = True
    families: list[str] = field(default_factory=lambda: list(FAMILIES))


@dataclass
class EstimatorSettings:
    estimators: list[str] = field(default_factory=lambda: ["ips", "snips", "capped_snips"])
    cap_percentile: float = 99.0


@dataclass
class MetricsSettings:
    lift_mode: str = "relative"  # or "absolute" (percentage points)
    ttest_mode: str = "absolute"  # per-unit |error|; "squared" also supported
    separability_alpha: float = 0.05


@dataclass
class ExternalData:
    log_csv: str
    ground_truth_csv: str | None = None


@dataclass
class ExperimentConfig:
    output_dir: str
    simulation: SimConfig | None = None
    external_data: ExternalData | None = None
    dpm: DpmSettings = field(default_factory=DpmSettings)
    baseline: BaselineSettings = field(default_factory=BaselineSettings)
    estimators: EstimatorSettings = field(default_factory=EstimatorSettings)
    metrics: MetricsSettings = field(default_factory=MetricsSettings)

    def validate(self) -> None:
        if (self.simulation is None) == (self.external_data is None):
            raise ConfigurationError("set exactly one of simulation / external_data")
        if self.simulation is not None:
            self.simulation.validate()
        if self.dpm.market_price_mode not in ("winner_proxy", "runner_up"):
            raise ConfigurationError(
                f"dpm.market_price_mode {self.dpm.market_price_mode!r}: "
                "accepted values are winner_proxy, runner_up"
            )
        for name in self.estimators.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigurationError(
                    f"estimators.estimators entry {name!r}: accepted values are {ESTIMATOR_NAMES}"
                )
        for fam in self.baseline.families:
            if fam not in FAMILIES:
                raise ConfigurationError(
                    f"baseline.families entry {fam!r}: accepted values are {FAMILIES}"
                )
        if self.metrics.lift_mode not in ("relative", "absolute"):
            raise ConfigurationError("metrics.lift_mode: accepted values are relative, absolute")
        if self.metrics.ttest_mode not in ("absolute", "squared"):
            raise ConfigurationError("metrics.ttest_mode: accepted values are absolute, squared")
        if not 0.0 < self.estimators.cap_percentile <= 100.0:
            raise ConfigurationError("estimators.cap_percentile must be in (0, 100]")


def _build(cls, payload: dict, context: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(payload) - set(fields)
    if unknown:
        raise ConfigurationError(
            f"unknown config key(s) {sorted(unknown)} under {context!r}; "
            f"accepted: {sorted(fields)}"
        )
    return cls(**payload)


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    sim = doc.pop("simulation", None)
    ext = doc.pop("external_data", None)
    if sim is not None:
        sim = dict(sim)
        policies = tuple(_build(PolicySpec, dict(p), "simulation.policies")
                         for p in sim.pop("policies", []))
        sim = _build(SimConfig, {**sim, "policy_specs": policies}, "simulation")
    if ext is not None:
        ext = _build(ExternalData, dict(ext), "external_data")
    sections = {
        "dpm": DpmSettings,
        "baseline": BaselineSettings,
        "estimators": EstimatorSettings,
        "metrics": MetricsSettings,
    }
    kwargs = {}
    for key, cls in sections.items():
        if key in doc:
            kwargs[key] = _build(cls, dict(doc.pop(key)), key)
    cfg = _build(ExperimentConfig,
                 {**doc, "simulation": sim, "external_data": ext, **kwargs},
                 "<root>")
    cfg.validate()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    if cfg.simulation is not None:
        sim = doc["simulation"]
        sim["policies"] = sim.pop("policy_specs")
    return {k: v for k, v in doc.items() if v is not None}


def load_config(path: str | Path) -> ExperimentConfig:
    payload = yaml.safe_load(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ConfigurationError(f"{path} is not a mapping")
    return config_from_dict(payload)


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    """Echo the effective config (defaults resolved) for reproduction."""
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))


def apply_override(doc: dict, dotted_key: str, raw_value: str) -> None:
    """Apply a `section.key=value` CLI override onto a raw config mapping."""
    parts = dotted_key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot override through non-mapping key {part!r}")
    value = yaml.safe_load(raw_value)
    if isinstance(value, str):
        # YAML 1.1 misses exponent floats without a dot, e.g. "1e-5"
        try:
            value = float(value)
        except ValueError:
            pass
    node[parts[-1]] = value
