"""Off-policy evaluation toolkit for deterministic winner-takes-all auction logs."""

from .logdata import ColumnMapping, Dataset, ImpressionRecord, group_by_segment, ingest_csv, write_csv
from .dpm import (
    ApsTable,
    BinTable,
    DpmModel,
    adaptive_bin_count,
    aps,
    fit_dpm,
    fit_dpm_segmented,
    select_segmentation,
)
from .parametric import ParametricFit, fit_family, parametric_aps, select_best_fit
from .estimators import (
    PolicyEstimate,
    WeightedSamples,
    capped_snips,
    deterministic_ips,
    ips,
    snips,
    weights_from_aps,
)
from .metrics import LiftPair, ctr_diff, ctr_lift, mda, paired_ttest, pearson, rmse
from .simulator import (
    GroundTruth,
    PolicySpec,
    SimConfig,
    SimulationWorld,
    build_world,
    calibrate_alignment,
    counterfactual_value,
    make_ab_schedule,
    simulate,
)

__version__ = "0.1.0"
