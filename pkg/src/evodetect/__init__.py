"""Online self-evolving anomaly detection for system-performance telemetry."""

from .model import (
    DEFAULT_CLASS_NAMES,
    NORMAL_CLASS_INDEX,
    Batch,
    BinaryLabel,
    ClassLabel,
    Record,
    encode_binary,
    encode_multiclass,
    make_labels,
)
from .solver import LrSchedule, SolverDiverged, StopRule, sgd_fit, sign_eps
from .detectors import (
    BinaryDetector,
    MulticlassDetector,
    biased_init,
    biased_init_multiclass,
    detector_from_text,
    fit_incremental,
    predict_binary,
    predict_multiclass,
    weights_to_text,
)
from .imbalance import SmoteConfig, rebalance_epoch, smote_class
from .evolution import (
    BINARY_CLASS_NAMES,
    EpochReport,
    EvolutionConfig,
    EvolutionState,
    LabelVerdict,
    OracleLabeler,
    labeled_fraction,
    report_missed,
    run_epoch,
)
from .metrics import Confusion, RocCurve, auc, confusion, per_class_report, roc_curve
from .features import AttributeRanking, lambda_sweep, rank_binary, rank_multiclass
from .data_io import (
    Dataset,
    LabeledEpoch,
    NormStats,
    SynthConfig,
    apply_norm,
    fit_norm,
    load_csv,
    save_csv,
    synth_stream,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
