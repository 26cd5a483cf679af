"""Per-class norm-scaling of classifier logits for out-of-distribution detection."""

from .detector import (
    DetectorConfig,
    ScoredSample,
    decide,
    energy_score,
    msp_score,
    score_stream,
    softmax,
)
from .ingest import build_test_stream, load_manifest, read_logits, write_logits
from .metrics import (
    BinaryScoreSet,
    EvalReport,
    aggregate,
    aupr,
    auroc,
    ece,
    fpr_at_tpr,
    multi_threshold_eval,
    reliability,
    roc_points,
)
from .stats import (
    ClassStats,
    LogitRecord,
    StreamState,
    fit_class_stats,
    norm_scale,
    stream_init,
    stream_update,
    tau_norm_scale,
    temperature_scale,
)
from .synthgen import SynthConfig, fig1_like, generate

__version__ = "0.1.0"
