"""Dual-camera mutual-gaze / joint-attention detection toolkit."""

from .estimator import FusionGazeClassifier, TwoStreamCnnClassifier
from .evaluation import (
    AggregateReport,
    MetricReport,
    PredictionRecord,
    aggregate_runs,
    bench_throughput,
    export_timeline,
    import_external_predictions,
    roc_auc,
    threshold_metrics,
)
from .features import (
    DualFrameSample,
    TokenSequence,
    ToyBackboneConfig,
    feature_store_read,
    feature_store_write,
    toy_backbone_extract,
)
from .model import (
    BaselineCnnConfig,
    FusionModelConfig,
    ModelCheckpoint,
    build_cnn_baseline,
    build_fusion_model,
    cnn_forward,
    fusion_forward,
    load_checkpoint,
    save_checkpoint,
)
from .optim import (
    AdamState,
    MultiSeedTask,
    TrainConfig,
    adam_step,
    bce_with_logits,
    run_multiseed,
    train,
)
from .pipeline import (
    DatasetSplit,
    EventAnnotation,
    FrameIndex,
    HeadBoxRecord,
    balance_test,
    estimate_audio_offset,
    filter_by_heads,
    label_frames,
    parse_wav,
    sample_frames,
    temporal_split,
)
from .tensor import ComputationTape, Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AggregateReport", "BaselineCnnConfig", "ComputationTape",
    "DatasetSplit", "DualFrameSample", "EventAnnotation", "FrameIndex",
    "FusionGazeClassifier", "FusionModelConfig", "HeadBoxRecord", "MetricReport",
    "ModelCheckpoint", "MultiSeedTask", "PredictionRecord", "Tensor", "TokenSequence",
    "ToyBackboneConfig", "TrainConfig", "TwoStreamCnnClassifier", "adam_step",
    "aggregate_runs", "backward", "balance_test", "bce_with_logits", "bench_throughput",
    "build_cnn_baseline", "build_fusion_model", "cnn_forward", "estimate_audio_offset",
    "export_timeline", "feature_store_read", "feature_store_write", "filter_by_heads",
    "fusion_forward", "import_external_predictions", "label_frames", "load_checkpoint",
    "no_grad", "parse_wav", "roc_auc", "run_multiseed", "sample_frames",
    "save_checkpoint", "temporal_split", "threshold_metrics", "toy_backbone_extract",
    "train",
]
