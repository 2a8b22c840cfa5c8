"""Self-supervised inpainting toolkit for specular-reflection removal."""

from .dataset import (
    BuiltDataset,
    CorpusImage,
    HiddenRegionPolicy,
    Sample,
    SplitSpec,
    build_sample,
    generate_hidden_mask,
    import_annotation_mask,
    split_corpus,
    synth_corpus,
)
from .detect import DetectorConfig, detect_sr, dilate_sr
from .evaluate import (
    EvalReport,
    abs_error_histogram,
    error_range_table,
    histogram_overlay_report,
    sr_removal_verdict,
    sup_norm_errors,
)
from .imaging import (
    Histogram,
    and_masks,
    apply_mask,
    channel_histogram,
    max_intensity,
    pixel_intensity,
    to_u8,
    to_unit,
)
from .network import (
    LayerSpec,
    Model,
    ModelSpec,
    assemble_input,
    build_model,
    forward,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from .restore import composite, restore_hidden, restore_sr
from .training import (
    AdadeltaState,
    EnsembleResult,
    TrainRun,
    adadelta_step,
    mse_loss,
    significant_difference,
    test_error_ci,
    train,
    train_ensemble,
)

__version__ = "0.1.0"
