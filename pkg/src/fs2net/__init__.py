"""fs2net: fiber-tract similarity classification.

Pipeline pieces: seeded synthetic corpus generation, curvature-based
pruning into fixed 100x3 features, a from-scratch Siamese BLSTM/LSTM
comparator trained on class-structured pairs, default-set argmax
classification that stays robust under test-time rotations, and the
intra/inter/merged evaluation protocols.
"""

from .errors import (
    CheckpointError,
    DatasetError,
    DefaultSetError,
    Fs2NetError,
    MetricsError,
    PairingError,
    TrainingError,
)
from .fibers import (
    CoarseLabel,
    Fiber,
    FiberDataset,
    FineLabel,
    IDENTITY_ROTATION,
    Level,
    RotationSpec,
    WHITE_LABELS,
    center_fiber,
    label_at_level,
    level_classes,
    load_dataset,
    parse_rotation_tag,
    rotate_dataset,
    rotate_fiber,
    rotation_about_axis,
    save_dataset,
    split_dataset,
    to_coarse,
)
from .preprocess import (
    FEATURE_LEN,
    ProcessedDataset,
    ProcessedFiber,
    curvature_scores,
    kept_length,
    load_processed,
    process_dataset,
    prune_and_pad,
    save_processed,
)
from .synthgen import GenConfig, TEMPLATES, generate_corpus, grey_count, template_points
from .nn import (
    AdamState,
    BlstmLayerParams,
    DenseParams,
    LstmCellParams,
    adam_update,
    blstm_forward,
    dense_forward,
    finite_diff_check,
    init_adam,
    lstm_forward,
    lstm_step,
    mse_loss,
)
from .siamese import (
    SiameseModel,
    TowerSizes,
    embed,
    embed_batch,
    init_siamese,
    model_from_params,
    pair_loss_and_grads,
    score_pair,
)
from .pairing import Batch, FiberPair, batch_for_iteration, batch_stream, make_batch
from .training import (
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    resume_training,
    save_checkpoint,
    train,
    train_checkpoint,
    write_training_log,
)
from .classify import (
    DefaultSet,
    DefaultSetEntry,
    PredictionRow,
    build_default_set,
    classify_all,
    classify_fiber,
    load_default_set,
    load_predictions,
    save_default_set,
    save_predictions,
)
from .evaluate import (
    EvalReport,
    ProtocolConfig,
    compute_metrics,
    render_report_kv,
    render_report_text,
    run_protocol,
)

__version__ = "0.1.0"
