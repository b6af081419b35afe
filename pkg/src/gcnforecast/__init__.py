"""Single-person global motion forecasting with DCT features and a residual GCN."""

from .core import (
    Dataset,
    DatasetFormatError,
    DivergenceError,
    MotionSample,
    PoseSequence,
    PredictionSet,
    SkeletonSpec,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
)
from .dct import DctBasis, decode, decode_sequence, encode, encode_sequence, make_basis, pad_future
from .gcnet import GcnConfig, GcnModel, backward, forward, init_model, load_model, node_features, predict, save_model
from .metrics import MetricConfig, MetricReport, evaluate, offset_to_frame, vam, vim, zero_velocity_baseline
from .predict import FusionConfig, forecast_dataset, fuse, fuse_reports, run_inference
from .preprocess import (
    PreprocessConfig,
    WindowSpec,
    boundary_filter,
    center_and_scale,
    extend_and_window,
    flip_augment,
    interpolate_invisible,
    pad_visibility,
    reverse_augment,
)
from .synth import SynthSpec, default_skeleton, generate
from .train import (
    CurriculumConfig,
    LossConfig,
    ModelOptions,
    TrainConfig,
    TrainSetup,
    adam_step,
    curriculum_mask,
    fit,
    ohkm,
    smooth_l1,
    train,
    train_short_term,
)

__version__ = "0.1.0"
