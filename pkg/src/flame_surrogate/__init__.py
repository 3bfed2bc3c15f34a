"""Desk-scale surrogate modeling of nonlinear flame response.

Pipeline: generate frequency-sweep excitation and heat-release responses
from an analytic time-delay flame model, window them into
history/target pairs with sparse-to-dense subsampling, train a
dual-path neural network (or baselines) on a self-contained autodiff
engine, and evaluate single-tone prediction error.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DeterminismError,
    FlameSurrogateError,
    MetricError,
    NumericError,
    ParameterError,
    SettleError,
    ShapeError,
)
from .signalgen import SweepSpec, TimeSeries, sweep_series, tone_series, step_series
from .flame_oracle import (
    DescribingFunction,
    NTauParams,
    extract_describing_function,
    first_order_filter,
    ntau_response,
    oracle_describing_function,
    step_impact_time,
)
from .windowing import (
    WindowDataset,
    build_sweep_dataset,
    equal_interval_indices,
    load_dataset,
    make_pairs,
    save_dataset,
    sparse_to_dense_indices,
    subsample,
)
from .tensor_engine import Tensor, concat, gradcheck, matmul
from .dual_path import (
    DualPathConfig,
    DualPathModel,
    LSTMBaseline,
    MLPBaseline,
    SinglePathModel,
    build,
    build_baseline,
    forward,
)
from .trainer import (
    TrainConfig,
    TrainResult,
    adam_step,
    finetune,
    load_checkpoint,
    lr_at,
    mse_loss,
    save_checkpoint,
    train,
)
from .evaluator import (
    EvalReport,
    EvalRow,
    cell_seed,
    emit_report,
    eval_grid,
    load_report,
    mre,
    predict_windows,
    strength_size_study,
    timing_compare,
)

__version__ = "1.0.0"
