"""MSE training loop: Adam with decoupled weight decay, multi-step LR
schedule, head-only fine-tuning, and checksummed checkpoints.

All randomness (shuffling, dropout) flows from seeded generators so two
runs with the same configuration produce bitwise-identical loss
histories and parameter trajectories.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
import zlib

import numpy as np

from . import dual_path
from .dual_path import (
    DualPathConfig,
    DualPathModel,
    LSTMBaseline,
    MLPBaseline,
    SinglePathModel,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericError,
    ParameterError,
    ShapeError,
)
from .nn_layers import BatchNorm1d, Module
from .tensor_engine import Tensor
from .windowing import WindowDataset, subsample

__all__ = [
    "TrainConfig",
    "TrainResult",
    "mse_loss",
    "lr_at",
    "init_adam_state",
    "adam_step",
    "input_views",
    "train",
    "finetune",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"FSWCKPT1"
_VERSION = 1


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings (defaults follow the reference run)."""

    lr_init: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-9
    weight_decay: float = 0.01
    milestones: tuple = (40, 80, 90)
    gamma: float = 0.1
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    decoupled_weight_decay: bool = True
    max_steps: int = 0  # 0 = no cap; handy for smoke/determinism runs
    save_every_epochs: int = 0  # 0 = only final save (when a path is given)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if any(m2 <= m1 for m1, m2 in zip(self.milestones, self.milestones[1:])):
            raise ConfigError(f"milestones must be strictly increasing: {self.milestones}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batchnorm needs it)")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_init <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("lr_init/eps must be > 0 and weight_decay >= 0")
        if not 0.0 < self.betas[0] < 1.0 or not 0.0 < self.betas[1] < 1.0:
            raise ConfigError(f"betas must be in (0, 1), got {self.betas}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        d["milestones"] = list(self.milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["betas"] = tuple(d["betas"])
        d["milestones"] = tuple(d["milestones"])
        return cls(**d)


@dataclasses.dataclass
class TrainResult:
    step_losses: list
    epoch_losses: list
    epochs_run: int


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return (diff * diff).mean()


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Multi-step schedule: lr_init * gamma^(milestones passed)."""
    if epoch < 0:
        raise ParameterError(f"epoch must be >= 0, got {epoch}")
    passed = sum(1 for m in config.milestones if m <= epoch)
    return config.lr_init * config.gamma ** passed


def init_adam_state(params: dict[str, Tensor]) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(p.data) for k, p in params.items()},
        "v": {k: np.zeros_like(p.data) for k, p in params.items()},
    }


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: dict, lr: float, config: TrainConfig) -> None:
    """One Adam update in place; weight decay defaults to the decoupled form.

    The epsilon sits inside the square root: step = lr * m_hat /
    sqrt(v_hat + eps).
    """
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {key!r}")
    state["t"] += 1
    t = state["t"]
    b1, b2 = config.betas
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for key, param in params.items():
        g = grads.get(key)
        if g is None:
            continue
        if config.weight_decay:
            if config.decoupled_weight_decay:
                param.data *= 1.0 - lr * config.weight_decay
            else:
                g = g + config.weight_decay * param.data
        m = state["m"][key]
        v = state["v"][key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param.data -= lr * (m / bc1) / np.sqrt(v / bc2 + config.eps)


def input_views(model: Module, dataset: WindowDataset) -> tuple:
    """Materialize the input views an architecture consumes.

    Dual-path gets (equal-interval view, sparse-to-dense view); the
    single-path ablation the equal-interval view; mlp/lstm baselines the
    raw windows.
    """
    tag = model.tag
    if tag in (dual_path.TAG_DUAL, dual_path.TAG_SINGLE):
        n_s = model.config.n_s
        if n_s == dataset.n_s:
            views = subsample(dataset)
        elif n_s == dataset.n:
            # model sized for the full window: consume it unsubsampled
            views = (dataset.inputs, dataset.inputs)
        else:
            raise ShapeError(
                f"model n_s {n_s} matches neither dataset n_s {dataset.n_s} "
                f"nor n {dataset.n}"
            )
        return views if tag == dual_path.TAG_DUAL else views[:1]
    if tag in (dual_path.TAG_MLP, dual_path.TAG_LSTM):
        if model.n != dataset.n:
            raise ShapeError(f"model n {model.n} != dataset n {dataset.n}")
        return (dataset.inputs,)
    raise ConfigError(f"unknown architecture tag {model.tag!r}")


def _snapshot(model: Module) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.state_dict().items()}


def _fit(model: Module, dataset: WindowDataset, config: TrainConfig,
         trainable: dict[str, Tensor], *, checkpoint_path=None,
         start_epoch: int = 0, adam_state=None, shuffle_state=None) -> TrainResult:
    if dataset.count < 2:
        raise DataError(f"training needs >= 2 window pairs, got {dataset.count}")
    dtype = next(iter(model.parameters().values())).data.dtype
    views = tuple(v.astype(dtype, copy=False)
                  for v in input_views(model, dataset))
    targets = dataset.targets.reshape(-1, 1).astype(dtype, copy=False)

    rng = np.random.default_rng(config.seed)
    if shuffle_state is not None:
        rng.bit_generator.state = shuffle_state
    state = adam_state if adam_state is not None else init_adam_state(trainable)

    step_losses: list[float] = []
    epoch_losses: list[float] = []
    last_good = _snapshot(model)
    steps = 0
    epoch = start_epoch
    try:
        for epoch in range(start_epoch, config.epochs):
            lr = lr_at(epoch, config)
            perm = rng.permutation(dataset.count)
            loss_sum = 0.0
            sample_count = 0
            for lo in range(0, dataset.count, config.batch_size):
                idx = perm[lo:lo + config.batch_size]
                if idx.size < 2:
                    continue  # batchnorm cannot run on a single sample
                batch = tuple(Tensor(v[idx]) for v in views)
                target = Tensor(targets[idx])
                model.zero_grad()
                pred = model(*batch)
                loss = mse_loss(pred, target)
                loss_value = float(loss.data)
                if not np.isfinite(loss_value):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch} step {steps}; "
                        "last good state retained"
                    )
                loss.backward()
                grads = {k: p.grad for k, p in trainable.items() if p.grad is not None}
                adam_step(trainable, grads, state, lr, config)
                step_losses.append(loss_value)
                loss_sum += loss_value * idx.size
                sample_count += idx.size
                steps += 1
                if config.max_steps and steps >= config.max_steps:
                    break
            if sample_count:
                epoch_losses.append(loss_sum / sample_count)
            last_good = _snapshot(model)
            done = config.max_steps and steps >= config.max_steps
            if checkpoint_path and (
                done or epoch + 1 == config.epochs
                or (config.save_every_epochs
                    and (epoch + 1) % config.save_every_epochs == 0)
            ):
                save_checkpoint(
                    model, checkpoint_path, epoch=epoch + 1, adam_state=state,
                    shuffle_rng_state=rng.bit_generator.state,
                    train_config=config,
                )
            if done:
                break
    except NumericError:
        model.load_state_dict(last_good)
        raise
    return TrainResult(step_losses, epoch_losses, epochs_run=epoch + 1 - start_epoch)


def train(model: Module, dataset: WindowDataset, config: TrainConfig, *,
          checkpoint_path=None, start_epoch: int = 0, adam_state=None,
          shuffle_state=None) -> TrainResult:
    """Train all parameters; returns per-step and per-epoch loss history.

    A non-finite loss or gradient aborts training with the model rolled
    back to the end of the last completed epoch (and any checkpoint file
    already written stays in place).
    """
    model.set_training(True)
    return _fit(model, dataset, config, model.parameters(),
                checkpoint_path=checkpoint_path, start_epoch=start_epoch,
                adam_state=adam_state, shuffle_state=shuffle_state)


def finetune(model: Module, small_dataset: WindowDataset,
             config: TrainConfig) -> TrainResult:
    """Adapt only the MLP head; everything else is frozen.

    Non-head parameters get ``requires_grad = False`` and every BatchNorm
    (head included) runs in eval mode, so the backbone is bitwise
    untouched and normalization keeps its pretrained statistics — a small
    adaptation set cannot re-estimate them, and batch statistics of a
    narrow fine-tune distribution would otherwise shift the features far
    faster than the head weights can follow.  The head's BN scale and
    shift stay trainable.
    """
    if small_dataset.count == 0:
        raise ParameterError("finetune needs a nonempty dataset")
    if not hasattr(model, "head"):
        raise ConfigError(f"architecture {model.tag!r} has no separable head")
    head_params = {}
    for key, param in model.parameters().items():
        if key.startswith("head."):
            head_params[key] = param
        else:
            param.requires_grad = False
            param.grad = None
    model.set_training(True)
    _freeze_batchnorms(model)
    return _fit(model, small_dataset, config, head_params)


def _freeze_batchnorms(value) -> None:
    if isinstance(value, BatchNorm1d):
        value.training = False
    elif isinstance(value, Module):
        for child in vars(value).values():
            _freeze_batchnorms(child)
    elif isinstance(value, (list, tuple)):
        for item in value:
            _freeze_batchnorms(item)


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

def _build_model(tag: str, config: dict, seed: int, dtype) -> Module:
    if tag == dual_path.TAG_DUAL:
        return DualPathModel(DualPathConfig.from_dict(config), seed, dtype=dtype)
    if tag == dual_path.TAG_SINGLE:
        return SinglePathModel(DualPathConfig.from_dict(config), seed, dtype=dtype)
    if tag == dual_path.TAG_MLP:
        return MLPBaseline(config["n"], tuple(config["hidden"]), seed,
                           dropout=config["dropout"], dtype=dtype)
    if tag == dual_path.TAG_LSTM:
        return LSTMBaseline(config["n"], tuple(config["hidden"]), seed,
                            dropout=config["dropout"], dtype=dtype)
    raise CheckpointError(f"unknown architecture tag {tag!r}")


def save_checkpoint(model: Module, path, *, epoch: int = 0, adam_state=None,
                    shuffle_rng_state=None, train_config=None) -> None:
    """Write model (+ optional optimizer) state with per-blob checksums."""
    blobs: dict[str, np.ndarray] = dict(model.state_dict())
    if adam_state is not None:
        for key, arr in adam_state["m"].items():
            blobs[f"adam.m.{key}"] = arr
        for key, arr in adam_state["v"].items():
            blobs[f"adam.v.{key}"] = arr

    payload = io.BytesIO()
    index = []
    offset = 0
    for key in sorted(blobs):
        arr = np.ascontiguousarray(blobs[key])
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        index.append({
            "key": key,
            "shape": list(arr.shape),
            "dtype": arr.dtype.newbyteorder("<").str,
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        payload.write(raw)
        offset += len(raw)

    frozen = sorted(k for k, p in model.parameters().items()
                    if not p.requires_grad)
    header = {
        "version": _VERSION,
        "tag": model.tag,
        "config": model.config_dict(),
        "seed": model.seed,
        "dtype": np.dtype(next(iter(model.state_dict().values())).dtype).str,
        "epoch": int(epoch),
        "adam_t": int(adam_state["t"]) if adam_state is not None else None,
        "shuffle_rng_state": shuffle_rng_state,
        "model_rng_state": _rng_state(model),
        "train_config": train_config.to_dict() if train_config else None,
        "frozen": frozen,
        "blobs": index,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload.getvalue())


def _rng_state(model: Module):
    rng = getattr(model, "_rng", None)
    return rng.bit_generator.state if rng is not None else None


def load_checkpoint(path, expected_tag: str | None = None) -> tuple[Module, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata).

    Metadata carries epoch, Adam state (if saved), and RNG states so a
    training run can resume mid-schedule.  Any corruption (bad magic,
    version, truncation, checksum) raises before a model is constructed.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    pos = len(_MAGIC)
    if len(blob) < pos + 4:
        raise CheckpointError(f"{path}: truncated header length")
    (header_len,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if len(blob) < pos + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[pos:pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != _VERSION:
        raise CheckpointError(
            f"{path}: unsupported version {header.get('version')}"
        )
    if expected_tag is not None and header["tag"] != expected_tag:
        raise CheckpointError(
            f"{path}: architecture tag {header['tag']!r} != expected "
            f"{expected_tag!r}"
        )
    payload_start = pos + header_len

    arrays: dict[str, np.ndarray] = {}
    for entry in header["blobs"]:
        start = payload_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated blob {entry['key']!r}")
        raw = blob[start:end]
        if zlib.crc32(raw) != entry["crc32"]:
            raise CheckpointError(f"{path}: checksum failure in {entry['key']!r}")
        arrays[entry["key"]] = np.frombuffer(
            raw, dtype=np.dtype(entry["dtype"])
        ).reshape(entry["shape"]).copy()

    dtype = np.dtype(header["dtype"])
    model = _build_model(header["tag"], header["config"], header["seed"], dtype)
    model_state = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    model.load_state_dict(model_state)
    for key in header.get("frozen", []):
        model.parameters()[key].requires_grad = False
    if header.get("model_rng_state") is not None and hasattr(model, "_rng"):
        model._rng.bit_generator.state = header["model_rng_state"]

    adam_state = None
    if header.get("adam_t") is not None:
        adam_state = {
            "t": header["adam_t"],
            "m": {k[len("adam.m."):]: v for k, v in arrays.items()
                  if k.startswith("adam.m.")},
            "v": {k[len("adam.v."):]: v for k, v in arrays.items()
                  if k.startswith("adam.v.")},
        }
    meta = {
        "epoch": header["epoch"],
        "adam_state": adam_state,
        "shuffle_rng_state": header.get("shuffle_rng_state"),
        "train_config": (TrainConfig.from_dict(header["train_config"])
                         if header.get("train_config") else None),
    }
    return model, meta
