"""Dual-path sequence-to-one regression model and comparison baselines.

Two branches consume differently subsampled views of the same history
window.  The chronological branch (CNN embedding + four stacked LSTMs)
summarizes the whole window; the temporal-detail branch (shallower CNN)
keeps finer recent structure.  The branches exchange information through
cross-attention: Injector blocks pull detail features into the
chronological branch, Encoder blocks pull chronological context into the
detail branch.  A small MLP head regresses the fused features to one
scalar per window.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError, ShapeError
from .nn_layers import (
    BatchNorm1d,
    Conv1d,
    Dropout,
    LayerNorm,
    Linear,
    LSTMLayer,
    Module,
    MultiHeadAttention,
    avg_pool1d,
    positional_encoding,
)
from .tensor_engine import Tensor

__all__ = [
    "DualPathConfig",
    "DualPathModel",
    "MLPBaseline",
    "LSTMBaseline",
    "SinglePathModel",
    "build",
    "build_baseline",
    "forward",
]

TAG_DUAL = "dual_path"
TAG_MLP = "mlp_baseline"
TAG_LSTM = "lstm_baseline"
TAG_SINGLE = "single_path_ablation"


@dataclasses.dataclass(frozen=True)
class DualPathConfig:
    """Width/length plan for the dual-path model.

    ``cfp_channels`` drives four conv+pool stages, ``tdfp_channels`` two;
    the final channel count of both branches must equal ``lstm_hidden``,
    which is the shared attention width.
    """

    n_s: int = 1000
    cfp_channels: tuple = (32, 64, 128, 128)
    lstm_hidden: int = 128
    tdfp_channels: tuple = (64, 128)
    injector_heads: int = 1
    encoder_heads: int = 4
    encoder_ffn: int = 256
    mlp_dims: tuple = (64, 32)

    def __post_init__(self):
        if self.n_s < 16:
            raise ConfigError(f"n_s must allow four halvings, got {self.n_s}")
        if len(self.cfp_channels) != 4 or len(self.tdfp_channels) != 2:
            raise ConfigError("channel plans must have 4 (cfp) and 2 (tdfp) stages")
        dims = (*self.cfp_channels, *self.tdfp_channels, self.lstm_hidden,
                self.encoder_ffn, *self.mlp_dims)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all widths must be >= 1, got {dims}")
        if self.cfp_channels[-1] != self.lstm_hidden:
            raise ConfigError(
                f"cfp output channels {self.cfp_channels[-1]} must equal "
                f"lstm hidden {self.lstm_hidden}"
            )
        if self.tdfp_channels[-1] != self.lstm_hidden:
            raise ConfigError(
                f"tdfp output channels {self.tdfp_channels[-1]} must equal "
                f"lstm hidden {self.lstm_hidden}"
            )
        for heads in (self.injector_heads, self.encoder_heads):
            if self.lstm_hidden % heads != 0:
                raise ConfigError(
                    f"hidden {self.lstm_hidden} not divisible by {heads} heads"
                )

    @classmethod
    def scaled(cls, n_s: int, width: float) -> "DualPathConfig":
        """Scale every width by one factor, keeping head counts fixed."""

        def w(c: int) -> int:
            return max(1, int(round(c * width)))

        return cls(
            n_s=n_s,
            cfp_channels=(w(32), w(64), w(128), w(128)),
            lstm_hidden=w(128),
            tdfp_channels=(w(64), w(128)),
            encoder_ffn=w(256),
            mlp_dims=(w(64), w(32)),
        )

    @classmethod
    def paper(cls, n_s: int = 1000) -> "DualPathConfig":
        """Full-scale profile (reference widths, n_s defaults to 1000)."""
        return cls(n_s=n_s)

    @classmethod
    def desk(cls, n_s: int = 128) -> "DualPathConfig":
        """Half-width profile sized for CPU-scale runs."""
        return cls.scaled(n_s=n_s, width=0.5)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cfp_channels"] = list(self.cfp_channels)
        d["tdfp_channels"] = list(self.tdfp_channels)
        d["mlp_dims"] = list(self.mlp_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DualPathConfig":
        d = dict(d)
        for key in ("cfp_channels", "tdfp_channels", "mlp_dims"):
            d[key] = tuple(d[key])
        return cls(**d)


class _ConvStage(Module):
    """conv -> batchnorm -> relu -> average pool (halve length)."""

    def __init__(self, in_ch: int, out_ch: int, rng, dtype):
        super().__init__()
        self.conv = Conv1d(in_ch, out_ch, rng, dtype=dtype)
        self.bn = BatchNorm1d(out_ch, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return avg_pool1d(self.bn(self.conv(x)).relu())


class _EncoderBlock(Module):
    """Pre-normalization residual cross-attention block with an FFN."""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int, rng, dtype):
        super().__init__()
        self.norm_attn = LayerNorm(d_model, dtype=dtype)
        self.attention = MultiHeadAttention(d_model, n_heads, rng, dtype=dtype)
        self.norm_ffn = LayerNorm(d_model, dtype=dtype)
        self.ffn_in = Linear(d_model, ffn_dim, rng, dtype=dtype)
        self.ffn_out = Linear(ffn_dim, d_model, rng, dtype=dtype)

    def __call__(self, query: Tensor, kv: Tensor) -> Tensor:
        x = query + self.attention(self.norm_attn(query), kv, kv)
        return x + self.ffn_out(self.ffn_in(self.norm_ffn(x)).relu())


class _MLPHead(Module):
    """[d -> h1 -> h2 -> 1] with batchnorm + relu on the hidden layers."""

    def __init__(self, d_in: int, dims: tuple, rng, dtype):
        super().__init__()
        h1, h2 = dims
        self.fc1 = Linear(d_in, h1, rng, dtype=dtype)
        self.bn1 = BatchNorm1d(h1, dtype=dtype)
        self.fc2 = Linear(h1, h2, rng, dtype=dtype)
        self.bn2 = BatchNorm1d(h2, dtype=dtype)
        self.fc3 = Linear(h2, 1, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.bn1(self.fc1(x)).relu()
        x = self.bn2(self.fc2(x)).relu()
        return self.fc3(x)


def _pe_tensor(cache: dict, length: int, d: int, dtype) -> Tensor:
    key = (length, d, np.dtype(dtype).str)
    if key not in cache:
        cache[key] = positional_encoding(length, d, dtype=dtype)
    return Tensor(cache[key])


class DualPathModel(Module):
    """Dual-branch model; see module docstring for the wiring."""

    tag = TAG_DUAL

    def __init__(self, config: DualPathConfig, seed: int, dtype=np.float32):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        self._dtype = np.dtype(dtype)
        self._pe_cache: dict = {}
        rng = np.random.default_rng(seed)
        self._rng = rng
        d = config.lstm_hidden

        chans = (1,) + tuple(config.cfp_channels)
        self.cfp_stages = [
            _ConvStage(chans[i], chans[i + 1], rng, dtype) for i in range(4)
        ]
        tchans = (1,) + tuple(config.tdfp_channels)
        self.tdfp_stages = [
            _ConvStage(tchans[i], tchans[i + 1], rng, dtype) for i in range(2)
        ]
        self.injector1 = MultiHeadAttention(d, config.injector_heads, rng, dtype=dtype)
        self.injector2 = MultiHeadAttention(d, config.injector_heads, rng, dtype=dtype)
        self.lstm1 = LSTMLayer(d, d, rng, dtype=dtype)
        self.lstm2 = LSTMLayer(d, d, rng, dtype=dtype)
        self.lstm3 = LSTMLayer(d, d, rng, dtype=dtype)
        self.lstm4 = LSTMLayer(d, d, rng, dtype=dtype)
        self.encoder1 = _EncoderBlock(d, config.encoder_heads, config.encoder_ffn,
                                      rng, dtype)
        self.encoder2 = _EncoderBlock(d, config.encoder_heads, config.encoder_ffn,
                                      rng, dtype)
        self.head = _MLPHead(d, config.mlp_dims, rng, dtype)

    def config_dict(self) -> dict:
        return self.config.to_dict()

    def __call__(self, cfp_x: Tensor, tdfp_x: Tensor) -> Tensor:
        n_s = self.config.n_s
        if cfp_x.ndim != 2 or cfp_x.shape[1] != n_s:
            raise ShapeError(f"cfp batch must be [B, {n_s}], got {cfp_x.shape}")
        if tdfp_x.ndim != 2 or tdfp_x.shape[1] != n_s:
            raise ShapeError(f"tdfp batch must be [B, {n_s}], got {tdfp_x.shape}")
        b = cfp_x.shape[0]
        d = self.config.lstm_hidden

        cfp = cfp_x.reshape(b, n_s, 1)
        for stage in self.cfp_stages:
            cfp = stage(cfp)
        cfp = cfp + _pe_tensor(self._pe_cache, cfp.shape[1], d, self._dtype)

        tdfp = tdfp_x.reshape(b, n_s, 1)
        for stage in self.tdfp_stages:
            tdfp = stage(tdfp)
        tdfp = tdfp + _pe_tensor(self._pe_cache, tdfp.shape[1], d, self._dtype)

        cfp = cfp + self.injector1(cfp, tdfp, tdfp)
        seq1, _ = self.lstm1(cfp)
        seq2, _ = self.lstm2(seq1)
        mixed = seq2 + self.injector2(seq2, tdfp, tdfp)
        seq3, _ = self.lstm3(mixed)
        seq4, last_hidden = self.lstm4(seq3)

        detail = self.encoder1(tdfp, seq2)
        detail = self.encoder2(detail, seq4)
        fused = detail.mean(axis=1) + last_hidden
        return self.head(fused)


class MLPBaseline(Module):
    """Fully connected regressor on the raw window, dropout 0.5."""

    tag = TAG_MLP

    def __init__(self, n: int, hidden: tuple, seed: int, dropout: float = 0.5,
                 dtype=np.float32):
        super().__init__()
        self.n = int(n)
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = int(seed)
        self.dropout_rate = float(dropout)
        rng = np.random.default_rng(seed)
        self._rng = rng
        dims = (self.n,) + self.hidden + (1,)
        self.fcs = [Linear(dims[i], dims[i + 1], rng, dtype=dtype)
                    for i in range(len(dims) - 1)]
        self.drops = [Dropout(dropout, rng) for _ in range(len(self.hidden))]

    def config_dict(self) -> dict:
        return {"n": self.n, "hidden": list(self.hidden),
                "dropout": self.dropout_rate}

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.n:
            raise ShapeError(f"mlp baseline expects [B, {self.n}], got {x.shape}")
        for fc, drop in zip(self.fcs[:-1], self.drops):
            x = drop(fc(x).relu())
        return self.fcs[-1](x)


class LSTMBaseline(Module):
    """Stacked LSTMs over the raw window (one feature per step), dropout 0.3."""

    tag = TAG_LSTM

    def __init__(self, n: int, hidden: tuple, seed: int, dropout: float = 0.3,
                 dtype=np.float32):
        super().__init__()
        self.n = int(n)
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = int(seed)
        self.dropout_rate = float(dropout)
        rng = np.random.default_rng(seed)
        self._rng = rng
        dims = (1,) + self.hidden
        self.lstms = [LSTMLayer(dims[i], dims[i + 1], rng, dtype=dtype)
                      for i in range(len(self.hidden))]
        self.drops = [Dropout(dropout, rng) for _ in range(len(self.hidden) - 1)]
        self.fc = Linear(self.hidden[-1], 1, rng, dtype=dtype)

    def config_dict(self) -> dict:
        return {"n": self.n, "hidden": list(self.hidden),
                "dropout": self.dropout_rate}

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.n:
            raise ShapeError(f"lstm baseline expects [B, {self.n}], got {x.shape}")
        seq = x.reshape(x.shape[0], self.n, 1)
        last = None
        for i, lstm in enumerate(self.lstms):
            seq, last = lstm(seq)
            if i < len(self.drops):
                seq = self.drops[i](seq)
        return self.fc(last)


class SinglePathModel(Module):
    """Ablation: chronological branch and MLP head only, no detail branch."""

    tag = TAG_SINGLE

    def __init__(self, config: DualPathConfig, seed: int, dtype=np.float32):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        self._dtype = np.dtype(dtype)
        self._pe_cache: dict = {}
        rng = np.random.default_rng(seed)
        self._rng = rng
        d = config.lstm_hidden
        chans = (1,) + tuple(config.cfp_channels)
        self.cfp_stages = [
            _ConvStage(chans[i], chans[i + 1], rng, dtype) for i in range(4)
        ]
        self.lstm1 = LSTMLayer(d, d, rng, dtype=dtype)
        self.lstm2 = LSTMLayer(d, d, rng, dtype=dtype)
        self.lstm3 = LSTMLayer(d, d, rng, dtype=dtype)
        self.lstm4 = LSTMLayer(d, d, rng, dtype=dtype)
        self.head = _MLPHead(d, config.mlp_dims, rng, dtype)

    def config_dict(self) -> dict:
        return self.config.to_dict()

    def __call__(self, cfp_x: Tensor) -> Tensor:
        n_s = self.config.n_s
        if cfp_x.ndim != 2 or cfp_x.shape[1] != n_s:
            raise ShapeError(f"batch must be [B, {n_s}], got {cfp_x.shape}")
        b = cfp_x.shape[0]
        x = cfp_x.reshape(b, n_s, 1)
        for stage in self.cfp_stages:
            x = stage(x)
        x = x + _pe_tensor(self._pe_cache, x.shape[1], self.config.lstm_hidden,
                           self._dtype)
        seq, _ = self.lstm1(x)
        seq, _ = self.lstm2(seq)
        seq, _ = self.lstm3(seq)
        _, last_hidden = self.lstm4(seq)
        return self.head(last_hidden)


def build(config: DualPathConfig, seed: int, dtype=np.float32) -> DualPathModel:
    """Deterministically initialize a dual-path model from ``seed``."""
    return DualPathModel(config, seed, dtype=dtype)


def build_baseline(kind: str, seed: int, *, n: int = 6000, n_s: int = 1000,
                   width: float = 1.0, dtype=np.float32) -> Module:
    """Build a comparison model: ``mlp``, ``lstm``, or ``single_path``.

    ``n`` is the raw window length (mlp/lstm input), ``n_s`` the subsampled
    length (single_path input); ``width`` scales every hidden dimension.
    """

    def w(c: int) -> int:
        return max(1, int(round(c * width)))

    if kind == "mlp":
        return MLPBaseline(n, (w(170), w(128), w(64)), seed, dtype=dtype)
    if kind == "lstm":
        return LSTMBaseline(n, (w(300), w(256), w(64)), seed, dtype=dtype)
    if kind == "single_path":
        return SinglePathModel(DualPathConfig.scaled(n_s, width), seed, dtype=dtype)
    raise ConfigError(f"unknown baseline kind {kind!r}")


def forward(model: Module, cfp_batch: np.ndarray, tdfp_batch: np.ndarray = None,
            mode: str = "eval") -> np.ndarray:
    """Run a model on numpy batches; returns ``[batch, 1]`` predictions.

    ``cfp_batch`` carries whichever view the architecture consumes (the
    raw window for the mlp/lstm baselines); ``tdfp_batch`` is required
    only by the dual-path model.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    model.set_training(mode == "train")
    x = Tensor(np.asarray(cfp_batch))
    if model.tag == TAG_DUAL:
        if tdfp_batch is None:
            raise ShapeError("dual-path forward needs both input views")
        out = model(x, Tensor(np.asarray(tdfp_batch)))
    else:
        out = model(x)
    return out.data
