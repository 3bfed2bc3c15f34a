"""Model evaluation: MRE metric, tone grids, the nonlinearity-strength ×
dataset-size study, wall-clock timing comparison, and report emission.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
import zlib

import numpy as np

from . import dual_path, trainer, windowing
from .errors import MetricError, ParameterError, ShapeError
from .flame_oracle import NTauParams, ntau_response
from .signalgen import TimeSeries, tone_series
from .tensor_engine import Tensor
from .trainer import TrainConfig
from .windowing import WindowDataset

__all__ = [
    "EvalRow",
    "EvalReport",
    "mre",
    "predict_windows",
    "eval_grid",
    "strength_size_study",
    "timing_compare",
    "emit_report",
    "load_report",
]

_CSV_COLUMNS = ("model", "A", "f_hz", "strength", "size", "mre", "train_s", "infer_s")


@dataclasses.dataclass(frozen=True)
class EvalRow:
    model: str
    amplitude: float
    f_hz: float
    strength: float
    size: int
    mre: float
    train_s: float
    infer_s: float


@dataclasses.dataclass
class EvalReport:
    rows: list

    @property
    def mean_mre(self) -> float:
        if not self.rows:
            raise MetricError("report has no rows")
        return float(np.mean([r.mre for r in self.rows]))

    def cell_means(self, keys=("strength", "size")) -> dict:
        """Mean MRE grouped by the given row fields."""
        groups: dict = {}
        for row in self.rows:
            cell = tuple(getattr(row, k) for k in keys)
            groups.setdefault(cell, []).append(row.mre)
        return {cell: float(np.mean(v)) for cell, v in groups.items()}


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64)


def mre(q_true, q_pred) -> float:
    """Mean absolute error normalized by the mean absolute reference."""
    t = _values(q_true)
    p = _values(q_pred)
    if t.shape != p.shape:
        raise ShapeError(f"mre inputs differ in shape: {t.shape} vs {p.shape}")
    if t.size < 1:
        raise ParameterError("mre needs at least one sample")
    denom = np.mean(np.abs(t))
    if denom == 0.0:
        raise MetricError("mre undefined: reference is identically zero")
    return float(np.mean(np.abs(t - p)) / denom)


def _window_views(model, windows: np.ndarray, n: int) -> tuple:
    """Slice raw windows [count, n] into whatever views the model consumes."""
    tag = model.tag
    if tag in (dual_path.TAG_MLP, dual_path.TAG_LSTM):
        if model.n != n:
            raise ShapeError(f"model expects n={model.n}, got {n}")
        return (windows,)
    n_s = model.config.n_s
    if n_s == n:
        identity = windows
        if tag == dual_path.TAG_DUAL:
            return (identity, identity)
        return (identity,)
    cfp = windows[:, windowing.equal_interval_indices(n, n_s)]
    if tag == dual_path.TAG_SINGLE:
        return (cfp,)
    tdfp = windows[:, windowing.sparse_to_dense_indices(n, n_s)]
    return (cfp, tdfp)


def predict_windows(model, u_values: np.ndarray, n: int,
                    batch_size: int = 256) -> np.ndarray:
    """Sliding-window (stride 1) eval-mode inference over a raw signal.

    Returns one prediction per complete history window: element ``k``
    predicts the sample at index ``n - 1 + k`` of ``u_values``.
    """
    u = np.asarray(u_values, dtype=np.float64)
    if u.size < n:
        raise ParameterError(f"signal length {u.size} < window length {n}")
    dtype = next(iter(model.parameters().values())).data.dtype
    windows = np.lib.stride_tricks.sliding_window_view(u, n).astype(dtype)
    views = _window_views(model, windows, n)
    model.set_training(False)
    out = np.empty(windows.shape[0], dtype=np.float64)
    for lo in range(0, windows.shape[0], batch_size):
        hi = min(lo + batch_size, windows.shape[0])
        batch = tuple(Tensor(np.ascontiguousarray(v[lo:hi])) for v in views)
        out[lo:hi] = model(*batch).data[:, 0]
    return out


def eval_grid(model, oracle_params: NTauParams, amplitudes, frequencies,
              horizon: float | None = None, *, n: int, batch_size: int = 256,
              size: int = 0, train_s: float = 0.0) -> EvalReport:
    """MRE of model predictions against the oracle on a tone grid.

    ``horizon`` is the total duration of each test tone; the default
    covers one full history window plus five periods.  Predictions start
    after the first complete window (warmup discard).
    """
    dt = oracle_params.dt
    rows = []
    for amplitude in amplitudes:
        for freq in frequencies:
            span = horizon if horizon is not None else (n - 1) * dt + 5.0 / freq
            if span < n * dt:
                raise ParameterError(
                    f"horizon {span} shorter than one window ({n * dt})"
                )
            tone = tone_series(amplitude, freq, span, dt)
            q_true = ntau_response(tone, oracle_params)
            tic = time.perf_counter()
            q_pred = predict_windows(model, tone.values, n, batch_size)
            infer_s = time.perf_counter() - tic
            rows.append(EvalRow(
                model=model.tag,
                amplitude=float(amplitude),
                f_hz=float(freq),
                strength=oracle_params.strength,
                size=int(size),
                mre=mre(q_true.values[n - 1:], q_pred),
                train_s=float(train_s),
                infer_s=infer_s,
            ))
    return EvalReport(rows)


def cell_seed(strength: float, size: int) -> int:
    """Fixed per-cell seed: CRC of the grid coordinates."""
    return zlib.crc32(f"strength={strength:g}|size={size}".encode())


def strength_size_study(strengths, sizes, eval_signals=None, *,
                        base_params: NTauParams, n: int, n_s: int,
                        amplitudes, train_config: TrainConfig,
                        width: float = 0.5, f1: float = 10.0,
                        f2: float = 1000.0, sweep_duration: float | None = None,
                        model_kind: str = "dual_path", batch_size: int = 256,
                        progress=None, collect_models: dict | None = None) -> EvalReport:
    """Train a fresh model per (strength, size) cell and record tone MREs.

    ``sizes`` are total window-pair counts split evenly across the sweep
    amplitude groups.  Each cell uses a deterministic seed derived from
    its coordinates.  ``eval_signals`` is a list of (amplitude, f_hz)
    tuples; the default is amplitude 0.5 over 100–1000 Hz in 100 Hz steps.
    When ``collect_models`` is given, each cell's trained model is stored
    in it under the key ``(strength, size)``.
    """
    if eval_signals is None:
        eval_signals = [(0.5, float(f)) for f in range(100, 1001, 100)]
    sizes = list(sizes)
    if any(s <= 0 for s in sizes):
        raise ParameterError(f"dataset sizes must be positive: {sizes}")
    amplitudes = list(amplitudes)
    rows = []
    for strength in strengths:
        params = dataclasses.replace(base_params, a3=strength * base_params.a1)
        for size in sizes:
            seed = cell_seed(strength, size)
            dataset = windowing.build_sweep_dataset(
                params, amplitudes, n, n_s,
                pairs_per_group=max(1, size // len(amplitudes)),
                f1=f1, f2=f2, sweep_duration=sweep_duration,
            )
            if model_kind == "dual_path":
                model = dual_path.build(
                    dual_path.DualPathConfig.scaled(n_s, width), seed)
            else:
                model = dual_path.build_baseline(
                    model_kind, seed, n=n, n_s=n_s, width=width)
            cfg = dataclasses.replace(train_config, seed=seed)
            tic = time.perf_counter()
            trainer.train(model, dataset, cfg)
            train_s = time.perf_counter() - tic
            if collect_models is not None:
                collect_models[(strength, size)] = model
            for amplitude, freq in eval_signals:
                cell = eval_grid(
                    model, params, [amplitude], [freq],
                    n=n, batch_size=batch_size,
                    size=size, train_s=train_s,
                )
                rows.extend(cell.rows)
            if progress is not None:
                progress(strength, size, rows[-len(eval_signals):])
    return EvalReport(rows)


def timing_compare(models, dataset: WindowDataset, *, batch_size: int = 32,
                   train_steps: int = 3, infer_batches: int = 3,
                   train_config: TrainConfig | None = None) -> list:
    """Wall-clock train-steps/sec and inference windows/sec per model.

    All models see identical batch settings drawn from ``dataset``.  Each
    result row carries rates plus ratios relative to the last model in
    the list (the reference configuration).
    """
    models = list(models)
    if len(models) < 2:
        raise ParameterError("timing_compare needs at least two models")
    if train_config is None:
        train_config = TrainConfig(batch_size=max(2, batch_size),
                                   epochs=1, max_steps=train_steps)
    rows = []
    for model in models:
        cfg = dataclasses.replace(
            train_config, batch_size=max(2, batch_size), epochs=1,
            max_steps=train_steps)
        tic = time.perf_counter()
        result = trainer.train(model, dataset, cfg)
        train_elapsed = time.perf_counter() - tic
        steps_per_s = len(result.step_losses) / train_elapsed

        dtype = next(iter(model.parameters().values())).data.dtype
        views = tuple(v.astype(dtype, copy=False)
                      for v in trainer.input_views(model, dataset))
        model.set_training(False)
        count = min(infer_batches * batch_size, dataset.count)
        tic = time.perf_counter()
        for lo in range(0, count, batch_size):
            batch = tuple(Tensor(np.ascontiguousarray(v[lo:lo + batch_size]))
                          for v in views)
            model(*batch)
        infer_elapsed = time.perf_counter() - tic
        rows.append({
            "model": model.tag,
            "input_length": (model.config.n_s
                             if hasattr(model, "config") else model.n),
            "train_steps_per_s": steps_per_s,
            "infer_windows_per_s": count / infer_elapsed,
        })
    ref = rows[-1]
    for row in rows:
        row["train_ratio"] = row["train_steps_per_s"] / ref["train_steps_per_s"]
        row["infer_ratio"] = row["infer_windows_per_s"] / ref["infer_windows_per_s"]
    return rows


def emit_report(report: EvalReport, path, fmt: str = "csv") -> None:
    """Write a report as CSV (fixed column order) or a JSON array."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for r in report.rows:
                writer.writerow([
                    r.model, repr(r.amplitude), repr(r.f_hz), repr(r.strength),
                    r.size, repr(r.mre), repr(r.train_s), repr(r.infer_s),
                ])
    elif fmt == "json":
        payload = [{
            "model": r.model, "A": r.amplitude, "f_hz": r.f_hz,
            "strength": r.strength, "size": r.size, "mre": r.mre,
            "train_s": r.train_s, "infer_s": r.infer_s,
        } for r in report.rows]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
    else:
        raise ParameterError(f"unknown report format {fmt!r}")


def load_report(path, fmt: str | None = None) -> EvalReport:
    """Read a report written by :func:`emit_report` (format from suffix)."""
    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "csv"
    rows = []
    if fmt == "csv":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != list(_CSV_COLUMNS):
                raise ParameterError(f"unexpected CSV columns: {reader.fieldnames}")
            for rec in reader:
                rows.append(_row_from_mapping(rec))
    else:
        with open(path) as fh:
            for rec in json.load(fh):
                rows.append(_row_from_mapping(rec))
    return EvalReport(rows)


def _row_from_mapping(rec: dict) -> EvalRow:
    return EvalRow(
        model=rec["model"],
        amplitude=float(rec["A"]),
        f_hz=float(rec["f_hz"]),
        strength=float(rec["strength"]),
        size=int(rec["size"]),
        mre=float(rec["mre"]),
        train_s=float(rec["train_s"]),
        infer_s=float(rec["infer_s"]),
    )
