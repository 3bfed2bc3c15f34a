"""Sliding-window training pairs and short-sequence index maps.

A length-L input/output series pair yields L-n+1 many-to-one samples:
each window of n consecutive velocity samples maps to the heat-release
value at the window's last instant.  Two subsampling index maps shorten
each window to n_s points: an equal-interval map anchored at the most
recent sample, and a sparse-to-dense map that samples old history
coarsely and recent history finely.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, DataError, ParameterError
from .flame_oracle import NTauParams, ntau_response
from .signalgen import SweepSpec, TimeSeries, sweep_series

__all__ = [
    "WindowDataset",
    "make_pairs",
    "equal_interval_indices",
    "sparse_to_dense_indices",
    "subsample",
    "save_dataset",
    "load_dataset",
    "read_dataset_header",
    "build_sweep_dataset",
]

_MAGIC = b"FSWDSET1"


@dataclass
class WindowDataset:
    """(window, target) pairs plus the two short-sequence index maps."""

    inputs: np.ndarray  # [count, n]
    targets: np.ndarray  # [count]
    n: int
    cfp_indices: np.ndarray  # [n_s], strictly increasing
    tdfp_indices: np.ndarray  # [n_s], nondecreasing
    dt: float = 0.0

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs)
        self.targets = np.asarray(self.targets)
        self.cfp_indices = np.asarray(self.cfp_indices, dtype=np.int64)
        self.tdfp_indices = np.asarray(self.tdfp_indices, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[1] != self.n:
            raise DataError(
                f"inputs must be [count, n={self.n}], got {self.inputs.shape}"
            )
        if self.targets.shape != (self.inputs.shape[0],):
            raise DataError(
                f"targets must be [count={self.inputs.shape[0]}], "
                f"got {self.targets.shape}"
            )
        for name, idx in (("cfp", self.cfp_indices), ("tdfp", self.tdfp_indices)):
            if idx.size > self.n:
                raise DataError(f"{name} map longer than window: {idx.size} > {self.n}")
            if idx.size and (idx.min() < 0 or idx.max() > self.n - 1):
                raise DataError(f"{name} indices outside [0, {self.n - 1}]")
        if self.cfp_indices.size != self.tdfp_indices.size:
            raise DataError("cfp and tdfp maps must have equal length")
        if np.any(np.diff(self.cfp_indices) <= 0):
            raise DataError("cfp indices must be strictly increasing")
        if np.any(np.diff(self.tdfp_indices) < 0):
            raise DataError("tdfp indices must be nondecreasing")

    @property
    def count(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def n_s(self) -> int:
        return int(self.cfp_indices.size)


def make_pairs(
    u: TimeSeries, q: TimeSeries, n: int, n_s: int | None = None
) -> WindowDataset:
    """Build the L-n+1 (window, target) pairs from aligned series.

    Pair j has input ``u[j .. j+n-1]`` and target ``q[j+n-1]``.  The
    window array is a zero-copy view of ``u``.  When ``n_s`` is given the
    equal-interval and sparse-to-dense maps are attached; otherwise both
    maps default to the identity (n_s = n).
    """
    if len(u) != len(q):
        raise DataError(f"series lengths differ: {len(u)} vs {len(q)}")
    if abs(u.dt - q.dt) > 1e-12 * max(u.dt, q.dt):
        raise DataError(f"series dt differ: {u.dt:g} vs {q.dt:g}")
    if n < 1:
        raise ParameterError(f"window length must be >= 1, got {n}")
    if len(u) < n:
        raise DataError(f"series of length {len(u)} shorter than window n={n}")
    windows = np.lib.stride_tricks.sliding_window_view(u.values, n)
    targets = q.values[n - 1 :]
    if n_s is None:
        cfp = np.arange(n, dtype=np.int64)
        tdfp = np.arange(n, dtype=np.int64)
    else:
        cfp = equal_interval_indices(n, n_s)
        tdfp = sparse_to_dense_indices(n, n_s)
    return WindowDataset(windows, targets, n, cfp, tdfp, dt=u.dt)


def equal_interval_indices(n: int, n_s: int) -> np.ndarray:
    """Equal-interval map anchored at the last sample.

    With ``stride = floor(n/n_s)`` the indices are
    ``n-1 - stride*k`` for ``k = n_s-1 .. 0``, ascending, so the most
    recent instant ``n-1`` is always included.
    """
    if not 1 <= n_s <= n:
        raise ParameterError(f"need 1 <= n_s <= n, got n_s={n_s}, n={n}")
    stride = n // n_s
    return n - 1 - stride * np.arange(n_s - 1, -1, -1, dtype=np.int64)


def sparse_to_dense_indices(n: int, n_s: int, fractional: bool = False) -> np.ndarray:
    """Sparse-to-dense map: old history coarse, recent history fine.

    The sampling step starts at ``dn*n_s`` and shrinks by
    ``dn = 2n/((1+n_s)*n_s)`` per point:

        index_1 = 0
        index_i = int(index_{i-1} + step_i),  step_i = step_{i-1} - dn

    ``int()`` truncates at every point, so duplicate indices can appear
    in the dense tail where the step drops below 1.  With
    ``fractional=True`` truncation error is not re-fed into the
    recursion (a float accumulator is truncated only on output); the
    default is the literal per-point truncation above.
    """
    if not 2 <= n_s <= n:
        raise ParameterError(f"need 2 <= n_s <= n, got n_s={n_s}, n={n}")
    dn = 2.0 * n / ((1.0 + n_s) * n_s)
    step = n_s * dn
    indices = np.empty(n_s, dtype=np.int64)
    indices[0] = 0
    idx = 0.0 if fractional else 0
    for i in range(1, n_s):
        step -= dn
        if fractional:
            idx += step
            indices[i] = int(idx)
        else:
            idx = int(idx + step)
            indices[i] = idx
    assert indices[-1] <= n - 1, "sparse-to-dense map exceeded window"
    return indices


def subsample(dataset: WindowDataset) -> tuple[np.ndarray, np.ndarray]:
    """Gather the per-window short sequences for the two model paths.

    Returns ``(cfp_batch, tdfp_batch)``, each ``[count, n_s]``; gathering
    preserves temporal order because both maps are sorted.
    """
    cfp = dataset.inputs[:, dataset.cfp_indices]
    tdfp = dataset.inputs[:, dataset.tdfp_indices]
    return cfp, tdfp


def build_sweep_dataset(
    params: NTauParams,
    amplitudes,
    n: int,
    n_s: int,
    pairs_per_group: int,
    f1: float = 10.0,
    f2: float = 1000.0,
    sweep_duration: float | None = None,
    fractional: bool = False,
    dtype=np.float32,
) -> WindowDataset:
    """Generate a training dataset from frequency sweeps through the oracle.

    One sweep group is produced per amplitude.  ``sweep_duration`` sets the
    physical length of each group's chirp; the default makes every window
    quasi-stationary (instantaneous frequency drifts by at most ~2% of the
    band within one window), which is what lets a model trained on sweeps
    predict steady tones.  ``pairs_per_group`` windows are then retained
    per group at an even stride, so dataset size can vary without changing
    the underlying signals.
    """
    if pairs_per_group < 1:
        raise ParameterError(f"pairs_per_group must be >= 1, got {pairs_per_group}")
    amplitudes = list(amplitudes)
    if not amplitudes:
        raise ParameterError("need at least one sweep amplitude")
    window_span = (n - 1) * params.dt
    if sweep_duration is None:
        sweep_duration = max(50.0 * window_span,
                             (pairs_per_group + n - 1) * params.dt)
    length = int(np.floor(sweep_duration / params.dt + 1e-9)) + 1
    available = length - n + 1
    if available < 1:
        raise ParameterError(
            f"sweep_duration {sweep_duration} too short for window length {n}"
        )
    kept = min(pairs_per_group, available)
    positions = np.floor(np.arange(kept) * (available / kept)).astype(np.int64)
    t2 = (length - 1) * params.dt
    inputs = np.empty((kept * len(amplitudes), n), dtype=dtype)
    targets = np.empty(kept * len(amplitudes), dtype=dtype)
    for g, amp in enumerate(amplitudes):
        u = sweep_series(SweepSpec(amp, f1, f2, 0.0, t2, params.dt))
        if len(u) != length:  # defensive: grid construction must be exact
            raise DataError(f"sweep length {len(u)} != expected {length}")
        q = ntau_response(u, params)
        windows = np.lib.stride_tricks.sliding_window_view(u.values, n)
        lo = g * kept
        inputs[lo : lo + kept] = windows[positions]
        targets[lo : lo + kept] = q.values[n - 1 :][positions]
    cfp = equal_interval_indices(n, n_s)
    tdfp = sparse_to_dense_indices(n, n_s, fractional=fractional)
    return WindowDataset(inputs, targets, n, cfp, tdfp, dt=params.dt)


def save_dataset(dataset: WindowDataset, path, meta: dict | None = None) -> None:
    """Persist a dataset: 8-byte magic, JSON header, float32 LE payload.

    Layout: magic, u32 header length, header JSON (n, n_s, count, dt,
    index maps, payload crc32, optional caller metadata), row-major
    float32 little-endian inputs, then targets.
    """
    inputs = np.ascontiguousarray(dataset.inputs, dtype="<f4")
    targets = np.ascontiguousarray(dataset.targets, dtype="<f4")
    crc = zlib.crc32(inputs.tobytes())
    crc = zlib.crc32(targets.tobytes(), crc)
    header = {
        "version": 1,
        "n": dataset.n,
        "n_s": dataset.n_s,
        "count": dataset.count,
        "dt": dataset.dt,
        "cfp_indices": dataset.cfp_indices.tolist(),
        "tdfp_indices": dataset.tdfp_indices.tolist(),
        "payload_crc32": crc,
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(inputs.tobytes())
        fh.write(targets.tobytes())


def read_dataset_header(path) -> dict:
    """Read just the JSON header of a saved dataset."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise CheckpointError(f"bad dataset magic {magic!r} in {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            return json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt dataset header in {path}: {exc}") from exc


def load_dataset(path) -> WindowDataset:
    """Load a dataset written by :func:`save_dataset`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise CheckpointError(f"bad dataset magic {magic!r} in {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt dataset header in {path}: {exc}") from exc
        if header.get("version") != 1:
            raise CheckpointError(f"unsupported dataset version {header.get('version')}")
        count, n = header["count"], header["n"]
        raw = fh.read(4 * count * n)
        raw_t = fh.read(4 * count)
        if len(raw) != 4 * count * n or len(raw_t) != 4 * count:
            raise CheckpointError(f"truncated dataset payload in {path}")
        crc = zlib.crc32(raw)
        crc = zlib.crc32(raw_t, crc)
        if crc != header["payload_crc32"]:
            raise CheckpointError(f"dataset payload CRC mismatch in {path}")
    inputs = np.frombuffer(raw, dtype="<f4").reshape(count, n)
    targets = np.frombuffer(raw_t, dtype="<f4")
    return WindowDataset(
        inputs,
        targets,
        n,
        np.asarray(header["cfp_indices"], dtype=np.int64),
        np.asarray(header["tdfp_indices"], dtype=np.int64),
        dt=header["dt"],
    )
