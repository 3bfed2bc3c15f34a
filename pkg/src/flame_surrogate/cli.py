"""Command-line pipeline: generate sweep data, train, evaluate, study,
fine-tune, tabulate describing functions, gradient-check, and report the
history-window length.

Exit codes: 0 success, 2 usage/configuration error, 3 numeric error,
4 I/O or file-format error.  Timestamps only ever go to the sidecar
``log.txt`` so repeated runs produce bitwise-identical primary outputs
(wall-clock duration columns in evaluation reports excepted).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import dual_path, evaluator, trainer, windowing
from .dual_path import DualPathConfig
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
from .flame_oracle import NTauParams, oracle_describing_function, step_impact_time
from .nn_layers import (
    avg_pool1d,
    BatchNorm1d,
    Conv1d,
    Dropout,
    LayerNorm,
    Linear,
    LSTMLayer,
    MultiHeadAttention,
    positional_encoding,
)
from .signalgen import tone_series
from .tensor_engine import Tensor, gradcheck
from .trainer import TrainConfig
from .windowing import make_pairs, WindowDataset

__all__ = ["main", "dispatch"]

_PROFILES = {
    "paper": {
        "dt": 1e-6, "n": 6000, "n_s": 1000, "width": 1.0,
        "pairs_per_group": 10000,
        "sizes": (20000, 40000, 60000, 80000, 100000),
    },
    "desk": {
        "dt": 1e-5, "n": None, "n_s": 128, "width": 0.5,
        "pairs_per_group": 1000,
        "sizes": (2000, 4000, 6000, 8000, 10000),
    },
}

_DEFAULT_AMPLITUDES = tuple(round(0.1 * k, 1) for k in range(1, 11))
_GRID_AMPLITUDES = tuple(round(0.25 + 0.1 * k, 2) for k in range(8))
_GRID_FREQS = tuple(float(f) for f in range(100, 901, 100))


@dataclasses.dataclass
class RunConfig:
    profile: str
    params: NTauParams
    n: int
    n_s: int
    width: float
    amplitudes: tuple
    f1: float
    f2: float
    pairs_per_group: int
    sizes: tuple
    seed: int
    out: str
    epsilon: float


def _parse_floats(text: str) -> tuple:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ParameterError(f"bad numeric list {text!r}: {exc}") from exc
    if not values:
        raise ParameterError(f"empty numeric list {text!r}")
    return values


def _parse_ints(text: str) -> tuple:
    return tuple(int(round(v)) for v in _parse_floats(text))


def worker_cap() -> int:
    """Worker-count cap from FLAME_SURROGATE_THREADS (default 1)."""
    raw = os.environ.get("FLAME_SURROGATE_THREADS")
    if raw is None:
        return 1
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ParameterError(
            f"FLAME_SURROGATE_THREADS must be an integer, got {raw!r}"
        ) from exc
    if cap < 1:
        raise ParameterError(f"FLAME_SURROGATE_THREADS must be >= 1, got {cap}")
    return cap


def resolve(args) -> RunConfig:
    """Merge profile defaults with explicit flag overrides."""
    prof = _PROFILES[args.profile]
    dt = args.dt if args.dt is not None else prof["dt"]
    tau = args.tau_ms * 1e-3
    params = NTauParams(
        fc=args.fc_hz, tau_u1=tau, tau_u3=tau,
        a1=args.a1, a3=args.a3 if args.a3 is not None else args.a1, dt=dt,
    )
    if args.n is not None:
        n = args.n
    elif prof["n"] is not None:
        n = prof["n"]
    else:
        _, n = step_impact_time(params, args.epsilon)
    n_s = args.ns if args.ns is not None else prof["n_s"]
    amplitudes = (_parse_floats(args.amplitudes) if args.amplitudes
                  else _DEFAULT_AMPLITUDES)
    sizes = _parse_ints(args.sizes) if args.sizes else prof["sizes"]
    return RunConfig(
        profile=args.profile, params=params, n=n, n_s=n_s,
        width=args.width if args.width is not None else prof["width"],
        amplitudes=amplitudes, f1=args.f1, f2=args.f2,
        pairs_per_group=(args.pairs_per_group if args.pairs_per_group
                         else prof["pairs_per_group"]),
        sizes=sizes, seed=args.seed, out=args.out, epsilon=args.epsilon,
    )


def _train_config(args, rc: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs if args.epochs is not None else 100,
        batch_size=args.batch, seed=rc.seed,
    )


def _out_path(rc: RunConfig, name: str) -> str:
    os.makedirs(rc.out, exist_ok=True)
    return os.path.join(rc.out, name)


def _log(rc: RunConfig, message: str) -> None:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(_out_path(rc, "log.txt"), "a") as fh:
        fh.write(f"{stamp} {message}\n")


def _meta(rc: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "seed": rc.seed,
        "profile": rc.profile,
        "fc_hz": rc.params.fc,
        "tau_s": rc.params.tau_u1,
        "a1": rc.params.a1,
        "a3": rc.params.a3,
        "dt": rc.params.dt,
        "workers": worker_cap(),
    }


def _build_model(kind: str, rc: RunConfig, dataset: WindowDataset):
    if kind == "dual_path":
        return dual_path.build(DualPathConfig.scaled(dataset.n_s, rc.width),
                               rc.seed)
    return dual_path.build_baseline(kind, rc.seed, n=dataset.n,
                                    n_s=dataset.n_s, width=rc.width)


def cmd_gen_data(args) -> int:
    rc = resolve(args)
    tic = time.perf_counter()
    dataset = windowing.build_sweep_dataset(
        rc.params, rc.amplitudes, rc.n, rc.n_s, rc.pairs_per_group,
        f1=rc.f1, f2=rc.f2,
    )
    path = args.data or _out_path(rc, "dataset.fsw")
    windowing.save_dataset(dataset, path, meta=_meta(rc, "gen-data"))
    _log(rc, f"gen-data wrote {path} ({dataset.count} pairs) "
             f"in {time.perf_counter() - tic:.2f}s")
    print(f"wrote {path}: {dataset.count} pairs, n={dataset.n}, "
          f"n_s={dataset.n_s}, dt={dataset.dt:g}")
    return 0


def cmd_train(args) -> int:
    rc = resolve(args)
    data_path = args.data or _out_path(rc, "dataset.fsw")
    dataset = windowing.load_dataset(data_path)
    config = _train_config(args, rc)
    ckpt_path = _out_path(rc, "model.ckpt")
    start_epoch, adam_state, shuffle_state = 0, None, None
    if args.resume:
        model, meta = trainer.load_checkpoint(args.resume)
        if args.model != _kind_of(model.tag):
            raise CheckpointError(
                f"--model {args.model} conflicts with checkpoint tag {model.tag}"
            )
        start_epoch = meta["epoch"]
        adam_state = meta["adam_state"]
        shuffle_state = meta["shuffle_rng_state"]
        if meta["train_config"] is not None:
            config = dataclasses.replace(
                meta["train_config"],
                epochs=args.epochs if args.epochs is not None
                else meta["train_config"].epochs,
            )
    else:
        model = _build_model(args.model, rc, dataset)
    tic = time.perf_counter()
    result = trainer.train(
        model, dataset, config, checkpoint_path=ckpt_path,
        start_epoch=start_epoch, adam_state=adam_state,
        shuffle_state=shuffle_state,
    )
    elapsed = time.perf_counter() - tic
    with open(_out_path(rc, "history.json"), "w") as fh:
        json.dump({
            "meta": _meta(rc, "train"),
            "model": model.tag,
            "parameters": model.num_parameters(),
            "epochs_run": result.epochs_run,
            "epoch_losses": result.epoch_losses,
            "step_losses": result.step_losses[:1000],
        }, fh, indent=1)
    _log(rc, f"train {model.tag} ran {result.epochs_run} epochs in {elapsed:.2f}s")
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(f"trained {model.tag} ({model.num_parameters()} parameters), "
          f"final epoch loss {final:.3e}; checkpoint at {ckpt_path}")
    return 0


def _kind_of(tag: str) -> str:
    return {
        dual_path.TAG_DUAL: "dual_path",
        dual_path.TAG_MLP: "mlp",
        dual_path.TAG_LSTM: "lstm",
        dual_path.TAG_SINGLE: "single_path",
    }[tag]


def cmd_eval_grid(args) -> int:
    rc = resolve(args)
    ckpt = args.checkpoint or _out_path(rc, "model.ckpt")
    model, _ = trainer.load_checkpoint(ckpt)
    amplitudes = (_parse_floats(args.amplitudes) if args.amplitudes
                  else _GRID_AMPLITUDES)
    report = evaluator.eval_grid(
        model, rc.params, amplitudes, _GRID_FREQS,
        horizon=args.horizon, n=rc.n, batch_size=args.batch,
    )
    evaluator.emit_report(report, _out_path(rc, "grid.csv"), "csv")
    evaluator.emit_report(report, _out_path(rc, "grid.json"), "json")
    _log(rc, f"eval-grid over {len(report.rows)} tones")
    print(f"evaluated {len(report.rows)} tones: mean MRE "
          f"{100 * report.mean_mre:.2f}%")
    return 0


def cmd_study(args) -> int:
    rc = resolve(args)
    strengths = _parse_floats(args.strengths) if args.strengths else (1, 2, 3, 4, 5)
    config = _train_config(args, rc)

    def progress(strength, size, rows):
        mean = float(np.mean([r.mre for r in rows]))
        _log(rc, f"study cell strength={strength:g} size={size} "
                 f"mre={100 * mean:.2f}%")
        print(f"strength={strength:g} size={size}: mean MRE {100 * mean:.2f}%")

    report = evaluator.strength_size_study(
        strengths, rc.sizes,
        base_params=rc.params, n=rc.n, n_s=rc.n_s,
        amplitudes=rc.amplitudes, train_config=config, width=rc.width,
        f1=rc.f1, f2=rc.f2, model_kind=args.model, batch_size=args.batch,
        progress=progress,
    )
    evaluator.emit_report(report, _out_path(rc, "study.csv"), "csv")
    evaluator.emit_report(report, _out_path(rc, "study.json"), "json")
    print(f"study wrote {len(report.rows)} rows to "
          f"{_out_path(rc, 'study.csv')}")
    return 0


def finetune_dataset(params: NTauParams, n: int, n_s: int,
                     amplitude: float = 0.1, freqs=(800.0, 900.0),
                     duration: float = 0.01) -> WindowDataset:
    """Window pairs from short low-amplitude tones (adaptation recipe)."""
    from .flame_oracle import ntau_response

    parts = []
    for freq in freqs:
        u = tone_series(amplitude, freq, duration, params.dt)
        q = ntau_response(u, params)
        parts.append(make_pairs(u, q, n, n_s))
    inputs = np.concatenate([p.inputs for p in parts], axis=0)
    targets = np.concatenate([p.targets for p in parts], axis=0)
    first = parts[0]
    return WindowDataset(inputs, targets, n, first.cfp_indices,
                         first.tdfp_indices, dt=params.dt)


def cmd_finetune(args) -> int:
    rc = resolve(args)
    ckpt = args.checkpoint or _out_path(rc, "model.ckpt")
    model, _ = trainer.load_checkpoint(ckpt)
    small = finetune_dataset(rc.params, rc.n, rc.n_s)
    config = dataclasses.replace(
        _train_config(args, rc),
        epochs=args.epochs if args.epochs is not None else 30,
    )
    before = evaluator.eval_grid(model, rc.params, [0.1], [850.0],
                                 n=rc.n, batch_size=args.batch).mean_mre
    tic = time.perf_counter()
    trainer.finetune(model, small, config)
    elapsed = time.perf_counter() - tic
    after = evaluator.eval_grid(model, rc.params, [0.1], [850.0],
                                n=rc.n, batch_size=args.batch).mean_mre
    out_ckpt = _out_path(rc, "finetuned.ckpt")
    trainer.save_checkpoint(model, out_ckpt)
    with open(_out_path(rc, "finetune.json"), "w") as fh:
        json.dump({
            "meta": _meta(rc, "finetune"),
            "held_out_hz": 850.0,
            "mre_before": before,
            "mre_after": after,
        }, fh, indent=1)
    _log(rc, f"finetune done in {elapsed:.2f}s")
    print(f"held-out 850 Hz MRE: {100 * before:.2f}% -> {100 * after:.2f}%; "
          f"checkpoint at {out_ckpt}")
    return 0


def cmd_fdf(args) -> int:
    rc = resolve(args)
    amplitudes = (_parse_floats(args.amplitudes) if args.amplitudes
                  else _GRID_AMPLITUDES)
    lines = ["A,f_hz,gain,phase_rad"]
    for amplitude in amplitudes:
        for freq in _GRID_FREQS:
            d = oracle_describing_function(rc.params, amplitude, freq)
            lines.append(f"{amplitude!r},{freq!r},{d.gain!r},{d.phase!r}")
    path = _out_path(rc, "fdf.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(rc, f"fdf table with {len(lines) - 1} rows")
    print(f"wrote {path}: {len(lines) - 1} rows")
    return 0


def _gradcheck_suite() -> list:
    """Small input-gradient checks per layer plus a mini full model.

    Each check projects the layer output onto a fixed random vector so
    the scalar under test has O(1) gradients everywhere; squaring or
    plain sums can make the probe nearly flat (a normalized batch has
    sum(y^2) ~ const) and drown real gradients in difference noise.
    """
    rng = np.random.default_rng(7)
    dt64 = np.float64
    checks = []

    def add(name, layer_fn, x):
        r = Tensor(rng.standard_normal(layer_fn(Tensor(x)).shape))
        checks.append((name, lambda t, f=layer_fn, w=r: (f(t) * w).sum(), Tensor(x)))

    lin = Linear(5, 3, rng, dtype=dt64)
    add("linear", lin, rng.standard_normal((4, 5)))

    conv = Conv1d(2, 3, rng, dtype=dt64)
    add("conv1d", conv, rng.standard_normal((2, 6, 2)))

    add("avg_pool1d", avg_pool1d, rng.standard_normal((2, 7, 3)))

    drop = Dropout(0.5, rng)
    drop.set_training(False)
    add("dropout_eval", drop, rng.standard_normal((3, 4)))

    pe = Tensor(positional_encoding(3, 4, dtype=dt64))
    add("positional_encoding", lambda x: (x + pe).tanh(),
        rng.standard_normal((2, 3, 4)))

    bn = BatchNorm1d(3, dtype=dt64)
    add("batchnorm1d", bn, rng.standard_normal((5, 3)))

    ln = LayerNorm(4, dtype=dt64)
    add("layernorm", ln, rng.standard_normal((3, 2, 4)))

    lstm = LSTMLayer(2, 3, rng, dtype=dt64)
    add("lstm", lambda x: lstm(x)[0], rng.standard_normal((2, 3, 2)))
    add("lstm_last_hidden", lambda x: lstm(x)[1], rng.standard_normal((2, 3, 2)))

    mha = MultiHeadAttention(4, 2, rng, dtype=dt64)
    kv = Tensor(rng.standard_normal((2, 5, 4)))
    add("attention", lambda x: mha(x, kv, kv), rng.standard_normal((2, 3, 4)))

    mini = dual_path.build(DualPathConfig.scaled(16, 1 / 16), 0, dtype=dt64)
    mini.set_training(False)
    tdfp_fixed = Tensor(rng.standard_normal((2, 16)))
    add("dual_path", lambda x: mini(x, tdfp_fixed), rng.standard_normal((2, 16)))
    return checks


def cmd_gradcheck(args) -> int:
    threshold = 1e-5
    worst = 0.0
    failed = []
    for name, f, x in _gradcheck_suite():
        err = gradcheck(f, x)
        worst = max(worst, err)
        status = "ok" if err < threshold else "FAIL"
        print(f"{name:12s} rel_err={err:.3e} {status}")
        if err >= threshold:
            failed.append(name)
    if failed:
        raise NumericError(f"gradcheck failed for: {', '.join(failed)}")
    print(f"all gradient checks passed (worst {worst:.3e} < {threshold})")
    return 0


def cmd_impact_time(args) -> int:
    rc = resolve(args)
    delta_t, n = step_impact_time(rc.params, rc.epsilon)
    print(f"impact time: delta_t={delta_t:.6g} s, n={n} samples "
          f"(dt={rc.params.dt:g}, epsilon={rc.epsilon:g})")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-grid": cmd_eval_grid,
    "study": cmd_study,
    "finetune": cmd_finetune,
    "fdf": cmd_fdf,
    "gradcheck": cmd_gradcheck,
    "impact-time": cmd_impact_time,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", choices=("paper", "desk"), default="desk")
    common.add_argument("--fc-hz", type=float, default=400.0)
    common.add_argument("--tau-ms", type=float, default=2.0)
    common.add_argument("--a1", type=float, default=1.0)
    common.add_argument("--a3", type=float, default=None)
    common.add_argument("--dt", type=float, default=None)
    common.add_argument("--n", type=int, default=None)
    common.add_argument("--ns", type=int, default=None)
    common.add_argument("--amplitudes", type=str, default=None,
                        help="comma-separated amplitude list")
    common.add_argument("--f1", type=float, default=10.0)
    common.add_argument("--f2", type=float, default=1000.0)
    common.add_argument("--epochs", type=int, default=None)
    common.add_argument("--batch", type=int, default=256)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=str, default="out")
    common.add_argument("--model",
                        choices=("dual_path", "mlp", "lstm", "single_path"),
                        default="dual_path")
    common.add_argument("--resume", type=str, default=None,
                        help="checkpoint to continue training from")
    common.add_argument("--width", type=float, default=None,
                        help="override profile width factor")
    common.add_argument("--data", type=str, default=None,
                        help="dataset file (default <out>/dataset.fsw)")
    common.add_argument("--checkpoint", type=str, default=None,
                        help="model checkpoint (default <out>/model.ckpt)")
    common.add_argument("--pairs-per-group", type=int, default=None)
    common.add_argument("--strengths", type=str, default=None,
                        help="comma-separated a3/a1 list for study")
    common.add_argument("--sizes", type=str, default=None,
                        help="comma-separated dataset sizes for study")
    common.add_argument("--horizon", type=float, default=None,
                        help="test-tone duration in seconds")
    common.add_argument("--epsilon", type=float, default=0.01,
                        help="step-settling tolerance for impact time")

    parser = argparse.ArgumentParser(
        prog="flame-surrogate",
        description=(
            "Desk-scale pipeline: analytic flame-response data generation, "
            "dual-path surrogate training, and evaluation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def dispatch(argv) -> int:
    """Parse and run one CLI invocation; returns the process exit code."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems itself
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except (ParameterError, ConfigError, ShapeError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, SettleError, MetricError, DeterminismError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except FlameSurrogateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
