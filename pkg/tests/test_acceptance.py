"""Ten end-to-end acceptance checks covering oracle analytics, sampling
maps, parameter budgets, gradient correctness, tone learning, study
trends, the short-sequence speedup, transfer learning, baseline ordering,
and determinism.  Each check prints one pass/fail line (collected again in
the terminal summary)."""
import time

import numpy as np

import flame_surrogate as fs
from flame_surrogate import trainer
from flame_surrogate.cli import _gradcheck_suite, finetune_dataset
from flame_surrogate.tensor_engine import gradcheck

from conftest import DESK_N, DESK_NS, STUDY_SIZES, STUDY_STRENGTHS, desk_params


def test_criterion_01_oracle_analytics(criterion):
    tone = fs.tone_series(1.0, 400.0, 0.1, 1e-5)
    filtered = fs.first_order_filter(tone, fc=400.0)
    gain = np.max(np.abs(filtered.values[-5000:]))  # steady tail, 20 cycles
    gain_err = abs(gain - 2 ** -0.5) / 2 ** -0.5

    d = fs.oracle_describing_function(desk_params(1.0), 0.4, 50.0)
    want = (1.0 - 0.75 * 0.4 ** 2) / np.sqrt(1.0 + (50.0 / 400.0) ** 2)
    df_err = abs(d.gain - want) / want

    criterion(1, "oracle analytics",
              gain_err < 0.01 and df_err < 0.02,
              f"cutoff gain {gain:.6f} (err {100 * gain_err:.3f}% < 1%), "
              f"saturated gain {d.gain:.6f} vs {want:.6f} "
              f"(err {100 * df_err:.3f}% < 2%)")


def test_criterion_02_sampling_formula(criterion):
    idx = fs.sparse_to_dense_indices(6000, 1000)
    head_ok = [int(v) for v in idx[:3]] == [0, 11, 22]
    diffs = np.diff(idx)
    spacing_ok = bool(np.all(diffs[1:] <= diffs[:-1] + 1) and np.all(diffs >= 0))
    range_ok = bool(idx[0] >= 0 and idx[-1] < 6000)
    criterion(2, "sparse-to-dense sampling",
              head_ok and spacing_ok and range_ok,
              f"first three {[int(v) for v in idx[:3]]}, spacing tapers "
              f"{diffs[0]} -> {diffs[-1]} nonincreasing within +1, "
              f"max index {idx[-1]} < 6000")


def test_criterion_03_parameter_counts(criterion):
    mlp = fs.build_baseline("mlp", 0).num_parameters()
    lstm = fs.build_baseline("lstm", 0).num_parameters()
    dual = fs.build(fs.DualPathConfig.paper(), 0).num_parameters()
    lstm_err = abs(lstm - 1_017_692) / 1_017_692
    dual_err = abs(dual - 1_043_137) / 1_043_137
    criterion(3, "parameter budgets",
              mlp == 1_050_379 and lstm_err <= 0.001 and dual_err <= 0.02,
              f"mlp {mlp} (exact), lstm {lstm} ({100 * lstm_err:.3f}% of target), "
              f"dual {dual} ({100 * dual_err:.3f}% of target)")


def test_criterion_04_gradient_correctness(criterion):
    tic = time.perf_counter()
    errs = {name: gradcheck(f, x) for name, f, x in _gradcheck_suite()}
    elapsed = time.perf_counter() - tic
    worst = max(errs.values())
    worst_name = max(errs, key=errs.get)
    criterion(4, "gradient correctness",
              worst < 1e-5 and elapsed < 300.0,
              f"{len(errs)} checks, worst {worst:.2e} ({worst_name}) < 1e-5 "
              f"in {elapsed:.0f}s")


def test_criterion_05_tone_learning(criterion, study_outcome):
    report, models = study_outcome
    details = []
    passed = True
    for strength, bound in ((1.0, 0.10), (3.0, 0.15)):
        model = models[(strength, STUDY_SIZES[-1])]
        rep = fs.eval_grid(model, desk_params(strength), [0.45], [350.0],
                           n=DESK_N)
        train_s = max(r.train_s for r in report.rows
                      if r.strength == strength and r.size == STUDY_SIZES[-1])
        ok = rep.mean_mre < bound and train_s <= 7200.0
        passed = passed and ok
        details.append(f"strength {strength:g}: {100 * rep.mean_mre:.2f}% "
                       f"(< {100 * bound:.0f}%), trained in {train_s:.0f}s")
    criterion(5, "tone learning at 0.45 amplitude / 350 Hz", passed,
              "; ".join(details))


def test_criterion_06_strength_size_trends(criterion, study_outcome):
    report, _ = study_outcome
    means = report.cell_means()
    size_ok = all(
        means[(s, STUDY_SIZES[-1])] <= means[(s, STUDY_SIZES[0])]
        for s in STUDY_STRENGTHS)
    inversion_counts = {}
    for size in STUDY_SIZES:
        seq = [means[(s, size)] for s in STUDY_STRENGTHS]
        inversion_counts[size] = sum(b < a for a, b in zip(seq, seq[1:]))
    strength_ok = all(c <= 1 for c in inversion_counts.values())
    cells = ", ".join(
        f"({s:g},{z}) {100 * means[(s, z)]:.1f}%"
        for s in STUDY_STRENGTHS for z in STUDY_SIZES)
    criterion(6, "strength x size trends", size_ok and strength_ok,
              f"more data helps per strength: {size_ok}; "
              f"inversions per size {inversion_counts}; cells: {cells}")


def test_criterion_07_short_sequence_speedup(criterion):
    params = desk_params(1.0, dt=1e-6)
    u = fs.tone_series(0.5, 400.0, 6.046e-3, 1e-6)  # 6047 samples, 48 windows
    q = fs.ntau_response(u, params)
    dataset = fs.make_pairs(u, q, 6000, 1000)
    fast = fs.build(fs.DualPathConfig.paper(1000), seed=0)
    slow = fs.build(fs.DualPathConfig.paper(6000), seed=0)
    tic = time.perf_counter()
    rows = fs.timing_compare([fast, slow], dataset, batch_size=8,
                             train_steps=2, infer_batches=2)
    elapsed = time.perf_counter() - tic
    train_ratio = rows[0]["train_ratio"]
    infer_ratio = rows[0]["infer_ratio"]
    criterion(7, "short-sequence speedup",
              train_ratio >= 3.0 and infer_ratio >= 3.0 and elapsed < 1800.0,
              f"subsampled-input model vs full-window model: train {train_ratio:.1f}x, "
              f"inference {infer_ratio:.1f}x (both >= 3x) in {elapsed:.0f}s")


def test_criterion_08_transfer_learning(criterion, study_outcome, tmp_path):
    _, models = study_outcome
    path = tmp_path / "pretrained.ckpt"
    trainer.save_checkpoint(models[(1.0, STUDY_SIZES[-1])], path)
    model, _ = trainer.load_checkpoint(path)  # private copy to adapt

    params = desk_params(1.0)
    before = fs.eval_grid(model, params, [0.1], [850.0], n=DESK_N).mean_mre
    backbone_before = {k: v.copy() for k, v in model.state_dict().items()
                       if not k.startswith("head.")}
    small = finetune_dataset(params, DESK_N, DESK_NS)
    trainer.finetune(model, small, fs.TrainConfig(
        epochs=30, batch_size=256, seed=0))
    after = fs.eval_grid(model, params, [0.1], [850.0], n=DESK_N).mean_mre

    backbone_after = {k: v for k, v in model.state_dict().items()
                      if not k.startswith("head.")}
    frozen_ok = all(np.array_equal(backbone_after[k], v)
                    for k, v in backbone_before.items())
    criterion(8, "head-only transfer learning",
              after < before and frozen_ok,
              f"held-out 850 Hz MRE {100 * before:.2f}% -> {100 * after:.2f}% "
              f"({len(backbone_before)} frozen arrays bitwise unchanged: "
              f"{frozen_ok})")


def test_criterion_09_baseline_ordering(criterion, study_outcome,
                                        baseline_models):
    _, models = study_outcome
    params = desk_params(1.0)
    amplitudes, freqs = (0.25, 0.55, 0.85), (200.0, 400.0, 800.0)
    scores = {}
    scores["dual"] = fs.eval_grid(models[(1.0, STUDY_SIZES[-1])], params,
                                  amplitudes, freqs, n=DESK_N).mean_mre
    for kind in ("lstm", "mlp"):
        scores[kind] = fs.eval_grid(baseline_models[kind], params,
                                    amplitudes, freqs, n=DESK_N).mean_mre
    criterion(9, "architecture ordering on the tone grid",
              scores["dual"] < scores["lstm"] < scores["mlp"],
              "mean grid MRE: " + ", ".join(
                  f"{k} {100 * v:.2f}%" for k, v in scores.items()))


def test_criterion_10_determinism(criterion, study_outcome, tmp_path):
    def ten_losses():
        dataset = fs.build_sweep_dataset(
            desk_params(1.0), (0.3, 0.6, 0.9), n=DESK_N, n_s=DESK_NS,
            pairs_per_group=64)
        model = fs.build(fs.DualPathConfig.desk(DESK_NS), seed=123)
        res = trainer.train(model, dataset, fs.TrainConfig(
            epochs=4, batch_size=32, seed=9, max_steps=10))
        return res.step_losses
    first, second = ten_losses(), ten_losses()
    losses_ok = len(first) == 10 and first == second

    _, models = study_outcome
    model = models[(1.0, STUDY_SIZES[-1])]
    tone = fs.tone_series(0.45, 350.0, DESK_N * 1e-5 + 5 / 350.0, 1e-5)
    want = fs.predict_windows(model, tone.values, DESK_N)
    path = tmp_path / "round.ckpt"
    trainer.save_checkpoint(model, path)
    loaded, _ = trainer.load_checkpoint(path)
    got = fs.predict_windows(loaded, tone.values, DESK_N)
    eval_ok = np.array_equal(want, got)

    criterion(10, "bitwise determinism",
              losses_ok and eval_ok,
              f"10-step loss histories identical: {losses_ok}; "
              f"checkpoint round-trip predictions identical over "
              f"{want.size} windows: {eval_ok}")
