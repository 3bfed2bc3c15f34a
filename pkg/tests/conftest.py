"""Shared fixtures: desk-scale oracle parameters and the slow trained models.

The expensive trained models (the strength x size study cells and the two
baselines) are session-scoped so the acceptance checks share one training
run instead of repeating it.
"""
from __future__ import annotations

import dataclasses
import time

import numpy as np
import pytest

import flame_surrogate as fs
from flame_surrogate import trainer

# Desk profile: dt coarsened 10x from the reference setup, window length
# from the step-settle time at epsilon=0.01, short length 128, width 0.5.
DESK_DT = 1e-5
DESK_N = 383
DESK_NS = 128
DESK_WIDTH = 0.5
AMPLITUDE_GROUPS = tuple(round(0.1 * k, 1) for k in range(1, 11))

# Training recipe for the acceptance runs, calibrated on the 10k-pair
# desk dataset (see git history): lr 3e-4 with late decay reaches ~4% MRE
# on the held-out 350 Hz tone in 40 epochs.
ACCEPT_EPOCHS = 40
ACCEPT_MILESTONES = (24, 34, 38)
ACCEPT_LR = 3e-4
ACCEPT_BATCH = 256

STUDY_STRENGTHS = (1.0, 3.0, 5.0)
STUDY_SIZES = (2000, 6000, 10000)


def desk_params(strength: float = 1.0, dt: float = DESK_DT) -> fs.NTauParams:
    return fs.NTauParams(fc=400.0, tau_u1=2e-3, tau_u3=2e-3,
                         a1=1.0, a3=strength, dt=dt)


def accept_config(seed: int) -> fs.TrainConfig:
    return fs.TrainConfig(lr_init=ACCEPT_LR, epochs=ACCEPT_EPOCHS,
                          batch_size=ACCEPT_BATCH,
                          milestones=ACCEPT_MILESTONES, seed=seed)


def cell_dataset(strength: float, size: int) -> fs.WindowDataset:
    return fs.build_sweep_dataset(
        desk_params(strength), AMPLITUDE_GROUPS, n=DESK_N, n_s=DESK_NS,
        pairs_per_group=size // len(AMPLITUDE_GROUPS))


@pytest.fixture(scope="session")
def oracle_params() -> fs.NTauParams:
    return desk_params()


@pytest.fixture(scope="session")
def study_outcome():
    """The strength x size study report plus its trained models."""
    models: dict = {}
    report = fs.strength_size_study(
        STUDY_STRENGTHS, STUDY_SIZES,
        base_params=desk_params(), n=DESK_N, n_s=DESK_NS,
        amplitudes=AMPLITUDE_GROUPS, train_config=accept_config(0),
        width=DESK_WIDTH, collect_models=models,
        progress=lambda s, z, rows: print(
            f"[study] strength={s:g} size={z} "
            f"mean MRE={np.mean([r.mre for r in rows]):.4f}", flush=True),
    )
    return report, models


@pytest.fixture(scope="session")
def baseline_models(study_outcome):
    """MLP and LSTM baselines trained like the (1, 10k) cell.

    The LSTM's autodiff graph spans the full 383-step window, so its
    batch drops to 128 to stay inside the container memory limit; every
    other knob matches the study recipe.
    """
    seed = fs.cell_seed(1.0, STUDY_SIZES[-1])
    dataset = cell_dataset(1.0, STUDY_SIZES[-1])
    out = {}
    for kind, batch in (("mlp", ACCEPT_BATCH), ("lstm", 128)):
        model = fs.build_baseline(kind, seed, n=DESK_N, n_s=DESK_NS,
                                  width=DESK_WIDTH)
        config = dataclasses.replace(accept_config(seed), batch_size=batch)
        tic = time.perf_counter()
        trainer.train(model, dataset, config)
        print(f"[baseline] {kind} trained in "
              f"{time.perf_counter() - tic:.0f}s", flush=True)
        out[kind] = model
    return out


_criteria: list = []


@pytest.fixture
def criterion():
    """Record one acceptance-criterion outcome and assert it."""
    def record(num: int, name: str, passed: bool, detail: str) -> None:
        _criteria.append((num, name, bool(passed), detail))
        line = f"criterion {num:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        print(line, flush=True)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, passed, detail in sorted(_criteria):
        terminalreporter.write_line(
            f"criterion {num:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
