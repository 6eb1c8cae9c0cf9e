"""Reproducible experiment drivers shared by the acceptance suite and scripts/.

The desk task is the 8x8 digits set bundled with scikit-learn, trained with a
64-64-32-10 rectifier network.  The MNIST protocol needs the four IDX files
of the standard distribution in one directory.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from . import data
from .nn import NetworkSpec, error_rate
from .trainer import AptConfig, AptResult, random_tying_baseline, run_apt

log = logging.getLogger(__name__)

DESK_HIDDEN = (64, 32)
LENET_300_100 = (784, 300, 100, 10)
MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def desk_task(validation_fraction: float = 0.3, split_seed: int = 0):
    full = data.load_digits_dataset()
    train, val = data.split(full, validation_fraction, split_seed)
    spec = NetworkSpec((train.n_features, *DESK_HIDDEN, 10))
    return spec, train, val


def desk_config(**overrides) -> AptConfig:
    base = AptConfig(
        k=8,
        lambda1=1e-3,
        lambda2=0.0,
        kmeans_period=100,
        soft_budget=2000,
        hard_budget=1000,
        batch_size=32,
        eval_every=500,
    )
    return replace(base, **overrides)


def phase_errors(result: AptResult) -> tuple[float, float, float]:
    """(end of soft, start of hard, final) validation error from the metrics log."""
    soft = [r for r in result.metrics if r["phase"] == "soft"]
    hard = [r for r in result.metrics if r["phase"] == "hard"]
    return soft[-1]["val_error"], hard[0]["val_error"], result.metrics[-1]["val_error"]


def quantization_jump(k: int, seed: int, task=None, **overrides) -> float:
    spec, train, val = task or desk_task()
    res = run_apt(spec, train, val, desk_config(k=k, seed=seed, **overrides))
    soft_end, hard_start, _ = phase_errors(res)
    return hard_start - soft_end


def final_error(k: int, seed: int, task=None, baseline: bool = False, **overrides) -> float:
    spec, train, val = task or desk_task()
    runner = random_tying_baseline if baseline else run_apt
    res = runner(spec, train, val, desk_config(k=k, seed=seed, **overrides))
    return res.metrics[-1]["val_error"]


def find_mnist(directory) -> dict[str, Path] | None:
    """Paths of the four IDX files (plain or .gz), or None if any is missing."""
    if directory is None:
        return None
    d = Path(directory)
    found = {}
    for stem in MNIST_FILES:
        for name in (stem, stem + ".gz"):
            if (d / name).exists():
                found[stem] = d / name
                break
        else:
            return None
    return found


@dataclass
class MnistOutcome:
    lambda1: float
    lambda2: float
    val_error: float
    test_error: float
    nonzero_fraction: float
    grid: list[tuple[float, float, float, float]]  # (lambda1, lambda2, val_error, nonzero)
    result: AptResult


LAMBDA1_GRID = (1e-5, 1e-4, 1e-3)
LAMBDA2_GRID = (1e-6, 1e-5, 1e-4)


def mnist_sparse_apt(
    directory,
    soft_budget: int = 10000,
    hard_budget: int = 3000,
    k: int = 17,
    seed: int = 0,
    lambda1_grid=LAMBDA1_GRID,
    lambda2_grid=LAMBDA2_GRID,
    max_nonzero: float | None = None,
) -> MnistOutcome:
    """LeNet-300-100 sparse APT; lambda pair chosen by validation error.

    With ``max_nonzero`` set, only grid points at or below that nonzero
    fraction are eligible (falling back to the whole grid if none is).
    """
    files = find_mnist(directory)
    if files is None:
        raise FileNotFoundError(f"MNIST IDX files not found in {directory}")
    full = data.load_idx(files[MNIST_FILES[0]], files[MNIST_FILES[1]])
    test = data.load_idx(files[MNIST_FILES[2]], files[MNIST_FILES[3]])
    train, val = data.split(full, 0.1, seed)
    test = data.normalize(test, train.normalization)
    spec = NetworkSpec(LENET_300_100)

    grid = []
    runs = {}
    for l1, l2 in itertools.product(lambda1_grid, lambda2_grid):
        cfg = AptConfig(k=k, lambda1=l1, lambda2=l2, kmeans_period=1000, soft_budget=soft_budget,
                        hard_budget=hard_budget, batch_size=100, seed=seed, eval_every=1000)
        res = run_apt(spec, train, val, cfg)
        last = res.metrics[-1]
        grid.append((l1, l2, last["val_error"], last["nonzero_fraction"]))
        runs[(l1, l2)] = res
        log.info("lambda1=%g lambda2=%g val_error=%.4f nonzero=%.4f", l1, l2, last["val_error"], last["nonzero_fraction"])

    eligible = [g for g in grid if max_nonzero is None or g[3] <= max_nonzero] or grid
    l1, l2, val_err, nz = min(eligible, key=lambda g: (g[2], g[3]))
    best = runs[(l1, l2)]
    test_err = error_rate(spec, best.params, test.features, test.labels)
    return MnistOutcome(l1, l2, val_err, test_err, nz, grid, best)
