"""Automatic parameter tying: soft-tying then hard-tying.

Soft phase minimises  E_D(W) + lambda1 * J(W, mu) + lambda2 * ||W||_1  by
alternating a gradient step on W, a closed-form update of the cluster means
with assignments held fixed, and (every ``kmeans_period`` steps) a full 1-D
k-means that also moves assignments.

Hard phase freezes the assignments, snaps every tied parameter to its
cluster value (the smallest-magnitude cluster to exactly 0 when lambda2 > 0)
and runs projected gradient descent on E_D alone: each cluster moves by the
mean of its members' partial derivatives.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kmeans1d
from .compression.quantize import to_storage
from .data import Dataset, batch_stream
from .nn import (
    AdadeltaState,
    Batch,
    NetworkSpec,
    ParamVector,
    SGDState,
    adadelta_step,
    data_loss,
    error_rate,
    forward,
    glorot_init,
    loss_and_grad,
    sgd_momentum_step,
)

log = logging.getLogger(__name__)

SOFT = "soft"
HARD = "hard"


@dataclass
class AptConfig:
    k: int = 17
    lambda1: float = 1e-4
    lambda2: float = 0.0
    kmeans_period: int = 1000
    soft_budget: int = 20000
    hard_budget: int = 20000
    optimizer: str = "adadelta"
    lr: float = 1.0
    momentum: float = 0.9
    rho: float = 0.95
    epsilon: float = 1e-6
    batch_size: int = 100
    tie_biases: bool = True
    seed: int = 0
    eval_every: int = 100
    eval_train_rows: int = 10000
    kmeans_max_iters: int = 100
    storage_bits: int | None = 32  # hard-phase values are kept representable at this width

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.soft_budget < 0 or self.hard_budget < 0:
            raise ValueError("budgets must be >= 0")
        if self.kmeans_period < 1:
            raise ValueError("kmeans_period must be >= 1")
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.optimizer not in ("sgd", "adadelta"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.storage_bits not in (None, 16, 32):
            raise ValueError(f"storage_bits must be 16, 32 or None, got {self.storage_bits}")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    phase: str
    step: int
    params: ParamVector
    tied: np.ndarray  # indices of parameters that take part in tying
    centers: np.ndarray
    assignments: np.ndarray
    opt_state: SGDState | AdadeltaState
    zero_cluster_id: int | None = None
    last_change_ratio: float = 0.0
    metrics: list[dict] = field(default_factory=list)
    assignment_changes: list[tuple[int, float]] = field(default_factory=list)

    @property
    def tied_values(self) -> np.ndarray:
        return self.params.values[self.tied]


def new_optimizer_state(config: AptConfig, n: int) -> SGDState | AdadeltaState:
    if config.optimizer == "sgd":
        return SGDState(np.zeros(n))
    return AdadeltaState(np.zeros(n), np.zeros(n))


def optimizer_step(params: np.ndarray, grad: np.ndarray, state, config: AptConfig) -> None:
    if config.optimizer == "sgd":
        sgd_momentum_step(params, grad, state, config.lr, config.momentum)
    else:
        adadelta_step(params, grad, state, config.rho, config.epsilon, config.lr)


def tied_indices(spec: NetworkSpec, tie_biases: bool) -> np.ndarray:
    if tie_biases:
        return np.arange(spec.n_params)
    return np.flatnonzero(~spec.bias_mask())


def regularizer_value(values, centers, assignments) -> tuple[float, float]:
    """(J, L1) with J measured against the stored assignments (not re-minimised)."""
    w = np.asarray(values, dtype=np.float64)
    assignments = np.asarray(assignments)
    if w.shape != assignments.shape:
        raise ValueError(f"{w.size} values but {assignments.size} assignments")
    return kmeans1d.inertia(w, centers, assignments), float(np.abs(w).sum())


def regularizer_gradient(values, centers, assignments, lambda1: float, lambda2: float) -> np.ndarray:
    """lambda1 * (w - mu_assign) + lambda2 * sign(w), with sign(0) = 0."""
    w = np.asarray(values, dtype=np.float64)
    return lambda1 * (w - np.asarray(centers)[assignments]) + lambda2 * np.sign(w)


def cluster_means(values: np.ndarray, assignments: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Closed-form mu given fixed assignments; empty clusters keep their value."""
    k = previous.size
    counts = np.bincount(assignments, minlength=k)
    sums = np.bincount(assignments, weights=values, minlength=k)
    out = previous.copy()
    full = counts > 0
    out[full] = sums[full] / counts[full]
    return out


def project_gradient(grad: np.ndarray, assignments: np.ndarray, k: int, zero_cluster_id: int | None) -> np.ndarray:
    """Replace each component by its cluster's mean; the zero cluster gets 0."""
    counts = np.bincount(assignments, minlength=k)
    sums = np.bincount(assignments, weights=grad, minlength=k)
    means = np.divide(sums, counts, out=np.zeros(k), where=counts > 0)
    if zero_cluster_id is not None:
        means[zero_cluster_id] = 0.0
    return means[assignments]


def init_state(spec: NetworkSpec, config: AptConfig) -> TrainState:
    params = glorot_init(spec, config.seed)
    tied = tied_indices(spec, config.tie_biases)
    w = params.values[tied]
    lo, hi = float(w.min()), float(w.max())
    if not lo < hi:
        lo, hi = lo - 1.0, hi + 1.0
    centers = kmeans1d.init_centers_uniform(lo, hi, config.k)
    assignments = kmeans1d.nearest_assignments(w, centers)
    return TrainState(
        phase=SOFT,
        step=0,
        params=params,
        tied=tied,
        centers=centers,
        assignments=assignments,
        opt_state=new_optimizer_state(config, spec.n_params),
    )


def soft_tying_step(state: TrainState, batch: Batch, config: AptConfig, run_kmeans: bool = True) -> TrainState:
    if state.phase != SOFT:
        raise RuntimeError("soft_tying_step called outside the soft phase")
    spec = state.params.spec
    _, grad = loss_and_grad(spec, state.params, batch)
    if config.lambda1 or config.lambda2:
        grad[state.tied] += regularizer_gradient(
            state.tied_values, state.centers, state.assignments, config.lambda1, config.lambda2
        )
    optimizer_step(state.params.values, grad, state.opt_state, config)
    w = state.tied_values
    state.centers = cluster_means(w, state.assignments, state.centers)
    state.step += 1
    if run_kmeans and state.step % config.kmeans_period == 0:
        run_kmeans_update(state, config)
    return state


def run_kmeans_update(state: TrainState, config: AptConfig) -> None:
    w = state.tied_values
    # kmeans_fast sorts its start centers; carry the old ids through that sort
    rank = np.empty(state.centers.size, dtype=np.int64)
    rank[np.argsort(state.centers, kind="stable")] = np.arange(state.centers.size)
    old = rank[state.assignments]
    cl = kmeans1d.kmeans_fast(w, state.centers, max_iters=config.kmeans_max_iters)
    state.last_change_ratio = float(np.mean(cl.assignments != old))
    state.assignment_changes.append((state.step, state.last_change_ratio))
    state.centers = cl.centers
    state.assignments = cl.assignments


def transition_to_hard(state: TrainState, config: AptConfig) -> TrainState:
    if state.phase != SOFT:
        raise RuntimeError("transition_to_hard requires the soft phase")
    centers = state.centers.copy()
    zero = None
    if config.lambda2 > 0:
        occupied = np.bincount(state.assignments, minlength=centers.size) > 0
        mags = np.where(occupied, np.abs(centers), np.inf)
        zero = int(np.argmin(mags))
        centers[zero] = 0.0
    state.zero_cluster_id = zero
    _snap(state, centers, config)
    state.phase = HARD
    state.opt_state = new_optimizer_state(config, state.params.spec.n_params)
    return state


def _snap(state: TrainState, centers: np.ndarray, config: AptConfig) -> None:
    """Write the cluster values back, pinned and rounded so the model is storable losslessly."""
    if state.zero_cluster_id is not None:
        centers[state.zero_cluster_id] = 0.0
    if config.storage_bits is not None:
        centers = to_storage(centers, config.storage_bits)
        free = np.ones(state.params.values.size, dtype=bool)
        free[state.tied] = False
        state.params.values[free] = to_storage(state.params.values[free], config.storage_bits)
    state.centers = centers
    state.params.values[state.tied] = centers[state.assignments]


def check_tied(state: TrainState) -> None:
    if not np.array_equal(state.tied_values, state.centers[state.assignments]):
        raise RuntimeError("hard-phase state corrupted: tied parameters differ from their cluster value")


def hard_tying_step(state: TrainState, batch: Batch, config: AptConfig) -> TrainState:
    if state.phase != HARD:
        raise RuntimeError("hard_tying_step called outside the hard phase")
    check_tied(state)
    spec = state.params.spec
    _, grad = loss_and_grad(spec, state.params, batch)
    k = state.centers.size
    grad[state.tied] = project_gradient(grad[state.tied], state.assignments, k, state.zero_cluster_id)
    optimizer_step(state.params.values, grad, state.opt_state, config)
    # identical gradients and optimizer state keep members equal; re-snap anyway
    w = state.tied_values
    counts = np.bincount(state.assignments, minlength=k)
    first = np.full(k, -1, dtype=np.int64)
    first[state.assignments[::-1]] = np.arange(w.size)[::-1]
    centers = state.centers.copy()
    occupied = counts > 0
    centers[occupied] = w[first[occupied]]
    _snap(state, centers, config)
    state.step += 1
    return state


def evaluate(state: TrainState, config: AptConfig, train: Dataset, val: Dataset | None) -> dict:
    spec = state.params.spec
    rows = min(len(train), config.eval_train_rows)
    x, y = train.features[:rows], train.labels[:rows]
    e_d = data_loss(forward(spec, state.params, x), y)
    w = state.tied_values
    j, l1 = regularizer_value(w, state.centers, state.assignments)
    nearest = kmeans1d.nearest_assignments(w, state.centers)
    row = {
        "step": state.step,
        "phase": state.phase,
        "data_loss": e_d,
        "j": j,
        "l1": l1,
        "total": e_d + config.lambda1 * j + config.lambda2 * l1,
        "train_error": error_rate(spec, state.params, x, y),
        "val_loss": float("nan"),
        "val_error": float("nan"),
        "inertia": kmeans1d.inertia(w, state.centers, nearest),
        "change_ratio": state.last_change_ratio,
        "nonzero_fraction": float(np.count_nonzero(state.params.values) / spec.n_params),
    }
    if val is not None and len(val):
        row["val_loss"] = data_loss(forward(spec, state.params, val.features), val.labels)
        row["val_error"] = error_rate(spec, state.params, val.features, val.labels)
    for i, c in enumerate(state.centers):
        row[f"center_{i}"] = float(c)
    return row


@dataclass
class AptResult:
    params: ParamVector
    centers: np.ndarray
    assignments: np.ndarray
    tied: np.ndarray
    zero_cluster_id: int | None
    metrics: list[dict]
    assignment_changes: list[tuple[int, float]]
    soft_end_params: ParamVector | None = None

    def clustering(self) -> kmeans1d.Clustering:
        w = self.params.values[self.tied]
        sizes = np.bincount(self.assignments, minlength=self.centers.size)
        return kmeans1d.Clustering(
            self.centers, self.assignments, sizes, kmeans1d.inertia(w, self.centers, self.assignments)
        )


def _maybe_eval(state, config, train, val, force=False):
    if force or state.step % config.eval_every == 0:
        if state.metrics and state.metrics[-1]["step"] == state.step and state.metrics[-1]["phase"] == state.phase:
            return
        state.metrics.append(evaluate(state, config, train, val))


def run_apt(spec: NetworkSpec, train: Dataset, val: Dataset | None, config: AptConfig,
            run_kmeans: bool = True, keep_soft_end: bool = False) -> AptResult:
    """Full two-phase run.  ``run_kmeans=False`` freezes the initial assignments."""
    state = init_state(spec, config)
    stream = batch_stream(train, config.batch_size, config.seed)
    _maybe_eval(state, config, train, val, force=True)
    for _ in range(config.soft_budget):
        soft_tying_step(state, next(stream), config, run_kmeans=run_kmeans)
        _maybe_eval(state, config, train, val)
    _maybe_eval(state, config, train, val, force=True)
    soft_end = state.params.copy() if keep_soft_end else None
    transition_to_hard(state, config)
    log.info("hard phase: zero cluster %s, centers %s", state.zero_cluster_id, state.centers)
    _maybe_eval(state, config, train, val, force=True)
    for _ in range(config.hard_budget):
        hard_tying_step(state, next(stream), config)
        _maybe_eval(state, config, train, val)
    _maybe_eval(state, config, train, val, force=True)
    return AptResult(
        params=state.params,
        centers=state.centers,
        assignments=state.assignments,
        tied=state.tied,
        zero_cluster_id=state.zero_cluster_id,
        metrics=state.metrics,
        assignment_changes=state.assignment_changes,
        soft_end_params=soft_end,
    )


def random_tying_baseline(spec: NetworkSpec, train: Dataset, val: Dataset | None, config: AptConfig,
                          keep_soft_end: bool = False) -> AptResult:
    """APT with k-means never run: assignments stay at the initial nearest-center ones."""
    return run_apt(spec, train, val, config, run_kmeans=False, keep_soft_end=keep_soft_end)
