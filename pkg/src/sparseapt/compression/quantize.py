"""Codebook quantization of a (hard-tied) parameter vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kmeans1d
from ..nn import NetworkSpec, ParamVector

STORAGE_DTYPES = {16: np.float16, 32: np.float32}
UINT_DTYPES = {16: np.uint16, 32: np.uint32}


def to_storage(values, b: int) -> np.ndarray:
    """Round to the nearest b-bit IEEE float, returned as float64."""
    if b not in STORAGE_DTYPES:
        raise ValueError(f"b must be 16 or 32, got {b}")
    return np.asarray(values, dtype=np.float64).astype(STORAGE_DTYPES[b]).astype(np.float64)


def float_bits(values, b: int) -> np.ndarray:
    return np.asarray(values, dtype=np.float64).astype(STORAGE_DTYPES[b]).view(UINT_DTYPES[b]).astype(np.int64)


def bits_to_float(raw, b: int) -> np.ndarray:
    return np.asarray(raw, dtype=UINT_DTYPES[b]).view(STORAGE_DTYPES[b]).astype(np.float64)


def tied_mask(spec: NetworkSpec, tie_biases: bool) -> np.ndarray:
    return np.ones(spec.n_params, dtype=bool) if tie_biases else ~spec.bias_mask()


@dataclass
class QuantizedModel:
    spec: NetworkSpec
    b: int
    codebook: np.ndarray  # K values, exactly representable at b bits
    indices: np.ndarray  # one cluster id per tied parameter, in parameter order
    tie_biases: bool = True
    free_values: np.ndarray | None = None  # untied parameters, rounded to b bits
    exact: bool = True  # codebook rounding did not change any tied value

    def __post_init__(self):
        self.codebook = np.asarray(self.codebook, dtype=np.float64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.codebook.size):
            raise ValueError("cluster index out of range")
        if self.free_values is None:
            self.free_values = np.zeros(0)

    @property
    def k(self) -> int:
        return int(self.codebook.size)

    @property
    def mask(self) -> np.ndarray:
        return tied_mask(self.spec, self.tie_biases)

    def dequantize(self) -> ParamVector:
        values = np.zeros(self.spec.n_params)
        m = self.mask
        values[m] = self.codebook[self.indices]
        values[~m] = self.free_values
        return ParamVector(self.spec, values)

    def zero_cluster(self) -> int | None:
        hits = np.flatnonzero(self.codebook == 0.0)
        return int(hits[0]) if hits.size else None


def quantize(params: ParamVector, centers, assignments, b: int = 32, tie_biases: bool = True) -> QuantizedModel:
    """Store ``centers`` at b bits and keep ``assignments`` as the index stream."""
    m = tied_mask(params.spec, tie_biases)
    codebook = to_storage(centers, b)
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.size != int(m.sum()):
        raise ValueError(f"{assignments.size} assignments for {int(m.sum())} tied parameters")
    exact = bool(np.array_equal(codebook[assignments], params.values[m]))
    return QuantizedModel(
        spec=params.spec,
        b=b,
        codebook=codebook,
        indices=assignments,
        tie_biases=tie_biases,
        free_values=to_storage(params.values[~m], b),
        exact=exact,
    )


def quantize_tied(params: ParamVector, b: int = 32, tie_biases: bool = True, max_k: int | None = None) -> QuantizedModel:
    """Quantize a model whose tied parameters already take few distinct values.

    The codebook is the sorted set of distinct values; raises if there are
    more than ``max_k`` of them.
    """
    m = tied_mask(params.spec, tie_biases)
    codebook, idx = np.unique(params.values[m], return_inverse=True)
    if max_k is not None and codebook.size > max_k:
        raise ValueError(f"model is not hard-tied: {codebook.size} distinct values > K={max_k}")
    return quantize(params, codebook, idx, b=b, tie_biases=tie_biases)


def snap_quantize(params: ParamVector, k: int, b: int = 32, tie_biases: bool = True, zero_cluster: bool = False) -> QuantizedModel:
    """Cluster an untied model with 1-D k-means and snap it to the centers."""
    m = tied_mask(params.spec, tie_biases)
    w = params.values[m]
    lo, hi = float(w.min()), float(w.max())
    if not lo < hi:
        lo, hi = lo - 1.0, hi + 1.0
    cl = kmeans1d.kmeans_fast(w, kmeans1d.init_centers_uniform(lo, hi, k))
    centers = cl.centers.copy()
    if zero_cluster:
        occupied = cl.sizes > 0
        centers[int(np.argmin(np.where(occupied, np.abs(centers), np.inf)))] = 0.0
    centers = to_storage(centers, b)
    snapped = params.copy()
    snapped.values[m] = centers[cl.assignments]
    snapped.values[~m] = to_storage(params.values[~m], b)
    return quantize(snapped, centers, cl.assignments, b=b, tie_biases=tie_biases)
