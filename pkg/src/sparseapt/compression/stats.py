"""Sparsity statistics over a network's weight matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import ParamVector
from .quantize import QuantizedModel


@dataclass
class LayerSparsity:
    layer: int
    shape: tuple[int, int]
    nonzero: int
    zero_rows_mask: np.ndarray = field(repr=False)  # units with no incoming weight
    zero_cols_mask: np.ndarray = field(repr=False)  # inputs with no outgoing weight

    @property
    def zero_rows(self) -> int:
        return int(self.zero_rows_mask.sum())

    @property
    def zero_cols(self) -> int:
        return int(self.zero_cols_mask.sum())

    @property
    def row_sparsity(self) -> float:
        return 100.0 * self.zero_rows / self.shape[0]

    @property
    def col_sparsity(self) -> float:
        return 100.0 * self.zero_cols / self.shape[1]


@dataclass
class SparsityReport:
    n_params: int
    nonzero: int
    layers: list[LayerSparsity] = field(default_factory=list)

    @property
    def nonzero_fraction(self) -> float:
        return self.nonzero / self.n_params if self.n_params else 0.0

    @property
    def pruned_units(self) -> int:
        """Hidden units whose incoming or outgoing weights are all zero."""
        total = 0
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            dead = a.zero_rows_mask | b.zero_cols_mask
            total += int(dead.sum())
        return total


def sparsity_stats(model) -> SparsityReport:
    """Global nonzero count over all parameters; row/column sparsity per weight matrix."""
    params = model.dequantize() if isinstance(model, QuantizedModel) else model
    if not isinstance(params, ParamVector):
        raise TypeError(f"expected ParamVector or QuantizedModel, got {type(params).__name__}")
    report = SparsityReport(params.spec.n_params, int(np.count_nonzero(params.values)))
    for i in range(params.spec.n_layers):
        w = params.weight(i) != 0
        report.layers.append(
            LayerSparsity(i, w.shape, int(w.sum()), ~w.any(axis=1), ~w.any(axis=0))
        )
    return report
