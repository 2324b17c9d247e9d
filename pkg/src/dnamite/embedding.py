"""Learnable per-bin embeddings with Gaussian-kernel smoothing over
neighboring bins.

A bin's final embedding is the raw-weight (unnormalized) kernel sum of its
neighbors' rows; neighbors outside 1..B are dropped, and the missing bin
(index 0) is never smoothed into or out of.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def kernel_weights(gamma: float, width: int) -> np.ndarray:
    """Kernel weight exp(-z^2 / (2*gamma)) for offsets z in [-width, width].

    gamma = 0 degenerates to the point mass (1 at z = 0).  Weights are not
    normalized to sum to 1.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if width < 0:
        raise ValueError("width must be >= 0")
    z = np.arange(-width, width + 1, dtype=float)
    if gamma == 0.0:
        return (z == 0).astype(float)
    return np.exp(-(z**2) / (2.0 * gamma))


def smoothing_matrix(n_bins: int, gamma: float, width: int) -> np.ndarray:
    """(B+1, B+1) matrix S with smoothed_rows = S @ raw_rows.

    Row 0 passes the missing-bin row through untouched; row i >= 1 holds
    the kernel weights of neighbors i+z clipped to 1..B.
    """
    w = kernel_weights(gamma, width)
    s = np.zeros((n_bins + 1, n_bins + 1))
    s[0, 0] = 1.0
    for i in range(1, n_bins + 1):
        for z in range(-width, width + 1):
            j = i + z
            if 1 <= j <= n_bins:
                s[i, j] = w[z + width]
    return s


@dataclass
class EmbeddingTable:
    """Per-bin embedding rows (row 0 = missing bin) plus kernel parameters."""

    weights: np.ndarray  # (n_bins + 1, dim)
    gamma: float
    width: int
    _smoother: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.weights.shape[0] < 2:
            raise ValueError("weights must be (n_bins + 1, dim) with n_bins >= 1")
        if self.gamma < 0 or self.width < 0:
            raise ValueError("gamma and width must be >= 0")

    @property
    def n_bins(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def smoother(self) -> np.ndarray:
        if self._smoother is None or self._smoother.shape[0] != self.weights.shape[0]:
            self._smoother = smoothing_matrix(self.n_bins, self.gamma, self.width)
        return self._smoother

    def smoothed(self) -> np.ndarray:
        """All smoothed per-bin embeddings, shape (n_bins + 1, dim)."""
        return self.smoother() @ self.weights

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            weights=self.weights.copy(), gamma=self.gamma, width=self.width
        )

    @classmethod
    def init(cls, rng: np.random.Generator, n_bins: int, dim: int, gamma: float, width: int) -> "EmbeddingTable":
        # zero-mean rows with standard deviation 1/sqrt(dim)
        w = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_bins + 1, dim))
        return cls(weights=w, gamma=gamma, width=width)


def embed_feature(bin_index: int, table: EmbeddingTable, n_bins: int | None = None) -> np.ndarray:
    """Kernel-smoothed embedding of one bin.

    The missing bin (0) returns its raw row; real bins return the kernel
    sum over neighbors clipped to 1..n_bins.
    """
    b = table.n_bins if n_bins is None else n_bins
    if b != table.n_bins:
        raise ValueError("n_bins does not match the table row count")
    if not 0 <= bin_index <= b:
        raise ValueError(f"bin index {bin_index} out of range 0..{b}")
    return table.smoothed()[bin_index]


def embed_pair(
    bin_j: int,
    bin_l: int,
    table_j: EmbeddingTable,
    table_l: EmbeddingTable,
    n_bins_j: int | None = None,
    n_bins_l: int | None = None,
) -> np.ndarray:
    """Concatenated smoothed embeddings of the two interacting features."""
    return np.concatenate(
        [
            embed_feature(bin_j, table_j, n_bins_j),
            embed_feature(bin_l, table_l, n_bins_l),
        ]
    )
