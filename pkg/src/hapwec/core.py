"""Masked matrix container, mask algebra and SVD helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

RANK_RTOL = 1e-10


class MaskError(ValueError):
    """Raised when an observation index falls outside the matrix."""


@dataclass(frozen=True)
class MaskedMatrix:
    """Dense N x l grid together with its set of observed positions.

    ``mask`` is a boolean array marking Omega; ``values`` is zero wherever
    ``mask`` is False.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ValueError(f"values {values.shape} and mask {mask.shape} must be equal 2-D shapes")
        if np.any(values[~mask] != 0):
            raise ValueError("values outside the observation set must be exactly 0")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def sampling_rate(self) -> float:
        return self.n_observed / self.mask.size

    @property
    def omega(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.mask))]


def mask_from_indices(shape: tuple[int, int], omega: Iterable[tuple[int, int]]) -> np.ndarray:
    n, l = shape
    mask = np.zeros(shape, dtype=bool)
    for pair in omega:
        i, j = pair
        if not (0 <= i < n and 0 <= j < l):
            raise MaskError(f"index {pair} out of range for shape {shape}")
        mask[i, j] = True
    return mask


def mask_apply(A, omega) -> MaskedMatrix:
    """Project ``A`` onto the observation set (zero elsewhere).

    ``omega`` may be a boolean mask of A's shape or an iterable of
    ``(row, col)`` pairs.
    """
    A = np.asarray(A, dtype=float)
    if isinstance(omega, np.ndarray) and omega.dtype == bool:
        if omega.shape != A.shape:
            raise MaskError(f"mask shape {omega.shape} does not match {A.shape}")
        mask = omega
    else:
        mask = mask_from_indices(A.shape, omega)
    return MaskedMatrix(np.where(mask, A, 0.0), mask)


def complement(mask: np.ndarray) -> np.ndarray:
    return ~np.asarray(mask, dtype=bool)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD restricted to the numerically nonzero singular values."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    shape: tuple[int, int]

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def reconstruct(self, r: int | None = None) -> np.ndarray:
        k = self.rank if r is None else min(r, self.rank)
        if k == 0:
            return np.zeros(self.shape)
        s = self.singular_values[:k]
        return (self.left_vectors[:, :k] * s) @ self.right_vectors[:, :k].T


def svd(A) -> SvdFactors:
    """Thin SVD of ``A`` keeping singular values above ``1e-10 * sigma_1``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("svd expects a 2-D array")
    if not np.all(np.isfinite(A)):
        raise ValueError("svd input contains non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        keep = 0
    else:
        keep = int(np.count_nonzero(s > RANK_RTOL * s[0]))
    return SvdFactors(s[:keep].copy(), U[:, :keep].copy(), Vt[:keep].T.copy(), A.shape)


def numerical_rank(A) -> int:
    return svd(A).rank


def truncate_rank(F: SvdFactors, r: int) -> np.ndarray:
    """Best rank-``r`` approximation from precomputed factors."""
    if r < 1:
        raise ValueError("truncation rank must be >= 1")
    return F.reconstruct(r)


def nuclear_norm(A) -> float:
    return float(np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False).sum())
