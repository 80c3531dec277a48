"""Per-partition vector transforms: decorrelating rotation and standardization.

The rotation is the eigenbasis of the sample covariance, ordered by
descending eigenvalue, so early output dimensions carry the most variance
and earn the most quantization bits. Sign convention: the first nonzero
entry of each basis row is positive, which makes the basis reproducible
across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

_SIGN_EPS = 1e-12


@dataclass
class KltModel:
    mean: np.ndarray        # (d,)
    basis: np.ndarray       # (d, d), rows are components
    eigenvalues: np.ndarray  # (d,), descending

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class StandardizeModel:
    mean: np.ndarray
    std: np.ndarray          # zero-variance dims hold 1.0
    zero_variance: np.ndarray  # bool flags for those dims

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_klt(vectors: np.ndarray) -> KltModel:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise InsufficientDataError("expected a 2-D sample matrix")
    n, d = x.shape
    if n < 2:
        raise InsufficientDataError("need at least 2 rows to estimate covariance")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    basis = eigvecs[:, order].T
    for i in range(d):
        row = basis[i]
        nz = np.flatnonzero(np.abs(row) > _SIGN_EPS)
        if nz.size and row[nz[0]] < 0:
            basis[i] = -row
    return KltModel(mean, basis, eigvals)


def apply_klt(model: KltModel, vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    single = x.ndim == 1
    out = (np.atleast_2d(x) - model.mean) @ model.basis.T
    return out[0] if single else out


def invert_klt(model: KltModel, transformed: np.ndarray) -> np.ndarray:
    y = np.asarray(transformed, dtype=np.float64)
    single = y.ndim == 1
    out = np.atleast_2d(y) @ model.basis + model.mean
    return out[0] if single else out


def fit_standardize(vectors: np.ndarray) -> StandardizeModel:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InsufficientDataError("expected a non-empty 2-D sample matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    zero = std <= 0.0
    std = np.where(zero, 1.0, std)
    return StandardizeModel(mean, std, zero)


def apply_standardize(model: StandardizeModel, vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    single = x.ndim == 1
    out = (np.atleast_2d(x) - model.mean) / model.std
    return out[0] if single else out
