"""Whitened PCA embedding fit on training features only.

Feature dimension is typically far larger than the number of training
clips, so the fit eigendecomposes the n x n Gram matrix of the centered
rows instead of the d x d covariance; the retained covariance eigenvectors
are recovered by back-projection.  Retained components are scaled by the
inverse square root of their eigenvalue, which makes the whitened training
covariance the identity on the retained subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, ProtocolError, ShapeError

# components below this fraction of the leading eigenvalue are dropped
EIGENVALUE_FLOOR = 1e-10


@dataclass(frozen=True)
class WpcaModel:
    """Mean, orthonormal basis, and whitening scales of a fitted embedding."""

    mean: np.ndarray        # (d,)
    basis: np.ndarray       # (d, k), orthonormal columns
    scales: np.ndarray      # (k,), 1 / sqrt(eigenvalue)
    eigenvalues: np.ndarray  # (k,), descending

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def wpca_fit(train: np.ndarray, k: int | None = None,
             eig_floor: float = EIGENVALUE_FLOOR) -> WpcaModel:
    """Fit mean, principal axes, and whitening scales on training rows.

    Retains the top ``min(k, rank, n - 1)`` components whose eigenvalue
    stays above ``eig_floor`` times the leading one; ``k`` defaults to
    ``n - 1``.  Eigenvector signs are fixed by making each column's
    largest-magnitude coordinate positive, so the fit does not depend on
    row order or linear-algebra backend conventions.
    """
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"training matrix must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ProtocolError(f"need at least 2 training rows, got {n}")
    if k is None:
        k = n - 1
    if k < 1:
        raise ProtocolError(f"requested dimension must be >= 1, got {k}")

    mean = X.mean(axis=0)
    Xc = X - mean
    gram = Xc @ Xc.T / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    if eigvals[0] <= 0:
        raise DegenerateDataError("training rows are identical (zero variance)")
    keep = eigvals > eig_floor * eigvals[0]
    k_eff = min(k, int(keep.sum()), n - 1)
    if k_eff < 1:
        raise DegenerateDataError("no component above the eigenvalue floor")

    eigvals = eigvals[:k_eff]
    basis = Xc.T @ eigvecs[:, :k_eff]
    basis /= np.sqrt(eigvals * (n - 1))

    # deterministic sign: force each column's largest-|coordinate| positive
    flip = basis[np.argmax(np.abs(basis), axis=0), np.arange(k_eff)] < 0
    basis[:, flip] *= -1.0

    return WpcaModel(
        mean=mean,
        basis=basis,
        scales=1.0 / np.sqrt(eigvals),
        eigenvalues=eigvals,
    )


def wpca_transform(model: WpcaModel, features: np.ndarray) -> np.ndarray:
    """Center, project, and whiten feature rows (or a single vector)."""
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.dim:
        raise ShapeError(
            f"feature dimension {X.shape[1]} does not match model dimension {model.dim}"
        )
    out = (X - model.mean) @ model.basis * model.scales
    return out[0] if single else out
