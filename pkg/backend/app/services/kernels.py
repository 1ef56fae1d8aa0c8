from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from app.core.exceptions import DataError
from app.models.core_model import KernelKind, KernelSpec


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    row_source: Optional[str] = None
    column_source: Optional[str] = None

    @property
    def shape(self):
        return self.entries.shape


def _as_matrix(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise DataError(f"{name} must be a matrix, got shape {X.shape}")
    return X


def _check_spec(spec: KernelSpec) -> None:
    if spec.kind is KernelKind.RBF and spec.bandwidth is None:
        raise DataError("RBF kernel bandwidth has not been resolved")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"Kernel arguments differ in shape: {x.shape} vs {y.shape}")
    _check_spec(spec)
    if spec.kind is KernelKind.LINEAR:
        return float(x @ y)
    return float(np.exp(-spec.bandwidth * np.sum((x - y) ** 2)))


def gram(
    spec: KernelSpec,
    X,
    Y,
    row_source: Optional[str] = None,
    column_source: Optional[str] = None,
) -> GramMatrix:
    """Kernel matrix with entries k(X[i], Y[k])"""
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"Column counts differ: {X.shape[1]} vs {Y.shape[1]}")
    _check_spec(spec)

    if spec.kind is KernelKind.LINEAR:
        entries = X @ Y.T
    else:
        entries = np.exp(-spec.bandwidth * cdist(X, Y, metric="sqeuclidean"))
    return GramMatrix(entries, row_source, column_source)


def median_bandwidth(X) -> float:
    """Median heuristic: 1 / d_med^2 over all pairwise Euclidean distances"""
    X = _as_matrix(X, "X")
    if X.shape[0] < 2:
        raise DataError("Median bandwidth needs at least two points")
    median = float(np.median(pdist(X, metric="euclidean")))
    if median <= 0:
        raise DataError("Median pairwise distance is zero; bandwidth is undefined")
    return 1.0 / median ** 2


def resolve_spec(spec: KernelSpec, X) -> KernelSpec:
    """Fill in a median-heuristic bandwidth from training covariates"""
    if spec.is_resolved:
        return spec
    return KernelSpec.rbf(median_bandwidth(X))
