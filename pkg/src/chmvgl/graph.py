"""Graph Laplacian primitives shared across the package.

Laplacians and projection bases are plain ``numpy`` arrays; the helpers here
build and validate them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# validity tolerances for learned (post-processed) Laplacians
ROW_TOL = 1e-8
OFFDIAG_TOL = 1e-8
DEFAULT_EDGE_THRESHOLD = 1e-2


class ValidationError(ValueError):
    """Raised when an input matrix violates a structural precondition."""


def _square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def laplacian_from_adjacency(A: np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian ``diag(A 1) - A`` of a weighted undirected graph.

    Raises
    ------
    ValidationError
        If ``A`` is not symmetric, has a nonzero diagonal or negative weights.
        The message names the first offending entry.
    """
    A = _square(A, "adjacency")
    asym = np.argwhere(A != A.T)
    if asym.size:
        i, j = asym[0]
        raise ValidationError(f"adjacency not symmetric at ({i}, {j}): {A[i, j]} != {A[j, i]}")
    neg = np.argwhere(A < 0)
    if neg.size:
        i, j = neg[0]
        raise ValidationError(f"negative weight at ({i}, {j}): {A[i, j]}")
    diag = np.flatnonzero(np.diag(A))
    if diag.size:
        i = diag[0]
        raise ValidationError(f"nonzero diagonal at ({i}, {i}): {A[i, i]}")
    return np.diag(A.sum(axis=1)) - A


def adjacency_from_laplacian(L: np.ndarray) -> np.ndarray:
    A = -np.array(L, dtype=float)
    np.fill_diagonal(A, 0.0)
    return A


def laplacian_violations(L: np.ndarray, row_tol: float = ROW_TOL,
                         offdiag_tol: float = OFFDIAG_TOL) -> list[str]:
    """List the Laplacian invariants that ``L`` breaks (empty when valid)."""
    L = np.asarray(L, dtype=float)
    problems = []
    scale = max(1.0, float(np.max(np.abs(L)))) if L.size else 1.0
    if np.max(np.abs(L - L.T)) > 1e-10 * scale:
        problems.append("not symmetric")
    rows = np.abs(L.sum(axis=1))
    if np.any(rows > row_tol):
        problems.append(f"row sum {rows.max():.3g} exceeds {row_tol:g}")
    off = L[~np.eye(L.shape[0], dtype=bool)]
    if off.size and off.max() > offdiag_tol:
        problems.append(f"positive off-diagonal {off.max():.3g}")
    eig = np.linalg.eigvalsh((L + L.T) / 2)
    if eig[0] < -1e-8 * max(eig[-1], 0.0) - 1e-300:
        problems.append(f"not PSD (min eigenvalue {eig[0]:.3g})")
    return problems


def validate_laplacian(L: np.ndarray, **tols) -> np.ndarray:
    L = _square(L, "Laplacian")
    problems = laplacian_violations(L, **tols)
    if problems:
        raise ValidationError("invalid Laplacian: " + "; ".join(problems))
    return L


def build_projection_basis(n: int) -> np.ndarray:
    """Orthonormal basis ``P`` (n x n-1) of the complement of the all-ones vector.

    Built from the Householder reflector that sends ``1/sqrt(n)`` to ``e_1``;
    the reflector's remaining columns span the complement. Deterministic in n.
    """
    if int(n) != n or n < 2:
        raise ValidationError(f"projection basis needs n >= 2, got {n}")
    n = int(n)
    v = np.full(n, 1.0 / np.sqrt(n))
    v[0] -= 1.0
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def total_variation(L: np.ndarray, X: np.ndarray) -> float:
    """Smoothness ``tr(X^T L X)`` of the signals ``X`` (n x d) on ``L``."""
    L = np.asarray(L, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if L.ndim != 2 or L.shape[0] != L.shape[1] or X.shape[0] != L.shape[0]:
        raise ValidationError(f"dimension mismatch: L {L.shape}, X {X.shape}")
    return float(np.sum(X * (L @ X)))


def postprocess_laplacian(L_raw: np.ndarray,
                          edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> np.ndarray:
    """Project a raw solver iterate onto a valid Laplacian.

    Symmetrizes, clips positive off-diagonals, drops off-diagonals smaller than
    ``edge_threshold`` times the largest remaining magnitude, and resets the
    diagonal to zero the row sums.
    """
    L = np.asarray(L_raw, dtype=float)
    L = (L + L.T) / 2
    off = L.copy()
    np.fill_diagonal(off, 0.0)
    off = np.minimum(off, 0.0)
    biggest = np.max(np.abs(off)) if off.size else 0.0
    off[np.abs(off) < edge_threshold * biggest] = 0.0
    # keep exact symmetry after thresholding
    off = np.minimum(off, off.T)
    return off - np.diag(off.sum(axis=1))


@dataclass
class MultiviewSignals:
    """K signal matrices ``X^k`` of shape (n, d_k) over a shared node set."""

    views: list[np.ndarray]
    n: int = field(init=False)

    def __post_init__(self):
        if not self.views:
            raise ValidationError("need at least one view")
        self.views = [np.atleast_2d(np.asarray(X, dtype=float)) for X in self.views]
        shapes = {X.shape[0] for X in self.views}
        if len(shapes) != 1:
            raise ValidationError(f"views disagree on node count: {sorted(shapes)}")
        for k, X in enumerate(self.views):
            if X.ndim != 2 or X.shape[1] < 1:
                raise ValidationError(f"view {k} must be 2-D with d_k >= 1, got {X.shape}")
            if not np.all(np.isfinite(X)):
                raise ValidationError(f"view {k} has non-finite entries")
        self.n = shapes.pop()

    @property
    def K(self) -> int:
        return len(self.views)

    @property
    def d(self) -> list[int]:
        return [X.shape[1] for X in self.views]

    def subset(self, index) -> "MultiviewSignals":
        return MultiviewSignals([self.views[i] for i in index])


@dataclass
class CoHubDecomposition:
    """Per-view Laplacians split into view-specific parts plus a shared hub part.

    ``laplacians`` are post-processed (valid) Laplacians. ``raw_laplacians``
    keep the solver's Laplacian copy before clipping, which is the quantity
    the identity ``L = S + V + V^T`` holds for.
    """

    laplacians: list[np.ndarray]
    specifics: list[np.ndarray]
    hub_matrix: np.ndarray
    raw_laplacians: list[np.ndarray] | None = None

    @property
    def K(self) -> int:
        return len(self.laplacians)

    def consistency_errors(self, raw: bool = True) -> list[float]:
        """Relative ``||L^k - S^k - V - V^T||_F`` per view."""
        Ls = self.raw_laplacians if raw and self.raw_laplacians is not None else self.laplacians
        H = self.hub_matrix + self.hub_matrix.T
        return [float(np.linalg.norm(L - S - H) / max(1.0, np.linalg.norm(L)))
                for L, S in zip(Ls, self.specifics)]


def zero_row_sums(S: np.ndarray) -> np.ndarray:
    """Symmetrize and reset the diagonal so every row sums to zero."""
    S = (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T) / 2
    off = S - np.diag(np.diag(S))
    return off - np.diag(off.sum(axis=1))
