"""Four-block ADMM for co-hub multiview Laplacian learning.

The per-view Laplacian ``L^k`` is split as ``S^k + V + V^T`` where the hub
matrix ``V`` is shared by every view and penalized column-wise with the
l2,1 norm. Zero row sums and the PSD parametrization come from the
conjugation ``L = P E P^T`` with ``P`` the orthonormal complement of ``1``.

Variables (all stacked along a leading view axis where per-view)::

    block 1: E^k, Xi^k (n-1 x n-1), V
    block 2: Z^k (diagonal), Gamma^k
    block 3: C^k, Psi^k
    block 4: G, W

with constraints ``C = P E P^T``, ``Z = I.C``, ``Gamma = P Xi P^T``,
``C - Gamma = V + W``, ``Psi = P E P^T - Z``, ``G = V``, ``W^T = V``.
"""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import (DEFAULT_EDGE_THRESHOLD, CoHubDecomposition, MultiviewSignals,
                    ValidationError, build_projection_basis, postprocess_laplacian,
                    zero_row_sums)

log = logging.getLogger(__name__)

CONSTRAINT_NAMES = ("C-PEP'", "Z-I.C", "Gamma-PXiP'", "C-Gamma-V-W", "Psi-PEP'+Z")
SHARED_CONSTRAINT_NAMES = ("V-W'", "G-V")


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, alpha: float, report=None):
        super().__init__(f"non-finite ADMM state at iteration {iteration} (alpha={alpha:g})")
        self.iteration = iteration
        self.alpha = alpha
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    gamma1: float = 0.1
    gamma2: float = 1.0
    gamma3: float = 0.1
    gamma4: float = 0.1
    alpha0: float = 1.0
    mu: float = 1.01
    # growing: alpha *= mu each sweep; fixed; adaptive: residual balancing
    alpha_schedule: str = "growing"
    alpha_cap: float = 1e4
    max_iter: int = 500
    tol: float = 1e-4
    # divide X X^T by d_k, i.e. the gammas are the per-sample rescaled ones
    scale_by_samples: bool = True
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    # threshold multiplier of the G prox; 1.0 is the exact subproblem minimizer
    prox_scale: float = 1.0
    # restrict the off-diagonal copy Psi to nonpositive entries (valid-Laplacian sign)
    nonpositive_offdiag: bool = True
    # also require the dual residual below this to stop (None: primal only)
    dual_tol: float | None = None
    balance_ratio: float = 10.0
    balance_step: float = 2.0
    balance_every: int = 10

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma3", "gamma4"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be nonnegative")
        if not self.gamma2 > 0:
            raise ValidationError("gamma2 must be positive (log barrier)")
        if not self.alpha0 > 0:
            raise ValidationError("alpha0 must be positive")
        if self.alpha_schedule not in ("fixed", "growing", "adaptive"):
            raise ValidationError("alpha_schedule must be 'fixed', 'growing' or 'adaptive', "
                                  f"got {self.alpha_schedule!r}")
        if self.dual_tol is not None and not self.dual_tol > 0:
            raise ValidationError("dual_tol must be positive or None")
        if not (self.balance_ratio > 1 and self.balance_step > 1 and self.balance_every >= 1):
            raise ValidationError("balancing needs balance_ratio > 1, balance_step > 1, "
                                  "balance_every >= 1")
        if self.alpha_schedule == "growing" and not self.mu > 1:
            raise ValidationError("mu must exceed 1 for the growing schedule")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValidationError("max_iter must be >= 1")

    @property
    def gammas(self) -> tuple[float, float, float, float]:
        return (self.gamma1, self.gamma2, self.gamma3, self.gamma4)

    def with_gammas(self, gammas) -> "SolverConfig":
        g1, g2, g3, g4 = gammas
        return replace(self, gamma1=g1, gamma2=g2, gamma3=g3, gamma4=g4)


@dataclass
class AdmmState:
    P: np.ndarray
    E: np.ndarray
    Xi: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    Gamma: np.ndarray
    C: np.ndarray
    Psi: np.ndarray
    G: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    J: np.ndarray
    T: np.ndarray
    M: np.ndarray
    R: np.ndarray
    N: np.ndarray
    Q: np.ndarray
    alpha: float
    iteration: int = 0

    @property
    def K(self) -> int:
        return self.E.shape[0]

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def conj(self, A: np.ndarray) -> np.ndarray:
        """``P A P^T`` (batched over a leading view axis)."""
        return self.P @ A @ self.P.T

    def reduce(self, A: np.ndarray) -> np.ndarray:
        """``P^T A P`` (batched)."""
        return self.P.T @ A @ self.P

    def evolve(self, **changes) -> "AdmmState":
        """Shallow copy with some fields swapped; a cheaper ``dataclasses.replace``."""
        new = copy.copy(self)
        new.__dict__.update(changes)
        return new

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, f))) for f in PRIMALS + DUALS) \
            and np.isfinite(self.alpha)


PRIMALS = ("E", "Xi", "V", "Z", "Gamma", "C", "Psi", "G", "W")
DUALS = ("Y", "J", "T", "M", "R", "N", "Q")


def _offdiag_cap(n: int) -> np.ndarray:
    """Upper bound matrix: 0 off the diagonal, +inf on it."""
    cap = np.zeros((n, n))
    np.fill_diagonal(cap, np.inf)
    return cap


def _diag_part(A: np.ndarray) -> np.ndarray:
    """``I . A`` for a stack of square matrices."""
    return np.eye(A.shape[-1]) * A


def initial_state(n: int, K: int, alpha: float, P: np.ndarray | None = None,
                  seed: int | None = None, scale: float = 1.0) -> AdmmState:
    """All-zero primal/dual state with ``Z = I``; random primals when ``seed`` is set."""
    P = build_projection_basis(n) if P is None else P
    m = n - 1
    zeros = lambda *shape: np.zeros(shape)
    st = AdmmState(P=P, E=zeros(K, m, m), Xi=zeros(K, m, m), V=zeros(n, n),
                   Z=np.broadcast_to(np.eye(n), (K, n, n)).copy(), Gamma=zeros(K, n, n),
                   C=zeros(K, n, n), Psi=zeros(K, n, n), G=zeros(n, n), W=zeros(n, n),
                   Y=zeros(K, n, n), J=zeros(K, n, n), T=zeros(K, n, n), M=zeros(K, n, n),
                   R=zeros(K, n, n), N=zeros(n, n), Q=zeros(n, n), alpha=float(alpha))
    if seed is not None:
        rng = np.random.default_rng(seed)

        def sym(*shape):
            A = scale * rng.standard_normal(shape)
            return (A + np.swapaxes(A, -1, -2)) / 2

        st.E, st.Xi = sym(K, m, m), sym(K, m, m)
        st.V, st.W, st.G = scale * rng.standard_normal((3, n, n))
        st.Gamma, st.C, st.Psi = sym(K, n, n), sym(K, n, n), sym(K, n, n)
        st.Z = np.eye(n) * (1.0 + scale * rng.random((K, 1, n)))
    return st


def precompute_data_terms(signals: MultiviewSignals, P: np.ndarray,
                          scale_by_samples: bool = False) -> np.ndarray:
    """Stack of ``B^k = P^T X^k X^k^T P`` (optionally divided by ``d_k``)."""
    if P.shape[0] != signals.n:
        raise ValidationError(f"basis has {P.shape[0]} rows but signals have n={signals.n}")
    out = []
    for X in signals.views:
        Y = P.T @ X
        B = Y @ Y.T
        if scale_by_samples:
            B /= X.shape[1]
        out.append((B + B.T) / 2)
    return np.stack(out)


def update_first_block(state: AdmmState, B: np.ndarray, config: SolverConfig) -> AdmmState:
    """Exact minimizers over ``E^k``, ``Xi^k`` and ``V`` (they decouple)."""
    a = state.alpha
    s = state
    K = s.K
    E = (s.reduce(a * (s.C + s.Psi + s.Z) + s.R + s.Y) - np.swapaxes(B, -1, -2)) / (2 * a)
    Xi = s.reduce(a * s.Gamma + s.T) / (2 * config.gamma4 + a)
    theta = a * s.W.T - s.N + a * s.G + s.Q
    V = (np.sum(a * s.C - a * s.Gamma + s.M, axis=0) - K * a * s.W + theta) / (a * (K + 2))
    return state.evolve(E=E, Xi=Xi, V=V)


def z_root(U: np.ndarray, alpha: float, gamma2: float) -> np.ndarray:
    """Positive root of ``2 alpha z^2 - U z - gamma2 = 0``, computed without cancellation."""
    disc = np.sqrt(U * U + 8.0 * alpha * gamma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = 2.0 * gamma2 / (disc - U)
    return np.where(U >= 0, (U + disc) / (4.0 * alpha), neg)


def update_second_block(state: AdmmState, config: SolverConfig, PEP=None, PXP=None
                        ) -> AdmmState:
    """Exact minimizers over the diagonal ``Z^k`` and over ``Gamma^k``.

    ``PEP``/``PXP`` optionally pass in ``P E P^T`` and ``P Xi P^T``.
    """
    a = state.alpha
    s = state
    PEP = s.conj(s.E) if PEP is None else PEP
    PXP = s.conj(s.Xi) if PXP is None else PXP
    diag = lambda A: np.diagonal(A, axis1=-2, axis2=-1)
    U = a * diag(s.C) - diag(s.J) - a * diag(s.Psi) + a * diag(PEP) - diag(s.R)
    z = z_root(U, a, config.gamma2)
    Z = z[..., :, None] * np.eye(s.n)
    Gamma = (a * (s.C - s.V - s.W + PXP) + s.M - s.T) / (2 * a)
    return state.evolve(Z=Z, Gamma=Gamma)


def update_third_block(state: AdmmState, config: SolverConfig, PEP=None) -> AdmmState:
    """Exact minimizers over ``C^k`` and ``Psi^k``.

    The ``Z - I.C`` coupling only touches the diagonal of ``C``, so the
    diagonal is averaged over three terms and the off-diagonal over two.
    """
    a = state.alpha
    s = state
    PEP = s.conj(s.E) if PEP is None else PEP
    idx = np.arange(s.n)
    C = a * (PEP + s.Gamma + s.V + s.W) - s.Y - s.M
    C[..., idx, idx] += a * s.Z[..., idx, idx] + s.J[..., idx, idx]
    C /= 2 * a
    C[..., idx, idx] *= 2.0 / 3.0
    Psi = (a * (PEP - s.Z) - s.R) / (2 * config.gamma1 + a)
    if config.nonpositive_offdiag:
        Psi = np.minimum(Psi, _offdiag_cap(s.n))
    return state.evolve(C=C, Psi=Psi)


def prox_l21(M: np.ndarray, tau: float) -> np.ndarray:
    """Column-wise block soft-threshold, the proximal map of ``tau ||.||_{2,1}``."""
    if tau < 0:
        raise ValidationError("prox threshold must be nonnegative")
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(norms > tau, 1.0 - tau / norms, 0.0)
    return M * shrink


def update_fourth_block(state: AdmmState, config: SolverConfig) -> AdmmState:
    """Prox step for ``G`` and the closed-form ``W`` update."""
    a = state.alpha
    s = state
    G = prox_l21(s.V - s.Q / a, config.prox_scale * config.gamma3 / a)
    K = s.K
    phi = a * s.V.T + s.N.T
    W = (np.sum(a * s.C - a * s.Gamma + s.M, axis=0) - K * a * s.V + phi) / (a * (K + 1))
    return state.evolve(G=G, W=W)


def constraint_residuals(state: AdmmState, PEP=None, PXP=None
                         ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Raw constraint violations: five per-view stacks, then the two shared ones."""
    s = state
    PEP = s.conj(s.E) if PEP is None else PEP
    PXP = s.conj(s.Xi) if PXP is None else PXP
    per_view = [
        s.C - PEP,
        s.Z - _diag_part(s.C),
        s.Gamma - PXP,
        s.C - s.Gamma - s.V - s.W,
        s.Psi - PEP + s.Z,
    ]
    shared = [s.V - s.W.T, s.G - s.V]
    return per_view, shared


def update_multipliers(state: AdmmState, config: SolverConfig, violations=None) -> AdmmState:
    """Dual ascent on all seven multiplier families; grows alpha when scheduled.

    ``violations`` may pass in the output of :func:`constraint_residuals`.
    """
    a = state.alpha
    if violations is None:
        violations = constraint_residuals(state)
    (rY, rJ, rT, rM, rR), (rN, rQ) = violations
    s = state
    new_alpha = a
    if config.alpha_schedule == "growing":
        new_alpha = min(config.mu * a, config.alpha_cap)
    return state.evolve(Y=s.Y + a * rY, J=s.J + a * rJ, T=s.T + a * rT, M=s.M + a * rM,
                   R=s.R + a * rR, N=s.N + a * rN, Q=s.Q + a * rQ, alpha=new_alpha,
                   iteration=s.iteration + 1)


@dataclass
class Residuals:
    """Frobenius norms of the ``5K + 2`` constraint violations.

    Ordered view by view (``C-PEP'``, ``Z-I.C``, ``Gamma-PXiP'``,
    ``C-Gamma-V-W``, ``Psi-PEP'+Z``) followed by ``V-W'`` and ``G-V``.
    ``normalized`` divides each by ``max(1, operand norms)``.
    """

    raw: np.ndarray
    normalized: np.ndarray

    @property
    def max(self) -> float:
        return float(self.normalized.max())


def _fro(A: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def compute_residuals(state: AdmmState, violations=None, PEP=None, PXP=None) -> Residuals:
    s = state
    PEP = s.conj(s.E) if PEP is None else PEP
    PXP = s.conj(s.Xi) if PXP is None else PXP
    if violations is None:
        violations = constraint_residuals(s, PEP, PXP)
    per_view, shared = violations
    nC, nPEP, nG, nPXP, nPsi, nZ = (_fro(A) for A in (s.C, PEP, s.Gamma, PXP, s.Psi, s.Z))
    nDC = np.linalg.norm(np.diagonal(s.C, axis1=-2, axis2=-1), axis=-1)
    nV, nW, nGG = (float(_fro(A)) for A in (s.V, s.W, s.G))
    one = np.ones(s.K)
    scales = np.stack([
        np.maximum.reduce([one, nC, nPEP]),
        np.maximum.reduce([one, nZ, nDC]),
        np.maximum.reduce([one, nG, nPXP]),
        np.maximum.reduce([one, nC, nG, nV * one, nW * one]),
        np.maximum.reduce([one, nPsi, nPEP, nZ]),
    ], axis=1)
    raw_view = np.stack([_fro(r) for r in per_view], axis=1)
    raw_shared = np.array([float(_fro(r)) for r in shared])
    scale_shared = np.array([max(1.0, nV, nW), max(1.0, nGG, nV)])
    raw = np.concatenate([raw_view.ravel(), raw_shared])
    norm = np.concatenate([(raw_view / scales).ravel(), raw_shared / scale_shared])
    return Residuals(raw, norm)


def stacked_residual_norm(state: AdmmState) -> float:
    """Frobenius norm of all constraint violations stacked together."""
    per_view, shared = constraint_residuals(state)
    return float(np.sqrt(sum(np.sum(r * r) for r in per_view + shared)))


def split_objective(state: AdmmState, B: np.ndarray, config: SolverConfig, PXP=None) -> float:
    """Objective of the split problem (without the augmented terms)."""
    s = state
    PXP = s.conj(s.Xi) if PXP is None else PXP
    z = np.diagonal(s.Z, axis1=-2, axis2=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(z > 0, np.log(np.where(z > 0, z, 1.0)), -np.inf)
    return float(np.einsum("kij,kji->", B, s.E)
                 + config.gamma1 * np.vdot(s.Psi, s.Psi)
                 - config.gamma2 * np.sum(logs)
                 + config.gamma4 * np.vdot(PXP, PXP)
                 + config.gamma3 * np.sum(np.linalg.norm(s.G, axis=0)))


def _step(state: AdmmState, B: np.ndarray, config: SolverConfig):
    """One full sweep; returns the new state, its residuals and ``P Xi P^T``."""
    state = update_first_block(state, B, config)
    PEP, PXP = state.conj(state.E), state.conj(state.Xi)
    state = update_second_block(state, config, PEP, PXP)
    state = update_third_block(state, config, PEP)
    state = update_fourth_block(state, config)
    violations = constraint_residuals(state, PEP, PXP)
    state = update_multipliers(state, config, violations)
    # multipliers leave the primal variables untouched, so the violations still apply
    return state, compute_residuals(state, violations, PEP, PXP), PXP


def admm_iteration(state: AdmmState, B: np.ndarray, config: SolverConfig) -> AdmmState:
    return _step(state, B, config)[0]


LATER_BLOCKS = ("Z", "Gamma", "C", "Psi", "G", "W")


def dual_residual(prev: AdmmState, new: AdmmState) -> float:
    """``alpha ||change in blocks 2-4||_F`` relative to ``max(1, ||multipliers||_F)``.

    The primal residual only measures feasibility; this measures how far the
    sweep still is from stationarity.
    """
    change = np.sqrt(sum(np.sum((getattr(new, f) - getattr(prev, f)) ** 2) for f in LATER_BLOCKS))
    duals = np.sqrt(sum(np.sum(getattr(new, f) ** 2) for f in DUALS))
    return float(prev.alpha * change / max(1.0, duals))


def balance_penalty(alpha: float, primal: float, dual: float, config: SolverConfig) -> float:
    """Residual balancing: raise alpha when feasibility lags, lower it when stationarity lags."""
    if primal > config.balance_ratio * dual:
        return min(alpha * config.balance_step, config.alpha_cap)
    if dual > config.balance_ratio * primal:
        return alpha / config.balance_step
    return alpha


@dataclass
class SolveReport:
    decomposition: CoHubDecomposition
    iterations: int
    residual_history: np.ndarray
    objective_history: np.ndarray
    converged: bool
    state: AdmmState
    alpha_history: np.ndarray
    runtime: float
    ergodic_history: np.ndarray | None = None
    dual_history: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return float(self.residual_history[-1].max()) if len(self.residual_history) else np.inf


def extract_decomposition(state: AdmmState, edge_threshold: float = DEFAULT_EDGE_THRESHOLD
                          ) -> CoHubDecomposition:
    raw = [(C + C.T) / 2 for C in state.C]
    return CoHubDecomposition(
        laplacians=[postprocess_laplacian(C, edge_threshold) for C in raw],
        specifics=[zero_row_sums(G) for G in state.Gamma],
        hub_matrix=state.G.copy(),
        raw_laplacians=raw,
    )


class _ErgodicTracker:
    """Running means of every primal block; residual of the averaged point."""

    def __init__(self, state: AdmmState):
        self.count = 0
        self.sums = {f: np.zeros_like(getattr(state, f)) for f in PRIMALS}

    def add(self, state: AdmmState) -> float:
        self.count += 1
        for f in PRIMALS:
            self.sums[f] += getattr(state, f)
        avg = state.evolve(**{f: self.sums[f] / self.count for f in PRIMALS})
        return stacked_residual_norm(avg)


def solve(signals: MultiviewSignals, config: SolverConfig = SolverConfig(), *,
          init_seed: int | None = None, init_scale: float = 1.0,
          track_ergodic: bool = False, raise_on_divergence: bool = True) -> SolveReport:
    """Run the four-block ADMM until the normalized residual drops below ``tol``.

    With ``config.dual_tol`` set, the dual residual (see :func:`dual_residual`)
    must also fall below it.

    Parameters
    ----------
    signals : MultiviewSignals
        One (n, d_k) signal matrix per view.
    config : SolverConfig
    init_seed : int, optional
        Start from random primal variables instead of the zero state.
    track_ergodic : bool
        Record the stacked constraint residual of the ergodic average of the
        iterates at every iteration.

    Raises
    ------
    DivergenceError
        When the state becomes non-finite; carries the iteration, alpha and a
        partial report.
    """
    n = signals.n
    if n < 2:
        raise ValidationError("need at least two nodes")
    P = build_projection_basis(n)
    B = precompute_data_terms(signals, P, config.scale_by_samples)
    state = initial_state(n, signals.K, config.alpha0, P, seed=init_seed, scale=init_scale)
    tracker = _ErgodicTracker(state) if track_ergodic else None

    res_hist, obj_hist, alpha_hist, erg_hist, dual_hist = [], [], [], [], []
    want_dual = config.dual_tol is not None or config.alpha_schedule == "adaptive"
    converged = False
    t0 = time.perf_counter()
    for it in range(1, int(config.max_iter) + 1):
        alpha_hist.append(state.alpha)
        prev = state
        state, res, PXP = _step(state, B, config)
        # any non-finite primal or dual shows up in the raw residuals
        if not (np.all(np.isfinite(res.raw)) and np.isfinite(state.alpha)):
            report = _report(state, res_hist, obj_hist, alpha_hist, erg_hist, False, t0, config,
                             dual_hist)
            if raise_on_divergence:
                raise DivergenceError(state.iteration, state.alpha, report)
            report.extras["diverged"] = True
            return report
        res_hist.append(res.normalized)
        obj_hist.append(split_objective(state, B, config, PXP))
        if tracker is not None:
            erg_hist.append(tracker.add(state))
        dual = dual_residual(prev, state) if want_dual else 0.0
        if want_dual:
            dual_hist.append(dual)
        if res.max <= config.tol and (config.dual_tol is None or dual <= config.dual_tol):
            converged = True
            break
        if config.alpha_schedule == "adaptive" and it % config.balance_every == 0:
            state = state.evolve(alpha=balance_penalty(state.alpha, res.max, dual, config))
    if not converged:
        log.debug("ADMM stopped at max_iter=%d with residual %.3g", config.max_iter, res.max)
    return _report(state, res_hist, obj_hist, alpha_hist, erg_hist if tracker else None,
                   converged, t0, config, dual_hist if want_dual else None)


def _report(state, res_hist, obj_hist, alpha_hist, erg_hist, converged, t0, config,
            dual_hist=None):
    decomposition = extract_decomposition(state, config.edge_threshold) if state.is_finite() \
        else None
    width = 5 * state.K + 2
    return SolveReport(
        decomposition=decomposition,
        iterations=len(res_hist),
        residual_history=np.array(res_hist).reshape(-1, width),
        objective_history=np.array(obj_hist),
        converged=converged,
        state=state,
        alpha_history=np.array(alpha_hist[:len(res_hist)]),
        runtime=time.perf_counter() - t0,
        ergodic_history=None if erg_hist is None else np.array(erg_hist),
        dual_history=None if dual_hist is None else np.array(dual_hist),
    )


def alpha_upper_bound(gamma1: float, gamma2: float, gamma4: float, K: int, M: float) -> float:
    """Largest fixed penalty covered by the sublinear convergence guarantee.

    ``min(s2/6, s3/15, s4/(5(K+2)))`` with the strong-convexity moduli
    ``s2 = gamma2/M^2``, ``s3 = 2 gamma1``, ``s4 = 2 gamma4``; ``M`` bounds the
    Laplacian diagonal.
    """
    if not M > 0:
        raise ValidationError("diagonal bound M must be positive")
    if min(gamma1, gamma2, gamma4) < 0 or K < 1:
        raise ValidationError("gammas must be nonnegative and K >= 1")
    return min(gamma2 / M ** 2 / 6.0, 2.0 * gamma1 / 15.0, 2.0 * gamma4 / (5.0 * (K + 2)))
