"""Shared builders for tests."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from chmvgl.admm import DUALS, PRIMALS, initial_state
from chmvgl.graph import MultiviewSignals

from oracles import augmented_lagrangian, fd_gradient

BLOCK_VARIABLES = {
    "first": ("E", "Xi", "V"),
    "second": ("Z", "Gamma"),
    "third": ("C", "Psi"),
    "fourth": ("G", "W"),
}


def path2():
    return np.array([[1.0, -1.0], [-1.0, 1.0]])


def random_state(n, K, seed, alpha=None):
    """Random primal and dual variables with a positive diagonal ``Z``."""
    rng = np.random.default_rng(seed)
    alpha = float(rng.uniform(0.5, 2.0)) if alpha is None else alpha
    st = initial_state(n, K, alpha, seed=seed + 1000)
    duals = {}
    for name in DUALS:
        shape = getattr(st, name).shape
        duals[name] = rng.standard_normal(shape)
    return replace(st, **duals)


def random_data_terms(n, K, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(K):
        A = rng.standard_normal((n - 1, 3 * n))
        out.append(A @ A.T / (3 * n))
    return np.stack(out)


def state_dict(state):
    return {name: np.array(getattr(state, name)) for name in PRIMALS + DUALS + ("P",)}


def random_signals(n, K, d, seed):
    rng = np.random.default_rng(seed)
    return MultiviewSignals([rng.standard_normal((n, d)) for _ in range(K)])


def block_stationarity(state, B, config, block, h=1e-4):
    """Apply one block update and measure stationarity of its subproblem.

    Returns ``{variable: (gradient_norm, variable_norm)}`` where the gradient
    is the finite-difference gradient of the augmented Lagrangian oracle with
    every other variable frozen. Constrained or nonsmooth variables report the
    matching optimality measure: the projected gradient for the sign-restricted
    ``Psi`` and the distance of ``0`` from the subdifferential for ``G``.
    """
    from chmvgl import admm

    update = {
        "first": lambda s: admm.update_first_block(s, B, config),
        "second": lambda s: admm.update_second_block(s, config),
        "third": lambda s: admm.update_third_block(s, config),
        "fourth": lambda s: admm.update_fourth_block(s, config),
    }[block]
    new = update(state)
    v = state_dict(new)
    gammas = config.gammas
    out = {}
    for name in BLOCK_VARIABLES[block]:
        def f(X, name=name, gam=gammas):
            w = dict(v)
            w[name] = X
            return augmented_lagrangian(w, B, gam, new.alpha)

        X = v[name]
        if name == "Z":
            mask = np.broadcast_to(np.eye(X.shape[-1], dtype=bool), X.shape)
            g = fd_gradient(f, X, h / 10, mask)
        elif name == "G":
            smooth = fd_gradient(lambda X: f(X, gam=gammas[:2] + (0.0,) + gammas[3:]), X, h)
            norms = np.linalg.norm(X, axis=0)
            g = np.zeros_like(X)
            nz = norms > 0
            g[:, nz] = smooth[:, nz] + gammas[2] * X[:, nz] / norms[nz]
            excess = np.maximum(np.linalg.norm(smooth[:, ~nz], axis=0) - gammas[2], 0.0)
            out[name] = (float(np.sqrt(np.sum(g * g) + np.sum(excess ** 2))),
                         float(np.linalg.norm(X)))
            continue
        else:
            g = fd_gradient(f, X, h)
        if name == "Psi" and config.nonpositive_offdiag:
            n = X.shape[-1]
            off = ~np.eye(n, dtype=bool)
            stepped = X - g
            stepped[..., off] = np.minimum(stepped[..., off], 0.0)
            g = X - stepped
        out[name] = (float(np.linalg.norm(g)), float(np.linalg.norm(X)))
    return out
