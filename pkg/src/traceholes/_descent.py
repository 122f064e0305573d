"""Projected Barzilai-Borwein descent for 0-homogeneous quotients E/B^(p/q).

The iterate lives on the positive cone intersected with the unit-B sphere:
after every step the field is replaced by its absolute value (the quotient
never distinguishes u from |u| and the extremal has a sign) and rescaled
so B = 1, which is exact because both forms are homogeneous.

Steps go along the gradient preconditioned by a fixed SPD elliptic metric
(stiffness plus lumped mass, passed in factorized form); without it the
raw quotient gradient needs O(1/h^2) iterations on fine meshes.  Step
lengths are Barzilai-Borwein in the preconditioner metric with a
nonmonotone (5-value window) halving line search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass
class Preconditioner:
    """Factorized SPD metric: solve applies P^{-1}, matvec applies P."""

    solve: Callable[[np.ndarray], np.ndarray]
    matvec: Callable[[np.ndarray], np.ndarray]


@dataclass
class DescentResult:
    u: np.ndarray
    value: float
    iterations: int
    converged: bool
    grad_norm: float
    values: list


def _normalize(u, b_fn, q):
    B = b_fn(u)
    if not B > 0:
        raise ValueError("cannot normalize: boundary norm vanished")
    return u * B ** (-1.0 / q)


def minimize_quotient(e_fn, de_fn, b_fn, db_fn, p, q, free, u0,
                      tol, max_iter, precond: Optional[Preconditioner] = None,
                      window=5, max_halvings=40) -> DescentResult:
    """Minimize E(u)/B(u)^(p/q) over the free DOFs.

    Convergence requires both the free-DOF gradient norm (scaled by 1/p,
    the Euler-Lagrange residual scale) to fall below ``tol`` and the
    relative quotient decrease over the trailing window to stall at
    ``tol``.  Returns the best iterate seen.
    """
    r = p / q
    u = np.abs(np.asarray(u0, dtype=float)).copy()
    u[~free] = 0.0
    u = _normalize(u, b_fn, q)

    def grad_at(u, E):
        # B = 1 on the sphere, so dQ = dE - (p/q) E dB there
        g = de_fn(u) - r * E * db_fn(u)
        g[~free] = 0.0
        return g

    def direction(g):
        if precond is None:
            return g
        d = np.zeros_like(g)
        d[free] = precond.solve(g[free])
        return d

    E = e_fn(u)
    g = grad_at(u, E)
    gnorm = float(np.linalg.norm(g)) / p
    values = [E]
    best_u, best_val = u.copy(), E
    if gnorm <= tol:
        return DescentResult(best_u, best_val, 0, True, gnorm, values)

    d = direction(g)
    alpha = 0.1 * max(float(np.linalg.norm(u)), 1.0) / max(float(np.linalg.norm(d)), 1e-30)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        ref = max(values[-window:])
        step = alpha
        accepted = False
        for _ in range(max_halvings):
            cand = np.abs(u - step * d)
            cand[~free] = 0.0
            try:
                cand = _normalize(cand, b_fn, q)
            except ValueError:
                step *= 0.5
                continue
            E_new = e_fn(cand)
            if E_new <= ref:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        g_new = grad_at(cand, E_new)
        s = cand - u
        y = g_new - g
        # BB1 in the P-metric: <s, s>_P / <s, y>_P, and <s, P d'>=<s, g'>
        sy = float(s @ y)
        if sy > 0:
            if precond is None:
                alpha = float(s @ s) / sy
            else:
                alpha = float(s[free] @ precond.matvec(s[free])) / sy
        else:
            alpha = step * 2.0
        alpha = min(max(alpha, 1e-14), 1e10)
        u, E, g = cand, E_new, g_new
        d = direction(g)
        gnorm = float(np.linalg.norm(g)) / p
        values.append(E)
        if E < best_val:
            best_val, best_u = E, u.copy()
        if gnorm <= tol and len(values) > window:
            drop = (max(values[-window:]) - values[-1]) / max(abs(values[-1]), 1e-300)
            if drop <= tol:
                converged = True
                break
    return DescentResult(best_u, best_val, it, converged, gnorm, values)
