"""One-dimensional limit problem: closed-form constant, weighted solver,
and exhaustive hole optimization.

This is a genuinely different functional from the N-dimensional trace
quotient: the denominator is the (weighted) interior L^q norm,

    minimize  int rho (|v'|^p + |v|^p) dx / (int beta |v|^q dx)^(p/q)

over fields vanishing on a sub-interval hole.  With rho = beta = 1 and a
hole abutting an endpoint the optimal value has a closed form: the
Dirichlet-Neumann eigenvalue of the 1D p-Laplacian on the free segment,
plus one.

Convention note: ``closed_form_limit_constant(p, alpha, length)`` evaluates
the published formula verbatim, in which alpha plays the role of the
fraction of the interval left FREE by the hole (the formula is the
eigenvalue of a segment of length alpha * length).  The solver and the
sweep take the hole fraction; ``closed_form_for_hole_fraction`` does the
bookkeeping between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from ._descent import Preconditioner, minimize_quotient
from .fem import GAUSS2, ProblemConfig, _signed_power


@dataclass
class OneDimProblem:
    a: float
    b: float
    p: float
    q: float
    alpha: float
    rho: Optional[Callable] = None    # volume weight, defaults to 1
    beta: Optional[Callable] = None   # interior density weight, defaults to 1
    epsilon: Optional[float] = None
    dof_tolerance: float = 1e-8
    max_inner_iterations: int = 20000

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.p <= 1:
            raise ValueError("exponent p must exceed 1")
        if self.q < 1:
            raise ValueError("exponent q must be at least 1")

    @property
    def length(self) -> float:
        return self.b - self.a

    def config(self) -> ProblemConfig:
        return ProblemConfig(self.p, self.q, epsilon=self.epsilon,
                             dof_tolerance=self.dof_tolerance,
                             max_inner_iterations=self.max_inner_iterations)


def closed_form_limit_constant(p: float, alpha: float, length: float) -> float:
    """(2 pi)^p (p-1) / (2 alpha length p sin(pi/p))^p + 1.

    alpha here is the free fraction of the interval (see module docstring);
    p must exceed 1 for sin(pi/p) to stay positive.
    """
    if p <= 1:
        raise ValueError("closed form needs p > 1 (sin(pi/p) degenerates)")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if length <= 0:
        raise ValueError("length must be positive")
    return ((2 * math.pi) ** p * (p - 1)
            / (2 * alpha * length * p * math.sin(math.pi / p)) ** p) + 1.0


def closed_form_for_hole_fraction(p: float, hole_fraction: float,
                                  length: float) -> float:
    """Optimal limit constant for a hole covering the given fraction."""
    return closed_form_limit_constant(p, 1.0 - hole_fraction, length)


@dataclass
class LimitResult:
    value: float
    extremal: np.ndarray
    nodes: np.ndarray
    hole: Tuple[float, float]
    iterations: int
    converged: bool


class _LimitForms:
    """Assembly for the weighted interior quotient on a uniform grid."""

    def __init__(self, problem: OneDimProblem, n_cells: int):
        self.x = np.linspace(problem.a, problem.b, n_cells + 1)
        self.h = (problem.b - problem.a) / n_cells
        self.cfg = problem.config()
        rho = problem.rho or (lambda x: np.ones_like(x))
        beta = problem.beta or (lambda x: np.ones_like(x))
        rho_n = np.asarray(rho(self.x), dtype=float)
        if np.any(rho_n <= 0):
            raise ValueError("rho must be positive for a weighted norm")
        beta_n = np.asarray(beta(self.x), dtype=float)
        if np.any(beta_n < 0):
            raise ValueError("beta must be nonnegative")
        self.rho_cell = 0.5 * (rho_n[:-1] + rho_n[1:])
        self.rho_lumped = np.zeros(self.x.size)
        self.rho_lumped[:-1] += 0.5 * self.h * rho_n[:-1]
        self.rho_lumped[1:] += 0.5 * self.h * rho_n[1:]
        a1, a2 = GAUSS2
        self.beta_g1 = a2 * beta_n[:-1] + a1 * beta_n[1:]
        self.beta_g2 = a1 * beta_n[:-1] + a2 * beta_n[1:]

    def energy(self, u):
        p, eps2 = self.cfg.p, self.cfg.eps**2
        g = np.diff(u) / self.h
        grad = float(np.sum(self.rho_cell * self.h * (eps2 + g * g) ** (p / 2)))
        mass = float(np.sum(self.rho_lumped * np.abs(u) ** p))
        return grad + mass

    def energy_gradient(self, u):
        p, eps2 = self.cfg.p, self.cfg.eps**2
        g = np.diff(u) / self.h
        w = p * self.rho_cell * self.h * (eps2 + g * g) ** ((p - 2) / 2) * g / self.h
        out = np.zeros_like(u)
        out[:-1] -= w
        out[1:] += w
        out += p * self.rho_lumped * _signed_power(u, p - 1)
        return out

    def denom(self, u):
        q = self.cfg.q
        a1, a2 = GAUSS2
        u1 = a2 * u[:-1] + a1 * u[1:]
        u2 = a1 * u[:-1] + a2 * u[1:]
        return float(np.sum(0.5 * self.h * (self.beta_g1 * np.abs(u1) ** q
                                            + self.beta_g2 * np.abs(u2) ** q)))

    def denom_gradient(self, u):
        q = self.cfg.q
        a1, a2 = GAUSS2
        u1 = a2 * u[:-1] + a1 * u[1:]
        u2 = a1 * u[:-1] + a2 * u[1:]
        s1 = 0.5 * self.h * q * self.beta_g1 * _signed_power(u1, q - 1)
        s2 = 0.5 * self.h * q * self.beta_g2 * _signed_power(u2, q - 1)
        out = np.zeros_like(u)
        out[:-1] += a2 * s1 + a1 * s2
        out[1:] += a1 * s1 + a2 * s2
        return out

    def preconditioner(self, free):
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        n = self.x.size
        main = np.zeros(n)
        off = -np.ones(n - 1) / self.h
        main[:-1] += 1.0 / self.h
        main[1:] += 1.0 / self.h
        P = sp.diags([off, main + self.rho_lumped, off], [-1, 0, 1],
                     format="csc")
        idx = free.nonzero()[0]
        Pf = P[np.ix_(idx, idx)].tocsc()
        lu = spla.splu(Pf)
        return Preconditioner(solve=lu.solve, matvec=lambda v: Pf @ v)


def _hole_mask(x, hole, h):
    lo, hi = hole
    tol = 1e-9 * h
    return (x >= lo - tol) & (x <= hi + tol)


def solve_limit_problem(problem: OneDimProblem, hole: Tuple[float, float],
                        n_cells: int,
                        init: Optional[np.ndarray] = None) -> LimitResult:
    """Minimize the weighted interior quotient with the field vanishing on
    all nodes of the sub-interval hole."""
    if n_cells < 16:
        raise ValueError("need at least 16 cells")
    lo, hi = hole
    if not (problem.a <= lo < hi <= problem.b):
        raise ValueError("hole must be a sub-interval of (a, b)")
    forms = _LimitForms(problem, n_cells)
    target = problem.alpha * problem.length
    if abs((hi - lo) - target) > forms.h + 1e-9 * forms.h:
        raise ValueError(
            f"hole measure {hi - lo} does not match alpha within one cell")
    constrained = _hole_mask(forms.x, hole, forms.h)
    free = ~constrained
    if not np.any(free):
        raise ValueError("hole covers the whole interval")
    if init is None:
        u0 = np.ones(forms.x.size)
    else:
        u0 = np.abs(np.asarray(init, dtype=float)).copy()
        u0[free] = np.maximum(u0[free], 1e-12 * max(float(u0.max()), 1.0))
    u0[constrained] = 0.0
    res = minimize_quotient(
        forms.energy, forms.energy_gradient, forms.denom, forms.denom_gradient,
        problem.p, problem.q, free, u0,
        tol=problem.dof_tolerance, max_iter=problem.max_inner_iterations,
        precond=forms.preconditioner(free))
    u = np.abs(res.u)
    u[constrained] = 0.0
    u = u * forms.denom(u) ** (-1.0 / problem.q)
    value = forms.energy(u)
    return LimitResult(value, u, forms.x, (lo, hi), res.iterations,
                       res.converged)


@dataclass
class HoleSweep:
    best_hole: Tuple[float, float]
    best_value: float
    best_result: LimitResult
    starts: np.ndarray
    values: np.ndarray


def optimize_limit_hole(problem: OneDimProblem, n_cells: int) -> HoleSweep:
    """Exhaustive sweep over cell-aligned holes of the target measure."""
    forms_h = (problem.b - problem.a) / n_cells
    c = max(1, round(problem.alpha * n_cells))
    starts, values = [], []
    best = None
    init = None
    for s in range(n_cells - c + 1):
        lo = problem.a + s * forms_h
        hi = problem.a + (s + c) * forms_h
        result = solve_limit_problem(problem, (lo, hi), n_cells, init=init)
        init = result.extremal
        starts.append(lo)
        values.append(result.value)
        if best is None or result.value < best.value:
            best = result
    return HoleSweep(best.hole, best.value, best,
                     np.array(starts), np.array(values))
