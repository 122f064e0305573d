"""P1 finite element forms for the trace quotient.

The discrete energy is

    E(u) = sum_cells |cell| (eps^2 + |grad u|^2)^(p/2)  +  sum_v m_v |u_v|^p

with vertex-lumped mass m_v, and the boundary norm

    B(u) = sum_facets (L_f/2) (|u(g1)|^q + |u(g2)|^q)

with two-point Gauss nodes per facet (in 1D the boundary facets are points
with unit mass and B is the plain sum of endpoint values).  The Rayleigh
quotient E / B^(p/q) is 0-homogeneous; its nodal gradient is assembled
exactly from the same quadratures.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Mesh, cell_volumes


class NotAdmissibleError(ValueError):
    """Field vanishes on the whole boundary: outside the admissible class."""


GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass
class ProblemConfig:
    """Exponents and solver tolerances.

    epsilon=None resolves to the module default: 0 for p >= 2, 1e-8 for
    p < 2 (the regularized gradient density (eps^2 + |grad u|^2)^(p/2)
    avoids blowup of the p-Laplacian coefficient at critical points).
    """

    p: float
    q: float
    epsilon: Optional[float] = None
    dof_tolerance: float = 1e-8
    max_inner_iterations: int = 20000

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("exponent p must exceed 1")
        if self.q < 1:
            raise ValueError("exponent q must be at least 1")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.dof_tolerance <= 0:
            raise ValueError("dof_tolerance must be positive")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be at least 1")

    @property
    def eps(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return 0.0 if self.p >= 2 else 1e-8

    def critical_exponent(self, dim: int) -> float:
        """Critical trace exponent: p(N-1)/(N-p) for p < N, infinity else."""
        if self.p < dim:
            return self.p * (dim - 1) / (dim - self.p)
        return float("inf")

    def validate_subcritical(self, dim: int) -> None:
        pstar = self.critical_exponent(dim)
        if self.q >= pstar:
            raise ValueError(
                f"q = {self.q} is not subcritical: need q < p_* = {pstar} "
                f"for p = {self.p} in dimension {dim}")


class _Forms:
    """Per-mesh assembly data (P1 gradients, lumped mass, boundary Gauss)."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        v, c = mesh.vertices, mesh.cells
        vol = cell_volumes(mesh)
        if np.any(vol <= 0):
            raise ValueError("mesh has non-positively oriented cells")
        self.vol = vol
        nv = mesh.n_vertices
        if mesh.dim == 1:
            h = vol
            self.grad_coeff = np.stack([-1.0 / h, 1.0 / h], axis=1)  # (nc, 2)
            self.lumped = np.zeros(nv)
            np.add.at(self.lumped, c[:, 0], 0.5 * h)
            np.add.at(self.lumped, c[:, 1], 0.5 * h)
        else:
            x, y = v[:, 0], v[:, 1]
            i, j, k = c[:, 0], c[:, 1], c[:, 2]
            b = np.stack([y[j] - y[k], y[k] - y[i], y[i] - y[j]], axis=1)
            a = np.stack([x[k] - x[j], x[i] - x[k], x[j] - x[i]], axis=1)
            self.gx = b / (2.0 * vol[:, None])   # (nc, 3): d(phi_m)/dx
            self.gy = a / (2.0 * vol[:, None])
            self.lumped = np.zeros(nv)
            for m in range(3):
                np.add.at(self.lumped, c[:, m], vol / 3.0)
        bf = mesh.boundary
        if mesh.dim == 2:
            self.bi, self.bj = bf[:, 0], bf[:, 1]
        else:
            self.bi = bf[:, 0]
        self.boundary_vertices = mesh.boundary_vertex_indices()

    def gradients(self, u):
        c = self.mesh.cells
        if self.mesh.dim == 1:
            g = self.grad_coeff[:, 0] * u[c[:, 0]] + self.grad_coeff[:, 1] * u[c[:, 1]]
            return (g,)
        uc = u[c]
        return (np.sum(self.gx * uc, axis=1), np.sum(self.gy * uc, axis=1))

    def grad_square(self, u):
        g = self.gradients(u)
        return sum(comp**2 for comp in g), g


_FORMS_CACHE: "weakref.WeakKeyDictionary[Mesh, _Forms]" = weakref.WeakKeyDictionary()


def forms(mesh: Mesh) -> _Forms:
    ops = _FORMS_CACHE.get(mesh)
    if ops is None:
        ops = _Forms(mesh)
        _FORMS_CACHE[mesh] = ops
    return ops


def _signed_power(x, e):
    """|x|^(e-1) x with the continuous extension 0 at x = 0 (needs e > 0)."""
    return np.sign(x) * np.abs(x) ** e


def energy(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray) -> float:
    ops = forms(mesh)
    g2, _ = ops.grad_square(u)
    eps2 = cfg.eps**2
    grad_term = float(np.sum(ops.vol * (eps2 + g2) ** (cfg.p / 2.0)))
    mass_term = float(np.sum(ops.lumped * np.abs(u) ** cfg.p))
    return grad_term + mass_term


def boundary_norm_q(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray,
                    facet_weights: Optional[np.ndarray] = None) -> float:
    """Integral of |u|^q over the boundary (optionally facet-weighted)."""
    ops = forms(mesh)
    if mesh.dim == 1:
        vals = np.abs(u[ops.bi]) ** cfg.q * mesh.facet_lengths
        if facet_weights is not None:
            vals = vals * facet_weights
        return float(np.sum(vals))
    a1, a2 = GAUSS2
    ui, uj = u[ops.bi], u[ops.bj]
    u1 = a2 * ui + a1 * uj
    u2 = a1 * ui + a2 * uj
    per_facet = 0.5 * mesh.facet_lengths * (np.abs(u1) ** cfg.q + np.abs(u2) ** cfg.q)
    if facet_weights is not None:
        per_facet = per_facet * facet_weights
    return float(np.sum(per_facet))


def _check_admissible(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray) -> None:
    ops = forms(mesh)
    if np.max(np.abs(u[ops.boundary_vertices]), initial=0.0) <= cfg.dof_tolerance:
        raise NotAdmissibleError(
            "field vanishes on the whole boundary within dof_tolerance; "
            "the quotient is only defined off W^{1,p}_0")


def rayleigh_quotient(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray) -> float:
    _check_admissible(mesh, cfg, u)
    return energy(mesh, cfg, u) / boundary_norm_q(mesh, cfg, u) ** (cfg.p / cfg.q)


def energy_gradient(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray) -> np.ndarray:
    ops = forms(mesh)
    p = cfg.p
    g2, grads = ops.grad_square(u)
    coeff = p * ops.vol * (cfg.eps**2 + g2) ** ((p - 2.0) / 2.0)
    out = np.zeros_like(u)
    c = mesh.cells
    if mesh.dim == 1:
        w = coeff * grads[0]
        np.add.at(out, c[:, 0], w * ops.grad_coeff[:, 0])
        np.add.at(out, c[:, 1], w * ops.grad_coeff[:, 1])
    else:
        wx, wy = coeff * grads[0], coeff * grads[1]
        for m in range(3):
            np.add.at(out, c[:, m], wx * ops.gx[:, m] + wy * ops.gy[:, m])
    out += p * ops.lumped * _signed_power(u, p - 1.0)
    return out


def boundary_norm_gradient(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray,
                           facet_weights: Optional[np.ndarray] = None) -> np.ndarray:
    ops = forms(mesh)
    q = cfg.q
    out = np.zeros_like(u)
    if mesh.dim == 1:
        w = mesh.facet_lengths if facet_weights is None else mesh.facet_lengths * facet_weights
        np.add.at(out, ops.bi, q * w * _signed_power(u[ops.bi], q - 1.0))
        return out
    a1, a2 = GAUSS2
    ui, uj = u[ops.bi], u[ops.bj]
    u1 = a2 * ui + a1 * uj
    u2 = a1 * ui + a2 * uj
    w = 0.5 * mesh.facet_lengths
    if facet_weights is not None:
        w = w * facet_weights
    s1 = q * w * _signed_power(u1, q - 1.0)
    s2 = q * w * _signed_power(u2, q - 1.0)
    np.add.at(out, ops.bi, a2 * s1 + a1 * s2)
    np.add.at(out, ops.bj, a1 * s1 + a2 * s2)
    return out


def quotient_gradient(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray) -> np.ndarray:
    """Exact nodal gradient of the discrete Rayleigh quotient."""
    _check_admissible(mesh, cfg, u)
    E = energy(mesh, cfg, u)
    B = boundary_norm_q(mesh, cfg, u)
    dE = energy_gradient(mesh, cfg, u)
    dB = boundary_norm_gradient(mesh, cfg, u)
    r = cfg.p / cfg.q
    return dE / B**r - r * E * dB / B ** (r + 1.0)


def weak_form_vectors(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray):
    """Euler-Lagrange pairing vectors (a_i, b_i) against all nodal hats:

    a_i = int (eps^2+|grad u|^2)^((p-2)/2) grad u . grad phi_i + |u|^{p-2} u phi_i
    b_i = int_boundary |u|^{q-2} u phi_i

    so stationarity of the quotient reads a = lambda b on free DOFs.
    """
    return (energy_gradient(mesh, cfg, u) / cfg.p,
            boundary_norm_gradient(mesh, cfg, u) / cfg.q)


def h1_operator(mesh: Mesh):
    """Sparse stiffness + lumped mass matrix (the W^{1,2} metric used to
    precondition descent for every exponent p)."""
    import scipy.sparse as sp

    ops = forms(mesh)
    c = mesh.cells
    nv = mesh.n_vertices
    rows, cols, vals = [], [], []
    if mesh.dim == 1:
        for m in range(2):
            for n in range(2):
                rows.append(c[:, m])
                cols.append(c[:, n])
                vals.append(ops.vol * ops.grad_coeff[:, m] * ops.grad_coeff[:, n])
    else:
        for m in range(3):
            for n in range(3):
                rows.append(c[:, m])
                cols.append(c[:, n])
                vals.append(ops.vol * (ops.gx[:, m] * ops.gx[:, n]
                                       + ops.gy[:, m] * ops.gy[:, n]))
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nv, nv)).tocsr()
    return K + sp.diags(ops.lumped)
