"""First-order sensitivity of the trace constant under tangential motion
of the hole.

For a tangential field V with flow moving the hole, the derivative of
s(t) at t = 0 splits into a boundary part and a volume part,

    ds/dt = -(p/q) S int_bdry |u|^q div_tau V dH  +  R(u),
    R(u)  = int (|u|^p + |grad u|^p) div V dx
            - p int |grad u|^{p-2} <grad u, DV^T grad u> dx,

assembled here with the normalized discrete extremal u: the boundary term
by per-facet Gauss quadrature with the closed-form tangential divergence
(the arclength derivative of the speed), the volume terms by centroid
quadrature of div V and DV from the field's interior extension.

Hole transport moves each arc endpoint by t times its local speed and
re-snaps to whole facets, so finite differences of s(t) carry a facet
quantization floor; central-difference checks should keep the endpoint
displacement well above one facet (or an exact multiple of it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import fem
from .fem import ProblemConfig
from .geometry import (
    BoundaryHole, Mesh, TangentialField, arc_interval, dspeed_at,
    field_divergence_and_jacobian, hole_arcs, hole_from_facets,
    make_hole_from_arc, speed_at,
)
from .trace_solver import TraceResult, solve_trace_constant


@dataclass
class ShapeDerivativeResult:
    ds_dt: float
    boundary_term: float
    volume_term: float
    fd_estimates: list = field(default_factory=list)


def _gauss_arclengths(mesh: Mesh):
    a1, a2 = fem.GAUSS2
    s0 = mesh.facet_arclength
    L = mesh.facet_lengths
    return s0 + a1 * L, s0 + a2 * L


def evaluate_shape_derivative(mesh: Mesh, cfg: ProblemConfig,
                              hole: BoundaryHole, V: TangentialField,
                              trace: TraceResult) -> ShapeDerivativeResult:
    """Assemble the two terms of ds/dt(0) for the normalized extremal."""
    if not trace.converged:
        raise ValueError("shape derivative needs a converged trace result")
    u = trace.extremal
    B = fem.boundary_norm_q(mesh, cfg, u)
    if abs(B - 1.0) > 1e-8:
        raise ValueError("shape derivative is stated for the normalized extremal")
    if V.extension == "tube" and not V.delta < _max_tube(mesh):
        raise ValueError("field support exceeds the admissible boundary tube")

    p, q = cfg.p, cfg.q
    ops = fem.forms(mesh)

    # boundary term: -(p/q) S  int |u|^q div_tau V, with div_tau V = v'(s)
    sg1, sg2 = _gauss_arclengths(mesh)
    a1, a2 = fem.GAUSS2
    ui, uj = u[ops.bi], u[ops.bj]
    u1 = a2 * ui + a1 * uj
    u2 = a1 * ui + a2 * uj
    dv1 = np.asarray(dspeed_at(mesh, V, sg1), dtype=float)
    dv2 = np.asarray(dspeed_at(mesh, V, sg2), dtype=float)
    bint = float(np.sum(0.5 * mesh.facet_lengths
                        * (np.abs(u1) ** q * dv1 + np.abs(u2) ** q * dv2)))
    boundary_term = -(p / q) * trace.s_value * bint

    # volume term R(u) at cell centroids
    centroids = mesh.vertices[mesh.cells].mean(axis=1)
    div, DV = field_divergence_and_jacobian(mesh, V, centroids)
    g2, grads = ops.grad_square(u)
    gx, gy = grads
    dens = (cfg.eps**2 + g2) ** (p / 2.0) \
        + np.mean(np.abs(u[mesh.cells]) ** p, axis=1)
    term1 = float(np.sum(ops.vol * dens * div))
    w0 = DV[:, 0, 0] * gx + DV[:, 1, 0] * gy   # (DV^T grad u)_x
    w1 = DV[:, 0, 1] * gx + DV[:, 1, 1] * gy
    inner = gx * w0 + gy * w1
    term2 = -p * float(np.sum(
        ops.vol * (cfg.eps**2 + g2) ** ((p - 2.0) / 2.0) * inner))
    volume_term = term1 + term2
    return ShapeDerivativeResult(boundary_term + volume_term,
                                 boundary_term, volume_term)


def _max_tube(mesh: Mesh) -> float:
    dom = mesh.domain
    from .geometry import Disk, Rectangle, ThinRectangle
    if isinstance(dom, Disk):
        return dom.radius
    if isinstance(dom, Rectangle):
        return 0.5 * min(dom.width, dom.height)
    if isinstance(dom, ThinRectangle):
        return 0.5 * min(dom.b - dom.a, dom.mu)
    return float("inf")


def transport_hole(mesh: Mesh, hole: BoundaryHole, V: TangentialField,
                   t: float) -> BoundaryHole:
    """Move each maximal arc of the hole by the first-order flow and re-snap
    its endpoints to whole facets."""
    arcs = hole_arcs(mesh, hole)
    if not arcs:
        return hole
    if len(arcs) == 1 and arcs[0][1] == mesh.n_facets:
        raise ValueError("cannot transport a hole covering the full boundary")
    P = mesh.perimeter
    moved = []
    for first, count in arcs:
        s_a, s_b = arc_interval(mesh, first, count)
        va = float(np.asarray(speed_at(mesh, V, s_a % P)))
        vb = float(np.asarray(speed_at(mesh, V, s_b % P)))
        na, nb = s_a + t * va, s_b + t * vb
        if nb - na <= 0:
            raise ValueError(f"arc collapsed under transport at t={t}")
        if nb - na >= P:
            raise ValueError(f"arc wrapped onto itself under transport at t={t}")
        moved.append((na % P, nb - na))
    moved.sort()
    facets: set = set()
    for start, length in moved:
        arc_facets = make_hole_from_arc(mesh, start, length).facet_indices
        if facets & arc_facets:
            raise ValueError(f"arcs collide under transport at t={t}")
        facets |= arc_facets
    return hole_from_facets(mesh, facets)


@dataclass
class FDCheck:
    analytic: float
    rows: List[Tuple[float, float, float]]   # (h, fd_value, relative_error)
    derivative: ShapeDerivativeResult


def fd_check(mesh: Mesh, cfg: ProblemConfig, hole: BoundaryHole,
             V: TangentialField, steps,
             trace: Optional[TraceResult] = None) -> FDCheck:
    """Central differences (s(h) - s(-h)) / 2h of the transported-hole
    constant against the assembled derivative, warm-starting each solve
    from the base extremal."""
    if trace is None:
        trace = solve_trace_constant(mesh, cfg, hole)
    derivative = evaluate_shape_derivative(mesh, cfg, hole, V, trace)
    analytic = derivative.ds_dt
    rows = []
    for h in steps:
        values = {}
        for sign in (+1.0, -1.0):
            moved = transport_hole(mesh, hole, V, sign * h)
            res = solve_trace_constant(mesh, cfg, moved, init=trace.extremal)
            if not res.converged:
                raise RuntimeError(
                    f"inner solve failed to converge at step h={sign * h}")
            values[sign] = res.s_value
        fd = (values[1.0] - values[-1.0]) / (2.0 * h)
        rel = abs(fd - analytic) / max(abs(analytic), 1e-300)
        rows.append((float(h), fd, rel))
        derivative.fd_estimates.append((float(h), fd))
    return FDCheck(analytic, rows, derivative)
