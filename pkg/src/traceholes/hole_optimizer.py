"""Search for optimal boundary holes of prescribed measure.

Two strategies over whole-facet holes:

* alternating: iterate (i) solve the constrained problem on the current
  hole, (ii) re-select the facets with the smallest boundary energy
  int_facet |w|^q of a ranking field w, projected to the target measure.
  The ranking field comes from a relaxed solve in which the hole facets
  are dropped from the denominator but the field is NOT pinned there:
  the constrained extremal itself vanishes identically on the hole, so
  ranking by it would re-select the current hole at every step.  Proposals
  are accepted only if the re-solved constant decreases; a visited-set
  memo breaks cycles.  A final polish slides a contiguous arc of the
  target measure around the whole boundary (warm-started solves), which
  certifies the result against any single-arc sweep at facet granularity.

* shape_gradient: for holes that are unions of arcs, descend on the arc
  endpoints using the assembled shape derivative with localized endpoint
  bump fields, moving endpoints in whole facets with the total measure
  held fixed.

Measure bookkeeping is honest about facet quantization: every hole is
within one facet length of the target and alpha_effective is reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import fem
from ._descent import minimize_quotient
from .fem import ProblemConfig
from .geometry import (
    BoundaryHole, Mesh, arc_interval, bump_speed, hole_arcs, hole_from_facets,
    tangential_field,
)
from .shape_derivative import evaluate_shape_derivative
from .trace_solver import TraceResult, _h1_preconditioner, solve_trace_constant


@dataclass
class OptimizationRun:
    alpha: float
    best_hole: BoundaryHole
    best_value: float
    history: List[Tuple[int, float, float]]   # (iteration, measure, value)
    strategy: str
    alpha_effective: float
    best_result: TraceResult
    n_solves: int
    converged: bool


def _target_measure(mesh: Mesh, alpha: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return alpha * mesh.perimeter


def _greedy_select(mesh: Mesh, scores: np.ndarray, target: float) -> frozenset:
    """Smallest-score facets first until the measure snaps to the target;
    ties break on the lower facet index for determinism."""
    order = np.lexsort((np.arange(mesh.n_facets), scores))
    chosen = []
    measure = 0.0
    for f in order:
        lf = float(mesh.facet_lengths[f])
        if abs(measure + lf - target) <= abs(measure - target):
            chosen.append(int(f))
            measure += lf
        if measure >= target:
            break
    return frozenset(chosen)


def _facet_boundary_energy(mesh: Mesh, cfg: ProblemConfig,
                           u: np.ndarray) -> np.ndarray:
    """Per-facet int |u|^q by the same two-point Gauss rule as the norm."""
    ops = fem.forms(mesh)
    a1, a2 = fem.GAUSS2
    ui, uj = u[ops.bi], u[ops.bj]
    u1 = a2 * ui + a1 * uj
    u2 = a1 * ui + a2 * uj
    return 0.5 * mesh.facet_lengths * (np.abs(u1) ** cfg.q + np.abs(u2) ** cfg.q)


def _relaxed_ranking_field(mesh: Mesh, cfg: ProblemConfig,
                           hole: BoundaryHole,
                           init: Optional[np.ndarray]) -> np.ndarray:
    """Extremal of the denominator-masked problem: the boundary norm is
    restricted to the complement of the hole but the field is free there,
    so its size on the hole facets prices the constraint."""
    weights = np.ones(mesh.n_facets)
    if hole.facet_indices:
        weights[sorted(hole.facet_indices)] = 0.0
    free = np.ones(mesh.n_vertices, dtype=bool)
    u0 = np.ones(mesh.n_vertices) if init is None else \
        np.maximum(np.abs(init), 1e-6 * float(np.abs(init).max() or 1.0))
    res = minimize_quotient(
        lambda u: fem.energy(mesh, cfg, u),
        lambda u: fem.energy_gradient(mesh, cfg, u),
        lambda u: fem.boundary_norm_q(mesh, cfg, u, facet_weights=weights),
        lambda u: fem.boundary_norm_gradient(mesh, cfg, u, facet_weights=weights),
        cfg.p, cfg.q, free, u0,
        tol=max(cfg.dof_tolerance, 1e-7),
        max_iter=cfg.max_inner_iterations,
        precond=_h1_preconditioner(mesh, free))
    return res.u


def _leaves_free_vertex(mesh: Mesh, facets: frozenset) -> bool:
    hole = hole_from_facets(mesh, facets)
    covered = hole.vertex_indices(mesh)
    return covered.size < mesh.boundary_vertex_indices().size


def _random_hole(mesh: Mesh, rng: np.random.Generator,
                 target: float) -> frozenset:
    for _ in range(50):
        order = rng.permutation(mesh.n_facets)
        chosen = []
        measure = 0.0
        for f in order:
            lf = float(mesh.facet_lengths[f])
            if abs(measure + lf - target) <= abs(measure - target):
                chosen.append(int(f))
                measure += lf
            if measure >= target:
                break
        facets = frozenset(chosen)
        if _leaves_free_vertex(mesh, facets):
            return facets
    # dense alphas on coarse meshes: fall back to a contiguous arc, which
    # always leaves the trailing vertices free
    return frozenset(make_arc_facets(mesh, int(rng.integers(mesh.n_facets)),
                                     target))


def is_contiguous_arc(mesh: Mesh, hole: BoundaryHole) -> bool:
    return len(hole_arcs(mesh, hole)) == 1


def _slide_candidates(mesh: Mesh, target: float):
    """Facet sets of every arc of the target measure starting at a facet
    boundary (the family any snapped single-arc sweep draws from)."""
    seen = set()
    for k in range(mesh.n_facets):
        facets = frozenset(make_arc_facets(mesh, k, target))
        if facets and facets not in seen:
            seen.add(facets)
            yield facets


def make_arc_facets(mesh: Mesh, first_facet: int, target: float):
    """Contiguous run starting at a facet, sized by the snap rule."""
    nf = mesh.n_facets
    chosen = []
    measure = 0.0
    k = first_facet
    while len(chosen) < nf:
        lf = float(mesh.facet_lengths[k % nf])
        if abs(measure + lf - target) < abs(measure - target):
            chosen.append(k % nf)
            measure += lf
            k += 1
        else:
            break
    return chosen


def optimize_hole_alternating(mesh: Mesh, cfg: ProblemConfig, alpha: float,
                              init_hole: Optional[BoundaryHole] = None,
                              n_starts: int = 5, seed: int = 0,
                              max_outer: int = 60,
                              polish: bool = True) -> OptimizationRun:
    """Alternating solve/re-select descent from multiple random starts."""
    target = _target_measure(mesh, alpha)
    rng = np.random.default_rng(seed)
    if init_hole is not None:
        starts = [init_hole.facet_indices]
    else:
        starts = [_random_hole(mesh, rng, target) for _ in range(n_starts)]

    history: List[Tuple[int, float, float]] = []
    n_solves = 0
    best_hole = None
    best_res = None
    step = 0
    converged_any = False

    for start in starts:
        hole = hole_from_facets(mesh, start)
        res = solve_trace_constant(mesh, cfg, hole)
        n_solves += 1
        visited = {hole.facet_indices}
        if best_res is None or res.s_value < best_res.s_value:
            best_hole, best_res = hole, res
            step += 1
            history.append((step, hole.measure, res.s_value))
        run_hole, run_res = hole, res
        ranking_init = None
        for _ in range(max_outer):
            w = _relaxed_ranking_field(mesh, cfg, run_hole, ranking_init)
            ranking_init = w
            n_solves += 1
            scores = _facet_boundary_energy(mesh, cfg, w)
            proposal = _greedy_select(mesh, scores, target)
            if proposal == run_hole.facet_indices:
                converged_any = True
                break
            if proposal in visited or not _leaves_free_vertex(mesh, proposal):
                break
            visited.add(proposal)
            cand_hole = hole_from_facets(mesh, proposal)
            cand = solve_trace_constant(mesh, cfg, cand_hole, init=w)
            n_solves += 1
            if cand.s_value >= run_res.s_value:
                converged_any = True
                break
            run_hole, run_res = cand_hole, cand
            if run_res.s_value < best_res.s_value:
                best_hole, best_res = run_hole, run_res
                step += 1
                history.append((step, run_hole.measure, run_res.s_value))

    if polish:
        warm = best_res.extremal
        for facets in _slide_candidates(mesh, target):
            if facets == best_hole.facet_indices:
                continue
            cand_hole = hole_from_facets(mesh, facets)
            cand = solve_trace_constant(mesh, cfg, cand_hole, init=warm)
            n_solves += 1
            if cand.s_value < best_res.s_value:
                best_hole, best_res = cand_hole, cand
                warm = cand.extremal
                step += 1
                history.append((step, cand_hole.measure, cand.s_value))

    return OptimizationRun(
        alpha, best_hole, best_res.s_value, history, "alternating",
        best_hole.measure / mesh.perimeter, best_res, n_solves,
        converged_any and best_res.converged)


# ---------------------------------------------------------------------------
# shape-gradient descent on arc endpoints


def _endpoint_gradients(mesh, cfg, hole, trace, endpoints):
    """dS/d(endpoint arclength) via localized unit-speed bump fields."""
    grads = []
    width = 4.0 * float(np.max(mesh.facet_lengths))
    for s in endpoints:
        speed, dspeed = bump_speed(mesh, s % mesh.perimeter, width, 1.0)
        V = tangential_field(mesh, speed, dspeed)
        grads.append(evaluate_shape_derivative(mesh, cfg, hole, V, trace).ds_dt)
    return np.array(grads)


def _arcs_to_facets(mesh, arcs_idx):
    """(first_facet, count) runs -> facet set, merging overlaps."""
    facets = set()
    for first, count in arcs_idx:
        for k in range(count):
            facets.add((first + k) % mesh.n_facets)
    return frozenset(facets)


def optimize_hole_shape_gradient(mesh: Mesh, cfg: ProblemConfig, alpha: float,
                                 init_hole: BoundaryHole,
                                 max_steps: int = 40,
                                 balance_tolerance: float = 0.05) -> OptimizationRun:
    """Slide arc endpoints along the measure-preserving component of the
    endpoint shape gradient, one whole facet at a time."""
    target = _target_measure(mesh, alpha)
    if abs(init_hole.measure - target) > float(np.max(mesh.facet_lengths)):
        raise ValueError("initial hole measure must be within one facet of target")
    arcs = hole_arcs(mesh, init_hole)
    if not arcs:
        raise ValueError("shape-gradient descent needs a nonempty hole")

    hole = init_hole
    res = solve_trace_constant(mesh, cfg, hole)
    n_solves = 1
    history = [(0, hole.measure, res.s_value)]
    step_facets = 4
    converged = False
    it = 0
    while it < max_steps and step_facets >= 1:
        it += 1
        arcs = hole_arcs(mesh, hole)
        # endpoint arclengths and their measure signature: moving a start
        # forward removes measure, moving an end forward adds it
        endpoints, sigma = [], []
        for first, count in arcs:
            s_a, s_b = arc_interval(mesh, first, count)
            endpoints.extend([s_a, s_b])
            sigma.extend([-1.0, +1.0])
        endpoints = np.array(endpoints)
        sigma = np.array(sigma)
        g = _endpoint_gradients(mesh, cfg, hole, res, endpoints)
        proj = g - sigma * float(sigma @ g) / float(sigma @ sigma)
        gmax = float(np.max(np.abs(proj)))
        if gmax == 0.0 or float(np.linalg.norm(proj)) <= \
                balance_tolerance * max(float(np.linalg.norm(g)), 1e-300):
            converged = True
            break
        fbar = float(np.mean(mesh.facet_lengths))
        moves = -proj / gmax * step_facets          # in arclength facets
        shift = np.rint(moves).astype(int)
        drift = int(np.round(float(sigma @ shift)))
        if drift != 0:
            # repair the measure by backing off the endpoint with the
            # largest rounding slack
            slack = np.abs(moves - shift)
            k = int(np.argmax(slack))
            shift[k] -= drift * int(sigma[k])
        if not np.any(shift):
            step_facets //= 2
            continue
        new_arcs = []
        ok = True
        for a_i, (first, count) in enumerate(arcs):
            da, db = shift[2 * a_i], shift[2 * a_i + 1]
            nf_first = (first + da) % mesh.n_facets
            n_count = count - da + db
            if n_count < 1 or n_count >= mesh.n_facets:
                ok = False
                break
            new_arcs.append((nf_first, n_count))
        if not ok:
            step_facets //= 2
            continue
        facets = _arcs_to_facets(mesh, new_arcs)   # merges colliding arcs
        cand_hole = hole_from_facets(mesh, facets)
        if abs(cand_hole.measure - target) > float(np.max(mesh.facet_lengths)) + 1e-12:
            step_facets //= 2
            continue
        cand = solve_trace_constant(mesh, cfg, cand_hole, init=res.extremal)
        n_solves += 1
        if cand.s_value < res.s_value:
            hole, res = cand_hole, cand
            history.append((it, hole.measure, res.s_value))
        else:
            step_facets //= 2
    return OptimizationRun(alpha, hole, res.s_value, history, "shape_gradient",
                           hole.measure / mesh.perimeter, res, n_solves,
                           converged or step_facets < 1)


def zero_set_measure(mesh: Mesh, result: TraceResult,
                     threshold: Optional[float] = None) -> float:
    """Boundary measure of the facets on which the extremal vanishes
    (both endpoint values at or below the threshold)."""
    u = result.extremal
    if threshold is None:
        threshold = 1e-8 * float(np.max(np.abs(u)))
    small = np.abs(u) <= threshold
    facets = np.where(np.all(small[mesh.boundary], axis=1))[0]
    return hole_from_facets(mesh, facets).measure
