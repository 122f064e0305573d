import numpy as np
import pytest

from traceholes.fem import NotAdmissibleError, ProblemConfig
from traceholes.geometry import (
    Disk, Interval, Rectangle, generate_mesh, hole_from_facets,
    make_hole_from_arc,
)
from traceholes.trace_solver import (
    el_residual, positivity_check, solve_trace_constant, solve_with_restarts,
)

from oracles import dense_trace_eigenpair, interval_trace_constant_shooting

# frozen output of the shooting oracle (= coth(1)); the guard assertion in
# test_interval_against_shooting_oracle recomputes it
INTERVAL_S_LEFT_PIN = 1.3130352854993312


@pytest.fixture(scope="module")
def disk_coarse():
    return generate_mesh(Disk(1), 0.2)


def test_empty_hole_constant_bound():
    mesh = generate_mesh(Disk(1), 0.1)
    cfg = ProblemConfig(2, 2)
    res = solve_trace_constant(mesh, cfg, hole_from_facets(mesh, []))
    assert res.converged
    # u = 1 is admissible, so the minimum sits below area/perimeter ~ 1/2
    assert res.s_value <= 0.5


def test_interval_against_shooting_oracle():
    oracle = interval_trace_constant_shooting()
    assert oracle == pytest.approx(INTERVAL_S_LEFT_PIN, rel=1e-10)
    mesh = generate_mesh(Interval(0, 1), 1e-3)
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-10)
    res = solve_trace_constant(mesh, cfg, hole_from_facets(mesh, [0]))
    assert res.converged
    assert abs(res.s_value - INTERVAL_S_LEFT_PIN) / INTERVAL_S_LEFT_PIN < 1e-3


def test_inclusion_monotonicity(disk_coarse):
    mesh = disk_coarse
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-9)
    rng = np.random.default_rng(0)
    nf = mesh.n_facets
    bverts = mesh.boundary_vertex_indices()
    for _ in range(20):
        while True:
            big = rng.choice(nf, size=rng.integers(4, nf - 2), replace=False)
            hole_big = hole_from_facets(mesh, big)
            if np.setdiff1d(bverts, hole_big.vertex_indices(mesh)).size:
                break
        small = rng.choice(big, size=rng.integers(1, len(big)), replace=False)
        s_small = solve_trace_constant(mesh, cfg, hole_from_facets(mesh, small))
        s_big = solve_trace_constant(mesh, cfg, hole_big)
        assert s_small.s_value <= s_big.s_value * (1 + 1e-7)


@pytest.mark.parametrize("p,q", [(2, 2), (3, 2), (1.5, 2), (2, 2.5)])
def test_lambda_matches_s_value(disk_coarse, p, q):
    cfg = ProblemConfig(p, q, dof_tolerance=1e-9)
    hole = make_hole_from_arc(disk_coarse, 0.0, disk_coarse.perimeter / 4)
    res = solve_trace_constant(disk_coarse, cfg, hole)
    assert res.converged
    assert abs(res.lam - res.s_value) <= 1e-6 * res.s_value


def test_normalization_invariant(disk_coarse):
    from traceholes.fem import boundary_norm_q
    cfg = ProblemConfig(2, 2)
    hole = make_hole_from_arc(disk_coarse, 1.0, 2.0)
    res = solve_trace_constant(disk_coarse, cfg, hole)
    assert boundary_norm_q(disk_coarse, cfg, res.extremal) \
        == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("domain,res", [(Rectangle(1, 1), 0.34), (Disk(1), 0.5)])
def test_dense_eigenproblem_oracle_equivalence(domain, res):
    mesh = generate_mesh(domain, res)
    assert mesh.n_vertices <= 30
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-12)
    hole = make_hole_from_arc(mesh, 0.0, mesh.perimeter / 4)
    lam, _ = dense_trace_eigenpair(mesh, hole)
    out = solve_trace_constant(mesh, cfg, hole)
    assert abs(out.s_value - lam) <= 1e-8 * lam


def test_el_residual_of_converged_and_random(disk_coarse):
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-9)
    hole = make_hole_from_arc(disk_coarse, 0.0, 1.5)
    res = solve_trace_constant(disk_coarse, cfg, hole)
    assert el_residual(disk_coarse, cfg, res, hole) <= cfg.dof_tolerance
    # a generic normalized field is far from stationary
    from dataclasses import replace
    from traceholes.fem import boundary_norm_q
    rng = np.random.default_rng(1)
    u = rng.uniform(0.5, 1.5, disk_coarse.n_vertices)
    u[hole.vertex_indices(disk_coarse)] = 0.0
    u = u / boundary_norm_q(disk_coarse, cfg, u) ** 0.5
    fake = replace(res, extremal=u)
    assert el_residual(disk_coarse, cfg, fake, hole) > 10 * cfg.dof_tolerance


def test_el_residual_of_dense_eigenpair():
    # the oracle eigenpair satisfies the discrete weak form to roundoff
    mesh = generate_mesh(Disk(1), 0.5)
    cfg = ProblemConfig(2, 2)
    hole = make_hole_from_arc(mesh, 0.0, mesh.perimeter / 6)
    lam, u = dense_trace_eigenpair(mesh, hole)
    res = solve_trace_constant(mesh, cfg, hole)
    from dataclasses import replace
    paired = replace(res, extremal=u, lam=lam)
    assert el_residual(mesh, cfg, paired, hole) <= 1e-10


def test_el_residual_requires_normalization(disk_coarse):
    cfg = ProblemConfig(2, 2)
    hole = make_hole_from_arc(disk_coarse, 0.0, 1.0)
    res = solve_trace_constant(disk_coarse, cfg, hole)
    from dataclasses import replace
    bad = replace(res, extremal=2.0 * res.extremal)
    with pytest.raises(ValueError):
        el_residual(disk_coarse, cfg, bad, hole)


def test_positivity_and_zero_constraint(disk_coarse):
    cfg = ProblemConfig(2, 2)
    hole = make_hole_from_arc(disk_coarse, 0.0, disk_coarse.perimeter / 4)
    res = solve_trace_constant(disk_coarse, cfg, hole)
    report = positivity_check(res, hole)
    assert report.min_off_hole > 0
    assert report.max_on_hole == 0.0
    assert not report.violation
    empty = hole_from_facets(disk_coarse, [])
    res0 = solve_trace_constant(disk_coarse, cfg, empty)
    rep0 = positivity_check(res0, empty)
    assert rep0.min_off_hole > 0 and rep0.min_free > 0


def test_full_boundary_hole_rejected(disk_coarse):
    cfg = ProblemConfig(2, 2)
    full = hole_from_facets(disk_coarse, range(disk_coarse.n_facets))
    with pytest.raises(NotAdmissibleError):
        solve_trace_constant(disk_coarse, cfg, full)


def test_nonconvergence_is_flagged(disk_coarse):
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-14, max_inner_iterations=2)
    hole = make_hole_from_arc(disk_coarse, 0.0, 1.0)
    res = solve_trace_constant(disk_coarse, cfg, hole)
    assert not res.converged
    assert np.isfinite(res.s_value)


def test_restart_spread_small_for_p2(disk_coarse):
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-10)
    hole = make_hole_from_arc(disk_coarse, 0.5, 1.5)
    best, spread, values = solve_with_restarts(disk_coarse, cfg, hole, seed=4)
    assert len(values) == 4
    assert spread < 1e-7


def test_warm_start_matches_cold(disk_coarse):
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-10)
    hole = make_hole_from_arc(disk_coarse, 0.0, 2.0)
    cold = solve_trace_constant(disk_coarse, cfg, hole)
    warm = solve_trace_constant(disk_coarse, cfg, hole, init=cold.extremal)
    assert warm.iterations <= cold.iterations
    assert abs(warm.s_value - cold.s_value) <= 1e-9 * cold.s_value


def test_mesh_consistency_under_refinement():
    # same continuum hole (quarter arc), successive refinements: the
    # relative change of s_value shrinks toward zero (ratio -> 1); no
    # sign is asserted since conforming P1 over-constrains near the
    # hole boundary
    cfg = ProblemConfig(2, 2, dof_tolerance=1e-9)
    values = []
    for res in (0.2, 0.1, 0.05):
        mesh = generate_mesh(Disk(1), res)
        hole = make_hole_from_arc(mesh, 0.0, 0.25 * mesh.perimeter)
        values.append(solve_trace_constant(mesh, cfg, hole).s_value)
    changes = [abs(b / a - 1.0) for a, b in zip(values, values[1:])]
    assert changes[-1] < changes[0]
    assert changes[-1] < 0.02
