"""Domains, simplicial meshes, boundary holes, and tangential boundary fields.

Every mesh carries a fixed arclength parameterization of its boundary:
facets are stored in counterclockwise walk order with cumulative arclength
offsets, so holes, arc transport and boundary quadrature all share one
coordinate.  Conventions:

* 2D domains: arclength origin at a declared boundary point (angle 0 on the
  disk, the lower-left corner on rectangles), counterclockwise orientation.
* 1D interval: the boundary is the two endpoints with counting measure
  (each endpoint is a point facet of measure 1).  For arc bookkeeping the
  left facet occupies pseudo-arclength [0, 1) and the right one [1, 2).

Meshes and holes are immutable after construction and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np


class MeshResolutionError(ValueError):
    """Requested resolution cannot produce a valid mesh."""


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval needs a < b, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class Rectangle:
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("rectangle sides must be positive")


@dataclass(frozen=True)
class Disk:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("disk radius must be positive")


@dataclass(frozen=True)
class ThinRectangle:
    """Rectangle (a, b) x (0, mu); geometrically a Rectangle, but the
    thickness mu is recorded for dimension-reduction sweeps."""

    a: float
    b: float
    mu: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("thin rectangle needs a < b")
        if self.mu <= 0:
            raise ValueError("thickness must be positive")


Domain = Union[Interval, Rectangle, Disk, ThinRectangle]


# ---------------------------------------------------------------------------
# mesh


@dataclass(eq=False)
class Mesh:
    """Conforming simplicial mesh with an arclength-parameterized boundary.

    boundary[i] holds the vertex indices of the i-th boundary facet in
    counterclockwise walk order; facet_lengths, facet_normals and
    facet_arclength (cumulative start offset) line up with it.
    """

    dim: int
    vertices: np.ndarray          # (nv, dim)
    cells: np.ndarray             # (nc, dim + 1)
    boundary: np.ndarray          # (nf, dim)  vertex indices per facet
    facet_lengths: np.ndarray     # (nf,)
    facet_normals: np.ndarray     # (nf, dim) outward unit normals
    facet_arclength: np.ndarray   # (nf,) start offset of each facet
    resolution: float
    domain: Domain
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.vertices, self.cells, self.boundary,
                    self.facet_lengths, self.facet_normals, self.facet_arclength):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_facets(self) -> int:
        return self.boundary.shape[0]

    @property
    def perimeter(self) -> float:
        """Total boundary measure H^{N-1}(boundary) in mesh bookkeeping."""
        return math.fsum(self.facet_lengths.tolist())

    def boundary_vertex_indices(self) -> np.ndarray:
        return np.unique(self.boundary)

    def facet_set(self) -> frozenset:
        return frozenset(range(self.n_facets))


def generate_mesh(domain: Domain, resolution: float) -> Mesh:
    """Mesh a domain with target edge length ``resolution``.

    Disk meshes use a concentric-ring triangulation (ring i carries 6i
    vertices) with boundary vertices exactly on the circle; boundary
    measure is that of the inscribed polygon.  Thin rectangles always get
    at least two cell layers across the thickness.
    """
    if resolution <= 0:
        raise MeshResolutionError("resolution must be positive")
    if isinstance(domain, Interval):
        return _mesh_interval(domain, resolution)
    if isinstance(domain, Rectangle):
        return _mesh_rectangle(domain.width, domain.height, resolution,
                               domain=domain)
    if isinstance(domain, ThinRectangle):
        ny = max(2, round(domain.mu / resolution))
        return _mesh_rectangle(domain.b - domain.a, domain.mu, resolution,
                               domain=domain, x0=domain.a, ny=ny)
    if isinstance(domain, Disk):
        return _mesh_disk(domain, resolution)
    raise TypeError(f"unknown domain {domain!r}")


def _mesh_interval(domain: Interval, resolution: float) -> Mesh:
    length = domain.b - domain.a
    n = round(length / resolution)
    if n < 2:
        raise MeshResolutionError(
            f"resolution {resolution} too coarse for {domain}: "
            "need at least 2 cells")
    x = np.linspace(domain.a, domain.b, n + 1).reshape(-1, 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    boundary = np.array([[0], [n]])
    # counting-measure convention: each endpoint is a point mass of size 1
    lengths = np.ones(2)
    normals = np.array([[-1.0], [1.0]])
    arclen = np.array([0.0, 1.0])
    return Mesh(1, x, cells, boundary, lengths, normals, arclen,
                resolution, domain)


def _mesh_rectangle(width, height, resolution, domain, x0=0.0, ny=None) -> Mesh:
    nx = round(width / resolution)
    ny = round(height / resolution) if ny is None else ny
    if nx < 1 or ny < 1 or 2 * (nx + ny) < 4:
        raise MeshResolutionError(
            f"resolution {resolution} too coarse for {domain}: "
            "fewer than 4 boundary facets")
    xs = np.linspace(x0, x0 + width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = np.array(cells)

    facets, normals = [], []
    for i in range(nx):                       # bottom, x increasing
        facets.append((vid(i, 0), vid(i + 1, 0)))
        normals.append((0.0, -1.0))
    for j in range(ny):                       # right, y increasing
        facets.append((vid(nx, j), vid(nx, j + 1)))
        normals.append((1.0, 0.0))
    for i in range(nx, 0, -1):                # top, x decreasing
        facets.append((vid(i, ny), vid(i - 1, ny)))
        normals.append((0.0, 1.0))
    for j in range(ny, 0, -1):                # left, y decreasing
        facets.append((vid(0, j), vid(0, j - 1)))
        normals.append((-1.0, 0.0))
    boundary = np.array(facets)
    lengths = np.linalg.norm(
        vertices[boundary[:, 1]] - vertices[boundary[:, 0]], axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    meta = {"grid": (nx, ny)}
    if isinstance(domain, ThinRectangle):
        meta["mu"] = domain.mu
    return Mesh(2, vertices, cells, boundary, lengths, np.array(normals),
                arclen, resolution, domain, meta)


def _mesh_disk(domain: Disk, resolution: float) -> Mesh:
    r = domain.radius
    m = round(r / resolution)
    if m < 1:
        raise MeshResolutionError(
            f"resolution {resolution} too coarse for {domain}: "
            "fewer than 4 boundary facets")

    # ring i (1..m) holds 6i vertices at radius r*i/m; sectors of 60 degrees
    # share their boundary rays across rings, so the zigzag triangulation
    # below is conforming.
    ring_start = [0, 1]
    for i in range(1, m + 1):
        ring_start.append(ring_start[-1] + 6 * i)
    verts = [(0.0, 0.0)]
    for i in range(1, m + 1):
        rho = r * i / m
        ang = 2.0 * np.pi * np.arange(6 * i) / (6 * i)
        verts.extend(zip(rho * np.cos(ang), rho * np.sin(ang)))
    vertices = np.array(verts)

    def ring_vertex(i, j):
        if i == 0:
            return 0
        return ring_start[i] + (j % (6 * i))

    cells = []
    for i in range(1, m + 1):
        for s in range(6):
            outer = [ring_vertex(i, s * i + k) for k in range(i + 1)]
            inner = [ring_vertex(i - 1, s * (i - 1) + k) for k in range(max(i, 1))]
            if i == 1:
                inner = [0]
            for k in range(i):
                cells.append((outer[k], outer[k + 1], inner[k]))
            for k in range(i - 1):
                cells.append((inner[k], outer[k + 1], inner[k + 1]))
    cells = np.array(cells)

    nb = 6 * m
    b0 = ring_start[m]
    boundary = np.column_stack([b0 + np.arange(nb),
                                b0 + (np.arange(nb) + 1) % nb])
    lengths = np.linalg.norm(
        vertices[boundary[:, 1]] - vertices[boundary[:, 0]], axis=1)
    mids = 0.5 * (vertices[boundary[:, 0]] + vertices[boundary[:, 1]])
    normals = mids / np.linalg.norm(mids, axis=1, keepdims=True)
    arclen = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    return Mesh(2, vertices, cells, boundary, lengths, normals, arclen,
                resolution, domain, {"rings": m})


def cell_volumes(mesh: Mesh) -> np.ndarray:
    """Signed cell measures (positive for a correctly oriented mesh)."""
    v = mesh.vertices
    c = mesh.cells
    if mesh.dim == 1:
        return (v[c[:, 1], 0] - v[c[:, 0], 0])
    e1 = v[c[:, 1]] - v[c[:, 0]]
    e2 = v[c[:, 2]] - v[c[:, 0]]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


# ---------------------------------------------------------------------------
# boundary holes


@dataclass(frozen=True)
class BoundaryHole:
    """Union of whole boundary facets on which admissible fields vanish."""

    facet_indices: frozenset
    measure: float

    def vertex_indices(self, mesh: Mesh) -> np.ndarray:
        if not self.facet_indices:
            return np.array([], dtype=int)
        idx = np.array(sorted(self.facet_indices), dtype=int)
        return np.unique(mesh.boundary[idx])


def hole_from_facets(mesh: Mesh, facet_indices) -> BoundaryHole:
    idx = frozenset(int(i) for i in facet_indices)
    if idx and (min(idx) < 0 or max(idx) >= mesh.n_facets):
        raise ValueError("facet index out of range")
    return BoundaryHole(idx, _facet_measure(mesh, idx))


def _facet_measure(mesh: Mesh, facet_indices) -> float:
    if not facet_indices:
        return 0.0
    return math.fsum(float(mesh.facet_lengths[i]) for i in sorted(facet_indices))


def boundary_measure(mesh: Mesh, hole: BoundaryHole) -> float:
    """Exact sum of the member facet measures."""
    bad = [i for i in hole.facet_indices if i < 0 or i >= mesh.n_facets]
    if bad:
        raise ValueError(f"hole facets {bad} not valid for this mesh")
    return _facet_measure(mesh, hole.facet_indices)


def _arc_facet_set(mesh: Mesh, start: float, length: float) -> frozenset:
    """Whole facets inside the cyclic arc plus a snap at the moving end."""
    P = mesh.perimeter
    eps = 1e-12 * P
    if length >= P - eps:
        return mesh.facet_set()
    s0 = float(start) % P
    # walk offset of each facet relative to the arc start
    t = (mesh.facet_arclength - s0) % P
    order = np.argsort(t, kind="stable")
    t_sorted = t[order]
    L_sorted = mesh.facet_lengths[order]
    inside = t_sorted + L_sorted <= length + eps
    chosen = list(order[inside])
    covered = float(np.sum(L_sorted[inside]))
    outside = order[~inside]
    if outside.size:
        nxt = int(outside[np.argmin(t[outside])])
        lf = float(mesh.facet_lengths[nxt])
        if abs(covered + lf - length) < abs(covered - length):
            chosen.append(nxt)
    return frozenset(int(i) for i in chosen)


def make_hole_from_arc(mesh: Mesh, start: float, length: float) -> BoundaryHole:
    """Hole of whole facets approximating the boundary arc [start, start+length).

    The facet at the arc's moving end is added exactly when that makes the
    hole measure closer to the requested length, so the mismatch never
    exceeds one facet length.
    """
    if length < 0:
        raise ValueError("arc length must be nonnegative")
    if length > mesh.perimeter * (1 + 1e-12):
        raise ValueError("arc length exceeds the boundary measure")
    return hole_from_facets(mesh, _arc_facet_set(mesh, start, length))


def hole_arcs(mesh: Mesh, hole: BoundaryHole):
    """Maximal cyclic runs of hole facets as (first_facet, count) pairs."""
    if not hole.facet_indices:
        return []
    nf = mesh.n_facets
    idx = sorted(hole.facet_indices)
    if len(idx) == nf:
        return [(0, nf)]
    member = np.zeros(nf, dtype=bool)
    member[idx] = True
    runs = []
    i = 0
    while i < nf:
        if member[i] and not member[(i - 1) % nf]:
            j = i
            count = 0
            while member[j % nf]:
                count += 1
                j += 1
            runs.append((i, count))
            i += count
        else:
            i += 1
    return runs


def arc_interval(mesh: Mesh, first_facet: int, count: int):
    """Arclength interval [s_a, s_b] spanned by a cyclic facet run."""
    s_a = float(mesh.facet_arclength[first_facet])
    s_b = s_a + math.fsum(
        float(mesh.facet_lengths[(first_facet + k) % mesh.n_facets])
        for k in range(count))
    return s_a, s_b


# ---------------------------------------------------------------------------
# tangential boundary fields


@dataclass
class TangentialField:
    """Tangential velocity of the boundary, with an interior extension rule.

    The speed is a signed arclength velocity sampled at boundary vertices
    (walk order); closed-form speed/derivative callables are kept when
    available and preferred over nodal finite differences.  Extensions:

    * "tube": V(x) = speed(s(x)) * chi(dist(x, boundary)/delta) * tangent,
      with chi a C1 smoothed hat, so spt(V) stays in the delta-tube.
    * "rotation": rigid rotation of a disk (constant speed, global support,
      divergence free, antisymmetric Jacobian).
    """

    nodal_speed: np.ndarray
    extension: str
    delta: float
    speed_fn: Optional[Callable] = None
    dspeed_fn: Optional[Callable] = None


def _cutoff(t):
    t = np.clip(t, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def _cutoff_derivative(t):
    inside = (t >= 0.0) & (t <= 1.0)
    return np.where(inside, -0.5 * np.pi * np.sin(np.pi * np.clip(t, 0.0, 1.0)), 0.0)


def tangential_field(mesh: Mesh, speed, dspeed=None, delta: float = None,
                     extension: str = "tube") -> TangentialField:
    """Build a tangential field from a speed function of arclength (or a
    nodal array in boundary-walk order)."""
    if mesh.dim != 2:
        raise ValueError("tangential fields need a 2D mesh")
    if delta is None:
        delta = 3.0 * mesh.resolution
    s_nodes = mesh.facet_arclength
    if callable(speed):
        nodal = np.asarray(speed(s_nodes), dtype=float)
        fn, dfn = speed, dspeed
    else:
        nodal = np.asarray(speed, dtype=float)
        if nodal.shape != s_nodes.shape:
            raise ValueError("nodal speed must have one entry per boundary vertex")
        fn, dfn = None, None
    return TangentialField(nodal, extension, delta, fn, dfn)


def rotation_field(mesh: Mesh, speed: float) -> TangentialField:
    """Rigid rotation of a disk with constant boundary speed."""
    if not isinstance(mesh.domain, Disk):
        raise ValueError("rotation fields are defined for disks only")
    nodal = np.full(mesh.n_facets, float(speed))
    return TangentialField(nodal, "rotation", float("inf"),
                           lambda s: np.full_like(np.asarray(s, dtype=float), float(speed)),
                           lambda s: np.zeros_like(np.asarray(s, dtype=float)))


def plateau_speed(mesh: Mesh, lo: float, hi: float, ramp: float,
                  amplitude: float = 1.0):
    """C1 speed profile: amplitude on [lo, hi], cosine ramps of width
    ``ramp`` on both sides, zero elsewhere; periodic in arclength.

    Returns (speed, dspeed) callables usable with tangential_field.
    """
    P = mesh.perimeter

    def _rel(s):
        return (np.asarray(s, dtype=float) - lo) % P

    span = (hi - lo) % P

    def speed(s):
        u = _rel(s)
        out = np.zeros_like(u)
        out = np.where(u <= span, amplitude, out)
        rising = (u > span) & (u <= span + ramp)      # falls off after hi
        out = np.where(rising, amplitude * _cutoff((u - span) / ramp), out)
        falling = u >= P - ramp                        # rises into lo
        out = np.where(falling, amplitude * _cutoff((P - u) / ramp), out)
        return out

    def dspeed(s):
        u = _rel(s)
        out = np.zeros_like(u)
        rising = (u > span) & (u <= span + ramp)
        out = np.where(rising,
                       amplitude * _cutoff_derivative((u - span) / ramp) / ramp,
                       out)
        falling = u >= P - ramp
        out = np.where(falling,
                       -amplitude * _cutoff_derivative((P - u) / ramp) / ramp,
                       out)
        return out

    return speed, dspeed


def bump_speed(mesh: Mesh, center: float, width: float, amplitude: float = 1.0):
    """C1 cosine bump of given half-width centered at an arclength."""
    return plateau_speed(mesh, center, center, width, amplitude)


def _nodal_speed_interp(mesh: Mesh, V: TangentialField, s):
    s = np.asarray(s, dtype=float) % mesh.perimeter
    nodes = np.concatenate([mesh.facet_arclength, [mesh.perimeter]])
    vals = np.concatenate([V.nodal_speed, [V.nodal_speed[0]]])
    return np.interp(s, nodes, vals)


def _nodal_dspeed(mesh: Mesh, V: TangentialField):
    s = mesh.facet_arclength
    P = mesh.perimeter
    v = V.nodal_speed
    ds = (np.roll(s, -1) - np.roll(s, 1)) % P
    return (np.roll(v, -1) - np.roll(v, 1)) / ds


def speed_at(mesh: Mesh, V: TangentialField, s):
    if V.speed_fn is not None:
        return V.speed_fn(s)
    return _nodal_speed_interp(mesh, V, s)


def dspeed_at(mesh: Mesh, V: TangentialField, s):
    """Arclength derivative of the tangential speed; this is the tangential
    divergence of V on the boundary."""
    if V.dspeed_fn is not None:
        return V.dspeed_fn(s)
    if V.speed_fn is not None:
        h = 1e-6 * mesh.perimeter
        return (V.speed_fn(np.asarray(s) + h) - V.speed_fn(np.asarray(s) - h)) / (2 * h)
    nodes = np.concatenate([mesh.facet_arclength, [mesh.perimeter]])
    dv = _nodal_dspeed(mesh, V)
    vals = np.concatenate([dv, [dv[0]]])
    return np.interp(np.asarray(s, dtype=float) % mesh.perimeter, nodes, vals)


def field_divergence_and_jacobian(mesh: Mesh, V: TangentialField,
                                  points: np.ndarray):
    """div V and the Jacobian DV of the extended field at interior points.

    Closed-form per extension rule; the tube extension is evaluated in the
    boundary-fitted coordinates of the domain (polar for disks, per-side
    slabs for rectangles).
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if V.extension == "rotation":
        r = mesh.domain.radius
        w = float(V.nodal_speed[0]) / r
        div = np.zeros(n)
        DV = np.zeros((n, 2, 2))
        DV[:, 0, 1] = -w
        DV[:, 1, 0] = w
        return div, DV
    if V.extension != "tube":
        raise ValueError(f"unknown extension rule {V.extension!r}")
    if isinstance(mesh.domain, Disk):
        return _tube_disk(mesh, V, pts)
    if isinstance(mesh.domain, (Rectangle, ThinRectangle)):
        return _tube_polygon(mesh, V, pts)
    raise ValueError("tube extension supports disk and rectangle domains")


def _tube_disk(mesh, V, pts):
    r = mesh.domain.radius
    delta = V.delta
    if delta >= r:
        raise ValueError("tube width must be smaller than the disk radius")
    P = mesh.perimeter
    x, y = pts[:, 0], pts[:, 1]
    rho = np.hypot(x, y)
    theta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    s = P * theta / (2.0 * np.pi)
    active = rho > r - delta
    rho_safe = np.where(rho > 1e-300, rho, 1.0)

    t = (r - rho) / delta
    h = np.where(active, _cutoff(t), 0.0)
    hp = np.where(active, _cutoff_derivative(t) * (-1.0 / delta), 0.0)

    v = np.asarray(speed_at(mesh, V, s), dtype=float)
    vp = np.asarray(dspeed_at(mesh, V, s), dtype=float)

    # V = g(rho, theta) * (-y, x) with g = v(s(theta)) h(rho) / rho
    g = v * h / rho_safe
    g_rho = v * (hp * rho_safe - h) / rho_safe**2
    g_theta = vp * (P / (2.0 * np.pi)) * h / rho_safe

    gx = g_rho * (x / rho_safe) - g_theta * (y / rho_safe**2)
    gy = g_rho * (y / rho_safe) + g_theta * (x / rho_safe**2)

    DV = np.zeros((pts.shape[0], 2, 2))
    DV[:, 0, 0] = -y * gx
    DV[:, 0, 1] = -g - y * gy
    DV[:, 1, 0] = g + x * gx
    DV[:, 1, 1] = x * gy
    div = np.where(active, g_theta, 0.0)
    DV[~active] = 0.0
    return div, DV


def _rectangle_frame(domain):
    if isinstance(domain, ThinRectangle):
        x0, w, h = domain.a, domain.b - domain.a, domain.mu
    else:
        x0, w, h = 0.0, domain.width, domain.height
    # side order matches the boundary walk: bottom, right, top, left
    # rows: (arclength offset, tangent, inward normal)
    return x0, w, h, [
        (0.0, np.array([1.0, 0.0]), np.array([0.0, 1.0])),
        (w, np.array([0.0, 1.0]), np.array([-1.0, 0.0])),
        (w + h, np.array([-1.0, 0.0]), np.array([0.0, -1.0])),
        (2 * w + h, np.array([0.0, -1.0]), np.array([1.0, 0.0])),
    ]


def _tube_polygon(mesh, V, pts):
    x0, w, h, sides = _rectangle_frame(mesh.domain)
    delta = V.delta
    if delta >= 0.5 * min(w, h):
        raise ValueError("tube width must be below half the shortest side")
    x = pts[:, 0] - x0
    y = pts[:, 1]
    dists = np.stack([y, w - x, h - y, x], axis=1)
    params = np.stack([x, y, w - x, h - y], axis=1)
    side = np.argmin(dists, axis=1)
    ar = np.arange(pts.shape[0])
    d = dists[ar, side]
    s_local = params[ar, side]

    offsets = np.array([s[0] for s in sides])
    tangents = np.array([s[1] for s in sides])
    inward = np.array([s[2] for s in sides])
    s = offsets[side] + s_local
    tau = tangents[side]
    nin = inward[side]

    active = d < delta
    t = d / delta
    chi = np.where(active, _cutoff(t), 0.0)
    chi_p = np.where(active, _cutoff_derivative(t) / delta, 0.0)

    v = np.asarray(speed_at(mesh, V, s), dtype=float)
    vp = np.asarray(dspeed_at(mesh, V, s), dtype=float)

    # V = v(s) chi(d/delta) tau;  grad(v chi) = v' chi tau + v chi' grad d,
    # and grad d is the inward normal.
    grad_mag = (vp * chi)[:, None] * tau + (v * chi_p)[:, None] * nin
    DV = tau[:, :, None] * grad_mag[:, None, :]
    div = vp * chi
    DV[~active] = 0.0
    return np.where(active, div, 0.0), DV


# ---------------------------------------------------------------------------
# export


def mesh_to_json(mesh: Mesh) -> dict:
    return {
        "vertices": mesh.vertices.tolist(),
        "cells": mesh.cells.tolist(),
        "boundary": mesh.boundary.tolist(),
    }
