"""Planar domains, degree-d boundary data, and square-lattice grids.

A domain is either the unit disk or a convex polygon.  Grids are square
lattices anchored at the bounding box of the domain: nodes strictly inside
are *interior*; lattice neighbors of interior nodes that are not strictly
inside form the *boundary ring* and carry Dirichlet data.  Every interior
node therefore has all four lattice neighbors present.

Boundary data is a unit-modulus map of prescribed degree d, parameterized
by arclength: ``g(s) = exp(i*(phase0 + 2*pi*d*s/L + Fourier terms))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateDomain
from .quotient import loop_winding

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DomainSpec:
    """Domain geometry, grid spacing, and boundary-map description.

    shape          : "disk" (unit disk) or "polygon" (convex, CCW vertices)
    h              : lattice spacing
    degree         : winding degree d of the boundary map
    boundary_mode  : "canonical" (pure rotation) or "fourier"
    fourier_coeffs : sequence of (a_k, b_k) phase-modulation pairs (k >= 1)
    phase0         : constant phase offset
    """

    shape: str
    h: float
    degree: int
    vertices: Optional[tuple] = None
    boundary_mode: str = "canonical"
    fourier_coeffs: tuple = ()
    phase0: float = 0.0

    def __post_init__(self):
        if self.shape not in ("disk", "polygon"):
            raise ConfigError(f"shape: unknown value {self.shape!r}")
        if not (self.h > 0):
            raise ConfigError(f"h: must be positive, got {self.h}")
        if int(self.degree) != self.degree:
            raise ConfigError(f"degree: must be an integer, got {self.degree}")
        if self.boundary_mode not in ("canonical", "fourier"):
            raise ConfigError(f"boundary_mode: unknown value {self.boundary_mode!r}")
        if self.boundary_mode == "fourier" and not self.fourier_coeffs:
            raise ConfigError("fourier_coeffs: required when boundary_mode='fourier'")
        try:
            coeffs = tuple((float(a), float(b)) for a, b in self.fourier_coeffs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"fourier_coeffs: need (a, b) pairs ({exc})")
        object.__setattr__(self, "fourier_coeffs", coeffs)
        if self.shape == "polygon":
            v = np.asarray(self.vertices, dtype=float)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
                raise ConfigError("vertices: need at least 3 (x, y) pairs")
            object.__setattr__(self, "vertices", tuple(map(tuple, v)))
            _validate_convex_ccw(v)
        elif self.vertices is not None:
            raise ConfigError("vertices: only allowed for polygon domains")

    # --- geometry -------------------------------------------------------

    def _verts(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def perimeter(self) -> float:
        if self.shape == "disk":
            return _TWO_PI
        v = self._verts()
        return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))

    def bounding_box(self):
        if self.shape == "disk":
            return np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        v = self._verts()
        return v.min(axis=0), v.max(axis=0)

    def boundary_distance(self, points) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "disk":
            return 1.0 - np.hypot(pts[:, 0], pts[:, 1])
        v = self._verts()
        e = np.roll(v, -1, axis=0) - v
        ln = np.linalg.norm(e, axis=1)
        # distance to each edge line, signed positive on the interior side
        d = np.empty((pts.shape[0], v.shape[0]))
        for k in range(v.shape[0]):
            d[:, k] = ((pts - v[k]) @ np.array([-e[k, 1], e[k, 0]])) / ln[k]
        return d.min(axis=1)

    def inside(self, points) -> np.ndarray:
        return self.boundary_distance(points) > 0.0

    def nearest_boundary(self, points):
        """Foot point, outward normal, and arclength parameter per point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "disk":
            r = np.hypot(pts[:, 0], pts[:, 1])
            r = np.where(r == 0.0, 1.0, r)
            foot = pts / r[:, None]
            normal = foot.copy()
            s = np.mod(np.arctan2(foot[:, 1], foot[:, 0]), _TWO_PI)
            return foot, normal, s
        v = self._verts()
        nv = v.shape[0]
        e = np.roll(v, -1, axis=0) - v
        ln = np.linalg.norm(e, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(ln)])
        best = np.full(pts.shape[0], np.inf)
        foot = np.zeros_like(pts)
        normal = np.zeros_like(pts)
        s = np.zeros(pts.shape[0])
        for k in range(nv):
            t = np.clip(((pts - v[k]) @ e[k]) / (ln[k] ** 2), 0.0, 1.0)
            proj = v[k] + t[:, None] * e[k]
            dist = np.linalg.norm(pts - proj, axis=1)
            upd = dist < best
            best = np.where(upd, dist, best)
            foot[upd] = proj[upd]
            normal[upd] = np.array([e[k, 1], -e[k, 0]]) / ln[k]
            s[upd] = cum[k] + t[upd] * ln[k]
        return foot, normal, s

    def boundary_point(self, s):
        """Point, unit tangent, and outward normal at arclength s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.shape == "disk":
            pt = np.stack([np.cos(s), np.sin(s)], axis=1)
            tan = np.stack([-np.sin(s), np.cos(s)], axis=1)
            return pt, tan, pt.copy()
        v = self._verts()
        e = np.roll(v, -1, axis=0) - v
        ln = np.linalg.norm(e, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(ln)])
        sm = np.mod(s, cum[-1])
        k = np.clip(np.searchsorted(cum, sm, side="right") - 1, 0, len(ln) - 1)
        t = (sm - cum[k]) / ln[k]
        pt = v[k] + t[:, None] * e[k]
        tan = e[k] / ln[k][:, None]
        nrm = np.stack([tan[:, 1], -tan[:, 0]], axis=1)
        return pt, tan, nrm


def _validate_convex_ccw(v: np.ndarray):
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    area2 = np.sum(v[:, 0] * np.roll(v, -1, axis=0)[:, 1] - v[:, 1] * np.roll(v, -1, axis=0)[:, 0])
    if area2 <= 0:
        raise ConfigError("vertices: polygon must be counter-clockwise")
    if np.any(cross <= 0):
        raise ConfigError("vertices: polygon must be strictly convex")
    if np.any(np.linalg.norm(e, axis=1) < 1e-12):
        raise ConfigError("vertices: repeated consecutive vertices")


# --- boundary data ------------------------------------------------------


def boundary_phase(spec: DomainSpec, s) -> np.ndarray:
    """Phase of g at arclength s (a degree-d map plus Fourier modulation)."""
    s = np.asarray(s, dtype=float)
    L = spec.perimeter()
    ph = spec.phase0 + _TWO_PI * spec.degree * s / L
    for k, (ak, bk) in enumerate(spec.fourier_coeffs, start=1):
        ph = ph + ak * np.cos(_TWO_PI * k * s / L) + bk * np.sin(_TWO_PI * k * s / L)
    return ph


def boundary_phase_deriv(spec: DomainSpec, s) -> np.ndarray:
    """d(phase)/ds at arclength s."""
    s = np.asarray(s, dtype=float)
    L = spec.perimeter()
    dph = np.full_like(s, _TWO_PI * spec.degree / L, dtype=float)
    for k, (ak, bk) in enumerate(spec.fourier_coeffs, start=1):
        w = _TWO_PI * k / L
        dph = dph + w * (-ak * np.sin(w * s) + bk * np.cos(w * s))
    return dph


def sample_boundary_g(spec: DomainSpec, s):
    """Boundary map g evaluated at arclength s (unit modulus, degree d)."""
    return np.exp(1j * boundary_phase(spec, s))


def orbit_flux_density(spec: DomainSpec, s, m: int) -> np.ndarray:
    """Tangential phase speed of g^m: the Neumann data ``g^m x d(g^m)/ds``."""
    return m * boundary_phase_deriv(spec, s)


# --- grid ---------------------------------------------------------------


@dataclass
class Grid:
    """Square-lattice discretization of a domain.

    Node order is row-major over the kept lattice points.  ``interior``
    marks nodes strictly inside the domain; the rest form the boundary
    ring, each within one spacing of the boundary along a grid line.
    """

    spec: DomainSpec
    h: float
    xy: np.ndarray           # (N, 2) node positions
    ij: np.ndarray           # (N, 2) lattice indices
    interior: np.ndarray     # (N,) bool
    id_grid: np.ndarray      # lattice -> node id (-1 where absent)
    origin: np.ndarray       # lattice origin (position of ij == (0,0))
    edges: np.ndarray        # (E, 2) node ids, no ring-ring pairs
    cells: np.ndarray        # (C, 4) node ids, CCW corner order
    neighbors: np.ndarray    # (N, 4) node ids of W,E,S,N neighbors (-1 absent)
    ring_order: np.ndarray   # boundary-ring node ids ordered by angle
    ring_foot: np.ndarray    # (R, 2) nearest boundary points of ring nodes
    ring_normal: np.ndarray  # (R, 2) outward normals at the feet
    ring_s: np.ndarray       # (R,) arclength parameters of the feet
    ring_offset: np.ndarray  # (R,) signed normal offset of ring node vs foot
    ring_g: np.ndarray       # (R,) boundary map sampled at the feet

    @property
    def n_nodes(self) -> int:
        return self.xy.shape[0]

    @property
    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def ring_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.interior)

    def node_cell_weight(self) -> np.ndarray:
        """Quadrature weight per node: h^2 * (incident cells) / 4."""
        w = np.zeros(self.n_nodes)
        np.add.at(w, self.cells.ravel(), self.h**2 / 4.0)
        return w

    def ring_values_full(self, ring_values: np.ndarray, fill=0.0) -> np.ndarray:
        """Scatter per-ring-node values into a full-length node array."""
        out = np.full(self.n_nodes, fill, dtype=np.asarray(ring_values).dtype)
        out[self.ring_order] = ring_values
        return out

    def boundary_length_estimate(self) -> float:
        """Chordal length of the ordered ring feet; O(h) close to |bdry|."""
        f = self.ring_foot
        return float(np.sum(np.linalg.norm(np.roll(f, -1, axis=0) - f, axis=1)))


def build_grid(spec: DomainSpec) -> Grid:
    """Lay a square lattice over the domain and classify its nodes.

    Raises DegenerateDomain when fewer than 100 interior nodes result or
    the boundary ring fails to reproduce the requested winding degree.
    """
    h = spec.h
    lo, hi = spec.bounding_box()
    origin = lo - h  # one spare layer for the boundary ring
    nx = int(np.ceil((hi[0] - origin[0]) / h)) + 2
    ny = int(np.ceil((hi[1] - origin[1]) / h)) + 2
    gx = origin[0] + h * np.arange(nx)
    gy = origin[1] + h * np.arange(ny)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = spec.inside(pts).reshape(nx, ny)

    ring = np.zeros_like(inside)
    ring[1:, :] |= inside[:-1, :]
    ring[:-1, :] |= inside[1:, :]
    ring[:, 1:] |= inside[:, :-1]
    ring[:, :-1] |= inside[:, 1:]
    ring &= ~inside
    keep = inside | ring

    id_grid = -np.ones((nx, ny), dtype=np.int64)
    kept = np.argwhere(keep)
    id_grid[kept[:, 0], kept[:, 1]] = np.arange(kept.shape[0])
    xy = np.stack([origin[0] + h * kept[:, 0], origin[1] + h * kept[:, 1]], axis=1)
    interior = inside[kept[:, 0], kept[:, 1]]

    n_int = int(interior.sum())
    if n_int < 100:
        raise DegenerateDomain(f"only {n_int} interior nodes at h={h}; refine the grid")

    # edges: lattice-adjacent kept pairs, at least one endpoint interior
    edges = []
    for di, dj in ((1, 0), (0, 1)):
        a = id_grid[: nx - di, : ny - dj].ravel()
        b = id_grid[di:, dj:].ravel()
        ok = (a >= 0) & (b >= 0)
        ia = interior[a[ok]] | interior[b[ok]]
        ab = np.stack([a[ok][ia], b[ok][ia]], axis=1)
        edges.append(ab)
    edges = np.concatenate(edges, axis=0)

    # cells: all four corners kept, CCW order
    c00 = id_grid[:-1, :-1].ravel()
    c10 = id_grid[1:, :-1].ravel()
    c11 = id_grid[1:, 1:].ravel()
    c01 = id_grid[:-1, 1:].ravel()
    ok = (c00 >= 0) & (c10 >= 0) & (c11 >= 0) & (c01 >= 0)
    cells = np.stack([c00[ok], c10[ok], c11[ok], c01[ok]], axis=1)

    # 4-neighbor table (W, E, S, N)
    neighbors = -np.ones((kept.shape[0], 4), dtype=np.int64)
    i, j = kept[:, 0], kept[:, 1]
    west = np.where(i - 1 >= 0, id_grid[np.maximum(i - 1, 0), j], -1)
    east = np.where(i + 1 < nx, id_grid[np.minimum(i + 1, nx - 1), j], -1)
    south = np.where(j - 1 >= 0, id_grid[i, np.maximum(j - 1, 0)], -1)
    north = np.where(j + 1 < ny, id_grid[i, np.minimum(j + 1, ny - 1)], -1)
    neighbors[:, 0], neighbors[:, 1] = west, east
    neighbors[:, 2], neighbors[:, 3] = south, north

    # ordered boundary ring with feet, normals, and boundary data
    ring_ids = np.flatnonzero(~interior)
    center = xy[interior].mean(axis=0)
    ang = np.arctan2(xy[ring_ids, 1] - center[1], xy[ring_ids, 0] - center[0])
    ring_order = ring_ids[np.argsort(ang, kind="stable")]
    foot, normal, s = spec.nearest_boundary(xy[ring_order])
    offset = np.sum((xy[ring_order] - foot) * normal, axis=1)
    g = sample_boundary_g(spec, s)

    grid = Grid(
        spec=spec, h=h, xy=xy, ij=kept, interior=interior, id_grid=id_grid,
        origin=origin, edges=edges, cells=cells, neighbors=neighbors,
        ring_order=ring_order, ring_foot=foot, ring_normal=normal,
        ring_s=s, ring_offset=offset, ring_g=g,
    )

    w = loop_winding(g)
    if w != spec.degree:
        raise DegenerateDomain(
            f"boundary ring winding {w} != requested degree {spec.degree}; "
            f"grid too coarse for the boundary data"
        )
    if np.any(np.abs(grid.ring_offset) > h * (1.0 + 1e-9)):
        raise DegenerateDomain("boundary ring node farther than h from the boundary")
    return grid
