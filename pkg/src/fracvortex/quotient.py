"""Algebra of the plane modulo the m-th roots of unity.

A complex value is identified with its orbit under multiplication by
``a = exp(2*pi*i/m)``.  The quotient embeds isometrically into a cone in R^3
via ``P(z) = (p(z)/m, |z|*sqrt(m^2-1)/m)`` where ``p(z) = z^m / |z|^(m-1)``
unwinds the orbit into a single-valued field.  This module provides the
projections, the quotient distance, winding counts of sampled loops, and the
m-th root lift that inverts ``p`` on simply connected regions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NonzeroWinding, UnwrapFailure, ZeroCorner, ZeroValue

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ModulusParams:
    """Order ``m`` of the root-of-unity group and its generator ``a``."""

    m: int
    a: complex = field(init=False)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"m must be an integer >= 2, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "a", complex(np.exp(2j * np.pi / self.m)))

    def powers(self) -> np.ndarray:
        """All group elements ``a^k`` for k = 0..m-1."""
        return np.exp(2j * np.pi * np.arange(self.m) / self.m)


@dataclass(frozen=True)
class ConePoint:
    """Image of a complex value under the cone embedding.

    ``xy`` is the horizontal complex coordinate and ``height`` the vertical
    one; the Euclidean norm of the pair equals the modulus of the source.
    """

    xy: complex
    height: float

    def norm(self) -> float:
        return float(np.hypot(abs(self.xy), self.height))

    def distance(self, other: "ConePoint") -> float:
        return float(np.hypot(abs(self.xy - other.xy), self.height - other.height))


def project_p(z, params: ModulusParams):
    """Orbit map ``p(z) = z^m / |z|^(m-1)``, extended by 0 at the origin.

    Computed as ``|z| * (z/|z|)^m`` so the modulus is preserved exactly
    (up to rounding) for any input scale.  Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    out = np.zeros_like(z)
    nz = r > 0.0
    out[nz] = r[nz] * (z[nz] / r[nz]) ** params.m
    if out.ndim == 0:
        return complex(out)
    return out


def project_P(z, params: ModulusParams) -> ConePoint:
    """Isometric cone embedding of the orbit of ``z``."""
    z = complex(z)
    m = params.m
    xy = project_p(z, params) / m
    height = abs(z) * np.sqrt(m * m - 1.0) / m
    return ConePoint(xy=complex(xy), height=float(height))


def quotient_distance(z1, z2, params: ModulusParams):
    """Distance between orbits: ``min_k |z1 - a^k z2|``.

    Symmetric in its arguments and invariant under multiplying either one
    by a group element.  Accepts scalars or equally shaped arrays.
    """
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    pows = params.powers().reshape((params.m,) + (1,) * max(z1.ndim, z2.ndim))
    d = np.abs(z1[None, ...] - pows * z2[None, ...]).min(axis=0)
    if d.ndim == 0:
        return float(d)
    return d


def nearest_group_element(z1, z2, params: ModulusParams) -> int:
    """Index k minimizing ``|z1 - a^k z2|``; ties resolved to the smallest k."""
    z1 = complex(z1)
    z2 = complex(z2)
    d = np.abs(z1 - params.powers() * z2)
    return int(np.argmin(d))


def nearest_group_elements(z1, z2, params: ModulusParams) -> np.ndarray:
    """Vectorized ``nearest_group_element`` over arrays (returns int array)."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    pows = params.powers().reshape((params.m,) + (1,) * z1.ndim)
    d = np.abs(z1[None, ...] - pows * z2[None, ...])
    return np.argmin(d, axis=0)


def loop_winding(values, tol: float = 1e-12) -> int:
    """Winding number of a sampled closed loop of complex values.

    Sums principal-branch phase increments between consecutive samples
    (the loop closes from the last sample back to the first) and divides
    by 2*pi.  The sum telescopes to an exact multiple of 2*pi, so the
    rounding residual is a pure floating-point guard.

    Raises ZeroCorner if any sample has modulus <= tol, and UnwrapFailure
    if the pre-rounding residual exceeds 0.25.
    """
    v = np.asarray(values, dtype=complex).ravel()
    if v.size < 3:
        raise ValueError("need at least 3 samples to define a loop")
    if np.min(np.abs(v)) <= tol:
        raise ZeroCorner(f"loop sample with modulus <= {tol}")
    inc = np.angle(np.roll(v, -1) * np.conjugate(v))
    w = float(np.sum(inc) / _TWO_PI)
    k = int(np.rint(w))
    if abs(w - k) >= 0.25:
        raise UnwrapFailure(f"winding residual {abs(w - k):.3f} >= 0.25")
    return k


def plaquette_winding(corners, tol: float = 1e-12) -> int:
    """Winding of the four corner values of a grid cell, in {-2,...,2}.

    With four principal-branch increments the representable range is
    capped at |w| <= 2; finer sampling (``loop_winding`` on a denser loop)
    is needed to resolve higher degrees.
    """
    v = np.asarray(corners, dtype=complex).ravel()
    if v.size != 4:
        raise ValueError(f"a plaquette has 4 corners, got {v.size}")
    return loop_winding(v, tol=tol)


def _adjacency(n_nodes: int, edges: np.ndarray) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, j in edges:
        adj[int(i)].append(int(j))
        adj[int(j)].append(int(i))
    for lst in adj:
        lst.sort()
    return adj


def lift_mth_root(
    v,
    edges,
    params: ModulusParams,
    cells=None,
    seed_index: int = 0,
    tol: float = 1e-12,
) -> np.ndarray:
    """m-th root of a nonvanishing field on a connected edge graph.

    Returns u with ``p(u) = v`` nodewise, built by breadth-first phase
    propagation from ``seed_index`` (neighbors visited in index order, so
    row-major node numbering gives a deterministic branch).  The seed branch
    takes the principal argument of the seed value divided by m.

    The root exists iff every cycle of the graph encloses a total winding
    divisible by m; violations surface as NonzeroWinding through the
    non-tree closure check.  If ``cells`` (an array of 4-corner index rows)
    is given, every cell is additionally prechecked for zero winding.
    """
    v = np.asarray(v, dtype=complex).ravel()
    n = v.size
    if np.min(np.abs(v)) <= tol:
        raise ZeroValue("field has a (near-)zero node value; no root lift")
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if cells is not None:
        cells = np.asarray(cells, dtype=int).reshape(-1, 4)
        corner_vals = v[cells]
        inc = np.angle(np.roll(corner_vals, -1, axis=1) * np.conjugate(corner_vals))
        w = np.rint(inc.sum(axis=1) / _TWO_PI).astype(int)
        if np.any(w != 0):
            bad = int(np.flatnonzero(w != 0)[0])
            raise NonzeroWinding(f"cell {bad} has winding {int(w[bad])}")

    adj = _adjacency(n, edges)
    phase = np.full(n, np.nan)
    phase[seed_index] = np.angle(v[seed_index])
    queue = deque([int(seed_index)])
    order = []
    while queue:
        i = queue.popleft()
        order.append(i)
        for j in adj[i]:
            if np.isnan(phase[j]):
                phase[j] = phase[i] + np.angle(v[j] * np.conjugate(v[i]))
                queue.append(j)
    if np.isnan(phase).any():
        raise ValueError("edge graph is not connected; lift needs one region")

    # A cycle with enclosed winding w makes the tree phase multivalued by
    # 2*pi*w, which the root absorbs iff w is a multiple of m.  Non-tree
    # edges therefore must close up modulo 2*pi*m.
    mismatch = phase[edges[:, 0]] - phase[edges[:, 1]]
    mismatch -= np.angle(v[edges[:, 0]] * np.conjugate(v[edges[:, 1]]))
    if mismatch.size:
        period = 2.0 * np.pi * params.m
        residual = mismatch - period * np.rint(mismatch / period)
        if np.max(np.abs(residual)) > np.pi:
            raise NonzeroWinding("cycle winding is not a multiple of m")

    return np.abs(v) * np.exp(1j * phase / params.m)
