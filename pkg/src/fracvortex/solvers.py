"""Sparse linear algebra on grids: discrete Laplace solves and interpolation.

The Dirichlet solve eliminates the boundary ring (whose values are data)
and solves the 5-point system on interior nodes with an algebraic multigrid
preconditioner.  The Neumann solve (used on polygons, where no spectral
trace is available) is the natural variational one with flux lumped onto
near-boundary nodes; it is first-order accurate and documented as such.
"""

from __future__ import annotations

import numpy as np
import pyamg
import scipy.sparse as sp

from .errors import SolverDiverged


def _interior_system(grid, ring_full: np.ndarray, rhs_full=None):
    """Assemble (4u - sum of neighbors) = h^2 f with ring values eliminated."""
    int_ids = grid.interior_ids
    n = int_ids.size
    pos = -np.ones(grid.n_nodes, dtype=np.int64)
    pos[int_ids] = np.arange(n)

    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 4.0)]
    b = np.zeros(n)
    if rhs_full is not None:
        b += grid.h**2 * np.asarray(rhs_full, dtype=float)[int_ids]
    nb = grid.neighbors[int_ids]
    for k in range(4):
        j = nb[:, k]
        is_int = grid.interior[j]
        rows.append(np.flatnonzero(is_int))
        cols.append(pos[j[is_int]])
        vals.append(np.full(int(is_int.sum()), -1.0))
        ring_j = j[~is_int]
        np.add.at(b, np.flatnonzero(~is_int), ring_full[ring_j])
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return A, b, int_ids


def dirichlet_solve(grid, ring_values: np.ndarray, rhs_full=None,
                    tol: float = 1e-12) -> np.ndarray:
    """Solve the 5-point Laplace/Poisson problem with ring data.

    ``ring_values`` follows ``grid.ring_order``.  Returns a full node array
    with the ring entries set to the data.  Raises SolverDiverged if the
    algebraic residual exceeds 1e-8 relative to the data scale.
    """
    ring_full = grid.ring_values_full(np.asarray(ring_values, dtype=float))
    A, b, int_ids = _interior_system(grid, ring_full, rhs_full)
    ml = pyamg.ruge_stuben_solver(A)
    x = ml.solve(b, tol=tol, accel="cg", maxiter=400)
    res = np.linalg.norm(A @ x - b)
    scale = max(np.linalg.norm(b), 1.0)
    if res > 1e-8 * scale:
        raise SolverDiverged(f"Dirichlet solve residual {res:.2e} (scale {scale:.2e})")
    out = ring_full.copy()
    out[int_ids] = x
    return out


def laplacian_residual(grid, values_full: np.ndarray) -> float:
    """Max |(4u - sum of neighbors)| / h^2 over interior nodes."""
    int_ids = grid.interior_ids
    nb = grid.neighbors[int_ids]
    lap = 4.0 * values_full[int_ids] - values_full[nb].sum(axis=1)
    return float(np.max(np.abs(lap)) / grid.h**2)


def ring_arc_weights(grid) -> np.ndarray:
    """Trapezoid arclength weight of each ordered ring node's foot."""
    s = grid.ring_s
    L = grid.spec.perimeter()
    s_next = np.roll(s, -1)
    s_prev = np.roll(s, 1)
    d_next = np.mod(s_next - s, L)
    d_prev = np.mod(s - s_prev, L)
    return 0.5 * (d_next + d_prev)


def neumann_variational_solve(grid, ring_flux: np.ndarray,
                              tol: float = 1e-12) -> np.ndarray:
    """Natural-boundary Laplace solve with prescribed boundary flux.

    ``ring_flux`` is the outward normal derivative sampled at the ring feet
    (ordered as ``grid.ring_order``); it must integrate to ~0 over the
    boundary.  The flux is lumped onto the interior neighbors of each ring
    node.  First-order accurate near the staircase boundary; interior
    values are returned with mean zero, ring entries copied from their
    interior neighbors' harmonic extension via one-sided values.
    """
    int_ids = grid.interior_ids
    n = int_ids.size
    pos = -np.ones(grid.n_nodes, dtype=np.int64)
    pos[int_ids] = np.arange(n)

    nb = grid.neighbors[int_ids]
    deg = np.zeros(n)
    rows, cols, vals = [], [], []
    for k in range(4):
        j = nb[:, k]
        is_int = grid.interior[j]
        deg += is_int.astype(float)
        rows.append(np.flatnonzero(is_int))
        cols.append(pos[j[is_int]])
        vals.append(np.full(int(is_int.sum()), -1.0))
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(deg)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tolil()

    # lump the boundary load (flux times arclength) onto the interior
    # neighbors of each ring node; the graph Laplacian is the first-order
    # stiffness so the load carries no 1/h factor
    b = np.zeros(n)
    w = ring_arc_weights(grid)
    flux = np.asarray(ring_flux, dtype=float) * w
    for r_id, f in zip(grid.ring_order, flux):
        nbrs = grid.neighbors[r_id]
        nbrs = nbrs[(nbrs >= 0)]
        nbrs = nbrs[grid.interior[nbrs]]
        if nbrs.size:
            b[pos[nbrs]] += f / nbrs.size

    # project out the quadrature imbalance (the continuum data is
    # compatible; the discrete sum must vanish for the singular system)
    b -= b.sum() / n

    # pin one unknown to remove the constant nullspace
    A[0, :] = 0.0
    A[0, 0] = 1.0
    b0 = b.copy()
    b0[0] = 0.0
    A = A.tocsr()
    ml = pyamg.smoothed_aggregation_solver(A)
    x = ml.solve(b0, tol=tol, accel="gmres", maxiter=400)
    res = np.linalg.norm(A @ x - b0)
    if res > 1e-8 * max(np.linalg.norm(b0), 1.0):
        raise SolverDiverged(f"Neumann solve residual {res:.2e}")
    x -= x.mean()

    out = np.zeros(grid.n_nodes)
    out[int_ids] = x
    # extend to the ring by copying the nearest interior neighbor
    for r_id in grid.ring_order:
        nbrs = grid.neighbors[r_id]
        nbrs = nbrs[(nbrs >= 0)]
        nbrs = nbrs[grid.interior[nbrs]]
        out[r_id] = out[nbrs].mean() if nbrs.size else 0.0
    return out


def interp_bilinear(grid, values_full: np.ndarray, points) -> np.ndarray:
    """Bilinear interpolation of a node field at arbitrary interior points.

    Falls back to the nearest available node when a cell corner is missing
    (only happens within one spacing of the boundary).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fx = (pts[:, 0] - grid.origin[0]) / grid.h
    fy = (pts[:, 1] - grid.origin[1]) / grid.h
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx = fx - i0
    ty = fy - j0
    nx, ny = grid.id_grid.shape
    i0c = np.clip(i0, 0, nx - 2)
    j0c = np.clip(j0, 0, ny - 2)
    c00 = grid.id_grid[i0c, j0c]
    c10 = grid.id_grid[i0c + 1, j0c]
    c01 = grid.id_grid[i0c, j0c + 1]
    c11 = grid.id_grid[i0c + 1, j0c + 1]
    ok = (c00 >= 0) & (c10 >= 0) & (c01 >= 0) & (c11 >= 0)
    vals = np.asarray(values_full)
    out = np.empty(pts.shape[0], dtype=vals.dtype)
    out[ok] = (
        vals[c00[ok]] * (1 - tx[ok]) * (1 - ty[ok])
        + vals[c10[ok]] * tx[ok] * (1 - ty[ok])
        + vals[c01[ok]] * (1 - tx[ok]) * ty[ok]
        + vals[c11[ok]] * tx[ok] * ty[ok]
    )
    if np.any(~ok):
        # nearest kept node among the cell corners
        for idx in np.flatnonzero(~ok):
            cand = np.array([c00[idx], c10[idx], c01[idx], c11[idx]])
            cand = cand[cand >= 0]
            if cand.size == 0:
                raise ValueError(f"point {pts[idx]} is outside the grid")
            d = np.linalg.norm(grid.xy[cand] - pts[idx], axis=1)
            out[idx] = vals[cand[np.argmin(d)]]
    return out
