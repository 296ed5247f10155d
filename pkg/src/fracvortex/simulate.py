"""Discrete minimization of the sharp and diffuse vortex functionals.

The sharp model couples a complex field u on grid nodes with group labels
k_e in {0..m-1} on edges: edge cost 0.5|u_i - a^{k_e} u_j|^2, a Ginzburg-
Landau potential (1-|u|^2)^2/(4 eps^2) per unit area, and a length penalty
h for every labeled edge.  The diffuse model replaces the labels with a
phase field psi that interpolates each edge between the quotient cost
(psi = 0, jumps free) and the plain Dirichlet cost (psi = 1), and charges
walls through eta|grad psi|^2/2 + (1-psi)^2/(2 eta).

Both minimizers alternate an exact subproblem (labels by per-edge argmin,
psi by a conjugate-gradient linear solve with a monotone line search) with
a Barzilai-Borwein descent step on u, followed by the radial truncation
u <- u/max(1,|u|).  Every sweep is non-increasing in energy, which the
loop asserts.  Extraction utilities locate vortices (plaquette windings of
p(u)), trace the labeled jump set into dual polylines with segment fits
and junction angles, fit the |log eps| energy expansion, and run the local
splitting diagnostic u = w phi against a jump-free minimizer w.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from .errors import (
    ConfigError,
    IllConditioned,
    IterationCap,
    NonzeroWinding,
    RadiusTooSmall,
    WindingObstruction,
)
from .quotient import (
    ModulusParams,
    lift_mth_root,
    nearest_group_elements,
    project_p,
)

_CORE_MODULUS = 0.3          # |u| threshold below which a cell is a core cell
_CORE_EXCLUSION_FACTOR = 5.0  # structure statistics ignore B_{5 eps}(vortex)


# --------------------------------------------------------------------------
# parameters and state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimParams:
    """Settings for the discrete minimizers.

    ``eps`` is the vortex core scale and ``eta`` the wall width of the
    diffuse model (unused by the sharp one).  Descent stops once the total
    energy has dropped by less than ``tol`` over a trailing ``window`` of
    sweeps; hitting ``max_sweeps`` first flags the state non-converged or
    raises IterationCap when ``raise_on_cap`` is set.
    """

    params: ModulusParams
    eps: float
    eta: float = 0.0
    max_sweeps: int = 4000
    tol: float = 1e-8
    window: int = 50
    seed: int = 0
    raise_on_cap: bool = False

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ConfigError("eps: must be positive")
        if self.eta < 0.0:
            raise ConfigError("eta: must be nonnegative")
        if self.tol <= 0.0:
            raise ConfigError("tol: must be positive")
        if self.max_sweeps < 1:
            raise ConfigError("max_sweeps: must be at least 1")
        if self.window < 1:
            raise ConfigError("window: must be at least 1")

    def check_grid(self, grid, diffuse: bool = False):
        if self.eps < 2.0 * grid.h:
            raise ConfigError(
                f"eps: {self.eps} under-resolved at h={grid.h}; need eps >= 2h"
            )
        if diffuse:
            if self.eta <= 0.0:
                raise ConfigError("eta: the diffuse model needs eta > 0")
            if self.eta < 4.0 * grid.h:
                raise ConfigError(
                    f"eta: {self.eta} under-resolved at h={grid.h}; need eta >= 4h"
                )


@dataclass
class FieldState:
    """Node field u, per-edge labels (sharp), and phase field psi (diffuse).

    ``history`` holds one row per completed sweep of the minimizer that
    produced the state, with columns (quotient part, potential, jump
    length, wall energy, total).
    """

    u: np.ndarray
    labels: np.ndarray
    psi: Optional[np.ndarray] = None
    converged: bool = False
    sweeps: int = 0
    history: Optional[np.ndarray] = None

    def copy(self) -> "FieldState":
        return FieldState(
            u=self.u.copy(),
            labels=self.labels.copy(),
            psi=None if self.psi is None else self.psi.copy(),
            converged=self.converged,
            sweeps=self.sweeps,
            history=None if self.history is None else self.history.copy(),
        )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy parts; ``total`` is their exact sum."""

    quotient_dirichlet: float
    potential: float
    jump_length: float = 0.0
    at_wall: float = 0.0

    @property
    def total(self) -> float:
        return (self.quotient_dirichlet + self.potential
                + self.jump_length + self.at_wall)


def _as_modulus(params) -> ModulusParams:
    return getattr(params, "params", params)


def _group_phases(m: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(m) / m)


def _resolve_grid(domain):
    if hasattr(domain, "edges"):
        return domain
    from .domain import build_grid

    return build_grid(domain)


def _boundary_values(grid) -> np.ndarray:
    return grid.ring_values_full(grid.ring_g.astype(complex))


def _boundary_edge_mask(grid) -> np.ndarray:
    ii = grid.interior[grid.edges[:, 0]]
    jj = grid.interior[grid.edges[:, 1]]
    return ~(ii & jj)


# --------------------------------------------------------------------------
# energies
# --------------------------------------------------------------------------


def _abs2(z: np.ndarray) -> np.ndarray:
    return z.real * z.real + z.imag * z.imag


def _potential(u: np.ndarray, cw: np.ndarray, eps: float) -> float:
    return float(np.sum(cw * (1.0 - _abs2(u)) ** 2) / (4.0 * eps * eps))


def _quotient_edge_sq(u, edges, params) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge (min_k |u_i - a^k u_j|^2, plain |u_i - u_j|^2)."""
    ui, uj = u[edges[:, 0]], u[edges[:, 1]]
    k = nearest_group_elements(ui, uj, params)
    a = _group_phases(params.m)[k]
    return _abs2(ui - a * uj), _abs2(ui - uj)


def energy_sharp(state: FieldState, grid, sim: SimParams) -> EnergyBreakdown:
    """Labeled Dirichlet + potential + length-of-labeled-edges breakdown."""
    params = sim.params
    u, labels = state.u, state.labels
    a = _group_phases(params.m)[labels]
    d = u[grid.edges[:, 0]] - a * u[grid.edges[:, 1]]
    qd = 0.5 * float(np.sum(_abs2(d)))
    pot = _potential(u, grid.node_cell_weight(), sim.eps)
    jump = grid.h * float(np.count_nonzero(labels))
    return EnergyBreakdown(quotient_dirichlet=qd, potential=pot,
                           jump_length=jump)


def energy_diffuse(state: FieldState, grid, sim: SimParams) -> EnergyBreakdown:
    """psi-interpolated edge cost + potential + wall energy breakdown."""
    params = sim.params
    if sim.eta <= 0.0:
        raise ConfigError("eta: the diffuse energy needs eta > 0")
    u = state.u
    psi = np.ones(grid.n_nodes) if state.psi is None else state.psi
    ei, ej = grid.edges[:, 0], grid.edges[:, 1]
    dm2, d2 = _quotient_edge_sq(u, grid.edges, params)
    pb2 = (0.5 * (psi[ei] + psi[ej])) ** 2
    qd = 0.5 * float(np.sum(dm2 + pb2 * (d2 - dm2)))
    cw = grid.node_cell_weight()
    pot = _potential(u, cw, sim.eps)
    wall = (0.5 * sim.eta * float(np.sum((psi[ei] - psi[ej]) ** 2))
            + float(np.sum(cw * (1.0 - psi) ** 2)) / (2.0 * sim.eta))
    return EnergyBreakdown(quotient_dirichlet=qd, potential=pot, at_wall=wall)


# --------------------------------------------------------------------------
# gradients (complex convention: g = 2 dF/d conj(u); descent along -g)
# --------------------------------------------------------------------------


def _scatter_complex(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    re = np.bincount(idx, weights=vals.real, minlength=n)
    im = np.bincount(idx, weights=vals.imag, minlength=n)
    return re + 1j * im


def grad_sharp_u(u, labels, grid, sim: SimParams,
                 cw: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient of the smooth (u-dependent) part of the sharp energy."""
    params = sim.params
    if cw is None:
        cw = grid.node_cell_weight()
    ei, ej = grid.edges[:, 0], grid.edges[:, 1]
    a = _group_phases(params.m)[labels]
    w = u[ei] - a * u[ej]
    g = _scatter_complex(u.size, ei, w)
    g += _scatter_complex(u.size, ej, -np.conjugate(a) * w)
    g -= cw * (1.0 - _abs2(u)) * u / (sim.eps * sim.eps)
    return g


def grad_diffuse_u(u, psi, grid, sim: SimParams,
                   cw: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient of the u-dependent part of the diffuse energy."""
    params = sim.params
    if cw is None:
        cw = grid.node_cell_weight()
    ei, ej = grid.edges[:, 0], grid.edges[:, 1]
    ui, uj = u[ei], u[ej]
    k = nearest_group_elements(ui, uj, params)
    a = _group_phases(params.m)[k]
    wstar = ui - a * uj
    delta = ui - uj
    pb2 = (0.5 * (psi[ei] + psi[ej])) ** 2
    gi = (1.0 - pb2) * wstar + pb2 * delta
    gj = -(1.0 - pb2) * np.conjugate(a) * wstar - pb2 * delta
    g = _scatter_complex(u.size, ei, gi)
    g += _scatter_complex(u.size, ej, gj)
    g -= cw * (1.0 - _abs2(u)) * u / (sim.eps * sim.eps)
    return g


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------


def init_smooth(domain, sim: SimParams) -> FieldState:
    """Harmonic extension of the boundary map; no labels, psi = 1."""
    from .solvers import dirichlet_solve

    grid = _resolve_grid(domain)
    g = grid.ring_g
    u = (dirichlet_solve(grid, g.real)
         + 1j * dirichlet_solve(grid, g.imag)).astype(complex)
    u = u / np.maximum(1.0, np.abs(u))
    return FieldState(u=u, labels=np.zeros(grid.edges.shape[0], dtype=np.int64),
                      psi=np.ones(grid.n_nodes))


def init_random(domain, sim: SimParams) -> FieldState:
    """Unit field with seeded random interior phases; no labels, psi = 1."""
    grid = _resolve_grid(domain)
    rng = np.random.default_rng(sim.seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, grid.n_nodes)
    u = np.exp(1j * theta)
    gfull = _boundary_values(grid)
    u[~grid.interior] = gfull[~grid.interior]
    return FieldState(u=u, labels=np.zeros(grid.edges.shape[0], dtype=np.int64),
                      psi=np.ones(grid.n_nodes))


def init_from_forest(forest, config, domain,
                     sim: Optional[SimParams] = None) -> FieldState:
    """Warm start: competitor field cut along the forest, labels included.

    When ``sim`` carries a positive eta, psi is seeded with the optimal wall
    profile 1 - exp(-dist(x, forest)/eta).
    """
    from .steiner import construct_competitor_field

    grid = _resolve_grid(domain)
    u, labels = construct_competitor_field(forest, config, grid)
    psi = np.ones(grid.n_nodes)
    if sim is not None and sim.eta > 0.0:
        seg = forest.edge_segments()
        if seg.shape[0]:
            dist = np.full(grid.n_nodes, np.inf)
            for aa, bb in seg:
                ab = bb - aa
                L2 = max(float(ab @ ab), 1e-300)
                t = np.clip(((grid.xy - aa) @ ab) / L2, 0.0, 1.0)
                proj = aa + t[:, None] * ab
                dist = np.minimum(dist, np.linalg.norm(grid.xy - proj, axis=1))
            psi = 1.0 - np.exp(-dist / sim.eta)
        psi[~grid.interior] = 1.0
    return FieldState(u=u, labels=labels.astype(np.int64), psi=psi)


def truncate(state: FieldState) -> FieldState:
    """Radial truncation u <- u/max(1,|u|); never increases either energy."""
    out = state.copy()
    out.u = out.u / np.maximum(1.0, np.abs(out.u))
    return out


# --------------------------------------------------------------------------
# descent engines
# --------------------------------------------------------------------------


def _best_labels(u, grid, params: ModulusParams, forced_zero: np.ndarray,
                 h: float) -> np.ndarray:
    """Exact per-edge argmin of 0.5|u_i - a^k u_j|^2 + h[k != 0]; ties -> 0."""
    ei, ej = grid.edges[:, 0], grid.edges[:, 1]
    d = u[ei] * np.conjugate(u[ej])
    s = _abs2(u[ei]) + _abs2(u[ej])
    m = params.m
    costs = np.empty((m, d.size))
    for k in range(m):
        w = np.exp(-2j * np.pi * k / m)
        costs[k] = 0.5 * (s - 2.0 * (w * d).real) + (h if k else 0.0)
    labels = np.argmin(costs, axis=0).astype(np.int64)
    labels[forced_zero] = 0
    return labels


class _BBStepper:
    """Barzilai-Borwein step with backtracking to enforce descent.

    Works on the complex node vector with the given free mask; applies the
    radial truncation to every candidate so the accepted iterate always
    satisfies |u| <= 1.
    """

    def __init__(self, free: np.ndarray, tau0: float = 0.1):
        self.free = free
        self.tau = tau0
        self.prev_u = None
        self.prev_g = None

    def step(self, u, f, g, energy_fn):
        if self.prev_u is not None:
            s = u - self.prev_u
            y = g - self.prev_g
            num = float(np.sum(s.real**2 + s.imag**2))
            den = float(np.sum(s.real * y.real + s.imag * y.imag))
            if den > 1e-300:
                self.tau = min(max(num / den, 1e-6), 1e3)
        self.prev_u = u
        self.prev_g = g
        tau = self.tau
        gm = np.where(self.free, g, 0.0)
        for _ in range(45):
            cand = u - tau * gm
            cand = cand / np.maximum(1.0, np.abs(cand))
            fc = energy_fn(cand)
            if fc <= f + 1e-14 * max(1.0, abs(f)):
                self.tau = tau
                return cand, fc
            tau *= 0.5
        self.tau = max(tau, 1e-8)
        return u, f


def _run_minimizer(grid, sim: SimParams, state: FieldState, diffuse: bool):
    params = sim.params
    cw = grid.node_cell_weight()
    ei, ej = grid.edges[:, 0], grid.edges[:, 1]
    forced_zero = _boundary_edge_mask(grid)
    free = grid.interior
    eps2 = sim.eps * sim.eps

    u = state.u.copy()
    gfull = _boundary_values(grid)
    u[~grid.interior] = gfull[~grid.interior]
    u = u / np.maximum(1.0, np.abs(u))
    labels = state.labels.copy()
    labels[forced_zero] = 0
    psi = np.ones(grid.n_nodes) if state.psi is None else state.psi.copy()
    psi[~grid.interior] = 1.0

    def pot(uu):
        return float(np.sum(cw * (1.0 - _abs2(uu)) ** 2)) / (4.0 * eps2)

    if diffuse:
        phases = _group_phases(params.m)

        def partial_u(uu):
            uii, ujj = uu[ei], uu[ej]
            k = nearest_group_elements(uii, ujj, params)
            wstar = uii - phases[k] * ujj
            delta = uii - ujj
            pb2 = (0.5 * (psi[ei] + psi[ej])) ** 2
            return 0.5 * float(
                np.sum((1.0 - pb2) * _abs2(wstar) + pb2 * _abs2(delta))
            ) + pot(uu)

        def grad_u(uu):
            return grad_diffuse_u(uu, psi, grid, sim, cw)

    else:

        def partial_u(uu):
            a = _group_phases(params.m)[labels]
            return 0.5 * float(np.sum(_abs2(uu[ei] - a * uu[ej]))) + pot(uu)

        def grad_u(uu):
            return grad_sharp_u(uu, labels, grid, sim, cw)

    def total_energy():
        st = FieldState(u=u, labels=labels, psi=psi)
        return energy_diffuse(st, grid, sim) if diffuse else energy_sharp(st, grid, sim)

    stepper = _BBStepper(free)
    hist = []
    prev_total = np.inf
    converged = False
    sweeps = 0
    for sweep in range(1, sim.max_sweeps + 1):
        if diffuse:
            psi = _psi_update(u, psi, grid, sim, cw)
        else:
            labels = _best_labels(u, grid, params, forced_zero, grid.h)
        f = partial_u(u)
        g = grad_u(u)
        u, f = stepper.step(u, f, g, partial_u)
        br = total_energy()
        total = br.total
        assert total <= prev_total + 1e-9 * max(1.0, abs(prev_total)), (
            f"energy increased at sweep {sweep}: {prev_total} -> {total}"
        )
        prev_total = total
        hist.append((br.quotient_dirichlet, br.potential, br.jump_length,
                     br.at_wall, total))
        sweeps = sweep
        if sweep >= sim.window and hist[-sim.window][4] - hist[-1][4] < sim.tol:
            converged = True
            break

    out = FieldState(u=u, labels=labels, psi=psi, converged=converged,
                     sweeps=sweeps, history=np.asarray(hist))
    if not converged and sim.raise_on_cap:
        raise IterationCap(
            f"no convergence within {sim.max_sweeps} sweeps", state=out
        )
    return out


def _psi_update(u, psi, grid, sim: SimParams, cw) -> np.ndarray:
    """Exact linear psi-subproblem with a monotone segment line search."""
    params = sim.params
    eta = sim.eta
    ei, ej = grid.edges[:, 0], grid.edges[:, 1]
    dm2, d2 = _quotient_edge_sq(u, grid.edges, params)
    ce = np.maximum(d2 - dm2, 0.0)

    def f_psi(p):
        pb = p[ei] + p[ej]
        return (0.125 * float(np.sum(ce * pb * pb))
                + 0.5 * eta * float(np.sum((p[ei] - p[ej]) ** 2))
                + float(np.sum(cw * (1.0 - p) ** 2)) / (2.0 * eta))

    int_ids = grid.interior_ids
    pos = -np.ones(grid.n_nodes, dtype=np.int64)
    pos[int_ids] = np.arange(int_ids.size)
    n = int_ids.size

    ii, jj = pos[ei], pos[ej]
    both = (ii >= 0) & (jj >= 0)
    only_i = (ii >= 0) & (jj < 0)
    only_j = (jj >= 0) & (ii < 0)

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    diag = np.zeros(n)
    b = cw[int_ids] / eta
    diag += cw[int_ids] / eta

    coup = 0.25 * ce
    np.add.at(diag, ii[both], coup[both] + eta)
    np.add.at(diag, jj[both], coup[both] + eta)
    off = coup[both] - eta
    rows.append(ii[both])
    cols.append(jj[both])
    rows.append(jj[both])
    cols.append(ii[both])
    vals = [diag, off, off]
    # ring neighbors carry psi = 1: fold them into diagonal and rhs
    for idx, mask in ((ii, only_i), (jj, only_j)):
        np.add.at(diag, idx[mask], coup[mask] + eta)
        np.add.at(b, idx[mask], eta - coup[mask])

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    x0 = psi[int_ids]
    x, _ = cg(A, b, x0=x0, rtol=1e-10, atol=0.0, maxiter=400)

    target = psi.copy()
    target[int_ids] = np.clip(x, 0.0, 1.0)
    f0 = f_psi(psi)
    f1 = f_psi(target)
    fm = f_psi(0.5 * (psi + target))
    # exact 1D quadratic through t = 0, 1/2, 1
    curv = 2.0 * (f0 - 2.0 * fm + f1)
    best_t, best_f = (1.0, f1) if f1 <= f0 else (0.0, f0)
    if curv > 1e-300:
        t_star = float(np.clip((3.0 * f0 - 4.0 * fm + f1) / (2.0 * curv), 0.0, 1.0))
        fs = f_psi(psi + t_star * (target - psi))
        if fs < best_f:
            best_t, best_f = t_star, fs
    return psi + best_t * (target - psi)


def minimize_sharp(domain, sim: SimParams,
                   init: Optional[FieldState] = None) -> FieldState:
    """Alternating label/descent minimization of the sharp functional."""
    grid = _resolve_grid(domain)
    sim.check_grid(grid, diffuse=False)
    state = init if init is not None else init_smooth(grid, sim)
    return _run_minimizer(grid, sim, state, diffuse=False)


def minimize_diffuse(domain, sim: SimParams,
                     init: Optional[FieldState] = None) -> FieldState:
    """Alternating psi/descent minimization of the diffuse functional."""
    grid = _resolve_grid(domain)
    sim.check_grid(grid, diffuse=True)
    state = init if init is not None else init_smooth(grid, sim)
    return _run_minimizer(grid, sim, state, diffuse=True)


# --------------------------------------------------------------------------
# gauge transform
# --------------------------------------------------------------------------


def gauge_transform(state: FieldState, grid, params, node_mask: np.ndarray,
                    j: int) -> FieldState:
    """Multiply u by a^j on the node set and shift crossing labels to match.

    Leaves the sharp energy invariant: the labeled differences transform by
    a global unit factor on every edge.
    """
    params = _as_modulus(params)
    m = params.m
    mask = np.asarray(node_mask, dtype=bool)
    out = state.copy()
    out.u = np.where(mask, out.u * np.exp(2j * np.pi * j / m), out.u)
    si = mask[grid.edges[:, 0]].astype(np.int64)
    sj = mask[grid.edges[:, 1]].astype(np.int64)
    out.labels = np.mod(out.labels + j * (si - sj), m)
    return out


# --------------------------------------------------------------------------
# vortex detection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Vortex:
    x: float
    y: float
    winding: int
    n_cells: int = 1


@dataclass(frozen=True)
class VortexSet:
    vortices: tuple

    @property
    def total_winding(self) -> int:
        return int(sum(v.winding for v in self.vortices))

    def positions(self) -> np.ndarray:
        return np.array([[v.x, v.y] for v in self.vortices]).reshape(-1, 2)


def _cell_windings(values: np.ndarray, cells: np.ndarray):
    """Integer winding of ``values`` around each cell; zero-corner cells masked."""
    c = values[cells]
    ok = np.min(np.abs(c), axis=1) > 0.0
    inc = np.angle(np.roll(c, -1, axis=1) * np.conjugate(c))
    w = np.zeros(cells.shape[0], dtype=np.int64)
    w[ok] = np.rint(inc[ok].sum(axis=1) / (2.0 * np.pi)).astype(np.int64)
    return w, ok


def detect_vortices(state: FieldState, grid, params) -> VortexSet:
    """Cells where p(u) winds, with |u| <= 0.3 core blobs merged."""
    params = _as_modulus(params)
    u = state.u
    pu = project_p(u, params)
    winding, ok = _cell_windings(pu, grid.cells)
    corner_min = np.min(np.abs(u[grid.cells]), axis=1)
    core = corner_min <= _CORE_MODULUS
    centers = grid.xy[grid.cells].mean(axis=1)

    out = []
    plain = ~core & ok & (winding != 0)
    for idx in np.flatnonzero(plain):
        out.append(Vortex(x=float(centers[idx, 0]), y=float(centers[idx, 1]),
                          winding=int(winding[idx])))

    core_ids = np.flatnonzero(core)
    if core_ids.size:
        ij = grid.ij[grid.cells[core_ids, 0]]
        lookup = {(int(a), int(b)): t for t, (a, b) in enumerate(ij)}
        parent = list(range(core_ids.size))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for t, (a, b) in enumerate(ij):
            for nb in ((a + 1, b), (a, b + 1)):
                s = lookup.get((int(nb[0]), int(nb[1])))
                if s is not None:
                    ra, rb = find(t), find(s)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
        groups = {}
        for t in range(core_ids.size):
            groups.setdefault(find(t), []).append(core_ids[t])
        for members in groups.values():
            members = np.asarray(members)
            w = int(winding[members].sum())
            spot = members[winding[members] != 0]
            pick = centers[spot if spot.size else members]
            out.append(Vortex(x=float(pick[:, 0].mean()),
                              y=float(pick[:, 1].mean()),
                              winding=w, n_cells=int(members.size)))
    return VortexSet(vortices=tuple(out))


# --------------------------------------------------------------------------
# jump-set extraction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpComponent:
    edges: tuple
    length: float
    vortex_count: int
    fit_rms: float
    junction_angles: tuple


@dataclass(frozen=True)
class JumpSet:
    components: tuple

    @property
    def total_length(self) -> float:
        return float(sum(c.length for c in self.components))


def _cell_sides(grid):
    """Edge ids of each cell's four sides (-1 where the side is unlabeled-able).

    Side order follows the CCW corner order (c00,c10,c11,c01); sides 0 and 1
    run along the stored edge orientation, sides 2 and 3 against it.
    """
    n = grid.n_nodes
    keys = grid.edges[:, 0] * n + grid.edges[:, 1]
    order = np.argsort(keys)
    skeys = keys[order]
    c = grid.cells

    def look(a, b):
        k = a * n + b
        posn = np.searchsorted(skeys, k)
        posn = np.minimum(posn, skeys.size - 1)
        hit = skeys[posn] == k
        res = np.where(hit, order[posn], -1)
        return res

    s0 = look(c[:, 0], c[:, 1])
    s1 = look(c[:, 1], c[:, 2])
    s2 = look(c[:, 3], c[:, 2])
    s3 = look(c[:, 0], c[:, 3])
    return np.stack([s0, s1, s2, s3], axis=1)


def label_vorticity(state: FieldState, grid, params) -> np.ndarray:
    """Per-cell defect of the label field: oriented label sum mod m."""
    params = _as_modulus(params)
    sides = _cell_sides(grid)
    k = np.where(sides >= 0, state.labels[np.maximum(sides, 0)], 0)
    raw = k[:, 0] + k[:, 1] - k[:, 2] - k[:, 3]
    return np.mod(raw, params.m)


def extract_jump_set(state: FieldState, grid, sim: SimParams) -> JumpSet:
    """Dual polylines of the labeled edges with structure statistics.

    Components are maximal sets of labeled edges connected through shared
    cells.  Each reports its dual length, the number of label-defect cells
    it touches (the vortices it carries), the worst straight-segment fit
    RMS over its chains, and junction angle estimates; cells within
    5 eps of a defect are excluded from the fits.
    """
    params = sim.params
    labeled = np.flatnonzero(state.labels != 0)
    if labeled.size == 0:
        return JumpSet(components=())

    sides = _cell_sides(grid)
    vort = label_vorticity(state, grid, params)
    centers = grid.xy[grid.cells].mean(axis=1)
    vortex_xy = centers[vort != 0]

    # incident cells of every edge
    E = grid.edges.shape[0]
    flat = sides.ravel()
    cell_of = np.repeat(np.arange(grid.cells.shape[0]), 4)
    good = flat >= 0
    f, ci = flat[good], cell_of[good]
    srt = np.argsort(f, kind="stable")
    f, ci = f[srt], ci[srt]
    left = np.searchsorted(f, np.arange(E), side="left")
    right = np.searchsorted(f, np.arange(E), side="right")
    cnt = right - left
    ecells = -np.ones((E, 2), dtype=np.int64)
    has1 = cnt >= 1
    ecells[has1, 0] = ci[left[has1]]
    has2 = cnt == 2
    ecells[has2, 1] = ci[left[has2] + 1]

    # union labeled edges sharing a cell
    parent = {int(e): int(e) for e in labeled}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    lab_set = set(int(e) for e in labeled)
    touched = np.unique(ecells[labeled][ecells[labeled] >= 0])
    for cell in touched:
        es = [int(e) for e in sides[cell] if e >= 0 and int(e) in lab_set]
        for other in es[1:]:
            ra, rb = find(es[0]), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for e in labeled:
        groups.setdefault(find(int(e)), []).append(int(e))

    comps = []
    for members in groups.values():
        members = sorted(members)
        cells_here = np.unique(ecells[members][ecells[members] >= 0])
        count = int(np.sum(vort[cells_here]))
        length = grid.h * len(members)
        fit_rms, angles = _component_geometry(
            members, ecells, centers, vortex_xy,
            sim.eps * _CORE_EXCLUSION_FACTOR)
        comps.append(JumpComponent(edges=tuple(members), length=length,
                                   vortex_count=count, fit_rms=fit_rms,
                                   junction_angles=tuple(angles)))
    comps.sort(key=lambda c: -c.length)
    return JumpSet(components=tuple(comps))


def _component_geometry(members, ecells, centers, vortex_xy, excl):
    """Chain fits and junction angles of one dual component."""
    adj = {}
    for e in members:
        ca, cb = ecells[e]
        if ca < 0 or cb < 0:
            continue
        adj.setdefault(int(ca), []).append(int(cb))
        adj.setdefault(int(cb), []).append(int(ca))
    if not adj:
        return 0.0, []

    deg = {c: len(v) for c, v in adj.items()}
    breakpoints = {c for c, d in deg.items() if d != 2}

    def is_excluded(c):
        if vortex_xy.size == 0:
            return False
        return bool(np.min(np.linalg.norm(vortex_xy - centers[c], axis=1)) < excl)

    # walk chains between breakpoints (or around cycles)
    seen = set()
    chains = []
    starts = sorted(breakpoints) if breakpoints else [min(adj)]
    for s in starts:
        for t in adj[s]:
            key = (min(s, t), max(s, t))
            if key in seen:
                continue
            chain = [s, t]
            seen.add(key)
            while chain[-1] not in breakpoints:
                nxt = [x for x in adj[chain[-1]] if x != chain[-2]]
                if not nxt:
                    break
                step = (min(chain[-1], nxt[0]), max(chain[-1], nxt[0]))
                if step in seen:
                    break
                seen.add(step)
                chain.append(nxt[0])
            chains.append(chain)

    worst = 0.0
    for chain in chains:
        pts = np.array([centers[c] for c in chain if not is_excluded(c)])
        if pts.shape[0] < 3:
            continue
        mean = pts.mean(axis=0)
        sv = np.linalg.svd(pts - mean, compute_uv=False)
        worst = max(worst, float(sv[-1]) / np.sqrt(pts.shape[0]))

    angles = []
    for c in sorted(breakpoints):
        if deg.get(c, 0) < 3 or is_excluded(c):
            continue
        dirs = []
        for t in set(adj[c]):
            # follow the whole straight branch; a staircase's local steps
            # alias the lattice axes, so fit the direction to all of it
            path = [c, t]
            while (len(path) < 400 and path[-1] not in breakpoints
                   and deg.get(path[-1], 0) == 2):
                nxt = [x for x in adj[path[-1]] if x != path[-2]]
                if not nxt:
                    break
                path.append(nxt[0])
            pts = centers[[p for p in path[1:] if not is_excluded(p)]]
            if pts.shape[0] == 0:
                continue
            offs = pts - centers[c]
            if pts.shape[0] >= 3:
                _, _, vt = np.linalg.svd(offs - offs.mean(axis=0))
                d = vt[0]
                if d @ offs.mean(axis=0) < 0.0:
                    d = -d
            else:
                d = offs.mean(axis=0)
            nd = np.linalg.norm(d)
            if nd > 1e-12:
                dirs.append(d / nd)
        for aa in range(len(dirs)):
            for bb in range(aa + 1, len(dirs)):
                cosang = float(np.clip(dirs[aa] @ dirs[bb], -1.0, 1.0))
                angles.append(np.degrees(np.arccos(cosang)))
    return worst, angles


# --------------------------------------------------------------------------
# energy expansion fit
# --------------------------------------------------------------------------


def energy_expansion_fit(runs):
    """Least squares of total vs |log eps|: returns (slope, intercept, rms)."""
    runs = list(runs)
    if len(runs) < 2:
        raise ConfigError("runs: need at least two (eps, total) pairs")
    eps = np.array([r[0] for r in runs], dtype=float)
    tot = np.array([r[1] for r in runs], dtype=float)
    if np.any(eps <= 0.0):
        raise ConfigError("runs: eps values must be positive")
    if np.max(eps) / np.min(eps) < 4.0:
        raise IllConditioned("eps range spans less than a factor 4")
    x = np.abs(np.log(eps))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, tot, rcond=None)
    resid = A @ coef - tot
    rms = float(np.sqrt(np.mean(resid**2)))
    return float(coef[0]), float(coef[1]), rms


# --------------------------------------------------------------------------
# 1D wall profile
# --------------------------------------------------------------------------


def optimal_wall_profile(eta: float, h: float, span: float = 12.0):
    """Discrete 1D wall: minimize the interface energy with psi(0) = 0.

    Returns (s, psi, energy) on s in [-span*eta, span*eta].  The continuum
    minimizer is 1 - exp(-|s|/eta) with energy exactly 1.
    """
    if eta <= 0.0 or h <= 0.0:
        raise ConfigError("eta, h: must be positive")
    if eta < 4.0 * h:
        raise ConfigError(f"eta: {eta} under-resolved at h={h}; need eta >= 4h")
    n = int(np.ceil(span * eta / h))
    N = 2 * n + 1
    s = h * (np.arange(N) - n)

    # free nodes everywhere except the clamped center
    main = np.full(N, 2.0 * eta / h + h / eta)
    main[0] -= eta / h
    main[-1] -= eta / h
    off = np.full(N - 1, -eta / h)
    b = np.full(N, h / eta)
    keep = np.arange(N) != n

    A = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    Ak = A[keep][:, keep]
    bk = b[keep]  # the clamped value is 0, so no boundary correction
    x = spsolve(Ak.tocsc(), bk)
    psi = np.zeros(N)
    psi[keep] = np.clip(x, 0.0, 1.0)

    d = np.diff(psi)
    energy = float(0.5 * eta / h * np.sum(d * d)
                   + h / (2.0 * eta) * np.sum((1.0 - psi) ** 2))
    return s, psi, energy


# --------------------------------------------------------------------------
# splitting diagnostic
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LMReport:
    """Outcome of the local splitting u = w phi on a vortex-free ball."""

    f_sharp: float
    e_reference: float
    grad_term: float
    jump_term: float
    slack: float
    margin: float

    @property
    def holds(self) -> bool:
        return self.margin >= 0.0


def lm_split_diagnostic(state: FieldState, grid, sim: SimParams, center,
                        radius: float, slack_fraction: float = 0.05) -> LMReport:
    """Check F0(u, ball) >= E(w, ball) + (1/8) grad(phi) + jump(phi) - slack.

    ``w`` is the jump-free minimizer of the Ginzburg-Landau energy on the
    ball among fields with the m-th-root boundary trace lifted from p(u);
    ``phi = u/w``.  Raises WindingObstruction when the ball carries winding
    (the root cannot exist) and RadiusTooSmall when the lattice cannot
    resolve the ball.
    """
    params = sim.params
    c = np.asarray([np.real(center), np.imag(center)] if np.iscomplexobj(
        np.asarray(center)) else center, dtype=float).reshape(2)
    if radius < 4.0 * grid.h:
        raise RadiusTooSmall(f"radius {radius} needs at least 4h = {4 * grid.h}")

    dist = np.linalg.norm(grid.xy - c, axis=1)
    ball = dist <= radius
    if not np.any(ball):
        raise RadiusTooSmall("ball contains no grid nodes")
    if np.any(ball & ~grid.interior):
        raise ConfigError("center/radius: ball must avoid the domain boundary")

    ids = np.flatnonzero(ball)
    local = -np.ones(grid.n_nodes, dtype=np.int64)
    local[ids] = np.arange(ids.size)

    e_in = ball[grid.edges[:, 0]] & ball[grid.edges[:, 1]]
    edges_g = grid.edges[e_in]
    edges_l = local[edges_g]
    labels_b = state.labels[e_in]

    cells_in = np.all(ball[grid.cells], axis=1)
    cw = np.zeros(ids.size)
    np.add.at(cw, local[grid.cells[cells_in]].ravel(), grid.h**2 / 4.0)

    u = state.u
    pu = project_p(u, params)
    wind, ok = _cell_windings(pu, grid.cells[cells_in])
    if np.any(wind[ok] != 0):
        raise WindingObstruction("ball contains a vortex of p(u)")

    # continuous m-th root of p(u) over the ball (exists iff no winding)
    try:
        w0 = lift_mth_root(pu[ids], edges_l, params)
    except NonzeroWinding as exc:
        raise WindingObstruction(str(exc)) from None

    # fix the trace on the discrete ball boundary, relax the inside
    nb = grid.neighbors[ids]
    outside = (nb < 0) | ~ball[np.maximum(nb, 0)]
    loop = np.any(outside, axis=1)
    free = ~loop

    eps2 = sim.eps * sim.eps
    ei, ej = edges_l[:, 0], edges_l[:, 1]

    def e_plain(w):
        return (0.5 * float(np.sum(_abs2(w[ei] - w[ej])))
                + float(np.sum(cw * (1.0 - _abs2(w)) ** 2)) / (4.0 * eps2))

    def g_plain(w):
        d = w[ei] - w[ej]
        g = _scatter_complex(w.size, ei, d)
        g += _scatter_complex(w.size, ej, -d)
        g -= cw * (1.0 - _abs2(w)) * w / eps2
        return g

    w = w0 / np.maximum(1.0, np.abs(w0))
    stepper = _BBStepper(free)
    f = e_plain(w)
    hist = [f]
    for _ in range(2000):
        w, f = stepper.step(w, f, g_plain(w), e_plain)
        hist.append(f)
        if len(hist) > 30 and hist[-30] - hist[-1] < 1e-12 * max(1.0, f):
            break

    a = _group_phases(params.m)[labels_b]
    du = u[ids][ei] - a * u[ids][ej]
    f_sharp = (0.5 * float(np.sum(_abs2(du)))
               + float(np.sum(cw * (1.0 - _abs2(u[ids])) ** 2)) / (4.0 * eps2)
               + grid.h * float(np.count_nonzero(labels_b)))

    wmod = np.where(np.abs(w) < 1e-12, 1e-12, w)
    phi = u[ids] / wmod
    dphi = phi[ei] - a * phi[ej]
    grad_term = 0.125 * float(np.sum(_abs2(dphi)))
    jump_term = grid.h * float(np.count_nonzero(labels_b))

    slack = slack_fraction * f_sharp
    margin = f_sharp + slack - (f + grad_term + jump_term)
    return LMReport(f_sharp=f_sharp, e_reference=f, grad_term=grad_term,
                    jump_term=jump_term, slack=slack, margin=float(margin))
