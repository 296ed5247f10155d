"""Twelve numbered end-to-end verification checks with stated tolerances.

Each ``check_NN_*`` function runs one verification and returns a
CheckResult.  Expensive shared work (converged minimizer runs, core-energy
tables, the energy-expansion sweep) is cached per process, so checks that
reuse it do not pay twice.  ``run_suite`` drives a selection of checks and
is what the ``verify`` CLI subcommand calls; tests/test_acceptance.py runs
every check as its own test.

Check 3 enumerates exact Steiner topologies on nine terminals, which takes
about half a minute; ``run_suite`` skips it unless ``large=True``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .domain import DomainSpec, build_grid
from .errors import WindingObstruction
from .quotient import ModulusParams, loop_winding, project_p, quotient_distance
from .renorm import (
    VortexConfig,
    core_energy_table,
    images_potential,
    limit_energy,
    neumann_solve,
    renormalized_energy_oracle,
    w_disk_exact,
)
from .simulate import (
    FieldState,
    SimParams,
    detect_vortices,
    energy_diffuse,
    energy_expansion_fit,
    energy_sharp,
    extract_jump_set,
    gauge_transform,
    grad_diffuse_u,
    grad_sharp_u,
    init_from_forest,
    lm_split_diagnostic,
    minimize_sharp,
    optimal_wall_profile,
    truncate,
)
from .steiner import lambda_mu, steiner_tree


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    ok: Optional[bool]          # None means skipped
    detail: str
    seconds: float

    @property
    def status(self) -> str:
        if self.ok is None:
            return "SKIP"
        return "PASS" if self.ok else "FAIL"

    def line(self) -> str:
        return (f"[{self.number:2d}] {self.status}  {self.name}"
                f"  ({self.seconds:.1f}s)  {self.detail}")


def _result(number, name, t0, ok, detail) -> CheckResult:
    return CheckResult(number=number, name=name, ok=ok, detail=detail,
                       seconds=time.time() - t0)


# --------------------------------------------------------------------------
# shared layouts and cached fixtures
# --------------------------------------------------------------------------


def six_point_layout(eps: float = 0.05) -> np.ndarray:
    """Three near-unit-circle pairs: Y_k offset by eps*exp(+-i pi/3)*Y_k."""
    pts = []
    for k in range(3):
        yk = np.exp(1j * (np.pi / 2 + 2 * np.pi * k / 3))
        for sgn in (1.0, -1.0):
            z = yk + eps * np.exp(sgn * 1j * np.pi / 3) * yk
            pts.append([z.real, z.imag])
    return np.array(pts)


def nine_point_layout(eps: float = 0.05, delta: float = 0.005,
                      theta_deg: float = 150.0) -> np.ndarray:
    """Two Y_k points replaced by eps-leg tips carrying delta-legs.

    Each delta-leg pair opens at +-theta off the eps-leg direction; at
    150 degrees the connected nine-terminal tree undercuts every split,
    which is what the check needs.
    """
    th = np.radians(theta_deg)
    yks = [np.exp(1j * (np.pi / 2 + 2 * np.pi * k / 3)) for k in range(3)]
    pts = []
    for yk in yks[:2]:
        for sgn in (1.0, -1.0):
            xk = yk + eps * np.exp(sgn * 1j * np.pi / 3) * yk
            u = (xk - yk) / eps
            for s2 in (1.0, -1.0):
                z = xk + delta * np.exp(s2 * 1j * th) * u
                pts.append([z.real, z.imag])
    pts.append([yks[2].real, yks[2].imag])
    return np.array(pts)


def _triplet(center: complex, radius: float, rot: float):
    return tuple(
        center + radius * np.exp(1j * (rot + np.pi / 2 + 2 * np.pi * k / 3))
        for k in range(3)
    )


# Converged-run roster shared by checks 9, 10, and 12: every (m, d) in
# {2,3} x {1,2}, all on the unit disk at h = 1/80.  Vortex positions are
# generic (they must not land on lattice nodes, where the canonical map is
# singular).  The m=3, d=2 run uses a smaller eps so the junction regions
# clear the 5*eps core exclusion around each vortex.
_PAIR = (0.3041 + 0.0137j, -0.3041 - 0.0137j)
_FIXTURE_DEFS = (
    ("m2d1", 2, 1, _PAIR, 0.05),
    ("m2d2", 2, 2,
     (-0.5241 + 0.3137j, -0.1841 + 0.2963j, 0.1841 - 0.2963j,
      0.5241 - 0.3137j), 0.05),
    ("m3d1", 3, 1, _triplet(0j, 0.45, 0.15), 0.05),
    ("m3d2", 3, 2,
     _triplet(-0.4041 + 0.2037j, 0.30, 0.15)
     + _triplet(0.4041 - 0.2037j, 0.30, -0.40), 0.03),
)
_FIXTURE_H = 0.0125


@dataclass
class FixtureRun:
    name: str
    m: int
    d: int
    grid: object
    sim: SimParams
    state: FieldState
    vortices: object
    jumps: object


@lru_cache(maxsize=1)
def converged_fixtures() -> tuple:
    runs = []
    for name, m, d, points, eps in _FIXTURE_DEFS:
        params = ModulusParams(m)
        cfg = VortexConfig(points=points, params=params, degree=d)
        pts = np.array([[z.real, z.imag] for z in points])
        _, forest = lambda_mu(pts, params)
        grid = build_grid(DomainSpec(shape="disk", h=_FIXTURE_H, degree=d))
        sim = SimParams(params=params, eps=eps, max_sweeps=8000, tol=1e-9)
        state = minimize_sharp(grid, sim, init=init_from_forest(forest, cfg, grid, sim))
        runs.append(FixtureRun(
            name=name, m=m, d=d, grid=grid, sim=sim, state=state,
            vortices=detect_vortices(state, grid, params),
            jumps=extract_jump_set(state, grid, sim),
        ))
    return tuple(runs)


@lru_cache(maxsize=4)
def _core_table(m: int):
    return core_energy_table(ModulusParams(m))


@lru_cache(maxsize=1)
def expansion_runs() -> tuple:
    """Sharp minimization of the m=2 pair over a geometric eps sequence."""
    params = ModulusParams(2)
    cfg = VortexConfig(points=_PAIR, params=params, degree=1)
    pts = np.array([[z.real, z.imag] for z in _PAIR])
    _, forest = lambda_mu(pts, params)
    runs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        grid = build_grid(DomainSpec(shape="disk", h=eps / 4.0, degree=1))
        sim = SimParams(params=params, eps=eps, max_sweeps=8000, tol=1e-9)
        st = minimize_sharp(grid, sim, init=init_from_forest(forest, cfg, grid, sim))
        runs.append((eps, energy_sharp(st, grid, sim).total))
    return tuple(runs)


# --------------------------------------------------------------------------
# small helpers
# --------------------------------------------------------------------------


def _brute_minimal_matching(pts: np.ndarray) -> float:
    """Exact minimum over perfect matchings of the pairwise distance sum."""
    n = pts.shape[0]
    dist = np.hypot(pts[:, None, 0] - pts[None, :, 0],
                    pts[:, None, 1] - pts[None, :, 1])
    best = np.inf

    def rec(rem, acc):
        nonlocal best
        if acc >= best:
            return
        if not rem:
            best = acc
            return
        i = rem[0]
        for j in rem[1:]:
            rec([t for t in rem if t != i and t != j], acc + dist[i, j])

    rec(list(range(n)), 0.0)
    return best


def _random_state(grid, m, rng, mod_lo=0.2, mod_hi=1.5) -> FieldState:
    n = grid.n_nodes
    mod = rng.uniform(mod_lo, mod_hi, n)
    u = mod * np.exp(2j * np.pi * rng.random(n))
    labels = rng.integers(0, m, grid.edges.shape[0])
    psi = rng.uniform(0.3, 1.0, n)
    return FieldState(u=u, labels=labels, psi=psi)


def _fd_gradient_error(grid, sim, state, diffuse: bool, rng) -> float:
    """Max relative error of the analytic u-gradient vs central differences."""
    cw = grid.node_cell_weight()
    if diffuse:
        grad = grad_diffuse_u(state.u, state.psi, grid, sim, cw)

        def f(u):
            return energy_diffuse(
                FieldState(u=u, labels=state.labels, psi=state.psi), grid, sim
            ).total
    else:
        grad = grad_sharp_u(state.u, state.labels, grid, sim, cw)

        def f(u):
            return energy_sharp(
                FieldState(u=u, labels=state.labels, psi=state.psi), grid, sim
            ).total

    step = 1e-6
    worst = 0.0
    for i in rng.choice(grid.n_nodes, size=12, replace=False):
        for direction in (1.0, 1.0j):
            up = state.u.copy()
            up[i] += step * direction
            um = state.u.copy()
            um[i] -= step * direction
            fd = (f(up) - f(um)) / (2.0 * step)
            an = grad[i].real if direction == 1.0 else grad[i].imag
            worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    return worst


def _ball_sweep(run: FixtureRun, radius: float = 0.15):
    """LM diagnostics on a deterministic ring of vortex-free balls."""
    vxy = run.vortices.positions()
    vz = vxy[:, 0] + 1j * vxy[:, 1] if vxy.size else np.zeros(0, dtype=complex)
    centers = [0.55 * np.exp(1j * np.pi * (0.25 + k / 4)) for k in range(8)]
    centers.append(0j)
    reports = []
    for c in centers:
        if abs(c) + radius > 1.0 - 2 * run.grid.h:
            continue
        if vz.size and np.min(np.abs(vz - c)) < radius + 2 * run.sim.eps:
            continue
        try:
            rep = lm_split_diagnostic(run.state, run.grid, run.sim, c, radius)
        except WindingObstruction:
            continue
        reports.append((c, rep))
    return reports


# --------------------------------------------------------------------------
# the twelve checks
# --------------------------------------------------------------------------


def check_01_minimal_connection() -> CheckResult:
    """m=2 connection length equals brute-force matching; d disjoint segments."""
    t0 = time.time()
    rng = np.random.default_rng(20260825)
    worst_gap = 0.0
    n_cfg = 50
    for _ in range(n_cfg):
        d = int(rng.integers(1, 5))
        while True:
            pts = rng.uniform(-1.0, 1.0, (2 * d, 2))
            dz = np.hypot(pts[:, None, 0] - pts[None, :, 0],
                          pts[:, None, 1] - pts[None, :, 1])
            if np.min(dz + np.eye(2 * d) * 9) > 1e-2:
                break
        value, forest = lambda_mu(pts, ModulusParams(2))
        brute = _brute_minimal_matching(pts)
        worst_gap = max(worst_gap, abs(value - brute))
        deg = forest.degrees()
        structure = (
            forest.steiner_points.size == 0
            and forest.edges.shape[0] == d
            and np.all(deg[: 2 * d] == 1)
            and len(forest.components) == d
            and all(len(c) == 2 for c in forest.components)
        )
        if worst_gap > 1e-9 or not structure:
            return _result(1, "minimal connection equals brute-force matching",
                           t0, False,
                           f"gap={worst_gap:.2e} structure_ok={structure}")
    return _result(1, "minimal connection equals brute-force matching", t0,
                   True, f"{n_cfg} random configs, worst gap {worst_gap:.2e}")


def check_02_six_point_connected() -> CheckResult:
    """Six-point m=3 instance: connected winner beating every 3+3 split."""
    t0 = time.time()
    eps = 0.05
    pts = six_point_layout(eps)
    value, forest = lambda_mu(pts, ModulusParams(3))
    connected = len(forest.components) == 1
    bound = 3.0 + 6.0 * eps
    best_split = np.inf
    seen = set()
    from itertools import combinations

    for block in combinations(range(6), 3):
        if 0 not in block:
            continue
        rest = tuple(sorted(set(range(6)) - set(block)))
        if (block, rest) in seen:
            continue
        seen.add((block, rest))
        split = (steiner_tree(pts[list(block)]).total_length
                 + steiner_tree(pts[list(rest)]).total_length)
        best_split = min(best_split, split)
    ok = connected and value <= bound * (1.0 + 1e-9) and best_split > value
    return _result(2, "six-point connection is connected and under bound", t0,
                   ok,
                   f"length={value:.6f} bound={bound:.3f} connected={connected} "
                   f"best split={best_split:.6f} (margin {best_split - value:+.6f})")


def check_03_nine_point_connected() -> CheckResult:
    """Nine-point instance stays connected under the 3+4eps+8delta bound."""
    t0 = time.time()
    eps, delta = 0.05, 0.005
    pts = nine_point_layout(eps, delta)
    value, forest = lambda_mu(pts, ModulusParams(3), large=True)
    connected = len(forest.components) == 1
    bound = 3.0 + 4.0 * eps + 8.0 * delta
    ok = connected and value <= bound * (1.0 + 1e-9)
    return _result(3, "nine-point connection is connected and under bound", t0,
                   ok, f"length={value:.6f} bound={bound:.3f} connected={connected}")


def check_04_renormalized_energy_vs_oracle() -> CheckResult:
    """Potential-formula energy matches the puncture quadrature as r -> 0."""
    t0 = time.time()
    params = ModulusParams(2)
    cfg = VortexConfig(points=(0.3 + 0j, -0.3 + 0j), params=params, degree=1)
    spec = DomainSpec(shape="disk", h=2e-3, degree=1)
    grid = build_grid(spec)
    from .renorm import canonical_map

    cmap = canonical_map(cfg, grid)
    formula = w_disk_exact(cfg, spec)
    gaps = []
    for r in (0.1, 0.05, 0.02, 0.01):
        oracle = renormalized_energy_oracle(cfg, spec, r, cmap=cmap, grid=grid)
        gaps.append(abs(formula - oracle))
    decreasing = all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))
    ok = decreasing and gaps[-1] <= 1e-2
    return _result(4, "renormalized energy formula matches finite-part oracle",
                   t0, ok,
                   "gaps " + " ".join(f"{g:.2e}" for g in gaps)
                   + f" decreasing={decreasing}")


def check_05_neumann_vs_images() -> CheckResult:
    """Lattice potential agrees with the reflected-source disk potential."""
    t0 = time.time()
    params = ModulusParams(2)
    cfg = VortexConfig(points=_PAIR, params=params, degree=1)
    grid = build_grid(DomainSpec(shape="disk", h=5e-3, degree=1))
    pot = neumann_solve(cfg, grid)
    ref = images_potential(grid.xy[grid.interior], cfg.points)
    err = float(np.max(np.abs(pot.phi_full[grid.interior] - ref)))
    ok = err <= 5e-4
    return _result(5, "Neumann potential matches method-of-images oracle", t0,
                   ok, f"max interior error {err:.2e} (tol 5e-4)")


def check_06_core_energy_monotone_slope() -> CheckResult:
    """gamma_m(R) non-increasing; energy log-slope near pi/m^2 for m=2,3."""
    t0 = time.time()
    details = []
    ok = True
    for m in (2, 3):
        tab = _core_table(m)
        gam = [row.gamma for row in tab.rows]
        monotone = all(gam[i + 1] <= gam[i] + 1e-3 for i in range(len(gam) - 1))
        ideal = np.pi / m**2
        dev = abs(tab.slope - ideal) / ideal
        ok = ok and monotone and dev <= 0.05
        details.append(f"m={m}: monotone={monotone} slope dev {dev * 100:.2f}%")
    return _result(6, "core energy is monotone with the right log-slope", t0,
                   ok, "; ".join(details))


def check_07_wall_profile() -> CheckResult:
    """1D wall profile: unit energy and the exponential shape at eta/h=20."""
    t0 = time.time()
    eta, h = 0.2, 0.01
    s, psi, energy = optimal_wall_profile(eta, h)
    sup = float(np.max(np.abs(psi - (1.0 - np.exp(-np.abs(s) / eta)))))
    ok = abs(energy - 1.0) <= 0.02 and sup <= 1e-2
    return _result(7, "1D optimal wall profile", t0, ok,
                   f"energy={energy:.5f} sup profile error {sup:.2e}")


def check_08_energy_expansion() -> CheckResult:
    """Minimized sharp energy grows like (pi/2)|log eps| for the m=2 pair.

    Also compares the fitted intercept to the additive limit energy
    (renormalized energy / m^2 + core terms + connection length), which
    carries a loose 20% tolerance: the core-energy extrapolation and the
    lattice length anisotropy both enter it.
    """
    t0 = time.time()
    runs = expansion_runs()
    slope, intercept, rms = energy_expansion_fit(runs)
    ideal = np.pi / 2.0
    dev = abs(slope - ideal) / ideal
    params = ModulusParams(2)
    cfg = VortexConfig(points=_PAIR, params=params, degree=1)
    pts = np.array([[z.real, z.imag] for z in _PAIR])
    lam, _ = lambda_mu(pts, params)
    le = limit_energy(cfg, DomainSpec(shape="disk", h=0.0125, degree=1),
                      _core_table(2).gamma_estimate, lam)
    igap = abs(intercept - le.total) / abs(le.total)
    ok = dev <= 0.10 and igap <= 0.20
    return _result(8, "energy expansion slope and intercept", t0, ok,
                   f"slope={slope:.4f} (dev {dev * 100:.2f}% of pi/2) "
                   f"intercept={intercept:.4f} vs limit {le.total:.4f} "
                   f"(gap {igap * 100:.1f}%)")


def check_09_topological_constraint() -> CheckResult:
    """Each jump component carries 0 mod m vortices; winding totals m*d."""
    t0 = time.time()
    details = []
    ok = True
    for run in converged_fixtures():
        counts = [c.vortex_count for c in run.jumps.components]
        good = (run.state.converged
                and all(c % run.m == 0 for c in counts)
                and run.vortices.total_winding == run.m * run.d)
        ok = ok and good
        details.append(f"{run.name}: winding {run.vortices.total_winding}"
                       f"/{run.m * run.d}, counts {counts}")
    return _result(9, "jump components carry multiples of m vortices", t0, ok,
                   "; ".join(details))


def check_10_structure_away_from_vortices() -> CheckResult:
    """Jump polylines outside the cores are straight with 120-degree forks."""
    t0 = time.time()
    max_rms_h = 0.0
    angles = []
    for run in converged_fixtures():
        for comp in run.jumps.components:
            max_rms_h = max(max_rms_h, comp.fit_rms / run.grid.h)
            angles.extend(comp.junction_angles)
    max_dev = max((abs(a - 120.0) for a in angles), default=np.inf)
    ok = max_rms_h <= 2.0 and len(angles) >= 6 and max_dev <= 10.0
    return _result(10, "jump sets are straight with 120-degree junctions", t0,
                   ok,
                   f"max rms {max_rms_h:.2f}h; {len(angles)} junction angles, "
                   f"max deviation {max_dev:.1f} deg")


def check_11_invariant_suites() -> CheckResult:
    """Gradients, truncation, gauge covariance, winding, metric identities."""
    t0 = time.time()
    rng = np.random.default_rng(11)
    grid = build_grid(DomainSpec(shape="disk", h=0.15, degree=1))
    failures = []

    # analytic gradient vs central differences
    worst_fd = 0.0
    for m in (2, 3):
        sim = SimParams(params=ModulusParams(m), eps=0.5, eta=0.8)
        st = _random_state(grid, m, rng)
        worst_fd = max(worst_fd, _fd_gradient_error(grid, sim, st, False, rng))
        worst_fd = max(worst_fd, _fd_gradient_error(grid, sim, st, True, rng))
    if worst_fd > 1e-6:
        failures.append(f"gradient error {worst_fd:.2e}")

    # truncation never increases either energy
    sim2 = SimParams(params=ModulusParams(2), eps=0.5, eta=0.8)
    for _ in range(20):
        st = _random_state(grid, 2, rng)
        cut = truncate(st)
        for fn in (energy_sharp, energy_diffuse):
            before = fn(st, grid, sim2).total
            after = fn(cut, grid, sim2).total
            if after > before + 1e-12 * max(1.0, abs(before)):
                failures.append(f"truncation raised {fn.__name__}")

    # gauge covariance of the sharp energy: global rotations preserve the
    # total exactly; arbitrary node sets preserve the smooth parts and the
    # projected field p(u), while the jump set moves with the set boundary
    for m in (2, 3):
        params_m = ModulusParams(m)
        simm = SimParams(params=params_m, eps=0.5)
        st = _random_state(grid, m, rng)
        before = energy_sharp(st, grid, simm)
        p_before = project_p(st.u, params_m)
        full = np.ones(grid.n_nodes, dtype=bool)
        for j in range(1, m):
            st2 = gauge_transform(st, grid, params_m, full, j)
            gap = abs(energy_sharp(st2, grid, simm).total - before.total)
            if gap > 1e-12 * max(1.0, before.total):
                failures.append(f"global gauge m={m} j={j} gap {gap:.2e}")
            mask = rng.random(grid.n_nodes) < 0.5
            st3 = gauge_transform(st, grid, params_m, mask, j)
            after = energy_sharp(st3, grid, simm)
            smooth_gap = max(
                abs(after.quotient_dirichlet - before.quotient_dirichlet),
                abs(after.potential - before.potential))
            if smooth_gap > 1e-12 * max(1.0, before.total):
                failures.append(f"gauge m={m} j={j} gap {smooth_gap:.2e}")
            if np.max(np.abs(project_p(st3.u, params_m) - p_before)) > 1e-12:
                failures.append(f"gauge m={m} j={j} moved p(u)")

    # winding additivity: cell windings of p(u) sum to the ring winding
    from .simulate import _cell_windings
    from .steiner import construct_competitor_field

    for m, d, points in ((2, 1, _PAIR), (3, 1, _triplet(0j, 0.45, 0.15))):
        params = ModulusParams(m)
        cfg = VortexConfig(points=points, params=params, degree=d)
        pts = np.array([[z.real, z.imag] for z in points])
        _, forest = lambda_mu(pts, params)
        grid_c = build_grid(DomainSpec(shape="disk", h=0.05, degree=d))
        u, _ = construct_competitor_field(forest, cfg, grid_c)
        v = project_p(u, params)
        cells = int(np.sum(_cell_windings(v, grid_c.cells)))
        ring = loop_winding(v[grid_c.ring_order])
        if cells != ring or ring != m * d:
            failures.append(f"winding m={m}: cells {cells} ring {ring}")

    # quotient metric identities on random triples
    for m in (2, 3, 5):
        params = ModulusParams(m)
        z = rng.normal(size=(200, 3)) + 1j * rng.normal(size=(200, 3))
        d12 = quotient_distance(z[:, 0], z[:, 1], params)
        d21 = quotient_distance(z[:, 1], z[:, 0], params)
        d13 = quotient_distance(z[:, 0], z[:, 2], params)
        d23 = quotient_distance(z[:, 1], z[:, 2], params)
        rot = quotient_distance(params.a * z[:, 0], z[:, 1], params)
        if np.max(np.abs(d12 - d21)) > 1e-12:
            failures.append("metric not symmetric")
        if np.max(np.abs(d12 - rot)) > 1e-12:
            failures.append("metric not group-invariant")
        if np.any(d12 > np.abs(z[:, 0] - z[:, 1]) + 1e-12):
            failures.append("metric above the plane distance")
        if np.any(d13 > d12 + d23 + 1e-12):
            failures.append("triangle inequality fails")
        if np.max(quotient_distance(z[:, 0], z[:, 0], params)) > 1e-12:
            failures.append("nonzero self-distance")

    ok = not failures
    detail = (f"gradient {worst_fd:.2e}; all invariants hold" if ok
              else "; ".join(failures[:4]))
    return _result(11, "invariant suites", t0, ok, detail)


def check_12_lm_diagnostic() -> CheckResult:
    """Splitting lower bound holds on every sampled vortex-free ball."""
    t0 = time.time()
    total = 0
    worst = np.inf
    bad = []
    for run in converged_fixtures():
        for c, rep in _ball_sweep(run):
            total += 1
            worst = min(worst, rep.margin)
            if not rep.holds:
                bad.append(f"{run.name}@({c.real:+.2f},{c.imag:+.2f})")
    ok = total >= 10 and not bad
    detail = f"{total} balls, worst margin {worst:+.5f}"
    if bad:
        detail += "; failed: " + ", ".join(bad)
    return _result(12, "splitting lower bound on vortex-free balls", t0, ok,
                   detail)


# --------------------------------------------------------------------------
# suite driver and reference examples
# --------------------------------------------------------------------------


ALL_CHECKS = (
    check_01_minimal_connection,
    check_02_six_point_connected,
    check_03_nine_point_connected,
    check_04_renormalized_energy_vs_oracle,
    check_05_neumann_vs_images,
    check_06_core_energy_monotone_slope,
    check_07_wall_profile,
    check_08_energy_expansion,
    check_09_topological_constraint,
    check_10_structure_away_from_vortices,
    check_11_invariant_suites,
    check_12_lm_diagnostic,
)

_LARGE_ONLY = {3}


def run_suite(numbers=None, large: bool = False):
    """Run the selected checks (all twelve by default).

    Returns (results, all_ok).  Checks in the large set are skipped unless
    ``large`` is set; skipped checks do not affect all_ok.
    """
    wanted = set(numbers) if numbers else set(range(1, 13))
    results = []
    for idx, fn in enumerate(ALL_CHECKS, start=1):
        if idx not in wanted:
            continue
        if idx in _LARGE_ONLY and not large:
            results.append(CheckResult(
                number=idx, name=fn.__doc__.splitlines()[0].rstrip("."),
                ok=None, detail="skipped (rerun with --large)", seconds=0.0))
            continue
        results.append(fn())
    all_ok = all(r.ok for r in results if r.ok is not None)
    return results, all_ok


def reference_examples(large: bool = True, seed: int = 7):
    """Structural checks of the named connection instances.

    Returns a list of (name, ok, detail, forest) tuples covering the
    six-point instance (connected, length under 3 + 6 eps), the nine-point
    instance (connected, under 3 + 4 eps + 8 delta; needs ``large``), and
    a random m=2, d=3 instance (three disjoint segments).
    """
    out = []
    eps = 0.05
    pts = six_point_layout(eps)
    value, forest = lambda_mu(pts, ModulusParams(3))
    ok = (len(forest.components) == 1
          and value <= (3.0 + 6.0 * eps) * (1.0 + 1e-9))
    out.append(("six-point", ok,
                f"length={value:.6f} bound={3.0 + 6.0 * eps:.3f} "
                f"components={len(forest.components)}", forest))
    if large:
        delta = 0.005
        pts = nine_point_layout(eps, delta)
        value, forest = lambda_mu(pts, ModulusParams(3), large=True)
        ok = (len(forest.components) == 1
              and value <= (3.0 + 4.0 * eps + 8.0 * delta) * (1.0 + 1e-9))
        out.append(("nine-point", ok,
                    f"length={value:.6f} bound={3.0 + 4.0 * eps + 8.0 * delta:.3f} "
                    f"components={len(forest.components)}", forest))
    rng = np.random.default_rng(seed)
    while True:
        pts = rng.uniform(-1.0, 1.0, (6, 2))
        dz = np.hypot(pts[:, None, 0] - pts[None, :, 0],
                      pts[:, None, 1] - pts[None, :, 1])
        if np.min(dz + np.eye(6) * 9) > 0.1:
            break
    value, forest = lambda_mu(pts, ModulusParams(2))
    deg = forest.degrees()
    ok = (forest.steiner_points.size == 0 and forest.edges.shape[0] == 3
          and np.all(deg[:6] == 1) and len(forest.components) == 3)
    out.append(("random-pairing", ok,
                f"length={value:.6f} segments={forest.edges.shape[0]}", forest))
    return out
