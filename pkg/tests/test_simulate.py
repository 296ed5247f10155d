import numpy as np
import pytest

from fracvortex.domain import DomainSpec, build_grid
from fracvortex.errors import (
    ConfigError,
    IllConditioned,
    IterationCap,
    RadiusTooSmall,
    WindingObstruction,
)
from fracvortex.quotient import ModulusParams, project_p, quotient_distance
from fracvortex.renorm import VortexConfig, canonical_map
from fracvortex.simulate import (
    EnergyBreakdown,
    FieldState,
    SimParams,
    _best_labels,
    detect_vortices,
    energy_diffuse,
    energy_expansion_fit,
    energy_sharp,
    extract_jump_set,
    gauge_transform,
    grad_diffuse_u,
    grad_sharp_u,
    init_from_forest,
    init_random,
    init_smooth,
    label_vorticity,
    lm_split_diagnostic,
    minimize_diffuse,
    minimize_sharp,
    optimal_wall_profile,
    truncate,
)
from fracvortex.steiner import lambda_mu

M2 = ModulusParams(2)
M3 = ModulusParams(3)
PAIR = (0.3041 + 0.0137j, -0.3041 - 0.0137j)


# --------------------------------------------------------------------------
# shared instances
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def coarse_grid():
    return build_grid(DomainSpec(shape="disk", h=0.15, degree=1))


@pytest.fixture(scope="module")
def pair_problem():
    grid = build_grid(DomainSpec(shape="disk", h=0.025, degree=1))
    cfg = VortexConfig(points=PAIR, params=M2, degree=1)
    value, forest = lambda_mu(cfg.as_xy(), M2)
    return grid, cfg, value, forest


@pytest.fixture(scope="module")
def pair_sharp(pair_problem):
    grid, cfg, _, forest = pair_problem
    sim = SimParams(params=M2, eps=0.1, max_sweeps=4000, tol=1e-9)
    state = minimize_sharp(grid, sim,
                           init=init_from_forest(forest, cfg, grid, sim))
    return grid, sim, state


@pytest.fixture(scope="module")
def pair_diffuse(pair_problem):
    grid, cfg, _, forest = pair_problem
    sim = SimParams(params=M2, eps=0.1, eta=0.1, max_sweeps=4000, tol=1e-9)
    state = minimize_diffuse(grid, sim,
                             init=init_from_forest(forest, cfg, grid, sim))
    return grid, sim, state


def random_state(grid, m, rng, with_labels=True):
    mod = rng.uniform(0.2, 1.5, grid.n_nodes)
    u = mod * np.exp(2j * np.pi * rng.uniform(size=grid.n_nodes))
    labels = (rng.integers(0, m, grid.edges.shape[0])
              if with_labels else np.zeros(grid.edges.shape[0], dtype=np.int64))
    psi = rng.uniform(0.3, 1.0, grid.n_nodes)
    return FieldState(u=u, labels=labels.astype(np.int64), psi=psi)


# --------------------------------------------------------------------------
# parameter validation
# --------------------------------------------------------------------------


def test_simparams_validation():
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.0)
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.1, eta=-0.1)
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.1, tol=0.0)
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.1, max_sweeps=0)
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.1, window=0)


def test_check_grid_resolution(coarse_grid):
    grid = coarse_grid  # h = 0.15
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.25).check_grid(grid)  # eps < 2h
    SimParams(params=M2, eps=0.4).check_grid(grid)
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.5).check_grid(grid, diffuse=True)  # eta = 0
    with pytest.raises(ConfigError):
        SimParams(params=M2, eps=0.5, eta=0.5).check_grid(grid, diffuse=True)
    SimParams(params=M2, eps=0.5, eta=0.8).check_grid(grid, diffuse=True)


# --------------------------------------------------------------------------
# energies against brute-force sums
# --------------------------------------------------------------------------


def test_energy_sharp_matches_brute_force(coarse_grid):
    grid = coarse_grid
    rng = np.random.default_rng(5)
    for m in (M2, M3):
        sim = SimParams(params=m, eps=0.4)
        state = random_state(grid, m.m, rng)
        br = energy_sharp(state, grid, sim)
        a = np.exp(2j * np.pi / m.m)
        qd = sum(0.5 * abs(state.u[i] - a**k * state.u[j]) ** 2
                 for (i, j), k in zip(grid.edges, state.labels))
        cw = grid.node_cell_weight()
        pot = sum(cw[i] * (1.0 - abs(state.u[i]) ** 2) ** 2
                  for i in range(grid.n_nodes)) / (4.0 * sim.eps**2)
        jump = grid.h * int(np.count_nonzero(state.labels))
        assert np.isclose(br.quotient_dirichlet, qd, rtol=1e-12)
        assert np.isclose(br.potential, pot, rtol=1e-12)
        assert np.isclose(br.jump_length, jump, rtol=0, atol=0)
        assert br.at_wall == 0.0
        assert np.isclose(br.total, qd + pot + jump, rtol=1e-12)


def test_energy_diffuse_matches_brute_force(coarse_grid):
    grid = coarse_grid
    rng = np.random.default_rng(6)
    for m in (M2, M3):
        sim = SimParams(params=m, eps=0.4, eta=0.8)
        state = random_state(grid, m.m, rng)
        br = energy_diffuse(state, grid, sim)
        psi = state.psi
        qd = 0.0
        wall_grad = 0.0
        for i, j in grid.edges:
            dm2 = quotient_distance(state.u[i], state.u[j], m) ** 2
            d2 = abs(state.u[i] - state.u[j]) ** 2
            pb = 0.5 * (psi[i] + psi[j])
            qd += 0.5 * (dm2 + pb**2 * (d2 - dm2))
            wall_grad += (psi[i] - psi[j]) ** 2
        cw = grid.node_cell_weight()
        pot = float(np.sum(cw * (1.0 - np.abs(state.u) ** 2) ** 2)
                    / (4.0 * sim.eps**2))
        wall = (0.5 * sim.eta * wall_grad
                + float(np.sum(cw * (1.0 - psi) ** 2)) / (2.0 * sim.eta))
        assert np.isclose(br.quotient_dirichlet, qd, rtol=1e-10)
        assert np.isclose(br.potential, pot, rtol=1e-12)
        assert br.jump_length == 0.0
        assert np.isclose(br.at_wall, wall, rtol=1e-12)


def test_energy_diffuse_needs_eta(coarse_grid):
    sim = SimParams(params=M2, eps=0.4)  # eta defaults to 0
    state = init_smooth(coarse_grid, sim)
    with pytest.raises(ConfigError):
        energy_diffuse(state, coarse_grid, sim)


def test_breakdown_total_is_exact_sum():
    br = EnergyBreakdown(quotient_dirichlet=1.25, potential=0.5,
                         jump_length=0.125, at_wall=2.0)
    assert br.total == 1.25 + 0.5 + 0.125 + 2.0


# --------------------------------------------------------------------------
# gradients, truncation, gauge moves
# --------------------------------------------------------------------------


def _fd_worst_error(grid, sim, state, diffuse, rng, n_nodes=8):
    if diffuse:
        g = grad_diffuse_u(state.u, state.psi, grid, sim)

        def f(u):
            return energy_diffuse(FieldState(u=u, labels=state.labels,
                                             psi=state.psi), grid, sim).total
    else:
        g = grad_sharp_u(state.u, state.labels, grid, sim)

        def f(u):
            return energy_sharp(FieldState(u=u, labels=state.labels,
                                           psi=state.psi), grid, sim).total

    ids = rng.choice(np.flatnonzero(grid.interior), size=n_nodes,
                     replace=False)
    step = 1e-6
    worst = 0.0
    for i in ids:
        for direction in (1.0, 1j):
            up = state.u.copy()
            up[i] += step * direction
            um = state.u.copy()
            um[i] -= step * direction
            fd = (f(up) - f(um)) / (2.0 * step)
            an = g[i].real if direction == 1.0 else g[i].imag
            worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    return worst


def test_gradients_match_finite_differences(coarse_grid):
    grid = coarse_grid
    rng = np.random.default_rng(7)
    for m in (M2, M3):
        sharp = SimParams(params=m, eps=0.5)
        diffuse = SimParams(params=m, eps=0.5, eta=0.8)
        state = random_state(grid, m.m, rng)
        assert _fd_worst_error(grid, sharp, state, False, rng) <= 1e-6
        assert _fd_worst_error(grid, diffuse, state, True, rng) <= 1e-6


def test_truncation_never_increases_energy(coarse_grid):
    grid = coarse_grid
    rng = np.random.default_rng(8)
    sharp = SimParams(params=M2, eps=0.4)
    diffuse = SimParams(params=M2, eps=0.4, eta=0.8)
    for _ in range(20):
        state = random_state(grid, 2, rng)
        cut = truncate(state)
        assert np.all(np.abs(cut.u) <= 1.0 + 1e-15)
        assert (energy_sharp(cut, grid, sharp).total
                <= energy_sharp(state, grid, sharp).total + 1e-12)
        assert (energy_diffuse(cut, grid, diffuse).total
                <= energy_diffuse(state, grid, diffuse).total + 1e-12)


def test_gauge_transform_covariance(coarse_grid):
    grid = coarse_grid
    rng = np.random.default_rng(9)
    for m in (M2, M3):
        sim = SimParams(params=m, eps=0.4)
        state = random_state(grid, m.m, rng)
        e0 = energy_sharp(state, grid, sim)
        # global gauge: labels unchanged, the whole breakdown is invariant
        full = np.ones(grid.n_nodes, dtype=bool)
        for j in range(m.m):
            moved = gauge_transform(state, grid, m, full, j)
            e1 = energy_sharp(moved, grid, sim)
            assert abs(e1.total - e0.total) <= 1e-12 * max(1.0, e0.total)
            assert np.array_equal(moved.labels, state.labels)
        # partial gauge: the smooth parts and p(u) are invariant, labels
        # compensate (the jump set itself moves with the set boundary)
        p0 = project_p(state.u, m)
        for j in range(1, m.m):
            mask = rng.uniform(size=grid.n_nodes) < 0.5
            moved = gauge_transform(state, grid, m, mask, j)
            e1 = energy_sharp(moved, grid, sim)
            scale = max(1.0, e0.quotient_dirichlet)
            assert abs(e1.quotient_dirichlet
                       - e0.quotient_dirichlet) <= 1e-12 * scale
            assert abs(e1.potential - e0.potential) <= 1e-12 * max(
                1.0, e0.potential)
            assert np.max(np.abs(project_p(moved.u, m) - p0)) <= 1e-12


def test_best_labels_exact_per_edge(coarse_grid):
    grid = coarse_grid
    rng = np.random.default_rng(10)
    E = grid.edges.shape[0]
    for m in (M2, M3):
        u = (rng.uniform(0.2, 1.5, grid.n_nodes)
             * np.exp(2j * np.pi * rng.uniform(size=grid.n_nodes)))
        forced = rng.uniform(size=E) < 0.3
        labels = _best_labels(u, grid, m, forced, grid.h)
        a = np.exp(2j * np.pi / m.m)
        for e in range(E):
            i, j = grid.edges[e]
            if forced[e]:
                assert labels[e] == 0
                continue
            costs = [0.5 * abs(u[i] - a**k * u[j]) ** 2
                     + (grid.h if k else 0.0) for k in range(m.m)]
            best = min(costs)
            assert np.isclose(costs[labels[e]], best, rtol=0, atol=1e-14)
            # ties resolve to the smallest label
            assert labels[e] == int(np.argmin(costs))


def test_best_labels_tie_prefers_zero(coarse_grid):
    # orthogonal endpoint values make k = 0 and k = 1 cost-equal at h = 0
    grid = coarse_grid
    u = np.ones(grid.n_nodes, dtype=complex)
    i, j = grid.edges[0]
    u[j] = 1j
    labels = _best_labels(u, grid, M2,
                          np.zeros(grid.edges.shape[0], dtype=bool), 0.0)
    assert labels[0] == 0


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------


def test_init_smooth_is_bounded_unit_boundary(coarse_grid):
    grid = coarse_grid
    sim = SimParams(params=M2, eps=0.4)
    st = init_smooth(grid, sim)
    assert np.all(np.abs(st.u) <= 1.0 + 1e-12)
    assert np.allclose(np.abs(st.u[~grid.interior]), 1.0)
    assert not st.labels.any()
    assert np.all(st.psi == 1.0)


def test_init_random_seeded(coarse_grid):
    grid = coarse_grid
    a = init_random(grid, SimParams(params=M2, eps=0.4, seed=3))
    b = init_random(grid, SimParams(params=M2, eps=0.4, seed=3))
    c = init_random(grid, SimParams(params=M2, eps=0.4, seed=4))
    assert np.array_equal(a.u, b.u)
    assert not np.array_equal(a.u, c.u)
    assert np.allclose(np.abs(a.u), 1.0)


def test_init_from_forest_projects_to_canonical_map(pair_problem):
    grid, cfg, _, forest = pair_problem
    sim = SimParams(params=M2, eps=0.1)
    st = init_from_forest(forest, cfg, grid, sim)
    v = canonical_map(cfg, grid).v_nodes()
    assert np.max(np.abs(project_p(st.u, M2) - v)) <= 1e-8
    # jumps only across the cut: labeled edges match the forest footprint
    assert st.labels.any()
    js = extract_jump_set(st, grid, sim)
    assert len(js.components) == 1
    ratio = js.total_length / forest.total_length
    assert 0.95 <= ratio <= 1.2


def test_init_from_forest_seeds_wall_profile(pair_problem):
    grid, cfg, _, forest = pair_problem
    sim = SimParams(params=M2, eps=0.1, eta=0.1)
    st = init_from_forest(forest, cfg, grid, sim)
    psi = st.psi
    assert np.all((0.0 <= psi) & (psi <= 1.0))
    assert np.allclose(psi[~grid.interior], 1.0)
    seg = forest.edge_segments()
    dist = np.full(grid.n_nodes, np.inf)
    for a, b in seg:
        ab = b - a
        t = np.clip(((grid.xy - a) @ ab) / float(ab @ ab), 0.0, 1.0)
        dist = np.minimum(dist,
                          np.linalg.norm(grid.xy - (a + t[:, None] * ab),
                                         axis=1))
    inner = grid.interior
    model = 1.0 - np.exp(-dist / sim.eta)
    assert np.max(np.abs(psi[inner] - model[inner])) <= 1e-12


def test_competitor_dirichlet_close_to_canonical(pair_problem):
    grid, cfg, _, forest = pair_problem
    sim = SimParams(params=M2, eps=0.1)
    st = init_from_forest(forest, cfg, grid, sim)
    e = energy_sharp(st, grid, sim)
    v = canonical_map(cfg, grid).v_nodes()
    dv = v[grid.edges[:, 0]] - v[grid.edges[:, 1]]
    dirichlet_v = 0.5 * float(np.sum(dv.real**2 + dv.imag**2))
    ratio = e.quotient_dirichlet / (dirichlet_v / M2.m**2)
    assert 1.0 <= ratio <= 1.10


# --------------------------------------------------------------------------
# minimization
# --------------------------------------------------------------------------


def test_minimize_sharp_degree_zero():
    grid = build_grid(DomainSpec(shape="disk", h=0.15, degree=0))
    sim = SimParams(params=M2, eps=0.4, tol=1e-10)
    st = minimize_sharp(grid, sim)
    assert st.converged
    assert energy_sharp(st, grid, sim).total <= 1e-8
    assert not st.labels.any()
    assert detect_vortices(st, grid, M2).total_winding == 0


def test_minimize_history_monotone(pair_sharp):
    grid, sim, st = pair_sharp
    assert st.converged
    hist = st.history
    assert hist.shape == (st.sweeps, 5)
    totals = hist[:, 4]
    assert np.all(np.diff(totals) <= 1e-9 * np.maximum(1.0,
                                                       np.abs(totals[:-1])))
    parts = hist[:, 0] + hist[:, 1] + hist[:, 2] + hist[:, 3]
    assert np.allclose(parts, totals, rtol=1e-12)
    final = energy_sharp(st, grid, sim).total
    assert np.isclose(final, totals[-1], rtol=1e-12)


def test_iteration_cap(coarse_grid):
    grid = coarse_grid
    sim = SimParams(params=M2, eps=0.4, max_sweeps=5, tol=1e-15, seed=1)
    st = minimize_sharp(grid, sim, init=init_random(grid, sim))
    assert not st.converged
    assert st.sweeps == 5
    strict = SimParams(params=M2, eps=0.4, max_sweeps=5, tol=1e-15, seed=1,
                       raise_on_cap=True)
    with pytest.raises(IterationCap) as exc:
        minimize_sharp(grid, strict, init=init_random(grid, strict))
    assert isinstance(exc.value.state, FieldState)
    assert exc.value.state.sweeps == 5


def test_boundary_values_pinned(pair_sharp):
    grid, sim, st = pair_sharp
    ring_full = np.where(grid.interior, 0.0 + 0.0j, st.u)
    st0 = init_smooth(grid, sim)
    ref = np.where(grid.interior, 0.0 + 0.0j, st0.u)
    assert np.max(np.abs(ring_full - ref)) <= 1e-12


# --------------------------------------------------------------------------
# structure extraction on the minimized pair
# --------------------------------------------------------------------------


def test_detect_vortices_pair(pair_sharp):
    grid, sim, st = pair_sharp
    vs = detect_vortices(st, grid, M2)
    assert len(vs.vortices) == 2
    assert all(v.winding == 1 for v in vs.vortices)
    assert vs.total_winding == 2
    pos = vs.positions()[np.argsort(vs.positions()[:, 0])]
    target = np.array([[-0.3041, -0.0137], [0.3041, 0.0137]])
    assert np.max(np.linalg.norm(pos - target, axis=1)) <= 3.0 * grid.h


def test_label_vorticity_pair(pair_sharp):
    grid, sim, st = pair_sharp
    lv = label_vorticity(st, grid, M2)
    assert int(np.count_nonzero(lv)) == 2
    assert int(lv.sum()) == 2


def test_jump_set_pair(pair_sharp):
    grid, sim, st = pair_sharp
    js = extract_jump_set(st, grid, sim)
    assert len(js.components) == 1
    comp = js.components[0]
    assert comp.vortex_count == 2
    sep = abs(PAIR[0] - PAIR[1])
    assert 0.9 * sep <= comp.length <= 1.3 * sep
    assert comp.fit_rms <= 2.0 * grid.h


def test_jump_set_empty_without_labels(coarse_grid):
    grid = coarse_grid
    sim = SimParams(params=M2, eps=0.4)
    st = init_smooth(grid, sim)
    js = extract_jump_set(st, grid, sim)
    assert js.components == ()
    assert js.total_length == 0.0


# --------------------------------------------------------------------------
# splitting diagnostic
# --------------------------------------------------------------------------


def test_lm_split_holds_on_smooth_ball(pair_sharp):
    grid, sim, st = pair_sharp
    rep = lm_split_diagnostic(st, grid, sim, 0.0 + 0.55j, 0.12)
    assert rep.holds
    assert rep.jump_term == 0.0


def test_lm_split_chord_length(pair_sharp):
    grid, sim, st = pair_sharp
    r = 0.15
    rep = lm_split_diagnostic(st, grid, sim, 0j, r)
    assert rep.holds
    assert abs(rep.jump_term - 2.0 * r) <= 0.2 * (2.0 * r)


def test_lm_split_error_paths(pair_sharp):
    grid, sim, st = pair_sharp
    with pytest.raises(RadiusTooSmall):
        lm_split_diagnostic(st, grid, sim, 0j, 0.05)  # < 4h
    with pytest.raises(ConfigError):
        lm_split_diagnostic(st, grid, sim, 0.9 + 0j, 0.15)  # hits boundary
    with pytest.raises(WindingObstruction):
        lm_split_diagnostic(st, grid, sim, PAIR[0], 0.15)  # contains a vortex


# --------------------------------------------------------------------------
# diffuse model
# --------------------------------------------------------------------------


def test_diffuse_pair_matches_sharp(pair_sharp, pair_diffuse):
    grid, sim_s, st_s = pair_sharp
    _, sim_d, st_d = pair_diffuse
    assert st_d.converged
    e_s = energy_sharp(st_s, grid, sim_s).total
    e_d = energy_diffuse(st_d, grid, sim_d).total
    assert 0.95 <= e_d / e_s <= 1.10


def test_diffuse_pair_wall_structure(pair_problem, pair_diffuse):
    _, _, lam, _ = pair_problem
    grid, sim, st = pair_diffuse
    br = energy_diffuse(st, grid, sim)
    # wall energy approximates (per-unit-cost 1) x (wall length)
    assert 0.9 <= br.at_wall / lam <= 1.45
    psi = st.psi
    assert psi.min() <= 0.05
    a = np.array([PAIR[1].real, PAIR[1].imag])
    b = np.array([PAIR[0].real, PAIR[0].imag])
    ab = b - a
    t = np.clip(((grid.xy - a) @ ab) / float(ab @ ab), 0.0, 1.0)
    dseg = np.linalg.norm(grid.xy - (a + t[:, None] * ab), axis=1)
    inner = grid.interior
    assert psi[inner & (dseg > 4.0 * sim.eta)].min() >= 0.9
    # cross-section against the 1D optimal profile, away from the cores
    core = np.minimum(np.linalg.norm(grid.xy - b, axis=1),
                      np.linalg.norm(grid.xy - a, axis=1))
    band = inner & (dseg <= 3.0 * sim.eta) & (core > 0.25)
    model = 1.0 - np.exp(-dseg / sim.eta)
    assert np.max(np.abs(psi - model)[band]) <= 0.25


def test_diffuse_pair_vortices(pair_diffuse):
    grid, sim, st = pair_diffuse
    vs = detect_vortices(st, grid, M2)
    assert len(vs.vortices) == 2
    assert vs.total_winding == 2


def test_diffuse_degree_zero_wall_free():
    grid = build_grid(DomainSpec(shape="disk", h=0.15, degree=0))
    sim = SimParams(params=M2, eps=0.4, eta=0.8, tol=1e-10)
    st = minimize_diffuse(grid, sim)
    assert st.converged
    assert np.max(np.abs(st.psi - 1.0)) <= 1e-3
    assert energy_diffuse(st, grid, sim).total <= 1e-4


# --------------------------------------------------------------------------
# expansion fit and 1D wall profile
# --------------------------------------------------------------------------


def test_energy_expansion_fit_recovers_exact_line():
    eps = (0.2, 0.05, 0.0125)
    runs = [(e, 2.5 * abs(np.log(e)) + 0.7) for e in eps]
    slope, intercept, rms = energy_expansion_fit(runs)
    assert np.isclose(slope, 2.5, rtol=1e-12)
    assert np.isclose(intercept, 0.7, rtol=1e-10)
    assert rms <= 1e-12


def test_energy_expansion_fit_rejects_bad_input():
    with pytest.raises(ConfigError):
        energy_expansion_fit([(0.1, 1.0)])
    with pytest.raises(ConfigError):
        energy_expansion_fit([(0.1, 1.0), (-0.2, 2.0)])
    with pytest.raises(IllConditioned):
        energy_expansion_fit([(0.1, 1.0), (0.2, 2.0)])  # range factor 2


def test_optimal_wall_profile_matches_continuum():
    eta, h = 0.2, 0.01
    s, psi, energy = optimal_wall_profile(eta, h)
    assert abs(energy - 1.0) <= 0.02
    model = 1.0 - np.exp(-np.abs(s) / eta)
    assert np.max(np.abs(psi - model)) <= 1e-2
    n = s.size // 2
    assert psi[n] == 0.0
    assert np.all(np.diff(psi[n:]) >= -1e-12)
    assert np.all(np.diff(psi[:n + 1]) <= 1e-12)


def test_optimal_wall_profile_needs_resolution():
    with pytest.raises(ConfigError):
        optimal_wall_profile(0.02, 0.01)
    with pytest.raises(ConfigError):
        optimal_wall_profile(-0.1, 0.01)
