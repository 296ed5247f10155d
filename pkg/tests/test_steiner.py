import numpy as np
import pytest

from fracvortex.domain import DomainSpec, build_grid
from fracvortex.errors import (
    ConfigError,
    InstanceTooLarge,
    NonzeroWinding,
    ResolutionError,
    TooManyTerminals,
)
from fracvortex.quotient import ModulusParams, project_p
from fracvortex.renorm import VortexConfig
from fracvortex.steiner import (
    SteinerForest,
    _finalize_forest,
    construct_competitor_field,
    enumerate_partitions,
    lambda_mu,
    minimal_connection,
    steiner_tree,
    validate_forest,
)

SQRT3 = np.sqrt(3.0)


def brute_min_matching(points):
    """Minimum over all perfect pairings of the points (sum of distances)."""
    def pairings(idx):
        if not idx:
            yield []
            return
        first = idx[0]
        for i in range(1, len(idx)):
            for rest in pairings(idx[1:i] + idx[i + 1:]):
                yield [(first, idx[i])] + rest

    best = np.inf
    for pr in pairings(list(range(len(points)))):
        best = min(best, sum(np.linalg.norm(points[a] - points[b])
                             for a, b in pr))
    return best


# --------------------------------------------------------------------------
# steiner_tree
# --------------------------------------------------------------------------


def test_two_points_give_the_segment():
    f = steiner_tree([(0.0, 0.0), (3.0, 4.0)])
    assert abs(f.total_length - 5.0) < 1e-12
    assert f.steiner_points.shape[0] == 0
    assert f.edges.shape == (1, 2)
    assert f.components == ((0, 1),)


def test_single_point_has_zero_length():
    f = steiner_tree([(0.3, -0.2)])
    assert f.total_length == 0.0
    assert f.edges.shape[0] == 0


def test_equilateral_triangle_center_junction():
    pts = np.array([[np.cos(a), np.sin(a)]
                    for a in 2 * np.pi * np.arange(3) / 3 + np.pi / 2])
    f = steiner_tree(pts)
    assert abs(f.total_length - 3.0) < 1e-9
    assert f.steiner_points.shape[0] == 1
    assert np.linalg.norm(f.steiner_points[0]) < 1e-9


def test_unit_square_two_junctions():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    f = steiner_tree(pts)
    assert abs(f.total_length - (1.0 + SQRT3)) < 1e-9
    assert f.steiner_points.shape[0] == 2


def test_hexagon_collapses_to_path():
    # regular hexagon: the minimal network degenerates to five of the sides
    pts = np.array([[np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)]
                    for k in range(6)])
    f = steiner_tree(pts)
    assert abs(f.total_length - 5.0) < 1e-8


def test_terminal_cap():
    pts = [(float(k), float(k % 2)) for k in range(7)]
    with pytest.raises(TooManyTerminals):
        steiner_tree(pts)
    with pytest.raises(TooManyTerminals):
        steiner_tree([(float(k), 0.0) for k in range(10)], large=True)
    with pytest.raises(ConfigError):
        steiner_tree([(0.0, 0.0), (0.0, 0.0)])


def test_rigid_motion_invariance():
    rng = np.random.default_rng(3)
    for _ in range(3):
        pts = rng.uniform(-1.0, 1.0, (5, 2))
        base = steiner_tree(pts).total_length
        ang = rng.uniform(0.0, 2 * np.pi)
        rot = np.array([[np.cos(ang), -np.sin(ang)],
                        [np.sin(ang), np.cos(ang)]])
        moved = pts @ rot.T + rng.uniform(-5.0, 5.0, 2)
        assert abs(steiner_tree(moved).total_length - base) < 1e-9


def test_junction_angles_are_120_degrees():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1.0, 1.0, (4, 2))
    f = steiner_tree(pts)
    if f.steiner_points.shape[0] == 0:
        pytest.skip("degenerate instance without junctions")
    all_pts = f.all_points()
    nt = f.n_terminals
    for j in range(nt, all_pts.shape[0]):
        nbrs = [b if a == j else a for a, b in f.edges if j in (a, b)]
        vecs = all_pts[nbrs] - all_pts[j]
        vecs /= np.linalg.norm(vecs, axis=1)[:, None]
        for i, k in ((0, 1), (0, 2), (1, 2)):
            ang = np.degrees(np.arccos(np.clip(vecs[i] @ vecs[k], -1, 1)))
            assert abs(ang - 120.0) < 1e-4


# --------------------------------------------------------------------------
# partitions
# --------------------------------------------------------------------------


def test_partition_counts():
    assert len(enumerate_partitions(2, 2)) == 1
    assert len(enumerate_partitions(4, 2)) == 4
    assert len(enumerate_partitions(6, 3)) == 11


def test_partition_order_is_deterministic():
    parts = enumerate_partitions(4, 2)
    assert parts[0] == ((0, 1), (2, 3))
    assert parts[-1] == ((0, 1, 2, 3),)
    assert all(p == q for p, q in zip(parts, enumerate_partitions(4, 2)))


def test_partition_blocks_cover_and_divide():
    for md, m in ((6, 2), (6, 3), (8, 4)):
        for p in enumerate_partitions(md, m):
            flat = sorted(i for b in p for i in b)
            assert flat == list(range(md))
            assert all(len(b) % m == 0 and len(b) > 0 for b in p)


def test_partition_guards():
    with pytest.raises(InstanceTooLarge):
        enumerate_partitions(14, 2)
    with pytest.raises(ConfigError):
        enumerate_partitions(5, 2)


# --------------------------------------------------------------------------
# lambda_mu and minimal_connection
# --------------------------------------------------------------------------


def test_lambda_two_points_is_the_distance():
    params = ModulusParams(2)
    value, forest = lambda_mu([(0.0, 0.0), (0.6, 0.8)], params)
    assert abs(value - 1.0) < 1e-12
    assert len(forest.components) == 1
    assert forest.edges.shape[0] == 1


def test_lambda_matches_brute_force_matching():
    params = ModulusParams(2)
    rng = np.random.default_rng(42)
    for d in (2, 3, 4):
        for _ in range(4):
            pts = rng.uniform(-1.0, 1.0, (2 * d, 2))
            res = lambda_mu(pts, params)
            assert abs(res.total_length - brute_min_matching(pts)) < 1e-9
            # the minimizer is d disjoint segments
            assert len(res.forest.components) == d
            assert all(len(c) == 2 for c in res.forest.components)
            assert res.forest.steiner_points.shape[0] == 0


def test_lambda_upper_bounds_random_admissible_pairings():
    params = ModulusParams(2)
    rng = np.random.default_rng(9)
    pts = rng.uniform(-1.0, 1.0, (6, 2))
    value, _ = lambda_mu(pts, params)
    for _ in range(20):
        perm = rng.permutation(6)
        total = sum(np.linalg.norm(pts[perm[2 * k]] - pts[perm[2 * k + 1]])
                    for k in range(3))
        assert value <= total + 1e-12


def test_lambda_accepts_vortex_config():
    params = ModulusParams(2)
    cfg = VortexConfig(points=(0.1 + 0.0j, -0.1 + 0.0j), params=params, degree=1)
    value, forest = lambda_mu(cfg, params)
    assert abs(value - 0.2) < 1e-12


def test_lambda_six_points_connected_winner():
    # two points near each vertex of the inscribed equilateral triangle:
    # joining everything through a central junction beats any split
    eps = 0.05
    params = ModulusParams(3)
    pts = []
    for k in range(3):
        yk = np.exp(1j * (np.pi / 2 + 2 * np.pi * k / 3))
        for sgn in (+1, -1):
            z = yk + eps * np.exp(sgn * 1j * np.pi / 3) * yk
            pts.append([z.real, z.imag])
    res = lambda_mu(np.array(pts), params)
    assert len(res.forest.components) == 1
    assert 3.0 - 6 * eps <= res.total_length <= 3.0 + 6 * eps
    assert res.omitted_block_sizes == ()


def test_lambda_minimizers_validate_cleanly():
    rng = np.random.default_rng(17)
    params = ModulusParams(2)
    pts = rng.uniform(-1.0, 1.0, (6, 2))
    res = lambda_mu(pts, params)
    report = validate_forest(res.forest, pts, params)
    assert report.ok, report.failures


def test_lambda_instance_too_large_without_flag():
    # nine points with m=3 admit partitions into evaluable blocks, so the
    # value is returned with the oversized 9-block recorded as omitted
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1.0, 1.0, (9, 2))
    res = lambda_mu(pts, ModulusParams(3))
    assert res.omitted_block_sizes == (9,)
    # m=9 leaves no evaluable partition at the default cap
    with pytest.raises(InstanceTooLarge):
        lambda_mu(pts, ModulusParams(9))


def test_minimal_connection_examples():
    value, match = minimal_connection([(0.0, 0.0)], [(0.0, 3.0)])
    assert abs(value - 3.0) < 1e-12 and match == (0,)

    value, match = minimal_connection([(0.0, 0.0), (2.0, 0.0)],
                                      [(1.0, 0.0), (3.0, 0.0)])
    assert abs(value - 2.0) < 1e-12
    assert match == (0, 1)

    with pytest.raises(InstanceTooLarge):
        minimal_connection(np.zeros((9, 2)), np.ones((9, 2)))
    with pytest.raises(ConfigError):
        minimal_connection(np.zeros((2, 2)), np.ones((3, 2)))


def test_minimal_connection_against_assignment_solver():
    from scipy.optimize import linear_sum_assignment

    rng = np.random.default_rng(23)
    for _ in range(10):
        P = rng.uniform(-1.0, 1.0, (4, 2))
        Q = rng.uniform(-1.0, 1.0, (4, 2))
        value, match = minimal_connection(P, Q)
        dist = np.linalg.norm(P[:, None] - Q[None, :], axis=2)
        rows, cols = linear_sum_assignment(dist)
        assert abs(value - dist[rows, cols].sum()) < 1e-12
        assert abs(dist[np.arange(4), list(match)].sum() - value) < 1e-12


# --------------------------------------------------------------------------
# validate_forest
# --------------------------------------------------------------------------


def test_validate_square_tree_all_checks_pass():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    f = steiner_tree(pts)
    report = validate_forest(f, pts, ModulusParams(4))
    assert report.ok, report.failures


def test_validate_flags_removable_edge():
    # with m=2 the 4-terminal tree's middle edge splits the terminals into
    # two even halves, so the network could be shortened by dropping it
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    f = steiner_tree(pts)
    report = validate_forest(f, pts, ModulusParams(2))
    assert not report.non_removable
    assert not report.ok


def test_validate_flags_right_angle_junction():
    terminals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    steiner = np.array([[0.0, 0.0]])
    forest = _finalize_forest(terminals, steiner, [(0, 3), (1, 3), (2, 3)])
    report = validate_forest(forest, terminals, ModulusParams(3))
    assert not report.angles
    assert report.coverage and report.counts_mod_m and report.degrees


def test_validate_flags_bad_component_counts():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [4.0, 0.0],
                    [3.5, 1.0], [3.5, -1.0]])
    # components of sizes 2 and 4 cannot satisfy m=3
    edges = [(0, 1), (2, 3), (3, 4), (2, 5)]
    forest = _finalize_forest(pts, np.zeros((0, 2)), edges)
    report = validate_forest(forest, pts, ModulusParams(3))
    assert not report.counts_mod_m


def test_validate_flags_missing_coverage():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    forest = _finalize_forest(pts, np.zeros((0, 2)), [(0, 1)])
    other = np.array([[0.0, 0.0], [2.0, 0.0]])
    report = validate_forest(forest, other, ModulusParams(2))
    assert not report.coverage


def test_validate_flags_crossing_edges():
    pts = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    forest = _finalize_forest(pts, np.zeros((0, 2)), [(0, 1), (2, 3)])
    report = validate_forest(forest, pts, ModulusParams(2))
    assert not report.non_crossing


# --------------------------------------------------------------------------
# competitor field
# --------------------------------------------------------------------------


def _disk_pair_setup(h, x=0.3041, y=0.0137):
    spec = DomainSpec(shape="disk", h=h, degree=1)
    params = ModulusParams(2)
    za = complex(x, y)
    cfg = VortexConfig(points=(za, -za), params=params, degree=1)
    grid = build_grid(spec)
    pts = np.array([[za.real, za.imag], [-za.real, -za.imag]])
    forest = _finalize_forest(pts, np.zeros((0, 2)), [(0, 1)])
    return cfg, grid, forest, pts


def test_competitor_labels_sit_on_the_segment():
    cfg, grid, forest, pts = _disk_pair_setup(h=0.02)
    u, labels = construct_competitor_field(forest, cfg, grid)
    assert np.all(np.abs(np.abs(u) - 1.0) < 1e-9)
    cut = labels != 0
    assert np.all(labels[cut] == 1)  # m=2: the only nontrivial label
    mids = 0.5 * (grid.xy[grid.edges[cut, 0]] + grid.xy[grid.edges[cut, 1]])
    a, b = pts
    ab = b - a
    t = np.clip(((mids - a) @ ab) / (ab @ ab), 0.0, 1.0)
    gap = np.linalg.norm(mids - (a + t[:, None] * ab), axis=1)
    assert np.max(gap) <= grid.h  # every labeled edge straddles the segment

    # dual length of the labeled set approximates the segment length
    seg_len = np.linalg.norm(ab)
    dual = grid.h * np.count_nonzero(cut)
    assert abs(dual - seg_len) <= 2 * grid.h + 0.05 * seg_len


def test_competitor_projects_onto_canonical_map():
    from fracvortex.renorm import canonical_map

    cfg, grid, forest, _ = _disk_pair_setup(h=0.04)
    u, labels = construct_competitor_field(forest, cfg, grid)
    v = canonical_map(cfg, grid).v_nodes()
    assert np.max(np.abs(project_p(u, cfg.params) - v)) < 1e-9
    # boundary alignment: u equals the boundary map on the ring
    ring_g = grid.ring_values_full(grid.ring_g)
    ids = grid.ring_ids
    assert np.max(np.abs(u[ids] - ring_g[ids])) < 0.2


def test_competitor_requires_the_forest():
    cfg, grid, _, pts = _disk_pair_setup(h=0.04)
    empty = _finalize_forest(pts, np.zeros((0, 2)), [])
    with pytest.raises(NonzeroWinding):
        construct_competitor_field(empty, cfg, grid)


def test_competitor_resolution_guard():
    spec = DomainSpec(shape="disk", h=0.0625, degree=1)
    params = ModulusParams(2)
    za = 0.0603 + 0.0059j
    cfg = VortexConfig(points=(za, -za), params=params, degree=1)
    pts = np.array([[za.real, za.imag], [-za.real, -za.imag]])
    forest = _finalize_forest(pts, np.zeros((0, 2)), [(0, 1)])
    grid = build_grid(spec)
    with pytest.raises(ResolutionError):
        construct_competitor_field(forest, cfg, grid)


def test_competitor_accepts_a_domain_spec():
    cfg, grid, forest, _ = _disk_pair_setup(h=0.04)
    u_spec, labels_spec = construct_competitor_field(forest, cfg, grid.spec)
    u_grid, labels_grid = construct_competitor_field(forest, cfg, grid)
    assert np.array_equal(labels_spec, labels_grid)
    assert np.max(np.abs(u_spec - u_grid)) < 1e-12
