import numpy as np
import pytest

from fracvortex.domain import DomainSpec, build_grid
from fracvortex.errors import (
    ConfigError,
    InadmissibleForest,
    RadiusTooSmall,
    UnwrapFailure,
)
from fracvortex.quotient import ModulusParams, loop_winding
from fracvortex.renorm import (
    DiskHarmonic,
    VortexConfig,
    canonical_map,
    canonical_phase,
    core_energy,
    images_potential,
    limit_energy,
    neumann_solve,
    renormalized_energy,
    renormalized_energy_oracle,
    w_disk_exact,
    _radial_profile,
)

SQUARE = ((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))
M2 = ModulusParams(m=2)


def disk_spec(h=0.02, d=1, **kw):
    return DomainSpec(shape="disk", h=h, degree=d, **kw)


def pair_config(t=0.3, params=M2):
    return VortexConfig(points=(t + 0.0j, -t + 0.0j), params=params, degree=1)


# --- configuration validation ---------------------------------------------


def test_vortex_config_validation():
    with pytest.raises(ConfigError):
        VortexConfig(points=(0.1 + 0j,), params=M2, degree=1)  # count != m*d
    with pytest.raises(ConfigError):
        VortexConfig(points=(0.1 + 0j, 0.1 + 0j), params=M2, degree=1)
    cfg = pair_config(0.95)
    with pytest.raises(ConfigError):
        cfg.validate_in(disk_spec(), margin=0.1)


def test_min_separation():
    cfg = pair_config(0.25)
    assert abs(cfg.min_separation() - 0.5) < 1e-14


# --- disk harmonic evaluator ----------------------------------------------


def test_disk_harmonic_dirichlet_roundtrip():
    theta = 2 * np.pi * np.arange(512) / 512
    vals = 0.7 + 0.3 * np.cos(2 * theta) - 0.1 * np.sin(5 * theta)
    dh = DiskHarmonic.from_dirichlet(vals)
    back = dh.value(np.exp(1j * theta))
    assert np.max(np.abs(back - vals)) < 1e-12
    # interior value at 0 is the boundary mean
    assert abs(dh.value(np.array([0.0 + 0j]))[0] - 0.7) < 1e-12


def test_disk_harmonic_gradient_matches_fd():
    theta = 2 * np.pi * np.arange(256) / 256
    rng = np.random.default_rng(11)
    vals = np.zeros_like(theta)
    for n in range(1, 6):
        a, b = rng.standard_normal(2)
        vals += a * np.cos(n * theta) + b * np.sin(n * theta)
    dh = DiskHarmonic.from_dirichlet(vals)
    z = np.array([0.3 + 0.2j, -0.5 + 0.1j, 0.0 + 0j])
    gx, gy = dh.grad(z)
    eps = 1e-7
    fx = (dh.value(z + eps) - dh.value(z - eps)) / (2 * eps)
    fy = (dh.value(z + 1j * eps) - dh.value(z - 1j * eps)) / (2 * eps)
    assert np.max(np.abs(gx - fx)) < 1e-6
    assert np.max(np.abs(gy - fy)) < 1e-6


def test_disk_harmonic_neumann_inverts_dirichlet_modes():
    # flux of r^n cos(n theta) on the unit circle is n cos(n theta)
    theta = 2 * np.pi * np.arange(256) / 256
    flux = 3.0 * np.cos(3 * theta)
    dh = DiskHarmonic.from_neumann(flux)
    target = np.cos(3 * theta)
    assert np.max(np.abs(dh.value(np.exp(1j * theta)) - target)) < 1e-12


# --- canonical map ----------------------------------------------------------


def test_canonical_map_unit_modulus_and_boundary():
    grid = build_grid(disk_spec(h=0.05))
    cfg = pair_config()
    cmap = canonical_map(cfg, grid)
    v = cmap.v_nodes()
    assert np.max(np.abs(np.abs(v) - 1.0)) < 1e-12
    # boundary values match g^m at the ring feet
    foot = grid.ring_foot[:, 0] + 1j * grid.ring_foot[:, 1]
    target = grid.ring_g**2
    got = cmap.v_at(foot)
    assert np.max(np.abs(got - target)) < 5e-2  # grid phase is O(h^2) + interp


def test_canonical_map_winding_counts_enclosed_vortices():
    grid = build_grid(disk_spec(h=0.05))
    cmap = canonical_map(pair_config(0.4), grid)
    s = np.exp(1j * 2 * np.pi * np.arange(256) / 256)
    both = cmap.v_at(0.9 * s)
    one = cmap.v_at(0.4 + 0.2 * s)
    none = cmap.v_at(-1j * 0.4 + 0.15 * s)
    assert loop_winding(both) == 2
    assert loop_winding(one) == 1
    assert loop_winding(none) == 0


def test_canonical_phase_winding_mismatch_raises():
    grid = build_grid(disk_spec(h=0.05))
    boundary = grid.ring_g**2  # winds twice
    with pytest.raises(UnwrapFailure):
        canonical_phase(grid, boundary, [0.2 + 0j, -0.2 + 0j, 0.0 + 0.3j])


# --- Neumann potential vs reflected sources --------------------------------


def test_neumann_potential_matches_images():
    grid = build_grid(disk_spec(h=0.02))
    cfg = pair_config()
    pot = neumann_solve(cfg, grid)
    ii = grid.interior_ids
    exact = images_potential(grid.xy[ii], cfg.points)
    assert np.max(np.abs(pot.phi_full[ii] - exact)) < 5e-4
    assert pot.laplace_residual() < 1e-6


def test_images_potential_zero_boundary_mean():
    theta = 2 * np.pi * np.arange(4096) / 4096
    ring = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    vals = images_potential(ring, [0.3 + 0.2j, -0.1 - 0.4j, 0.0 + 0j])
    assert abs(np.mean(vals)) < 1e-12


# --- renormalized energy -----------------------------------------------------


def test_w_disk_exact_closed_form_pair():
    # vortices at (+-t, 0) on the disk with canonical data:
    # W = -2 pi log(2t) - 2 pi log(1 - t^4)
    for t in (0.2, 0.3, 0.5):
        cfg = pair_config(t)
        expected = -2 * np.pi * np.log(2 * t) - 2 * np.pi * np.log(1 - t**4)
        assert abs(w_disk_exact(cfg, disk_spec()) - expected) < 1e-12


def test_renormalized_energy_routes_agree():
    grid = build_grid(disk_spec(h=0.02))
    rng = np.random.default_rng(3)
    for m in (2, 3):
        params = ModulusParams(m=m)
        for _ in range(2):
            while True:
                z = rng.uniform(-0.6, 0.6, m) + 1j * rng.uniform(-0.6, 0.6, m)
                if m == 1 or np.min(
                    np.abs(z[:, None] - z[None, :]) + np.eye(m)
                ) > 0.25:
                    break
            cfg = VortexConfig(points=tuple(z), params=params, degree=1)
            wi = w_disk_exact(cfg, grid.spec)
            wg = renormalized_energy(cfg, grid, method="grid")
            ws = renormalized_energy(cfg, grid, method="spectral")
            assert abs(wg - wi) < 5e-4
            assert abs(ws - wi) < 1e-9


def test_renormalized_energy_rotation_invariant():
    grid = build_grid(disk_spec(h=0.02))
    cfg = pair_config(0.35)
    w0 = renormalized_energy(cfg, grid, method="grid")
    rot = np.exp(1j * 0.7)
    cfg_r = VortexConfig(points=tuple(rot * np.asarray(cfg.points)),
                         params=M2, degree=1)
    w1 = renormalized_energy(cfg_r, grid, method="grid")
    assert abs(w1 - w0) < 5e-4
    # the reflected-source route is exactly invariant
    assert abs(w_disk_exact(cfg_r, grid.spec) - w_disk_exact(cfg, grid.spec)) < 1e-12


def test_renormalized_energy_translation_invariant_square():
    w_vals = []
    for shift in (0.0, 0.37):
        verts = tuple((x + shift, y + shift) for x, y in SQUARE)
        spec = DomainSpec(shape="polygon", h=0.02, degree=1, vertices=verts)
        grid = build_grid(spec)
        pts = (0.3 + 0.1j + shift * (1 + 1j), -0.2 - 0.25j + shift * (1 + 1j))
        cfg = VortexConfig(points=pts, params=M2, degree=1)
        w_vals.append(renormalized_energy(cfg, grid, method="grid"))
    assert abs(w_vals[1] - w_vals[0]) < 1e-9


def test_w_blows_up_as_vortices_merge():
    spec = disk_spec()
    assert w_disk_exact(pair_config(0.01), spec) > w_disk_exact(pair_config(0.2), spec) + 10.0


# --- finite-part oracle ------------------------------------------------------


def test_oracle_approaches_formula_on_disk():
    spec = disk_spec(h=0.01)
    grid = build_grid(spec)
    cfg = pair_config()
    w_ref = renormalized_energy(cfg, grid, method="grid")
    cmap = canonical_map(cfg, grid)
    gaps = [abs(renormalized_energy_oracle(cfg, spec, r, cmap=cmap) - w_ref)
            for r in (0.1, 0.05)]
    assert gaps[1] < gaps[0]
    assert gaps[1] < 0.1


def test_oracle_approaches_formula_on_square():
    spec = DomainSpec(shape="polygon", h=0.01, degree=1, vertices=SQUARE)
    grid = build_grid(spec)
    cfg = VortexConfig(points=(0.3 + 0.1j, -0.2 - 0.25j), params=M2, degree=1)
    w_ref = renormalized_energy(cfg, grid, method="grid")
    cmap = canonical_map(cfg, grid)
    gaps = [abs(renormalized_energy_oracle(cfg, spec, r, cmap=cmap, grid=grid) - w_ref)
            for r in (0.1, 0.05)]
    assert gaps[1] < gaps[0]
    assert gaps[1] < 0.2


def test_oracle_radius_guards():
    spec = disk_spec(h=0.01)
    grid = build_grid(spec)
    cfg = pair_config()
    cmap = canonical_map(cfg, grid)
    with pytest.raises(RadiusTooSmall):
        renormalized_energy_oracle(cfg, spec, 0.02, cmap=cmap)  # r <= 3h
    with pytest.raises(RadiusTooSmall):
        renormalized_energy_oracle(cfg, spec, 0.31, cmap=cmap)  # r >= sep/2
    near_edge = VortexConfig(points=(0.93 + 0j, -0.2 + 0j), params=M2, degree=1)
    with pytest.raises(RadiusTooSmall):
        renormalized_energy_oracle(near_edge, spec, 0.1, cmap=canonical_map(near_edge, grid))


# --- core energy -------------------------------------------------------------


def test_radial_profile_shape_and_log_growth():
    r4, f4, e4 = _radial_profile(M2, 4.0, 0.02)
    r8, f8, e8 = _radial_profile(M2, 8.0, 0.02)
    for f in (f4, f8):
        assert abs(f[0]) < 1e-14 and abs(f[-1] - 1.0) < 1e-14
        assert np.all(np.diff(f) > -1e-9)
    # doubling R adds about (pi/m^2) log 2 once the core is contained
    assert abs((e8 - e4) - (np.pi / 4) * np.log(2)) < 0.05


@pytest.mark.slow
def test_core_energy_pin_and_m_monotonicity():
    row2 = core_energy(M2, 2.0)
    assert row2.converged
    assert abs(row2.gamma - 1.340498) < 1e-3
    row4 = core_energy(ModulusParams(m=4), 2.0)
    assert row4.gamma < row2.gamma  # cheaper phase weight 1/m^2


@pytest.mark.slow
def test_core_energy_radius_monotonicity_small():
    rows = [core_energy(M2, R) for R in (2.0, 4.0)]
    assert rows[1].gamma <= rows[0].gamma + 1e-3


# --- limit energy ------------------------------------------------------------


def test_limit_energy_affine_in_gamma():
    spec = disk_spec()
    cfg = pair_config()
    a = limit_energy(cfg, spec, gamma=1.0, connection=0.6)
    b = limit_energy(cfg, spec, gamma=2.0, connection=0.6)
    assert abs((b.total - a.total) - 2 * 1.0) < 1e-12  # md * delta gamma
    with pytest.raises(InadmissibleForest):
        limit_energy(cfg, spec, gamma=1.0, connection=-0.1)


def test_limit_energy_pair_has_interior_optimum():
    # trade-off between vortex repulsion (W) and the connecting segment
    spec = disk_spec()
    ts = np.linspace(0.05, 0.9, 60)
    vals = []
    for t in ts:
        cfg = pair_config(t)
        vals.append(limit_energy(cfg, spec, gamma=1.34, connection=2 * t).total)
    k = int(np.argmin(vals))
    assert 0 < k < len(ts) - 1
    assert ts[k] > 0.1
