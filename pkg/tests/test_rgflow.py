import math

import numpy as np
import pytest

from weylrg.lattice import build_params, weyl_points
from weylrg.propagator import GridSpec, inverse_propagator
from weylrg import multiscale as ms
from weylrg import rgflow as rg

INTER = rg.exponential_interaction(1.0)


def test_interaction_transform_matches_lattice_sum():
    # closed-form Poisson kernels vs the direct exponential lattice sum
    def axis_direct(q, kappa):
        return 1.0 + 2.0 * sum(math.exp(-kappa * n) * math.cos(q * n)
                               for n in range(1, 80))
    for kappa in (0.7, 1.0, 2.0):
        inter = rg.exponential_interaction(kappa)
        for q in (0.0, 0.3, 1.1, 2.9):
            assert inter.axis_value(q) == pytest.approx(axis_direct(q, kappa), abs=1e-12)


def test_interaction_transform_smooth_even_positive():
    qs = np.linspace(-np.pi, np.pi, 101)
    vals = INTER.axis_value(qs)
    assert np.all(vals > 0)
    assert np.allclose(vals, vals[::-1], atol=1e-14)


def test_localize_kernel_on_free_inverse(p_star):
    loc = rg.localize_kernel(lambda kk: inverse_propagator(kk, p_star), regime=1)
    # symbolic derivatives of A: n = mu - t' + t_perp, b0 = 1, b+- = t,
    # b3 = d^2/dk3^2 (t_perp cos k3) at 0 = -t_perp
    assert loc.n_h == pytest.approx(0.25, abs=1e-12)
    assert loc.b0_h == pytest.approx(1.0, abs=1e-10)
    assert loc.bplus_h == pytest.approx(1.0, abs=1e-6)
    assert loc.bminus_h == pytest.approx(1.0, abs=1e-6)
    assert loc.b3_h == pytest.approx(-0.5, abs=1e-6)


def test_localize_kernel_regime2_slope(p_star):
    wp = weyl_points(p_star)
    loc = rg.localize_kernel(
        lambda kk: inverse_propagator((kk[0], kk[1], kk[2], kk[3] + wp.p_F), p_star),
        regime=2)
    assert loc.b3_h == pytest.approx(-wp.v30, abs=1e-6)


def test_localize_kernel_zero_and_stencil_error():
    loc = rg.localize_kernel(lambda kk: np.zeros((2, 2), complex), regime=1)
    assert loc.n_h == loc.b0_h == loc.bplus_h == loc.b3_h == 0.0
    with pytest.raises(rg.StencilError):
        rg.localize_kernel(lambda kk: np.zeros((2, 2), complex), regime=1,
                           spacing=1e-9)


def test_update_couplings_examples(p_star):
    c = ms.initial_couplings(p_star)
    zero = rg.LocalizedKernel(0, 0, 0, 0, 0, regime=1)
    c2 = rg.update_couplings(c, zero)
    assert (c2.Z, c2.v, c2.v3) == (c.Z, c.v, c.v3) and c2.h == c.h - 1

    bump = rg.LocalizedKernel(0, 0.01, 0, 0, 0, regime=1)
    c3 = rg.update_couplings(c, bump)
    assert c3.Z == pytest.approx(1.01 * c.Z)
    assert c3.v == pytest.approx(c.v / 1.01)

    with pytest.raises(rg.FlowBlowupError):
        rg.update_couplings(c, rg.LocalizedKernel(0, -1.0, 0, 0, 0, regime=1))


def test_self_energy_zero_interaction(p_star):
    c = ms.initial_couplings(p_star)
    sig = rg.self_energy_first_order((0.0, 0, 0, 0), -2, c, INTER, 0.0, p_star)
    assert np.max(np.abs(sig)) == 0.0


def test_self_energy_linearity(p_star):
    c = ms.initial_couplings(p_star)
    kk = (0.0, 0.1, -0.1, 0.4)
    s1 = rg.self_energy_first_order(kk, -2, c, INTER, 0.02, p_star)
    s2 = rg.self_energy_first_order(kk, -2, c, INTER, 0.04, p_star)
    assert np.max(np.abs(s2 - 2.0 * s1)) < 1e-14 * max(1.0, np.max(np.abs(s2)))


def test_self_energy_matches_direct_cumulative_sum(p_star):
    """Shell-decomposed sum vs a direct cumulative-support quadrature."""
    c = ms.initial_couplings(p_star)
    cut = ms.default_cutoff(p_star)
    U = 0.05
    kk = (0.0, 0.0, 0.0, weyl_points(p_star).p_F)
    sig = rg.self_energy_first_order(kk, -2, c, INTER, U, p_star, n_k=24,
                                     cutoff=cut)

    # direct route: one box over the whole chi_0 \ chi_{-2} region
    emax, ext12, k3lo, k3hi = ms._band_bounds_r1(0, c, p_star, cut)
    sp = (2 * emax / 40, 2 * ext12 / 40, 2 * k3hi / 96)
    bg = ms.band_grid_r1(0, c, p_star, cutoff=cut, warn_sparse=False, spacings=sp)
    K1, K2, K3 = np.meshgrid(bg.k1s, bg.k2s, bg.k3s, indexing="ij")
    m1, m2, m3 = ms.mass_vector_r1(K1, K2, K3, c, p_star)
    e = np.sqrt(bg.k0s[:, None, None, None] ** 2 + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None])
    from weylrg.cutoff import smooth_cutoff
    bg.weight = smooth_cutoff(e / cut.a0) - smooth_cutoff(e / (cut.a0 * 2.0 ** -2))
    direct = rg.band_self_energy(kk, [bg], INTER, U)
    # absolute quadrature tolerance plus a relative check on the tiny values
    assert np.max(np.abs(sig - direct)) < 1e-4
    assert np.max(np.abs(sig - direct)) < 0.05 * np.max(np.abs(direct))


def test_flow_step_deterministic(p_star):
    cut = ms.default_cutoff(p_star)
    c = ms.initial_couplings(p_star)
    band = rg._adapted_crossover(0, c, p_star, cut, 10)
    c1, r1 = rg.flow_step(0, c, band, INTER, 0.05, p_star)
    c2, r2 = rg.flow_step(0, c, band, INTER, 0.05, p_star)
    assert r1 == r2 and c1 == c2  # bit-for-bit on a fixed band
    assert np.isfinite(r1.beta_nu) and np.isfinite(r1.max_dimensionless)


def test_run_flow_free_fixed_point(p_star):
    traj = rg.run_flow(p_star, 0.0, INTER, -4, n_k=10)
    assert traj.max_dimensionless_beta <= 1e-10
    zs = [r.couplings.Z for r in traj.rows]
    assert all(z == 1.0 for z in zs)
    assert traj.final.v == p_star.t


def test_run_flow_insulator_stops_at_crossover():
    # shallow insulator: whole infrared gapped out, single trivial step
    p_gapped = build_params(1.0, 0.5, 2.0, r=-0.2)
    traj = rg.run_flow(p_gapped, 0.02, INTER, -8, n_k=10)
    assert traj.termination == "insulator-stop"
    assert traj.rows[-1].h == ms.crossover_scale(p_gapped)

    # deeper insulator: the chi_{h*} tail band is populated and integrates in
    # one step with nu_{h*} = 0, never entering regime 2
    p_deep = build_params(1.0, 0.5, 2.0, r=-0.01)
    traj = rg.run_flow(p_deep, 0.02, INTER, -8, n_k=10)
    assert traj.termination == "insulator-stop"
    assert traj.rows[-1].h == ms.crossover_scale(p_deep)
    assert traj.rows[-1].beta.band_points > 0
    assert all(r.couplings.regime == 1 for r in traj.rows)
    assert traj.final.nu == 0.0


def test_run_flow_regime_flip_at_h_star(p_small_r):
    traj = rg.run_flow(p_small_r, 0.01, INTER, -7, n_k=10)
    assert traj.h_star == -4
    regimes = [(r.h, r.couplings.regime) for r in traj.rows]
    # regime tag flips once, right below h* = -4
    assert all(reg == 1 for h, reg in regimes if h >= -4)
    assert all(reg == 2 for h, reg in regimes if h < -4)
    assert traj.v3_crossover == pytest.approx(
        traj.rows[4].couplings.v3 * math.sin(weyl_points(p_small_r).p_F), rel=1e-6)


def test_run_flow_r_zero_stays_regime1():
    p0 = build_params(1.0, 0.5, 2.0, r=0.0)
    traj = rg.run_flow(p0, 0.01, INTER, -5, n_k=10)
    assert traj.h_star == float("-inf")
    assert all(r.couplings.regime == 1 for r in traj.rows)


def test_solve_nu_zero_interaction(p_star):
    nu, traj = rg.solve_nu(p_star, 0.0, INTER, -4, n_k=10)
    assert nu == 0.0
    assert traj.final.nu == 0.0


def test_solve_nu_odd_in_U(p_star):
    nup, _ = rg.solve_nu(p_star, 0.04, INTER, -4, n_k=10)
    num, _ = rg.solve_nu(p_star, -0.04, INTER, -4, n_k=10)
    assert nup == pytest.approx(-num, rel=1e-10)


def test_solve_nu_bounds_flow(p_star):
    nu, solved = rg.solve_nu(p_star, 0.05, INTER, -6, n_k=10)
    unsolved = rg.run_flow(p_star, 0.05, INTER, -6, nu0=0.0, n_k=10)
    nus_s = solved.nu_of_h()
    nus_u = unsolved.nu_of_h()
    h_min = solved.final.h
    # solved: no 2^-h growth; unsolved: doubles per scale
    assert abs(nus_s[h_min]) < 10.0 * max(abs(nus_s[h_min // 2]), 1e-18)
    assert abs(nus_u[h_min]) > 10.0 * abs(nus_s[h_min]) or abs(nus_s[h_min]) < 1e-15
    ratio = nus_u[h_min] / nus_u[h_min + 2]
    assert ratio == pytest.approx(4.0, rel=0.05)  # 2^-h growth


def test_beta_envelope_decays(p_small_r):
    traj = rg.run_flow(p_small_r, 0.05, INTER, -4, n_k=10)
    betas = [abs(r.beta.beta_nu) for r in traj.rows]
    hs = [r.h for r in traj.rows]
    # regime-1 envelope: fitted log2 slope vs h at least the weak-form 0.05
    mask = [b > 0 for b in betas]
    hs = [h for h, m in zip(hs, mask) if m]
    lb = [math.log2(b) for b, m in zip(betas, mask) if m]
    if len(lb) >= 3:
        slope = np.polyfit(hs, lb, 1)[0]
        assert slope >= 0.05


def test_r_uniformity_saturates_at_small_r():
    """Supplement to the acceptance proxy: as r -> 0 at fixed U the max
    dimensionless beta saturates (no 1/v30 divergence)."""
    vals = {}
    for r in (0.005, 0.0005):
        p = build_params(1.0, 0.5, 2.0, r=r)
        traj = rg.run_flow(p, 0.05, INTER, -6, n_k=12)
        vals[r] = traj.max_dimensionless_beta
    big, small = max(vals.values()), min(vals.values())
    assert big / small < 4.0


def test_asymptotic_constants_zero_interaction(p_star):
    grid = GridSpec(L=8, beta=32.0, M=5)
    zero = rg.InteractionSpec(kappa=1.0, amplitude=0.0)
    a3, ap = rg.asymptotic_constants(p_star, zero, grid)
    assert a3 == 0.0 and ap == 0.0


def test_asymptotic_constants_sign_flip(p_star):
    grid = GridSpec(L=8, beta=32.0, M=5)
    plus = rg.InteractionSpec(kappa=1.0, amplitude=1.0)
    minus = rg.InteractionSpec(kappa=1.0, amplitude=-1.0)
    a3p, app = rg.asymptotic_constants(p_star, plus, grid)
    a3m, apm = rg.asymptotic_constants(p_star, minus, grid)
    assert a3p == pytest.approx(-a3m) and app == pytest.approx(-apm)


def test_asymptotic_constants_support_additivity(p_star):
    grid = GridSpec(L=12, beta=48.0, M=5)
    full = rg.asymptotic_constants(p_star, INTER, grid, support="full")
    ir = rg.asymptotic_constants(p_star, INTER, grid, support="ir")
    uv = rg.asymptotic_constants(p_star, INTER, grid, support="uv")
    assert full[0] == pytest.approx(ir[0] + uv[0], rel=1e-10)
    assert full[1] == pytest.approx(ir[1] + uv[1], rel=1e-10)


@pytest.mark.slow
def test_asymptotic_constants_vs_dressed_slope(p_star):
    """Flow-slope oracle: the full-support integrals reproduce the U-slope of
    the dressed velocities measured on the assembled one-loop propagator."""
    grid = GridSpec(L=16, beta=128.0, M=6)
    a3, ap = rg.asymptotic_constants(p_star, INTER, grid, support="full")
    wp = weyl_points(p_star)
    s3m = np.diag([1.0, -1.0])
    s1m = np.array([[0.0, 1.0], [1.0, 0.0]])

    def slopes(U):
        traj = rg.run_flow(p_star, U, INTER, -6, n_k=12)
        d = 5e-3

        def comp(mat, kk):
            return float(np.real(np.trace(
                mat @ rg.dressed_inverse(kk, traj, INTER, uv_grid=grid)))) / 2.0

        ax = -(comp(s3m, (0.0, 0.0, 0.0, wp.p_F + d))
               - comp(s3m, (0.0, 0.0, 0.0, wp.p_F - d))) / (2 * d)
        pl = (comp(s1m, (0.0, d, d, wp.p_F))
              - comp(s1m, (0.0, -d, -d, wp.p_F))) / (2 * d)
        return ax, pl

    U = 0.04
    axU, plU = slopes(U)
    ax0, pl0 = slopes(0.0)
    assert (axU - ax0) / U == pytest.approx(a3, rel=0.05)
    assert (plU - pl0) / U == pytest.approx(ap, rel=0.05)


def test_dressed_two_point_free_oracle(p_star):
    traj = rg.run_flow(p_star, 0.0, INTER, -4, n_k=10)
    for scale in (0.02, 0.005, 0.00125):
        kkp = (0.3 * scale, 0.2 * scale, -0.1 * scale, scale)
        _, ratio, bound, ok = rg.dressed_two_point(kkp, +1, traj, INTER)
        assert ok
    # remainder ratio shrinks toward the expansion point
    r_big = rg.dressed_two_point((0.0, 0, 0, 0.02), +1, traj, INTER)[1]
    r_small = rg.dressed_two_point((0.0, 0, 0, 0.002), +1, traj, INTER)[1]
    assert r_small < r_big / 5.0


def test_dressed_two_point_omega_flip(p_star):
    sp = rg.relativistic_form((0.01, 0.0, 0.0, 0.02), +1, 1.0, 1.0, 0.43)
    sm = rg.relativistic_form((0.01, 0.0, 0.0, 0.02), -1, 1.0, 1.0, 0.43)
    assert not np.allclose(sp, sm)
    assert np.allclose(sp[0, 1], sm[0, 1])  # planar block unchanged
