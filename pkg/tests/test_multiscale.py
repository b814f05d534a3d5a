import numpy as np
import pytest

from weylrg.cutoff import smooth_cutoff
from weylrg.lattice import build_params, weyl_points
from weylrg.propagator import GridSpec, free_propagator
from weylrg import multiscale as ms


def const_couplings(p, regime):
    c0 = ms.initial_couplings(p, regime=regime)
    return lambda h: c0.replace(h=h)


def test_smooth_cutoff_plateaus():
    assert smooth_cutoff(0.5) == 1.0
    assert smooth_cutoff(1.0) == 1.0
    assert smooth_cutoff(3.0) == 0.0
    assert smooth_cutoff(2.0) == 0.0
    v = smooth_cutoff(1.5)
    assert 0.0 < v < 1.0
    assert smooth_cutoff(1.4) > smooth_cutoff(1.6)


def test_smooth_cutoff_monotone_on_ramp():
    s = np.linspace(1.0, 2.0, 200)
    vals = smooth_cutoff(s)
    assert np.all(np.diff(vals) <= 1e-15)
    with pytest.raises(ValueError):
        smooth_cutoff(-0.1)


def test_crossover_scale_examples(p_star, p_small_r):
    assert ms.crossover_scale(p_star) == 0
    assert ms.crossover_scale(p_small_r) == -4
    p0 = build_params(1.0, 0.5, 2.0, r=0.0)
    assert ms.crossover_scale(p0) == float("-inf")


def test_scale_support_examples(p_small_r):
    c = ms.initial_couplings(p_small_r)
    cut = ms.default_cutoff(p_small_r)
    # deep infrared: chi = 1
    chi, f = ms.scale_support((0.0, 0.0, 0.0, 0.0), -3, c, p_small_r, cut)
    # energy at origin is t_perp*r, tiny; cumulative cutoff is 1 there
    assert chi == pytest.approx(1.0)
    # energy_scale = 4 a0 2^h has chibar argument 4 -> chi_h = 0
    kk = (4.0 * cut.a0 * 2.0 ** -3, 0.0, 0.0, np.pi / 2)
    e = ms.energy_scale_h(kk, c, p_small_r)
    assert smooth_cutoff(e / (cut.a0 * 2.0 ** -3)) == 0.0


def test_scale_support_telescoping(p_small_r):
    c = ms.initial_couplings(p_small_r)
    cut = ms.default_cutoff(p_small_r)
    rng = np.random.default_rng(7)
    for _ in range(20):
        kk = (rng.uniform(-0.1, 0.1), rng.uniform(-0.5, 0.5),
              rng.uniform(-0.5, 0.5), rng.uniform(-1.5, 1.5))
        total = 0.0
        for h in range(0, -7, -1):
            chi, f = ms.scale_support(kk, h, c, p_small_r, cut)
            assert -1e-15 <= f <= 1.0
            total += f
        chi0, _ = ms.scale_support(kk, 0, c, p_small_r, cut)
        chim7, _ = ms.scale_support(kk, -7, c, p_small_r, cut)
        assert abs(total + chim7 - chi0) < 1e-14


def test_band_values_match_direct_inversion(p_small_r):
    c = ms.initial_couplings(p_small_r).replace(h=-2)
    cut = ms.default_cutoff(p_small_r)
    grid = GridSpec(L=2048, beta=2048.0, M=0)
    pg = ms.single_scale_propagator_r1(-2, c, p_small_r, grid, cut)
    assert len(pg) > 100
    # at bare couplings A_h == A, so the band value is f * A^{-1} / Z
    rng = np.random.default_rng(8)
    for i in rng.integers(0, len(pg), size=25):
        kk = tuple(pg.momenta[i])
        _, f = ms.scale_support(kk, -2, c, p_small_r, cut)
        expect = f * free_propagator(kk, p_small_r) / c.Z
        assert np.max(np.abs(pg.values[i] - expect)) < 1e-12


def test_band_empty_support_warning(p_small_r):
    c = ms.initial_couplings(p_small_r).replace(h=-5)
    with pytest.warns(UserWarning, match="grid too coarse"):
        ms.band_grid_r1(-5, c, p_small_r, GridSpec(L=8, beta=16.0, M=0))


def test_regime1_sup_scaling(p_small_r):
    rep = ms.decay_audit(range(-5, -1), const_couplings(p_small_r, 1), p_small_r,
                         regime=1)
    # lattice-regime scaling: sup ~ 2^{5h/2}; adjacent-scale ratio within 25%
    sups = {r.h: r.sup for r in rep.rows}
    for h in (-2, -3, -4):
        ratio = sups[h] / sups[h - 1]
        assert ratio == pytest.approx(2.0 ** 2.5, rel=0.25)
    assert rep.width_x0_exponent == pytest.approx(-1.0, abs=0.15)
    assert rep.width_x3_exponent == pytest.approx(-0.5, abs=0.1)


def test_regime2_sup_scaling(p_star):
    rep = ms.decay_audit(range(-5, -1), const_couplings(p_star, 2), p_star,
                         regime=2, h_star=0)
    sups = {r.h: r.sup for r in rep.rows}
    for h in (-2, -3, -4):
        assert sups[h] / sups[h - 1] == pytest.approx(8.0, rel=0.25)
    # max-norm constant sup * Z * v3 / 2^{3h} stable across scales
    consts = [r.constant for r in rep.rows]
    assert max(consts) / min(consts) < 1.3


def test_regime2_omega_symmetry(p_star):
    cut = ms.default_cutoff(p_star)
    c = ms.initial_couplings(p_star, regime=2).replace(h=-3)
    emax, ext12, k3max = ms._band_bounds_r2(-3, c, p_star, cut, 0)
    sp = (2 * emax / 16, 2 * ext12 / 16, 2 * k3max / 16)
    bp = ms.band_grid_r2(-3, +1, c, p_star, None, cut, 0, warn_sparse=False, spacings=sp)
    bm = ms.band_grid_r2(-3, -1, c, p_star, None, cut, 0, warn_sparse=False, spacings=sp)
    x0s, xps, x3s = [0.0, 5.0], [0.0], np.linspace(0, 30, 7)
    gp = bp.position_values(x0s, xps, xps, x3s)
    gm = bm.position_values(x0s, xps, xps, -x3s)
    # k3 -> -k3 model symmetry: |g_+(x3)| = |g_-(-x3)|
    assert np.max(np.abs(np.abs(gp) - np.abs(gm))) < 1e-12 * max(1.0, np.max(np.abs(gp)))


def test_quasiparticle_split_sum_rule(p_star):
    cut = ms.default_cutoff(p_star)
    c = ms.initial_couplings(p_star, regime=2)
    wp = weyl_points(p_star)
    rng = np.random.default_rng(9)
    scale = 4.0 / cut.b0  # support reaches e <= 4 2^{h*}/b0
    # oversample the support box, then keep 1000 supported momenta
    cand = np.column_stack([
        rng.uniform(-scale, scale, 60_000),
        rng.uniform(-scale, scale, 60_000),
        rng.uniform(-scale, scale, 60_000),
        rng.uniform(-scale / wp.v30, scale / wp.v30, 60_000)])
    chis = ms.chi_support((cand[:, 0], cand[:, 1], cand[:, 2], cand[:, 3]),
                          -1, c, p_star, cut, regime=2, omega=+1)
    supported = cand[np.asarray(chis) > 0][:1000]
    assert len(supported) == 1000
    import math
    for row in supported:
        kk = (row[0], row[1], row[2], wp.p_F + row[3])
        w = ms.quasiparticle_split(kk, 0, c, p_star, cut, check=False)
        k3p = math.remainder(kk[3], 2.0 * np.pi) - wp.p_F
        chi = ms.chi_support((row[0], row[1], row[2], k3p), -1, c, p_star,
                             cut, regime=2, omega=+1)
        assert w[-1] == 0.0
        assert abs(w[+1] + w[-1] - chi) < 1e-14


def test_disconnection_check_rejects_small_b0(p_star):
    cut = ms.CutoffSpec(a0=p_star.a0, b0=0.25)
    c = ms.initial_couplings(p_star, regime=2)
    with pytest.raises(ms.ConfigurationError):
        ms.disconnection_check(p_star, 0, c, cut)
    ms.disconnection_check(p_star, 0, c, ms.default_cutoff(p_star))  # passes


def test_relativistic_split_resums_exactly(p_star):
    cut = ms.default_cutoff(p_star)
    c = ms.initial_couplings(p_star, regime=2).replace(h=-3)
    emax, ext12, k3max = ms._band_bounds_r2(-3, c, p_star, cut, 0)
    sp = (2 * emax / 12, 2 * ext12 / 12, 2 * k3max / 12)
    bg, rel, rem = ms.relativistic_split_r2(-3, +1, c, p_star, None, cut, 0, spacings=sp)
    full = bg.entries()
    for a, b, d in zip(full, rel, rem):
        assert np.max(np.abs(a - (b + d))) < 1e-14


def test_relativistic_split_agrees_at_origin(p_star):
    # at kk' = 0 the linearized and full sigma3 coefficients coincide
    c = ms.initial_couplings(p_star, regime=2)
    m1, m2, m3 = ms.mass_vector_r2(0.0, 0.0, 0.0, +1, c, p_star)
    assert abs(m3) < 1e-14 and abs(m1) < 1e-14 and abs(m2) < 1e-14


def test_remainder_halves_per_scale(p_star):
    cut = ms.default_cutoff(p_star)
    ratios = {}
    for h in (-2, -3, -4):
        c = ms.initial_couplings(p_star, regime=2).replace(h=h)
        emax, ext12, k3max = ms._band_bounds_r2(h, c, p_star, cut, 0)
        sp = (2 * emax / 20, 2 * ext12 / 20, 2 * k3max / 20)
        bg, rel, rem = ms.relativistic_split_r2(h, +1, c, p_star, None, cut, 0,
                                                spacings=sp)
        x0s = np.linspace(0, 4 / emax, 9)
        x3s = np.linspace(0, 4 / max(abs(bg.k3s).max(), 1e-12), 9)
        g = bg.position_values(x0s, [0.0], [0.0], x3s)
        r = bg.position_values(x0s, [0.0], [0.0], x3s, entries=rem)
        ratios[h] = np.max(np.abs(r)) / np.max(np.abs(g))
    for h in (-3, -4):
        assert ratios[h + 1] / ratios[h] == pytest.approx(2.0, rel=0.3)


def test_decay_audit_l1_reported(p_small_r):
    rep = ms.decay_audit(range(-4, -1), const_couplings(p_small_r, 1), p_small_r,
                         regime=1)
    assert all(r.l1_mass > 0 for r in rep.rows)
    assert np.isfinite(rep.l1_exponent)  # reported, not asserted (see module notes)


def test_decay_audit_insufficient_grid(p_small_r):
    with pytest.raises(ms.InsufficientGridError):
        ms.decay_audit(range(-3, -1), const_couplings(p_small_r, 1), p_small_r,
                       regime=1, x_points=5)


def test_audits_deterministic(p_small_r):
    r1 = ms.decay_audit(range(-3, -1), const_couplings(p_small_r, 1), p_small_r, regime=1)
    r2 = ms.decay_audit(range(-3, -1), const_couplings(p_small_r, 1), p_small_r, regime=1)
    assert r1.summary() == r2.summary()
