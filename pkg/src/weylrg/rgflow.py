"""Running-coupling flow: localization, one-loop beta, counterterm fixed point.

The effective potential is truncated to the quadratic kernel generated at
first order in U at every scale (Hartree plus Fock over the scale being
integrated), so each flow step computes

  sigma_h(kk) = U vhat(0) tr[g^(h)(0)] I  -  U (1/(beta L^3)) sum_p vhat(kbar - pbar) g^(h)(p),

localizes it at the expansion point (0 in regime 1, omega p_F in regime 2)
and absorbs the local part into (Z, v, v3, nu).  Raw localized coefficients
are stored as plain derivatives (the symmetry-projected n, b0, b+, b-, b3);
update_couplings applies the basis orientation of the reference matrix:
the regime-1 axial basis function (cos k3 - 1) has second derivative -1 and
the regime-2 one -omega sin k3' has slope -omega, so those coefficients enter
with a compensating sign.

nu bookkeeping is dimensionless: the local term at scale h is 2^h nu_h, and
nu_{h-1} = 2 nu_h + beta_nu^(h) with beta_nu^(h) = n_h 2^(1-h) / Z_{h-1}.
Choosing the scale-0 boundary value nu = -sum_k 2^(k-1) beta_nu^(k) keeps
nu_h bounded; with nu = 0 it grows like 2^-h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import HoppingParams, ID2, SIGMA1, SIGMA2, SIGMA3, weyl_points
from .propagator import GridSpec, mass_vector
from .cutoff import smooth_cutoff
from .multiscale import (BandGrid, CutoffSpec, RunningCouplings,
                         band_grid_r1, band_grid_r2, _band_bounds_r1, _band_bounds_r2,
                         crossover_scale, default_cutoff, initial_couplings)


class FlowBlowupError(RuntimeError):
    """A coupling left the validity window during the flow."""


class StencilError(ValueError):
    """Finite-difference stencil spacing degenerate."""


class QuadratureError(RuntimeError):
    """Momentum quadrature failed (band unresolved at the requested scale)."""


# --- interaction ------------------------------------------------------------

@dataclass(frozen=True)
class InteractionSpec:
    """Short-range density-density interaction with an evaluable transform.

    The default family is the separable lattice exponential
    v(x) = exp(-kappa (|x1|+|x2|+|x3|)), whose transform factorizes into
    Poisson kernels per axis; vhat is smooth, even and positive and can be
    evaluated at arbitrary momenta.
    """

    kappa: float
    amplitude: float = 1.0

    def axis_value(self, q):
        e = math.exp(-self.kappa)
        return (1.0 - e * e) / (1.0 - 2.0 * e * np.cos(np.asarray(q, float)) + e * e)

    def v_hat(self, q1, q2, q3):
        return self.amplitude * self.axis_value(q1) * self.axis_value(q2) * self.axis_value(q3)

    @property
    def v_hat_0(self) -> float:
        return float(self.v_hat(0.0, 0.0, 0.0))

    def real_space(self, x1: int, x2: int, x3: int) -> float:
        return self.amplitude * math.exp(-self.kappa * (abs(x1) + abs(x2) + abs(x3)))


def exponential_interaction(kappa: float = 1.0, amplitude: float = 1.0) -> InteractionSpec:
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return InteractionSpec(kappa=kappa, amplitude=amplitude)


# --- localization -----------------------------------------------------------

@dataclass(frozen=True)
class LocalizedKernel:
    """Symmetry-projected Taylor data of a 2x2 kernel at the expansion point.

    n_h:  sigma3 component of W(0); b0_h: coefficient of -i k0 I in the k0
    slope; bplus/bminus: sigma1/sigma2 components of the sin k+- slopes;
    b3_h: sigma3 component of d^2/dk3^2 W (regime 1) or d/dk3' W (regime 2).
    Raw derivatives; basis orientation is applied by update_couplings.
    """

    n_h: float
    b0_h: float
    bplus_h: float
    bminus_h: float
    b3_h: float
    regime: int
    omega: int = 1
    residual: float = 0.0


def _project(mat, pauli) -> float:
    return float(np.real(np.trace(pauli @ mat)) / 2.0)


def _central(kernel, point, axis, delta):
    up = list(point)
    dn = list(point)
    up[axis] += delta
    dn[axis] -= delta
    return (kernel(tuple(up)) - kernel(tuple(dn))) / (2.0 * delta)


def _second(kernel, point, axis, delta, w0=None):
    up = list(point)
    dn = list(point)
    up[axis] += delta
    dn[axis] -= delta
    w0 = kernel(tuple(point)) if w0 is None else w0
    return (kernel(tuple(up)) - 2.0 * w0 + kernel(tuple(dn))) / delta ** 2


def _richardson(stencil, delta):
    d1 = stencil(delta)
    d2 = stencil(delta / 2.0)
    return (4.0 * d2 - d1) / 3.0


def localize_kernel(kernel, regime: int, point=(0.0, 0.0, 0.0, 0.0), omega: int = 1,
                    spacing: float = np.pi / 32.0) -> LocalizedKernel:
    """Extract the local Taylor data of kernel(kk) -> 2x2 at the expansion point.

    Regime 1 takes {value, k0 slope, sin k+- slopes, k3 curvature} at 0;
    regime 2 {value, k0 slope, sin k+- slopes, k3' slope} at omega p_F (pass
    the expansion point explicitly; regime-2 kernels take relative momenta).
    Central differences, Richardson-extrapolated once.
    """
    if spacing < 1e-8:
        raise StencilError(f"stencil spacing {spacing:g} underflows")
    w0 = kernel(tuple(point))
    n = _project(w0, SIGMA3)
    d0 = _richardson(lambda d: _central(kernel, point, 0, d), spacing)
    b0 = -float(np.imag(np.trace(d0)) / 2.0)  # dW/dk0 = -i b0 I + ...

    # sin k+ direction: k1 = k2 = d; sin k-: k1 = -k2 = d
    def dplus(d):
        up = (point[0], point[1] + d, point[2] + d, point[3])
        dn = (point[0], point[1] - d, point[2] - d, point[3])
        return (kernel(up) - kernel(dn)) / (2.0 * d)

    def dminus(d):
        up = (point[0], point[1] + d, point[2] - d, point[3])
        dn = (point[0], point[1] - d, point[2] + d, point[3])
        return (kernel(up) - kernel(dn)) / (2.0 * d)

    bplus = _project(_richardson(dplus, spacing), SIGMA1)
    bminus = _project(_richardson(dminus, spacing), SIGMA2)
    if regime == 1:
        d3 = _richardson(lambda d: _second(kernel, point, 3, d, w0=w0), spacing)
    else:
        d3 = _richardson(lambda d: _central(kernel, point, 3, d), spacing)
    b3 = _project(d3, SIGMA3)
    # how much of the value sits outside the symmetry pattern
    resid = float(abs(np.trace(w0) / 2.0) + abs(_project(w0, SIGMA1)) + abs(_project(w0, SIGMA2)))
    return LocalizedKernel(n_h=n, b0_h=b0, bplus_h=bplus, bminus_h=bminus, b3_h=b3,
                           regime=regime, omega=omega, residual=resid)


def update_couplings(c: RunningCouplings, loc: LocalizedKernel) -> RunningCouplings:
    """Absorb normalized localized coefficients (b / Z_h) into the couplings.

    Z_{h-1} = Z_h (1 + b0); v_{h-1} = (Z_h/Z_{h-1})(v_h + b+); the axial
    coupling gets the orientation factor of its basis function: -1 in regime 1
    ((cos k3 - 1) curvature) and -omega in regime 2 (-omega sin k3' slope).
    nu is flown separately (flow_step).
    """
    if 1.0 + loc.b0_h <= 0.0:
        raise FlowBlowupError(f"wavefunction update 1 + b0 = {1.0 + loc.b0_h:g} <= 0")
    z_new = c.Z * (1.0 + loc.b0_h)
    ratio = c.Z / z_new
    v_new = ratio * (c.v + loc.bplus_h)
    s3 = -1.0 if loc.regime == 1 else -float(loc.omega)
    v3_new = ratio * (c.v3 + s3 * loc.b3_h)
    if v_new <= 0 or v3_new <= 0:
        raise FlowBlowupError("velocity turned non-positive")
    return c.replace(Z=z_new, v=v_new, v3=v3_new, h=c.h - 1)


# --- one-loop self-energy ----------------------------------------------------

def _fock_from_band(bg: BandGrid, inter: InteractionSpec, kbar, p: HoppingParams):
    """(1/(beta L^3)) sum_p vhat(kbar - pbar) g^(h)(p) over one band (2x2).

    Regime-2 bands hold relative momenta; the valley shift omega p_F enters
    the third interaction argument.
    """
    if bg.weight.size == 0:
        return np.zeros((2, 2), complex)
    e00, e01, e10, e11 = bg.entries()
    shift = 0.0
    if bg.regime == 2:
        shift = bg.omega * weyl_points(bg.params).p_F
    d1 = inter.amplitude * inter.axis_value(kbar[0] - bg.k1s)
    d2 = inter.axis_value(kbar[1] - bg.k2s)
    d3 = inter.axis_value(kbar[2] - shift - bg.k3s)
    out = np.empty((2, 2), complex)
    for (i, j), f in zip(((0, 0), (0, 1), (1, 0), (1, 1)), (e00, e01, e10, e11)):
        s = np.einsum("abcd,b,c,d->", f, d1, d2, d3, optimize=True)
        out[i, j] = bg.cell * s
    return out


def _hartree_from_band(bg: BandGrid, inter: InteractionSpec):
    """U-free Hartree factor vhat(0) tr g^(h)(x=0) (vanishes at half filling)."""
    if bg.weight.size == 0:
        return 0.0
    e00, _, _, e11 = bg.entries()
    return inter.v_hat_0 * bg.cell * complex(np.sum(e00) + np.sum(e11))


def band_self_energy(kk_abs, bands, inter: InteractionSpec, U: float) -> np.ndarray:
    """First-order self-energy from a collection of bands at absolute momentum.

    sigma(kk) = U vhat(0) tr[g(0)] I - U sum_band Fock(kk); the k0 component
    of kk only selects the instantaneous interaction (no k0 dependence).
    """
    kbar = (kk_abs[1], kk_abs[2], kk_abs[3])
    hart = 0.0
    fock = np.zeros((2, 2), complex)
    for bg in bands:
        hart += _hartree_from_band(bg, inter)
        fock += _fock_from_band(bg, inter, kbar, bg.params)
    return U * hart * ID2 - U * fock


def self_energy_first_order(kk, h: int, c: RunningCouplings, inter: InteractionSpec,
                            U: float, p: HoppingParams, n_k: int = 12,
                            cutoff: CutoffSpec | None = None) -> np.ndarray:
    """One-loop self-energy of the scales above h at frozen couplings.

    Builds the regime-1 bands h+1..0 (frozen at c) and sums Hartree + Fock;
    equals the direct cumulative-support sum by telescoping of the f_k.
    """
    cutoff = cutoff or default_cutoff(p)
    if h >= 0:
        return np.zeros((2, 2), complex)
    bands = [_adapted_band_r1(k, c.replace(h=k), p, cutoff, n_k)
             for k in range(0, h, -1)]
    return band_self_energy(kk, bands, inter, U)


def _adapted_band_r1(h, c, p, cutoff, n_k, allow_empty: bool = False) -> BandGrid:
    emax, ext12, k3lo, k3hi = _band_bounds_r1(h, c, p, cutoff)
    sp = (2.0 * emax / n_k, 2.0 * ext12 / n_k, max(2.0 * k3hi / n_k, 1e-12))
    bg = band_grid_r1(h, c, p, cutoff=cutoff, warn_sparse=False, spacings=sp)
    if bg.support_points == 0 and not allow_empty:
        raise QuadratureError(f"regime-1 band empty at h={h}")
    return bg


def _adapted_band_r2(h, omega, c, p, cutoff, h_star, n_k) -> BandGrid:
    emax, ext12, k3max = _band_bounds_r2(h, c, p, cutoff, h_star)
    sp = (2.0 * emax / n_k, 2.0 * ext12 / n_k, max(2.0 * k3max / n_k, 1e-12))
    bg = band_grid_r2(h, omega, c, p, None, cutoff, h_star,
                      warn_sparse=False, spacings=sp)
    if bg.support_points == 0:
        raise QuadratureError(f"regime-2 band empty at h={h}, omega={omega}")
    return bg


def _adapted_crossover(h_star, c, p, cutoff, n_k) -> BandGrid:
    """Bridge band on adapted axes: upper cutoff chi_{h*}, lower the
    two-component chi_{h*-1} evaluated through the valley split.

    The k3 axis is refined 8x: the bridge spans several energy octaves whose
    valley slices are thin in k3 at steep dispersion (large r).
    """
    emax, ext12, k3lo, k3hi = _band_bounds_r1(h_star, c, p, cutoff)
    n_k3 = max(96, 8 * n_k)
    sp = (2.0 * emax / n_k, 2.0 * ext12 / n_k, max(2.0 * k3hi / n_k3, 1e-12))
    bg = band_grid_r1(h_star, c, p, cutoff=cutoff, warn_sparse=False, spacings=sp)
    from .multiscale import mass_vector_r1, mass_vector_r2, _chi_arg
    wp = weyl_points(p)
    K1, K2, K3 = np.meshgrid(bg.k1s, bg.k2s, bg.k3s, indexing="ij")
    m1, m2, m3 = mass_vector_r1(K1, K2, K3, c, p)
    e1 = np.sqrt(bg.k0s[:, None, None, None] ** 2 + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None])
    chi_top = smooth_cutoff(_chi_arg(h_star, 1, cutoff) * e1)
    k3c = np.where(K3 > np.pi, K3 - 2.0 * np.pi, K3)
    chi_low = np.zeros_like(chi_top)
    for omega in (+1, -1):
        theta = np.where(omega * k3c > 0, 1.0, np.where(k3c == 0.0, 0.5, 0.0))
        m1o, m2o, m3o = mass_vector_r2(K1, K2, k3c - omega * wp.p_F, omega, c, p)
        eo = np.sqrt(bg.k0s[:, None, None, None] ** 2 + (m1o ** 2 + m2o ** 2 + m3o ** 2)[None])
        chi_low += theta[None] * smooth_cutoff(_chi_arg(h_star - 1, 2, cutoff) * eo)
    bg.weight = np.clip(chi_top - chi_low, 0.0, None)
    if bg.support_points == 0:
        raise QuadratureError(f"crossover band empty at h*={h_star}")
    return bg


def _insulator_tail_band(h_star, c, p, cutoff, n_k) -> BandGrid:
    """Remaining infrared in one step: weight chi_{h*} (no lower cutoff).

    An insulator near the window edge can have its whole infrared gapped out
    (minimum energy t_perp |r| at or above the chi_{h*} support); the band is
    then legitimately empty and the single step is trivial.
    """
    bg = _adapted_band_r1(h_star, c, p, cutoff, n_k, allow_empty=True)
    from .multiscale import mass_vector_r1, _chi_arg
    if bg.weight.size:
        K1, K2, K3 = np.meshgrid(bg.k1s, bg.k2s, bg.k3s, indexing="ij")
        m1, m2, m3 = mass_vector_r1(K1, K2, K3, c, p)
        e = np.sqrt(bg.k0s[:, None, None, None] ** 2
                    + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None])
        bg.weight = smooth_cutoff(_chi_arg(h_star, 1, cutoff) * e)
    return bg


# --- flow -------------------------------------------------------------------

@dataclass
class BetaRecord:
    h: int
    regime: int
    b0: float
    bplus: float
    bminus: float
    b3: float
    beta_nu: float
    max_dimensionless: float
    snap_offset: float = 0.0
    band_points: int = 0


@dataclass
class FlowRow:
    h: int
    couplings: RunningCouplings
    beta: BetaRecord | None


@dataclass
class FlowTrajectory:
    params: HoppingParams
    U: float
    h_star: int | float
    h_min: int
    cutoff: CutoffSpec
    nu0: float
    rows: list
    final: RunningCouplings
    v3_crossover: float | None
    termination: str
    bands: list = field(default_factory=list)

    @property
    def max_dimensionless_beta(self) -> float:
        vals = [r.beta.max_dimensionless for r in self.rows if r.beta is not None]
        return max(vals) if vals else 0.0

    def nu_of_h(self) -> dict:
        out = {0: self.nu0}
        for r in self.rows:
            if r.beta is not None:
                out[r.h - 1] = 2.0 * out[r.h] + r.beta.beta_nu
        return out

    def csv_rows(self):
        rows = []
        for r in self.rows:
            b = r.beta
            rows.append((r.h, r.couplings.Z, r.couplings.v, r.couplings.v3,
                         r.couplings.nu, b.beta_nu if b else 0.0, r.couplings.regime))
        rows.append((self.final.h, self.final.Z, self.final.v, self.final.v3,
                     self.final.nu, 0.0, self.final.regime))
        return rows


def _step_beta(h, c, band_or_bands, inter, U, p, regime, omega=1, point=None,
               spacing=np.pi / 32.0):
    """Localized kernel of the one-loop self-energy of a single scale."""
    bands = band_or_bands if isinstance(band_or_bands, list) else [band_or_bands]

    def kernel(kk):
        if regime == 2:
            kk_abs = (kk[0], kk[1], kk[2], kk[3] + omega * weyl_points(p).p_F)
        else:
            kk_abs = kk
        return band_self_energy(kk_abs, bands, inter, U)

    pt = (0.0, 0.0, 0.0, 0.0) if point is None else point
    return localize_kernel(kernel, regime=regime, point=pt, omega=omega, spacing=spacing)


def flow_step(h: int, c: RunningCouplings, band_or_bands, inter: InteractionSpec,
              U: float, p: HoppingParams):
    """One scale integration: localize the scale-h self-energy and update.

    Returns (couplings at h-1, BetaRecord).  nu flows as nu_{h-1} = 2 nu_h +
    beta_nu with the dimensionless beta_nu = n_h 2^(1-h)/Z_{h-1}.
    """
    regime = c.regime
    loc_raw = _step_beta(h, c, band_or_bands, inter, U, p, regime,
                         omega=1 if regime == 1 else +1)
    z = c.Z
    loc = LocalizedKernel(n_h=loc_raw.n_h / z, b0_h=loc_raw.b0_h / z,
                          bplus_h=loc_raw.bplus_h / z, bminus_h=loc_raw.bminus_h / z,
                          b3_h=loc_raw.b3_h / z, regime=regime, omega=loc_raw.omega,
                          residual=loc_raw.residual)
    c_new = update_couplings(c, loc)
    beta_nu = loc_raw.n_h * 2.0 ** (1 - h) / c_new.Z  # n normalized by Z_{h-1}
    nu_new = 2.0 * c.nu + beta_nu
    c_new = c_new.replace(nu=nu_new)
    dimless = max(abs(loc.b0_h), abs(loc.bplus_h) / c.v, abs(loc.bminus_h) / c.v,
                  abs(loc.b3_h) / c.v3, abs(beta_nu))
    bands = band_or_bands if isinstance(band_or_bands, list) else [band_or_bands]
    rec = BetaRecord(h=h, regime=regime, b0=loc.b0_h, bplus=loc.bplus_h,
                     bminus=loc.bminus_h, b3=loc.b3_h, beta_nu=beta_nu,
                     max_dimensionless=dimless,
                     snap_offset=max(abs(b.snap_offset) for b in bands),
                     band_points=sum(b.support_points for b in bands))
    return c_new, rec


def _check_window(c: RunningCouplings, ref: RunningCouplings, eps0: float):
    if abs(c.Z - 1.0) > eps0 or abs(c.v / ref.v - 1.0) > eps0 or \
            abs(c.v3 / ref.v3 - 1.0) > eps0:
        raise FlowBlowupError(
            f"couplings left the eps0 = {eps0} window at h = {c.h}: "
            f"Z={c.Z:g} v={c.v:g} v3={c.v3:g}")


def run_flow(p: HoppingParams, U: float, inter: InteractionSpec, h_min: int,
             nu0: float = 0.0, n_k: int = 12, eps0: float = 0.5,
             cutoff: CutoffSpec | None = None, keep_bands: bool = True) -> FlowTrajectory:
    """Iterate flow steps from scale 0 down to h_min.

    Regime 1 runs for h > h*; the h* step integrates the bridge band (upper
    regime-1 cutoff, lower two-component cutoff) after which v3 converts to
    the axial velocity v3 sin(p_F) and regime 2 continues per valley down to
    h_min.  r < 0 stops at h* with the remaining infrared integrated in a
    single step and nu_{h*} = 0.  r = 0 stays in regime 1 throughout.
    """
    if h_min > 0:
        raise ValueError("h_min must be <= 0")
    h_star = crossover_scale(p)
    cutoff = cutoff or default_cutoff(p)
    c = initial_couplings(p, regime=1).replace(nu=nu0)
    ref1 = c
    rows = []
    bands_kept = []
    v3_cross = None
    termination = "completed"
    insulator = p.r < 0
    finite_hstar = h_star != float("-inf")
    wp = weyl_points(p)

    h = 0
    while h > h_min:
        at_crossover = finite_hstar and h == h_star and not insulator
        if finite_hstar and insulator and h == h_star:
            band = _insulator_tail_band(h_star, c, p, cutoff, n_k)
            c_new, rec = flow_step(h, c, band, inter, U, p)
            c_new = c_new.replace(nu=0.0)  # nu_{h*} = 0: no singularity to tune
            rows.append(FlowRow(h=h, couplings=c, beta=rec))
            if keep_bands:
                bands_kept.append(band)
            c = c_new
            termination = "insulator-stop"
            break
        if c.regime == 1 and not at_crossover:
            band = _adapted_band_r1(h, c, p, cutoff, n_k)
            c_new, rec = flow_step(h, c, band, inter, U, p)
        elif at_crossover:
            band = _adapted_crossover(h_star, c, p, cutoff, n_k)
            c_new, rec = flow_step(h, c, band, inter, U, p)
            # enter regime 2: the axial coupling becomes the Weyl velocity
            v3_cross = c_new.v3 * math.sin(wp.p_F)
            c_new = c_new.replace(v3=v3_cross, regime=2)
        else:
            bands = [_adapted_band_r2(h, om, c, p, cutoff,
                                      h_star if finite_hstar else 0, n_k)
                     for om in (+1, -1)]
            c_new, rec = flow_step(h, c, bands, inter, U, p)
            band = bands
        rows.append(FlowRow(h=h, couplings=c, beta=rec))
        if keep_bands:
            bands_kept.extend(band if isinstance(band, list) else [band])
        ref = ref1 if c_new.regime == 1 else ref1.replace(v3=v3_cross)
        _check_window(c_new, ref, eps0)
        c = c_new
        h -= 1

    return FlowTrajectory(params=p, U=U, h_star=h_star, h_min=c.h, cutoff=cutoff,
                          nu0=nu0, rows=rows, final=c, v3_crossover=v3_cross,
                          termination=termination, bands=bands_kept)


def solve_nu(p: HoppingParams, U: float, inter: InteractionSpec, h_min: int,
             n_k: int = 12, tol: float = 1e-10, max_iter: int = 200,
             damping: float = 0.5, cutoff: CutoffSpec | None = None):
    """Fixed point for the scale-0 counterterm making nu_h bounded.

    Damped iteration on nu = -sum_k 2^(k-1) beta_nu^(k) (betas re-measured on
    each trial flow); at one loop the betas are nu-independent so convergence
    is immediate, but the iteration verifies it to `tol`.
    Returns (nu, trajectory at the solved value).
    """
    nu = 0.0
    traj = None
    for _ in range(max_iter):
        traj = run_flow(p, U, inter, h_min, nu0=nu, n_k=n_k, cutoff=cutoff,
                        keep_bands=True)
        target = -sum(2.0 ** (r.h - 1) * r.beta.beta_nu
                      for r in traj.rows if r.beta is not None)
        if abs(target - nu) < tol:
            return target, run_flow(p, U, inter, h_min, nu0=target, n_k=n_k,
                                    cutoff=cutoff, keep_bands=True)
        nu = (1.0 - damping) * nu + damping * target
    raise FlowBlowupError(f"nu fixed point did not converge within {max_iter} iterations")


# --- dressed propagator and observables --------------------------------------

def uv_self_energy(kk_abs, p: HoppingParams, inter: InteractionSpec, U: float,
                   grid: GridSpec, cutoff: CutoffSpec | None = None) -> np.ndarray:
    """One-loop self-energy of the region above scale 0: weight (1 - chi_0)
    under the 2^M frequency cutoff, by direct quadrature over `grid`.

    The scale-0 flow starts from bare vertices; this helper supplies the
    complementary ultraviolet dressing when a full-support one-loop object is
    needed (e.g. comparing against the full-support velocity integrals).
    """
    cutoff = cutoff or default_cutoff(p)
    k0 = grid.matsubara_frequencies()
    cut = smooth_cutoff(np.abs(k0) / 2.0 ** grid.M)
    kbar = grid.spatial_momenta()
    m1, m2, m3 = mass_vector(kbar[:, 0], kbar[:, 1], kbar[:, 2], p)
    lam2 = m1 ** 2 + m2 ** 2 + m3 ** 2
    s0 = np.zeros(kbar.shape[0])
    for lo in range(0, k0.size, 4096):
        k0c = k0[lo:lo + 4096, None]
        e = np.sqrt(k0c ** 2 + lam2[None, :])
        w = cut[lo:lo + 4096, None] * (1.0 - smooth_cutoff(e / cutoff.a0))
        s0 += np.sum(w / (k0c ** 2 + lam2[None, :]), axis=0)
    s0 /= grid.beta
    d = inter.v_hat(kk_abs[1] - kbar[:, 0], kk_abs[2] - kbar[:, 1],
                    kk_abs[3] - kbar[:, 2])
    fock = np.zeros((2, 2), complex)
    fock[0, 0] = np.sum(d * m3 * s0)
    fock[1, 1] = -fock[0, 0]
    fock[0, 1] = np.sum(d * (m1 - 1j * m2) * s0)
    fock[1, 0] = np.sum(d * (m1 + 1j * m2) * s0)
    fock /= grid.L ** 3
    # the Hartree piece (tr of the ik0 entries) cancels in the symmetric
    # frequency sum: half filling
    return -U * fock


def dressed_inverse(kk_abs, traj: FlowTrajectory, inter: InteractionSpec,
                    uv_grid: GridSpec | None = None) -> np.ndarray:
    """A(kk) + nu sigma3 + sigma_total(kk) with the full accumulated one loop.

    With uv_grid the above-scale-0 dressing (uv_self_energy) is added; by
    default only the infrared scales the flow integrated enter, matching the
    counterterm produced by solve_nu.
    """
    from .propagator import inverse_propagator
    sig = band_self_energy(kk_abs, traj.bands, inter, traj.U)
    if uv_grid is not None:
        sig = sig + uv_self_energy(kk_abs, traj.params, inter, traj.U, uv_grid,
                                   traj.cutoff)
    return inverse_propagator(kk_abs, traj.params) + traj.nu0 * SIGMA3 + sig


def dressed_det_scan(traj: FlowTrajectory, inter: InteractionSpec, L: int):
    """|det| of the dressed inverse propagator at k0 = 0 along the k3 axis.

    Returns (k3 grid values, |det| array); the minimizer location is the
    acceptance observable for the counterterm fixed point.
    """
    k3s = 2.0 * np.pi * np.arange(L) / L
    dets = np.empty(L)
    for i, k3 in enumerate(k3s):
        d = dressed_inverse((0.0, 0.0, 0.0, k3), traj, inter)
        dets[i] = abs(np.linalg.det(d))
    return k3s, dets


def asymptotic_constants(p: HoppingParams, inter: InteractionSpec, grid: GridSpec,
                         delta: float = np.pi / 64.0, support: str = "full",
                         cutoff: CutoffSpec | None = None):
    """First-order velocity slopes from the stated one-loop integrals.

    a3 is the sigma3 contraction of the k3 derivative at +p_F of the Fock map
    built on the UV-regularized propagator (quadrature over `grid`), with the
    regime-2 basis orientation (-sin k3') applied; aplus the sigma1
    contraction of the sin k+ slope.  v3 = v30 + a3 U + O(U^2) and
    v = t + aplus U + O(U^2); the output is per unit U.

    support selects the integration region: "full" (everything under the
    2^M frequency cutoff), "ir" (weighted by the scale-0 cumulative cutoff
    chi_0, the part the flow integrates) or "uv" (its complement).
    """
    wp = weyl_points(p)
    if wp is None:
        raise ValueError("asymptotic constants need semimetal parameters")
    if support not in ("full", "ir", "uv"):
        raise ValueError("support must be full, ir or uv")
    k0 = grid.matsubara_frequencies()
    cut = smooth_cutoff(np.abs(k0) / 2.0 ** grid.M)
    kbar = grid.spatial_momenta()
    m1, m2, m3 = mass_vector(kbar[:, 0], kbar[:, 1], kbar[:, 2], p)
    lam2 = m1 ** 2 + m2 ** 2 + m3 ** 2

    cutoff = cutoff or default_cutoff(p)
    # frequency-summed propagator entries per kbar (even part only survives)
    s0 = np.zeros(kbar.shape[0])
    for lo in range(0, k0.size, 4096):
        k0c = k0[lo:lo + 4096, None]
        w = cut[lo:lo + 4096, None] * np.ones_like(lam2)[None, :]
        if support != "full":
            e = np.sqrt(k0c ** 2 + lam2[None, :])
            chi0 = smooth_cutoff(e / cutoff.a0)
            w = w * (chi0 if support == "ir" else (1.0 - chi0))
        s0 += np.sum(w / (k0c ** 2 + lam2[None, :]), axis=0)
    s0 /= grid.beta
    g_tr = np.stack([m3 * s0, m1 * s0, m2 * s0])  # sigma3, sigma1, sigma2 parts

    def fock(kvec):
        d = inter.v_hat(kvec[0] - kbar[:, 0], kvec[1] - kbar[:, 1], kvec[2] - kbar[:, 2])
        return -np.array([np.sum(d * g_tr[0]), np.sum(d * g_tr[1])]) / grid.L ** 3

    pF = wp.p_F

    def d3(d):
        return (fock((0.0, 0.0, pF + d)) - fock((0.0, 0.0, pF - d))) / (2.0 * d)

    def dp(d):
        return (fock((d, d, pF)) - fock((-d, -d, pF))) / (2.0 * d)

    s3 = (4.0 * d3(delta / 2.0) - d3(delta)) / 3.0
    sp = (4.0 * dp(delta / 2.0) - dp(delta)) / 3.0
    a3 = -s3[0]   # basis -sin k3' at omega = +1
    aplus = sp[1]
    return float(a3), float(aplus)


def relativistic_form(kkprime, omega: int, Z: float, v: float, v3: float) -> np.ndarray:
    """Inverse of the linearized matrix at couplings (Z, v, v3), valley omega."""
    k0, k1, k2, k3p = kkprime
    kp, km = (k1 + k2) / 2.0, (k1 - k2) / 2.0
    mat = (-1j * k0 * ID2 + v * kp * SIGMA1 + v * km * SIGMA2
           - omega * v3 * k3p * SIGMA3)
    return np.linalg.inv(Z * mat)


def dressed_two_point(kkprime, omega: int, traj: FlowTrajectory,
                      inter: InteractionSpec):
    """Relativistic form at the final couplings plus the measured remainder.

    Returns (S_rel, remainder_ratio, bound, within) where remainder_ratio =
    ||S_rel^{-1} S_dressed - 1|| and bound = |kk'| / v30.
    """
    wp = weyl_points(traj.params)
    k0, k1, k2, k3p = kkprime
    norm_kp = math.sqrt(k0 ** 2 + k1 ** 2 + k2 ** 2 + k3p ** 2)
    bound = norm_kp / wp.v30
    c = traj.final
    s_rel = relativistic_form(kkprime, omega, c.Z, c.v, c.v3)
    kk_abs = (k0, k1, k2, k3p + omega * wp.p_F)
    s_num = np.linalg.inv(dressed_inverse(kk_abs, traj, inter))
    ratio = float(np.linalg.norm(np.linalg.solve(s_rel, s_num) - ID2, 2))
    return s_rel, ratio, bound, ratio <= bound
