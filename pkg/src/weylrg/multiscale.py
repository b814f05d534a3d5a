"""Scale decomposition: cutoff chains, crossover scale, single-scale propagators,
quasi-particle split, relativistic remainder split, and decay-bound audits.

Regime 1 (lattice-dominated, h >= h*) uses the reference matrix

  A_h(kk) = -i k0 I + v_h sin(k+) s1 + v_h sin(k-) s2
            + [v3_h (cos k3 - 1 + r) + E(kbar)] s3

which reduces to the bare A at Z=1, v=t, v3=t_perp.  Regime 2 (h < h*) works
in momenta k' relative to a Weyl point omega p_F:

  A_{h,omega}(k') = -i k0 I + v_h sin(k+) s1 + v_h sin(k-) s2
                    + [-omega v3_h sin k3' + E'(k')] s3,
  E'(k') = t_perp cos(p_F) (cos k3' - 1) + E(kbar),

again exact at bare couplings (v3 enters regime 2 as t_perp sin p_F).  The
planar curvature E and the axial curvature prefactor t_perp cos p_F stay
frozen at their bare values; only (Z, v, v3) run.

Cutoff chains: chi_h = chibar(a0^-1 2^-h |det A_h|^(1/2)) in regime 1 with
a0 = t_perp/10; in regime 2 chi_h = chibar((b0/2) 2^-h |det A_{h,omega}|^(1/2)),
which at h = h*-1 is the two-component cutoff chibar(b0 2^-h* ...).  b0 is
chosen so that support is disconnected across the k3 = 0 plane; the default
puts the cutoff argument at 4 on the inter-valley saddle (energy t_perp |r|).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cutoff import smooth_cutoff
from .lattice import HoppingParams, weyl_points
from .propagator import GridSpec, PropagatorGrid

MIN_BAND_POINTS = 100


class ConfigurationError(ValueError):
    """Support constants violate a structural invariant (e.g. disconnection)."""


class InsufficientGridError(ValueError):
    """Grid cannot resolve the requested scales."""


@dataclass(frozen=True)
class RunningCouplings:
    """Per-scale quadruple (Z_h, v_h, v3_h, nu_h) at scale h, tagged by regime."""

    Z: float
    v: float
    v3: float
    nu: float
    h: int
    regime: int = 1

    def replace(self, **kw) -> "RunningCouplings":
        return replace(self, **kw)


def initial_couplings(p: HoppingParams, regime: int = 1) -> RunningCouplings:
    """Scale-0 couplings: Z=1, v=t, and v3 = t_perp (regime 1) or t_perp sin p_F."""
    if regime == 1:
        return RunningCouplings(Z=1.0, v=p.t, v3=p.t_perp, nu=0.0, h=0, regime=1)
    wp = weyl_points(p)
    if wp is None:
        raise ValueError("regime-2 couplings need semimetal parameters")
    return RunningCouplings(Z=1.0, v=p.t, v3=wp.v30, nu=0.0, h=0, regime=2)


@dataclass(frozen=True)
class CutoffSpec:
    """Support constants: a0 = t_perp/10; b0 sized for valley disconnection."""

    a0: float
    b0: float
    c1: float = 0.5
    c2: float = 2.0

    def __post_init__(self):
        if not self.c1 < self.c2:
            raise ValueError("need c1 < c2")


def crossover_scale(p: HoppingParams):
    """h* = floor(min(log2(a0^-1 10 |r|), 0)); -inf sentinel at r = 0."""
    if p.r == 0.0:
        return float("-inf")
    val = math.log2(abs(p.r) * 10.0 / p.a0)
    if abs(val - round(val)) < 1e-9:
        val = round(val)  # exact dyadic arguments must not fall off the floor
    return int(math.floor(min(val, 0.0)))


def default_cutoff(p: HoppingParams, h_star: int | None = None) -> CutoffSpec:
    """CutoffSpec with the r-uniform default b0 = 4/a0^2.

    Since 2^h* <= 10|r|/a0, the cutoff argument on the inter-valley saddle
    (energy t_perp |r|) satisfies b0 2^-h* t_perp |r| >= b0 a0^2 = 4 >= 2, so
    the two-component support is disconnected for every admissible r; and
    b0 >= 2/a0 keeps that support inside the chi_{h*} plateau, making the
    bridge band chi_{h*} - chi_{h*-1} a nonnegative partition piece.
    """
    if h_star is None:
        h_star = crossover_scale(p)
    if h_star == float("-inf") or p.r == 0.0:
        b0 = 0.0  # regime 2 never starts at r = 0
    else:
        b0 = 4.0 / p.a0 ** 2
    return CutoffSpec(a0=p.a0, b0=b0)


# --- scale reference matrices ---------------------------------------------

def _planar_terms(k1, k2, p: HoppingParams, c: RunningCouplings):
    kp, km = (np.asarray(k1, float) + k2) / 2.0, (np.asarray(k1, float) - k2) / 2.0
    m1 = c.v * np.sin(kp)
    m2 = c.v * np.sin(km)
    E = p.t_prime * (1.0 - np.cos(kp) * np.cos(km))
    return m1, m2, E


def mass_vector_r1(k1, k2, k3, c: RunningCouplings, p: HoppingParams):
    m1, m2, E = _planar_terms(k1, k2, p, c)
    m3 = c.v3 * (np.cos(np.asarray(k3, float)) - 1.0 + p.r) + E
    return m1, m2, m3


def mass_vector_r2(k1, k2, k3p, omega: int, c: RunningCouplings, p: HoppingParams):
    wp = weyl_points(p)
    m1, m2, E = _planar_terms(k1, k2, p, c)
    k3p = np.asarray(k3p, float)
    eprime = p.t_perp * math.cos(wp.p_F) * (np.cos(k3p) - 1.0) + E
    m3 = -omega * c.v3 * np.sin(k3p) + eprime
    return m1, m2, m3


def energy_scale_h(kk, c: RunningCouplings, p: HoppingParams, regime: int = 1, omega: int = 1):
    """|det A_h|^(1/2) for the scale-h reference matrix (k' momenta in regime 2)."""
    k0, k1, k2, k3 = kk
    if regime == 1:
        m1, m2, m3 = mass_vector_r1(k1, k2, k3, c, p)
    else:
        m1, m2, m3 = mass_vector_r2(k1, k2, k3, omega, c, p)
    e = np.sqrt(np.asarray(k0, float) ** 2 + m1 ** 2 + m2 ** 2 + m3 ** 2)
    return e if e.ndim else float(e)


def _chi_arg(h, regime, cutoff: CutoffSpec):
    # regime 1: chibar(a0^-1 2^-h e); regime 2 chain: chibar((b0/2) 2^-h e)
    if regime == 1:
        return 2.0 ** (-h) / cutoff.a0
    if cutoff.b0 <= 0:
        raise ConfigurationError("regime-2 cutoff needs b0 > 0")
    return (cutoff.b0 / 2.0) * 2.0 ** (-h)


def chi_support(kk, h, c: RunningCouplings, p: HoppingParams, cutoff: CutoffSpec,
                regime: int = 1, omega: int = 1):
    """Cumulative cutoff chi_h(kk) in [0, 1]."""
    e = energy_scale_h(kk, c, p, regime, omega)
    return smooth_cutoff(_chi_arg(h, regime, cutoff) * np.asarray(e))


def scale_support(kk, h, c: RunningCouplings, p: HoppingParams, cutoff: CutoffSpec,
                  regime: int = 1, omega: int = 1):
    """(chi_h, f_h) with f_h = chi_h - chi_{h-1} >= 0; exact telescoping at
    fixed couplings since both cutoffs use the same reference matrix."""
    e = np.asarray(energy_scale_h(kk, c, p, regime, omega))
    chi = smooth_cutoff(_chi_arg(h, regime, cutoff) * e)
    chi_prev = smooth_cutoff(_chi_arg(h - 1, regime, cutoff) * e)
    return chi, chi - chi_prev


# --- band enumeration ------------------------------------------------------

@dataclass
class BandGrid:
    """Single-scale band on a separable momentum box.

    Axes are 1-D arrays (k0s, k1s, k2s, k3s); `weight` is the 4-D array of
    f_h values on the box and `cell` the quadrature volume element
    1/(beta L^3) of the generating grid.  Regime-2 axes hold k' (relative)
    momenta for valley `omega`.
    """

    h: int
    regime: int
    omega: int
    k0s: np.ndarray
    k1s: np.ndarray
    k2s: np.ndarray
    k3s: np.ndarray
    weight: np.ndarray
    cell: float
    couplings: RunningCouplings
    params: HoppingParams
    snap_offset: float = 0.0  # regime 2: p_F minus its grid-snapped value

    @property
    def support_points(self) -> int:
        return int(np.sum(self.weight > 0))

    def mass_arrays(self):
        K1, K2, K3 = np.meshgrid(self.k1s, self.k2s, self.k3s, indexing="ij")
        if self.regime == 1:
            return mass_vector_r1(K1, K2, K3, self.couplings, self.params)
        return mass_vector_r2(K1, K2, K3, self.omega, self.couplings, self.params)

    def entries(self, mass_override=None):
        """f_h A_h^{-1} / Z_h on the box: four (nk0, n1, n2, n3) complex arrays."""
        m1, m2, m3 = self.mass_arrays() if mass_override is None else mass_override
        k0 = self.k0s[:, None, None, None]
        den = k0 ** 2 + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None]
        w = self.weight / (self.couplings.Z * den)
        e00 = w * (1j * k0 + m3[None])
        e01 = w * (m1 - 1j * m2)[None]
        e10 = w * (m1 + 1j * m2)[None]
        e11 = w * (1j * k0 - m3[None])
        return e00, e01, e10, e11

    def position_values(self, x0s, x1s, x2s, x3s, entries=None) -> np.ndarray:
        """g(x) = cell * sum_k e^{-i k.x} f A^{-1}/Z on the tensor x-grid.

        Returns (nx0, nx1, nx2, nx3, 2, 2); separable phase contraction.
        """
        ent = self.entries() if entries is None else entries
        p0 = np.exp(-1j * np.outer(np.asarray(x0s, float), self.k0s))
        p1 = np.exp(-1j * np.outer(np.asarray(x1s, float), self.k1s))
        p2 = np.exp(-1j * np.outer(np.asarray(x2s, float), self.k2s))
        p3 = np.exp(-1j * np.outer(np.asarray(x3s, float), self.k3s))
        out = np.empty((len(p0), len(p1), len(p2), len(p3), 2, 2), complex)
        for idx, f in zip(((0, 0), (0, 1), (1, 0), (1, 1)), ent):
            g = np.einsum("abcd,ea->ebcd", f, p0, optimize=True)
            g = np.einsum("ebcd,fb->efcd", g, p1, optimize=True)
            g = np.einsum("efcd,gc->efgd", g, p2, optimize=True)
            g = np.einsum("efgd,hd->efgh", g, p3, optimize=True)
            out[..., idx[0], idx[1]] = self.cell * g
        return out

    def flatten(self, grid: GridSpec) -> PropagatorGrid:
        """Support points as a PropagatorGrid (regime-2 momenta stay relative)."""
        ent = self.entries()
        mask = self.weight > 0
        idx = np.argwhere(mask)
        mom = np.column_stack([self.k0s[idx[:, 0]], self.k1s[idx[:, 1]],
                               self.k2s[idx[:, 2]], self.k3s[idx[:, 3]]])
        vals = np.empty((idx.shape[0], 2, 2), complex)
        for (i, j), f in zip(((0, 0), (0, 1), (1, 0), (1, 1)), ent):
            vals[:, i, j] = f[mask]
        return PropagatorGrid(grid=grid, momenta=mom, values=vals)


def _axis_values(spacing: float, lo: float, hi: float, fermionic: bool = False) -> np.ndarray:
    """Grid values n*spacing (or (n+1/2)*spacing) inside [lo, hi]."""
    off = 0.5 if fermionic else 0.0
    n_lo = math.ceil(lo / spacing - off)
    n_hi = math.floor(hi / spacing - off)
    return (np.arange(n_lo, n_hi + 1) + off) * spacing


def _band_bounds_r1(h, c, p, cutoff):
    emax = 2.0 * cutoff.a0 * 2.0 ** h
    dpm = math.asin(min(1.0, emax / c.v))
    e_ub = p.t_prime * dpm ** 2
    hi = min(1.0, 1.0 - p.r + (emax + e_ub) / c.v3)
    lo = max(-1.0, 1.0 - p.r - (emax + e_ub) / c.v3)
    k3_lo = math.acos(hi)
    k3_hi = math.acos(lo)
    return emax, 2.0 * dpm, k3_lo, k3_hi


def _resolve_spacings(grid: GridSpec | None, spacings):
    """(d0, d12, d3) momentum spacings, from a GridSpec or given directly.

    A GridSpec forces isotropic lattice spacings 2pi/L (and 2pi/beta in k0);
    audit paths may pass anisotropic spacings so each axis resolves its own
    band extent without oversampling the others.
    """
    if (grid is None) == (spacings is None):
        raise ValueError("pass exactly one of grid or spacings")
    if grid is not None:
        dk = 2.0 * np.pi / grid.L
        return 2.0 * np.pi / grid.beta, dk, dk, 1.0 / (grid.beta * grid.L ** 3)
    d0, d12, d3 = spacings
    cell = d0 * d12 ** 2 * d3 / (2.0 * np.pi) ** 4
    return d0, d12, d3, cell


def band_grid_r1(h: int, c: RunningCouplings, p: HoppingParams, grid: GridSpec | None = None,
                 cutoff: CutoffSpec | None = None, warn_sparse: bool = True,
                 spacings=None) -> BandGrid:
    """Regime-1 single-scale band f_h A_h^{-1}/Z_h enumerated inside its support box.

    Only momenta inside the analytic support bounds are materialized, so large
    virtual grids stay cheap at deep scales.
    """
    cutoff = cutoff or default_cutoff(p)
    emax, dk12, k3_lo, k3_hi = _band_bounds_r1(h, c, p, cutoff)
    d0, dk, d3, cell = _resolve_spacings(grid, spacings)
    k0s = _axis_values(d0, -emax - d0, emax + d0, fermionic=True)
    k12 = _axis_values(dk, -dk12 - dk, dk12 + dk)
    arc = _axis_values(d3, max(0.0, k3_lo - d3), min(np.pi, k3_hi + d3))
    k3s = np.concatenate([-arc[::-1], arc]) if arc.size else arc
    k3s = np.unique(np.round(k3s, 15))
    if k0s.size == 0 or k12.size == 0 or k3s.size == 0:
        weight = np.zeros((max(k0s.size, 0), k12.size, k12.size, k3s.size))
        bg = BandGrid(h, 1, 1, k0s, k12, k12, k3s, weight, cell, c, p)
    else:
        K1, K2, K3 = np.meshgrid(k12, k12, k3s, indexing="ij")
        m1, m2, m3 = mass_vector_r1(K1, K2, K3, c, p)
        e = np.sqrt(k0s[:, None, None, None] ** 2 + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None])
        arg = _chi_arg(h, 1, cutoff) * e
        arg_prev = _chi_arg(h - 1, 1, cutoff) * e
        weight = smooth_cutoff(arg) - smooth_cutoff(arg_prev)
        bg = BandGrid(h, 1, 1, k0s, k12, k12, k3s, weight, cell, c, p)
    if warn_sparse and bg.support_points < MIN_BAND_POINTS:
        warnings.warn(f"band at scale h={h} holds {bg.support_points} grid momenta "
                      f"(< {MIN_BAND_POINTS}); grid too coarse", stacklevel=2)
    return bg


def _band_bounds_r2(h, c, p, cutoff, h_star):
    emax = 4.0 * 2.0 ** h / cutoff.b0
    dpm = math.asin(min(1.0, emax / c.v))
    e_ub = p.t_prime * dpm ** 2
    wp = weyl_points(p)
    k3max = math.asin(min(1.0, emax / c.v3))
    for _ in range(3):
        curv = p.t_perp * abs(math.cos(wp.p_F)) * (1.0 - math.cos(min(k3max, math.pi / 2)))
        k3max = math.asin(min(1.0, (emax + e_ub + curv) / c.v3))
    return emax, 2.0 * dpm, min(1.5 * k3max, math.pi)


def band_grid_r2(h: int, omega: int, c: RunningCouplings, p: HoppingParams,
                 grid: GridSpec | None, cutoff: CutoffSpec, h_star: int,
                 warn_sparse: bool = True, spacings=None) -> BandGrid:
    """Regime-2 single-scale band around Weyl point omega, in relative momenta.

    Valid for h <= h*-1; the topmost regime-2 scale uses the two-component
    cutoff chibar(b0 2^-h* e) as its upper edge.  The theta(omega k3) factor
    restricts k3' to the valley's half-axis window (-p_F, pi - p_F].
    """
    if h > h_star - 1:
        raise ValueError(f"regime-2 band needs h <= h*-1 = {h_star - 1}")
    wp = weyl_points(p)
    emax, dk12, k3max = _band_bounds_r2(h, c, p, cutoff, h_star)
    d0, dk, d3, cell = _resolve_spacings(grid, spacings)
    k0s = _axis_values(d0, -emax - d0, emax + d0, fermionic=True)
    k12 = _axis_values(dk, -dk12 - dk, dk12 + dk)
    # k3' window, clipped to theta(omega k3): k3' in (-p_F, pi - p_F) for the
    # Weyl point snapped to the k3 axis spacing
    p_F_snap = round(wp.p_F / d3) * d3
    lo = max(-k3max - d3, -p_F_snap + d3 / 2)
    hi = min(k3max + d3, np.pi - p_F_snap - d3 / 2)
    k3s = _axis_values(d3, lo, hi)
    snap = wp.p_F - p_F_snap
    if k0s.size == 0 or k12.size == 0 or k3s.size == 0:
        weight = np.zeros((k0s.size, k12.size, k12.size, k3s.size))
        bg = BandGrid(h, 2, omega, k0s, k12, k12, k3s, weight, cell, c, p,
                      snap_offset=snap)
    else:
        K1, K2, K3 = np.meshgrid(k12, k12, k3s, indexing="ij")
        m1, m2, m3 = mass_vector_r2(K1, K2, K3, omega, c, p)
        e = np.sqrt(k0s[:, None, None, None] ** 2 + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None])
        chi = smooth_cutoff(_chi_arg(h, 2, cutoff) * e)
        chi_prev = smooth_cutoff(_chi_arg(h - 1, 2, cutoff) * e)
        weight = chi - chi_prev
        bg = BandGrid(h, 2, omega, k0s, k12, k12, k3s, weight, cell, c, p,
                      snap_offset=snap)
    if warn_sparse and bg.support_points < MIN_BAND_POINTS:
        warnings.warn(f"regime-2 band at h={h} holds {bg.support_points} grid momenta "
                      f"(< {MIN_BAND_POINTS}); grid too coarse", stacklevel=2)
    return bg


def single_scale_propagator_r1(h: int, c: RunningCouplings, p: HoppingParams,
                               grid: GridSpec, cutoff: CutoffSpec | None = None) -> PropagatorGrid:
    """f_h(kk) A_h(kk)^{-1} / Z_h tabulated on the grid momenta in the band."""
    return band_grid_r1(h, c, p, grid, cutoff).flatten(grid)


def single_scale_propagator_r2(h: int, omega: int, c: RunningCouplings, p: HoppingParams,
                               grid: GridSpec, cutoff: CutoffSpec, h_star: int) -> PropagatorGrid:
    """Regime-2 single-scale propagator around Weyl point omega (k' momenta)."""
    return band_grid_r2(h, omega, c, p, grid, cutoff, h_star).flatten(grid)


# --- quasi-particle split --------------------------------------------------

def quasiparticle_split(kk, h_star: int, c: RunningCouplings, p: HoppingParams,
                        cutoff: CutoffSpec, check: bool = True) -> dict:
    """Valley weights theta(omega k3) chi_{h*-1}(kk) for absolute momentum kk.

    k3 is reduced to (-pi, pi]; theta(0) = 1/2 keeps the sum rule exact, and a
    nonzero weight on the k3 = 0 plane trips the disconnection check.
    """
    if check:
        disconnection_check(p, h_star, c, cutoff)
    k0, k1, k2, k3 = kk
    k3c = math.remainder(k3, 2.0 * np.pi)
    wp = weyl_points(p)
    out = {}
    for omega in (+1, -1):
        theta = 1.0 if omega * k3c > 0 else (0.5 if k3c == 0.0 else 0.0)
        k3p = k3c - omega * wp.p_F
        chi = chi_support((k0, k1, k2, k3p), h_star - 1, c, p, cutoff,
                          regime=2, omega=omega)
        out[omega] = theta * float(chi)
    return out


def disconnection_check(p: HoppingParams, h_star: int, c: RunningCouplings,
                        cutoff: CutoffSpec, n_scan: int = 9):
    """Raise ConfigurationError if chi_{h*-1} is nonzero anywhere on k3 = 0.

    Scans k0 = 0, k3 = 0 over a planar grid around the origin (the inter-valley
    saddle sits at kbar = 0 with energy t_perp |r|).
    """
    wp = weyl_points(p)
    if wp is None:
        raise ConfigurationError("disconnection check needs semimetal parameters")
    ks = np.linspace(-0.5, 0.5, n_scan)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    for omega in (+1, -1):
        k3p = -omega * wp.p_F  # absolute k3 = 0
        m1, m2, m3 = mass_vector_r2(K1, K2, np.full_like(K1, k3p), omega, c, p)
        e = np.sqrt(m1 ** 2 + m2 ** 2 + m3 ** 2)
        chi = smooth_cutoff(_chi_arg(h_star - 1, 2, cutoff) * e)
        if np.any(chi > 0):
            raise ConfigurationError(
                f"chi_(h*-1) support touches the k3=0 plane (max {float(np.max(chi)):g}); "
                "b0 too small for valley disconnection")


def crossover_band(h_star: int, c: RunningCouplings, p: HoppingParams, grid: GridSpec,
                   cutoff: CutoffSpec) -> BandGrid:
    """Bridge band at h*: support chi_{h*} - chi_{h*-1} with the two-component
    lower cutoff evaluated through the valley split (absolute momenta)."""
    bg = band_grid_r1(h_star, c, p, grid, cutoff, warn_sparse=False)
    if bg.weight.size == 0:
        return bg
    wp = weyl_points(p)
    K1, K2, K3 = np.meshgrid(bg.k1s, bg.k2s, bg.k3s, indexing="ij")
    m1, m2, m3 = mass_vector_r1(K1, K2, K3, c, p)
    e1 = np.sqrt(bg.k0s[:, None, None, None] ** 2 + (m1 ** 2 + m2 ** 2 + m3 ** 2)[None])
    chi_top = smooth_cutoff(_chi_arg(h_star, 1, cutoff) * e1)
    k3c = np.vectorize(lambda v: math.remainder(v, 2.0 * np.pi))(K3)
    chi_low = np.zeros_like(chi_top)
    for omega in (+1, -1):
        theta = np.where(omega * k3c > 0, 1.0, np.where(k3c == 0.0, 0.5, 0.0))
        m1o, m2o, m3o = mass_vector_r2(K1, K2, k3c - omega * wp.p_F, omega, c, p)
        eo = np.sqrt(bg.k0s[:, None, None, None] ** 2 + (m1o ** 2 + m2o ** 2 + m3o ** 2)[None])
        chi_low += theta[None] * smooth_cutoff(_chi_arg(h_star - 1, 2, cutoff) * eo)
    bg.weight = np.clip(chi_top - chi_low, 0.0, None)
    return bg


# --- relativistic split ----------------------------------------------------

def relativistic_split_r2(h: int, omega: int, c: RunningCouplings, p: HoppingParams,
                          grid: GridSpec | None, cutoff: CutoffSpec, h_star: int,
                          spacings=None):
    """(g_rel, remainder) on the regime-2 band: g_rel drops the curvature E',
    remainder = g - g_rel pointwise, so they resum exactly."""
    bg = band_grid_r2(h, omega, c, p, grid, cutoff, h_star,
                      warn_sparse=False, spacings=spacings)
    full = bg.entries()
    K1, K2, K3 = np.meshgrid(bg.k1s, bg.k2s, bg.k3s, indexing="ij")
    m1, m2, _ = mass_vector_r2(K1, K2, K3, omega, c, p)
    m3_rel = -omega * c.v3 * np.sin(K3)
    rel = bg.entries(mass_override=(m1, m2, m3_rel))
    rem = tuple(a - b for a, b in zip(full, rel))
    return bg, rel, rem


# --- decay audits -----------------------------------------------------------

@dataclass
class DecayRow:
    h: int
    sup: float
    width_x0: float
    width_x3: float
    l1_mass: float
    constant: float


@dataclass
class DecayAuditReport:
    regime: int
    rows: list
    sup_exponent: float
    width_x0_exponent: float
    width_x3_exponent: float
    l1_exponent: float
    max_constant_deviation: float

    def to_rows(self):
        return [(r.h, r.sup, r.constant, r.width_x0, r.width_x3, r.l1_mass)
                for r in self.rows]

    def summary(self) -> dict:
        return {
            "regime": self.regime,
            "sup_exponent": self.sup_exponent,
            "width_x0_exponent": self.width_x0_exponent,
            "width_x3_exponent": self.width_x3_exponent,
            "l1_exponent": self.l1_exponent,
            "max_constant_deviation": self.max_constant_deviation,
            "rows": [r.__dict__ for r in self.rows],
        }


def _half_width(xs, sizes):
    """First crossing of half maximum, linearly interpolated."""
    s0 = sizes[0]
    for i in range(1, len(xs)):
        if sizes[i] < 0.5 * s0:
            t = (0.5 * s0 - sizes[i - 1]) / (sizes[i] - sizes[i - 1])
            return float(xs[i - 1] + t * (xs[i] - xs[i - 1]))
    return float(xs[-1])


def _fit_slope(hs, values):
    hs = np.asarray(hs, float)
    y = np.log2(np.asarray(values, float))
    a = np.vstack([hs, np.ones_like(hs)]).T
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    return float(sol[0])


def decay_audit(h_range, c_of_h, p: HoppingParams, regime: int = 1, omega: int = 1,
                cutoff: CutoffSpec | None = None, h_star: int | None = None,
                N: int = 28, x_points: int = 25) -> DecayAuditReport:
    """Fit sup-norms and decay half-widths of position-space single-scale
    propagators against the dimensional scaling exponents.

    h_range must lie within one regime; c_of_h maps a scale to its couplings
    (pass a constant function for frozen couplings).  N sets the per-axis
    momentum resolution of the per-scale virtual grids; x_points the position
    samples per axis.  The x-grids extend 8 core widths, so at least 4 octaves
    of decay are resolved or InsufficientGridError is raised.
    """
    cutoff = cutoff or default_cutoff(p)
    if regime == 2 and h_star is None:
        h_star = crossover_scale(p)
    if x_points < 9:
        raise InsufficientGridError("x_points < 9 cannot resolve 4 octaves of decay")
    rows = []
    expected = 2.5 if regime == 1 else 3.0
    for h in sorted(h_range, reverse=True):
        c = c_of_h(h)
        if regime == 1:
            emax, ext12, k3lo, k3hi = _band_bounds_r1(h, c, p, cutoff)
            sp = (2.0 * emax / N, 2.0 * ext12 / N, max(2.0 * k3hi / N, 1e-12))
            bg = band_grid_r1(h, c, p, cutoff=cutoff, warn_sparse=False, spacings=sp)
        else:
            emax, ext12, k3max = _band_bounds_r2(h, c, p, cutoff, h_star)
            sp = (2.0 * emax / N, 2.0 * ext12 / N, max(2.0 * k3max / N, 1e-12))
            bg = band_grid_r2(h, omega, c, p, None, cutoff, h_star,
                              warn_sparse=False, spacings=sp)
        if bg.support_points < MIN_BAND_POINTS:
            raise InsufficientGridError(
                f"band at h={h} resolves only {bg.support_points} momenta")
        # core widths from the band extents; sample ~6 widths per axis
        w0 = 1.0 / emax
        w3 = 1.0 / max(np.max(np.abs(bg.k3s)), 1e-12)
        x0s = np.linspace(0.0, 6.0 * w0, x_points)
        x3s = np.linspace(0.0, 6.0 * w3, x_points)
        xps = np.array([0.0, 1.0, 2.0])
        ent = bg.entries()
        vals = bg.position_values(x0s, xps, xps, x3s, entries=ent)
        sizes = np.max(np.abs(vals), axis=(-2, -1))
        sup = float(sizes.max())
        prof0 = sizes[:, 0, 0, 0]
        prof3 = sizes[0, 0, 0, :]
        width0 = _half_width(x0s, prof0)
        width3 = _half_width(x3s, prof3)
        # L1 mass over the sampled (x0, x3) sheet (report-only)
        cellv = (x0s[1] - x0s[0]) * (x3s[1] - x3s[0])
        l1 = float(np.sum(sizes[:, 0, 0, :]) * cellv)
        const = sup * 2.0 ** (-expected * h) * c.Z * (c.v3 if regime == 2 else 1.0)
        rows.append(DecayRow(h=h, sup=sup, width_x0=width0, width_x3=width3,
                             l1_mass=l1, constant=const))
    hs = [r.h for r in rows]
    report = DecayAuditReport(
        regime=regime,
        rows=rows,
        sup_exponent=_fit_slope(hs, [r.sup for r in rows]),
        width_x0_exponent=_fit_slope(hs, [r.width_x0 for r in rows]),
        width_x3_exponent=_fit_slope(hs, [r.width_x3 for r in rows]),
        l1_exponent=_fit_slope(hs, [r.l1_mass for r in rows]),
        max_constant_deviation=float(np.max(np.abs(
            np.log2([r.constant for r in rows])
            - np.mean(np.log2([r.constant for r in rows]))))),
    )
    return report
