"""Non-interacting tight-binding layer: Bloch matrix, dispersion, phases, Weyl points.

The model lives on two interpenetrating cubic sublattices with planar
nearest-neighbor hopping t, inter-layer hopping t_perp, next-nearest-neighbor
hopping t_prime and a sublattice offset mu.  All energies are in natural units
(hoppings O(1)); momenta are raw triples in [0, 2pi).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

#: |  |mu - t'|/t_perp - 1 | below this counts as the critical boundary.
CRITICAL_TOL = 1e-12


class PhaseLabel(enum.Enum):
    SEMIMETAL = "semimetal"
    INSULATOR = "insulator"
    CRITICAL = "critical"


class ParameterError(ValueError):
    """Raised when hopping parameters violate the admissibility conditions."""


@dataclass(frozen=True)
class HoppingParams:
    """Validated model couplings plus the distance-to-criticality r.

    r is defined through (mu - t_prime)/t_perp = -1 + r, so r = 0 is the
    phase boundary, r > 0 the semimetal side.
    """

    t: float
    t_perp: float
    t_prime: float
    mu: float
    U: float = 0.0
    kappa: float = 1.0

    @property
    def r(self) -> float:
        return (self.mu - self.t_prime) / self.t_perp + 1.0

    @property
    def a0(self) -> float:
        # infrared cutoff unit used by the multiscale decomposition
        return self.t_perp / 10.0


def build_params(t, t_perp, t_prime, *, r=None, mu=None, U=0.0, kappa=1.0) -> HoppingParams:
    """Validate couplings and return HoppingParams; pass exactly one of r, mu.

    Rejects parameters outside mu + t' > 2 t_perp or |mu - t'|/t_perp >= 3/2.
    |r| > 1/2 is admissible but triggers a warning (outside the narrow window
    where r was introduced, still inside the analyticity hypotheses).
    """
    if t <= 0 or t_perp <= 0 or t_prime <= 0:
        raise ParameterError("hoppings t, t_perp, t_prime must be positive")
    if kappa <= 0:
        raise ParameterError("interaction range kappa must be positive")
    if (r is None) == (mu is None):
        raise ParameterError("pass exactly one of r or mu")
    if mu is None:
        mu = t_prime + t_perp * (-1.0 + r)
    if not mu + t_prime > 2.0 * t_perp:
        raise ParameterError(
            f"mu + t_prime = {mu + t_prime:g} must exceed 2*t_perp = {2 * t_perp:g}"
        )
    if abs(mu - t_prime) / t_perp >= 1.5:
        raise ParameterError(
            f"|mu - t_prime|/t_perp = {abs(mu - t_prime) / t_perp:g} is outside the "
            "theorem window (< 3/2)"
        )
    p = HoppingParams(t=float(t), t_perp=float(t_perp), t_prime=float(t_prime),
                      mu=float(mu), U=float(U), kappa=float(kappa))
    if abs(p.r) > 0.5 + 1e-15:
        warnings.warn(f"|r| = {abs(p.r):g} > 1/2: outside the narrow crossover window",
                      stacklevel=2)
    return p


def _k_pm(k1, k2):
    return (k1 + k2) / 2.0, (k1 - k2) / 2.0


def sigma3_coefficient(k1, k2, k3, p: HoppingParams):
    """Mass-like band term mu + t_perp cos k3 - (t'/2)(cos k1 + cos k2)."""
    return p.mu + p.t_perp * np.cos(k3) - 0.5 * p.t_prime * (np.cos(k1) + np.cos(k2))


def bloch_matrix(k, p: HoppingParams) -> np.ndarray:
    """Hermitian 2x2 Bloch matrix t sin(k+) s1 + t sin(k-) s2 + m3(k) s3."""
    k1, k2, k3 = k
    kp, km = _k_pm(k1, k2)
    m3 = sigma3_coefficient(k1, k2, k3, p)
    return (p.t * np.sin(kp) * SIGMA1 + p.t * np.sin(km) * SIGMA2 + m3 * SIGMA3)


def dispersion(k, p: HoppingParams):
    """Positive band energy lambda(k); accepts scalars or broadcastable arrays."""
    k1, k2, k3 = k
    kp, km = _k_pm(np.asarray(k1, float), np.asarray(k2, float))
    m3 = sigma3_coefficient(np.asarray(k1, float), np.asarray(k2, float),
                            np.asarray(k3, float), p)
    lam = np.sqrt(p.t ** 2 * (np.sin(kp) ** 2 + np.sin(km) ** 2) + m3 ** 2)
    return lam if lam.ndim else float(lam)


def classify_phase(p: HoppingParams) -> PhaseLabel:
    ratio = abs(p.mu - p.t_prime) / p.t_perp
    if abs(ratio - 1.0) < CRITICAL_TOL:
        return PhaseLabel.CRITICAL
    return PhaseLabel.SEMIMETAL if ratio < 1.0 else PhaseLabel.INSULATOR


@dataclass(frozen=True)
class WeylPointData:
    """Gap-closing momenta (0, 0, +-p_F) and the two Fermi velocities."""

    p_F: float
    v0: float
    v30: float
    degenerate: bool = False


def weyl_points(p: HoppingParams) -> WeylPointData | None:
    """Weyl-point data in the semimetal phase, None in the insulator.

    At the critical point the two points merge at p_F = 0 and the axial
    velocity vanishes; the result is flagged degenerate.
    """
    phase = classify_phase(p)
    if phase is PhaseLabel.INSULATOR:
        return None
    c = (p.t_prime - p.mu) / p.t_perp
    p_F = float(np.arccos(np.clip(c, -1.0, 1.0)))
    v30 = p.t_perp * float(np.sin(p_F))
    return WeylPointData(p_F=p_F, v0=p.t, v30=v30,
                         degenerate=phase is PhaseLabel.CRITICAL)
