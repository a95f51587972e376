"""Two-ion mixed-mass crystal: equilibrium, axial normal modes, Lamb-Dicke factors.

All quantities are SI. Masses are carried in atomic mass units on
:class:`IonSpecies` and converted at the point of use.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .constants import (
    AMU,
    E_CHARGE,
    EPS0,
    HBAR,
    MASS_CA40,
    MASS_CA43,
    RAMAN_WAVELENGTH,
    SPLITTING_CA40,
    SPLITTING_CA43,
)

COULOMB_K = E_CHARGE**2 / (4 * math.pi * EPS0)


class Order(str, enum.Enum):
    AB = "AB"
    BA = "BA"


@dataclass(frozen=True)
class IonSpecies:
    mass: float  # amu
    qubit_splitting: float  # Hz
    label: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.qubit_splitting > 0:
            raise ValueError(f"qubit_splitting must be positive, got {self.qubit_splitting}")


CA40 = IonSpecies(MASS_CA40, SPLITTING_CA40, "40Ca+")
CA43 = IonSpecies(MASS_CA43, SPLITTING_CA43, "43Ca+")


@dataclass(frozen=True)
class TwoIonCrystal:
    """Two singly-charged ions in a common harmonic axial well.

    ``f_axial_reference`` is the axial frequency a lone ``species_a`` ion
    would have in the same trap; the curvature is therefore shared by
    both ions regardless of mass.
    """

    species_a: IonSpecies
    species_b: IonSpecies
    f_axial_reference: float
    order: Order = Order.AB

    def __post_init__(self):
        if not self.f_axial_reference > 0:
            raise ValueError("f_axial_reference must be positive")
        object.__setattr__(self, "order", Order(self.order))

    @property
    def curvature(self) -> float:
        """Trap spring constant in N/m."""
        omega = 2 * math.pi * self.f_axial_reference
        return self.species_a.mass * AMU * omega**2

    def swapped(self) -> "TwoIonCrystal":
        other = Order.BA if self.order is Order.AB else Order.AB
        return replace(self, order=other)


@dataclass(frozen=True)
class MotionalMode:
    frequency: float  # Hz
    b_a: float
    b_b: float
    eta_a: float | None = None
    eta_b: float | None = None

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("mode frequency must be positive")
        norm = self.b_a**2 + self.b_b**2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"eigenvector not normalised: |b|^2 = {norm!r}")
        for eta in (self.eta_a, self.eta_b):
            if eta is not None and not eta > 0:
                raise ValueError("Lamb-Dicke parameters must be positive")

    @property
    def eigenvector(self) -> np.ndarray:
        return np.array([self.b_a, self.b_b])


@dataclass(frozen=True)
class BeamGeometry:
    wavelength: float = RAMAN_WAVELENGTH
    # |k1 - k2| / |k| ; sqrt(2) for perpendicular beams with the difference along z
    half_angle_factor: float = math.sqrt(2.0)

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not 0 < self.half_angle_factor <= 2:
            raise ValueError("half_angle_factor must lie in (0, 2]")

    @property
    def k_eff(self) -> float:
        return self.half_angle_factor * 2 * math.pi / self.wavelength

    @property
    def lattice_period(self) -> float:
        return 2 * math.pi / self.k_eff


def equilibrium_separation(crystal: TwoIonCrystal) -> float:
    """Ion spacing from ``kappa * d / 2 = k_e e^2 / d^2``.

    Both ions feel the same curvature, so the pair sits symmetrically about
    the trap centre and the result does not depend on the order.
    """
    return (2 * COULOMB_K / crystal.curvature) ** (1.0 / 3.0)


def _hessian(crystal: TwoIonCrystal) -> np.ndarray:
    kappa = crystal.curvature
    d = equilibrium_separation(crystal)
    coupling = 2 * COULOMB_K / d**3  # second derivative of the Coulomb term
    return np.array(
        [[kappa + coupling, -coupling], [-coupling, kappa + coupling]]
    )


def _position_masses(crystal: TwoIonCrystal) -> tuple[float, float]:
    """Masses (kg) ordered by position along z, left ion first."""
    ma = crystal.species_a.mass * AMU
    mb = crystal.species_b.mass * AMU
    return (ma, mb) if crystal.order is Order.AB else (mb, ma)


def solve_axial_modes(crystal: TwoIonCrystal) -> tuple[MotionalMode, MotionalMode]:
    """In-phase and out-of-phase axial modes, ascending in frequency.

    Eigenvector components are returned per species (``b_a`` belongs to
    ``species_a``) and normalised in mass-weighted coordinates. The sign
    is fixed so that the in-phase mode has both components positive and
    the out-of-phase mode has ``b_a > 0``.
    """
    masses = np.array(_position_masses(crystal))
    inv_sqrt_m = 1.0 / np.sqrt(masses)
    dyn = _hessian(crystal) * np.outer(inv_sqrt_m, inv_sqrt_m)
    w2, vecs = np.linalg.eigh(dyn)
    if crystal.order is Order.BA:
        vecs = vecs[::-1, :]
    modes = []
    for k in range(2):
        v = vecs[:, k]
        v = v / np.linalg.norm(v)
        if v[0] < 0 or (k == 0 and v[1] < 0):
            v = -v
        modes.append(MotionalMode(math.sqrt(w2[k]) / (2 * math.pi), float(v[0]), float(v[1])))
    return modes[0], modes[1]


def zero_point_extent(mass_amu: float, frequency: float) -> float:
    """sqrt(hbar / (2 m omega)) in metres."""
    return math.sqrt(HBAR / (2 * mass_amu * AMU * 2 * math.pi * frequency))


def lamb_dicke(mode: MotionalMode, geom: BeamGeometry, crystal: TwoIonCrystal) -> MotionalMode:
    """Return ``mode`` with ``eta_a``/``eta_b`` populated.

    eta_j = k_eff * |b_j| * sqrt(hbar / (2 m_j omega)); the eigenvector sign
    is carried separately by the mode, not the Lamb-Dicke factor.
    """
    k = geom.k_eff
    eta_a = k * abs(mode.b_a) * zero_point_extent(crystal.species_a.mass, mode.frequency)
    eta_b = k * abs(mode.b_b) * zero_point_extent(crystal.species_b.mass, mode.frequency)
    return replace(mode, eta_a=eta_a, eta_b=eta_b)


def standing_wave_alignment(separation: float, geom: BeamGeometry) -> tuple[int, float]:
    """Relative force sign for identical internal states, and phase mismatch.

    The lattice phase difference between the ions is ``2 pi d / period``.
    The sign is that of its cosine rounded to the nearest multiple of pi;
    the residual is the signed remainder in (-pi/2, pi/2].
    """
    if not separation > 0:
        raise ValueError("separation must be positive")
    phase = 2 * math.pi * separation / geom.lattice_period
    k = round(phase / math.pi)
    residual = phase - k * math.pi
    sign = -1 if k % 2 else 1
    return sign, residual


def in_phase_frequency(species_a: IonSpecies, species_b: IonSpecies, f_reference: float) -> float:
    crystal = TwoIonCrystal(species_a, species_b, f_reference)
    return solve_axial_modes(crystal)[0].frequency


def tune_reference_frequency(
    species_a: IonSpecies, species_b: IonSpecies, target_in_phase: float
) -> float:
    """Single-ion reference frequency giving the requested in-phase mode frequency."""

    def miss(f_ref):
        return in_phase_frequency(species_a, species_b, f_ref) - target_in_phase

    lo, hi = 0.2 * target_in_phase, 5.0 * target_in_phase
    return brentq(miss, lo, hi, xtol=1e-9, rtol=1e-15)


@dataclass(frozen=True)
class CrystalSummary:
    crystal: TwoIonCrystal
    in_phase: MotionalMode
    out_of_phase: MotionalMode
    separation: float
    lattice_periods: float
    force_sign: int
    residual_phase: float


def describe(crystal: TwoIonCrystal, geom: BeamGeometry) -> CrystalSummary:
    ip, op = solve_axial_modes(crystal)
    ip = lamb_dicke(ip, geom, crystal)
    op = lamb_dicke(op, geom, crystal)
    d = equilibrium_separation(crystal)
    sign, residual = standing_wave_alignment(d, geom)
    return CrystalSummary(crystal, ip, op, d, d / geom.lattice_period, sign, residual)


def reference_crystal(target_in_phase: float = 2.00e6) -> TwoIonCrystal:
    f_ref = tune_reference_frequency(CA40, CA43, target_in_phase)
    return TwoIonCrystal(CA40, CA43, f_ref, Order.AB)
