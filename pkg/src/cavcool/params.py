"""Physical configuration and derived quantities (SI units throughout).

Conventions
-----------
* ``kappa`` is the field (amplitude) decay rate, i.e. half the intensity
  FWHM of the resonance in angular frequency: ``kappa = pi c / (2 L F)``.
* ``detuning = omega_L - omega_C``; red detuning is negative.
* The pump rate is normalised so that the resonant empty-cavity photon
  number is ``P_in / (2 hbar omega_L kappa)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy import constants as sc

from .errors import ConfigError, GeometryError, InstabilityError

HBAR = sc.hbar
C_LIGHT = sc.c
EPS0 = sc.epsilon_0
AMU = sc.physical_constants["atomic mass constant"][0]
G_ACCEL = sc.g
SILICON_ATOM_MASS_AMU = 28.086
SILICON_DENSITY = 2330.0
SILICON_INDEX_1560 = 3.47


def plano_concave_lengths(waist, wavelength, mirror_radius):
    """Both cavity lengths giving ``waist`` on the flat mirror.

    Solves ``L (R2 - L) = (pi w^2 / lambda)^2``.  Returns ``(short, long)``.
    """
    rayleigh = math.pi * waist**2 / wavelength
    disc = mirror_radius**2 - 4.0 * rayleigh**2
    if disc < 0:
        raise GeometryError(
            f"waist {waist:.3e} m is unreachable with R2 = {mirror_radius:.3e} m "
            f"at lambda = {wavelength:.3e} m"
        )
    root = math.sqrt(disc)
    return 0.5 * (mirror_radius - root), 0.5 * (mirror_radius + root)


def waist_from_length(length, wavelength, mirror_radius):
    """Waist on the flat mirror of a plano-concave resonator."""
    if not 0 < length < mirror_radius:
        raise InstabilityError(f"need 0 < L < R2, got L={length}, R2={mirror_radius}")
    return math.sqrt(wavelength / math.pi * math.sqrt(length * (mirror_radius - length)))


@dataclass(frozen=True)
class CavityConfig:
    wavelength: float = 1560e-9
    finesse: float = 3e5
    waist: float = 65e-6
    curved_mirror_radius: float = 25e-3
    cavity_length: float | None = None
    input_power: float = 1e-3
    detuning: float = 0.0
    use_long_root: bool = False

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ConfigError("wavelength must be positive")
        if not self.finesse > 1:
            raise ConfigError("finesse must exceed 1")
        if not self.waist > 0:
            raise ConfigError("waist must be positive")
        if not self.curved_mirror_radius > 0:
            raise ConfigError("mirror radius must be positive")
        if self.input_power < 0:
            raise ConfigError("input power must be non-negative")
        if self.cavity_length is not None:
            if self.cavity_length <= 0:
                raise ConfigError("cavity length must be positive")
            if self.cavity_length >= self.curved_mirror_radius:
                raise InstabilityError(
                    f"L = {self.cavity_length} m >= R2 = {self.curved_mirror_radius} m"
                )

    def with_detuning_in_kappa(self, ratio):
        """Copy with the detuning set to ``ratio * kappa``."""
        kappa = derive_cavity(replace(self, detuning=0.0)).kappa
        return replace(self, detuning=ratio * kappa)


@dataclass(frozen=True)
class DerivedCavity:
    config: CavityConfig
    length: float
    k: float
    omega_l: float
    kappa: float
    fsr: float
    mode_volume: float
    eta: float

    @property
    def wavelength(self):
        return self.config.wavelength

    @property
    def waist(self):
        return self.config.waist

    @property
    def detuning(self):
        return self.config.detuning

    @property
    def input_power(self):
        return self.config.input_power

    @property
    def resonant_photon_number(self):
        """``|a|^2`` of the empty cavity driven on resonance."""
        return (self.eta / self.kappa) ** 2

    @property
    def empty_field(self):
        """Steady-state empty-cavity amplitude ``eta / (kappa - i Delta)``."""
        return self.eta / complex(self.kappa, -self.detuning)


def derive_cavity(config: CavityConfig) -> DerivedCavity:
    """Compute wavenumber, linewidth, mode volume and pump rate."""
    if config.cavity_length is None:
        short, long_ = plano_concave_lengths(
            config.waist, config.wavelength, config.curved_mirror_radius
        )
        length = long_ if config.use_long_root else short
    else:
        length = config.cavity_length
    if not 0 < length < config.curved_mirror_radius:
        raise InstabilityError(f"L = {length} outside (0, R2)")
    k = 2 * math.pi / config.wavelength
    omega_l = C_LIGHT * k
    kappa = math.pi * C_LIGHT / (2 * length * config.finesse)
    fsr = C_LIGHT / (2 * length)
    volume = math.pi * config.waist**2 * length / 4
    eta = math.sqrt(kappa * config.input_power / (2 * HBAR * omega_l))
    return DerivedCavity(config, length, k, omega_l, kappa, fsr, volume, eta)


@dataclass(frozen=True)
class ParticleConfig:
    radius: float = 150e-9
    mass_density: float = SILICON_DENSITY
    relative_permittivity: float = SILICON_INDEX_1560**2
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    atom_mass_amu: float | None = SILICON_ATOM_MASS_AMU
    mass: float | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError("radius must be non-negative")
        if not self.mass_density > 0:
            raise ConfigError("mass density must be positive")
        if self.relative_permittivity < 1:
            raise ConfigError("relative permittivity below 1 is not supported")
        if self.mass is not None and self.mass < 0:
            raise ConfigError("mass must be non-negative")

    @classmethod
    def from_index(cls, n, **kwargs):
        return cls(relative_permittivity=n * n, **kwargs)

    @property
    def refractive_index(self):
        return math.sqrt(self.relative_permittivity)


@dataclass(frozen=True)
class ParticleDerived:
    mass: float
    polarizability: float
    atom_count: float
    u0: float
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def mass_amu(self):
        return self.mass / AMU


def clausius_mossotti(eps_r):
    return (eps_r - 1.0) / (eps_r + 2.0)


def sphere_mass(radius, density):
    return density * 4.0 / 3.0 * math.pi * radius**3


def sphere_polarizability(radius, eps_r):
    return 4 * math.pi * EPS0 * radius**3 * clausius_mossotti(eps_r)


def coupling_u0(pd: ParticleDerived | float, cav: DerivedCavity) -> float:
    """Point-particle cavity shift ``alpha omega_L / (2 eps0 V)``.

    ``pd`` may be a :class:`ParticleDerived` or a bare polarizability.
    """
    alpha = pd.polarizability if isinstance(pd, ParticleDerived) else float(pd)
    return alpha * cav.omega_l / (2 * EPS0 * cav.mode_volume)


def u0_from_radius(radius, eps_r, cav: DerivedCavity) -> float:
    """Same as :func:`coupling_u0` written with the sphere volume."""
    return 2 * math.pi * cav.omega_l * radius**3 / cav.mode_volume * clausius_mossotti(eps_r)


def particle_properties(p: ParticleConfig, cav: DerivedCavity) -> ParticleDerived:
    mass = p.mass if p.mass is not None else sphere_mass(p.radius, p.mass_density)
    alpha = sphere_polarizability(p.radius, p.relative_permittivity)
    if p.atom_mass_amu:
        atoms = mass / (p.atom_mass_amu * AMU)
    else:
        atoms = float("nan")
    return ParticleDerived(mass, alpha, atoms, coupling_u0(alpha, cav))
