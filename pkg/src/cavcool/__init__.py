"""Simulation and signal analysis of transverse cavity cooling of dielectric
nanoparticles in a high-finesse standing-wave resonator."""

from .params import (
    CavityConfig,
    DerivedCavity,
    ParticleConfig,
    ParticleDerived,
    coupling_u0,
    derive_cavity,
    particle_properties,
)

__version__ = "0.1.0"

__all__ = [
    "CavityConfig",
    "DerivedCavity",
    "ParticleConfig",
    "ParticleDerived",
    "coupling_u0",
    "derive_cavity",
    "particle_properties",
    "__version__",
]
