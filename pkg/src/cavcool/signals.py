"""Detector observables synthesised from a simulated trace.

Channels: intracavity intensity ``I_c = |a|^2`` (transmission detector),
cavity phase relative to the empty-cavity steady state, and scattered
intensity ``I_s = |a|^2 f^2(x)`` (side detector, constant collection
efficiency).  The normalised scattering ``S_N = (I_s/I_c) / max(I_s/I_c)``
is the input of the analysis pipeline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import SimTrace, mode_function_sq
from .errors import ConfigError, NumericError
from .params import HBAR, DerivedCavity

SIGNAL_COLUMNS = ("t_s", "I_c", "phase_rad", "I_s", "S_N")


class DivisionGuardError(NumericError):
    """Intracavity intensity too small to normalise the scattering signal."""


@dataclass(frozen=True)
class NoiseOptions:
    """Additive white Gaussian noise per channel.

    ``intensity`` and ``scattering`` are standard deviations relative to the
    empty-cavity intensity; ``phase`` is in radians.
    """

    intensity: float = 0.0
    phase: float = 0.0
    scattering: float = 0.0
    seed: int = 0

    @property
    def active(self):
        return self.intensity > 0 or self.phase > 0 or self.scattering > 0


@dataclass
class DetectorTraces:
    t: np.ndarray
    i_c: np.ndarray
    phase: np.ndarray
    i_s: np.ndarray
    sample_rate: float
    noise: dict = field(default_factory=dict)

    def save(self, path, s_n=None):
        if s_n is None:
            try:
                s_n = normalized_scattering(self).s_n
            except DivisionGuardError:
                s_n = np.zeros_like(self.t)
        data = np.column_stack([self.t, self.i_c, self.phase, self.i_s, s_n])
        np.savetxt(Path(path), data, delimiter=",", header=",".join(SIGNAL_COLUMNS), comments="", fmt="%.17g")

    @classmethod
    def load(cls, path):
        """Read the five-column trace CSV (simulated or recorded)."""
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if tuple(h.strip() for h in header) != SIGNAL_COLUMNS:
            raise ConfigError(f"{path}: expected columns {','.join(SIGNAL_COLUMNS)}, got {','.join(header)}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        if len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ConfigError(f"{path}: time column must be strictly increasing")
        rate = (len(t) - 1) / (t[-1] - t[0])
        return cls(t, data[:, 1], data[:, 2], data[:, 3], rate, {"source": str(path)})


@dataclass
class SNTrace:
    t: np.ndarray
    s_n: np.ndarray
    normalization: float = 1.0

    @property
    def sample_rate(self):
        return (len(self.t) - 1) / (self.t[-1] - self.t[0])


def expected_trap_frequency(u_x, mass, cav: DerivedCavity):
    """Small-oscillation frequency at an antinode for the resonant photon number."""
    if mass <= 0 or u_x <= 0:
        return 0.0
    return math.sqrt(2 * HBAR * cav.k**2 * u_x * cav.resonant_photon_number / mass) / (2 * math.pi)


def synthesize(
    trace: SimTrace,
    cav: DerivedCavity,
    noise: NoiseOptions | None = None,
    sample_rate: float | None = None,
) -> DetectorTraces:
    """Detector channels on a uniform grid at ``sample_rate``."""
    noise = noise or NoiseOptions()
    native = (len(trace.t) - 1) / (trace.t[-1] - trace.t[0])
    rate = native if sample_rate is None else float(sample_rate)
    if rate <= 0:
        raise ConfigError("sample rate must be positive")
    meta = trace.metadata or {}
    f_trap = expected_trap_frequency(meta.get("u_x", 0.0), meta.get("mass", 0.0), cav)
    if f_trap and rate < 4 * f_trap:
        warnings.warn(
            f"sample rate {rate:.3g} Hz below 4x the expected trap frequency {f_trap:.3g} Hz",
            RuntimeWarning,
            stacklevel=2,
        )
    if sample_rate is None or abs(rate - native) < 1e-9 * native:
        t = trace.t
        x, y, z, a = trace.x, trace.y, trace.z, trace.field
    else:
        n = int(math.floor((trace.t[-1] - trace.t[0]) * rate)) + 1
        t = trace.t[0] + np.arange(n) / rate
        x = CubicSpline(trace.t, trace.x)(t)
        y = CubicSpline(trace.t, trace.y)(t)
        z = CubicSpline(trace.t, trace.z)(t)
        a = CubicSpline(trace.t, trace.field.real)(t) + 1j * CubicSpline(trace.t, trace.field.imag)(t)
    i_c = np.abs(a) ** 2
    a0 = cav.empty_field
    phase = np.unwrap(np.angle(a / a0)) if a0 != 0 else np.unwrap(np.angle(a))
    if meta.get("scatterer", True):
        i_s = i_c * mode_function_sq(x, y, z, cav)
    else:
        i_s = np.zeros_like(i_c)
    if noise.active:
        rng = np.random.default_rng(noise.seed)
        ref = abs(a0) ** 2 if a0 != 0 else 1.0
        i_c = i_c + rng.normal(0.0, noise.intensity * ref, len(t))
        phase = phase + rng.normal(0.0, noise.phase, len(t))
        i_s = i_s + rng.normal(0.0, noise.scattering * ref, len(t))
    record = {"intensity": noise.intensity, "phase": noise.phase, "scattering": noise.scattering, "seed": noise.seed}
    return DetectorTraces(np.asarray(t, float), i_c, phase, i_s, rate, record)


def normalized_scattering(d: DetectorTraces, guard=1e-6, percentile=None) -> SNTrace:
    """``S_N = (I_s / I_c) / max(I_s / I_c)``.

    With noise present (or ``percentile`` given) the 99.9th percentile
    replaces the maximum.
    """
    i_c = np.asarray(d.i_c, float)
    ref = np.max(np.abs(i_c)) if len(i_c) else 0.0
    if ref == 0 or np.any(i_c <= guard * ref):
        bad = np.flatnonzero(i_c <= guard * ref) if ref else np.arange(len(i_c))
        raise DivisionGuardError(
            f"intracavity intensity vanishes in {len(bad)} samples "
            f"(first at t = {d.t[bad[0]] if len(bad) else float('nan'):.6e} s)"
        )
    ratio = np.asarray(d.i_s, float) / i_c
    noisy = bool(d.noise) and any(float(d.noise.get(k, 0) or 0) > 0 for k in ("intensity", "scattering"))
    if percentile is None and noisy:
        percentile = 99.9
    norm = np.percentile(ratio, percentile) if percentile is not None else np.max(ratio)
    if not norm > 0:
        raise DivisionGuardError("scattering signal is identically zero")
    return SNTrace(np.asarray(d.t, float), ratio / norm, float(norm))
