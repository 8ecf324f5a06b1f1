"""Finite-size optical force on a dielectric sphere in a standing wave.

The standing wave is the superposition of two counter-propagating plane
waves of equal amplitude, both linearly polarised perpendicular to the
standing-wave axis.  The axial force takes the form ``-F_amp sin(2 k d)``
with ``d`` the displacement of the sphere centre from an antinode; the
ratio of ``F_amp`` to its point-dipole value is the force factor
``U_x / U_0``.

Two independent routes are provided:

* :func:`standing_wave_force_factor` evaluates a closed partial-wave series
  built from the Mie coefficients (Bohren & Huffman conventions).
* :func:`stress_tensor_force` integrates the time-averaged Maxwell stress
  tensor of the total external field numerically over a sphere enclosing
  the particle.  It uses scipy's spherical Bessel functions rather than the
  Riccati-Bessel recurrences of :func:`mie_coefficients`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .errors import ConfigError, ResourceError
from .params import SILICON_INDEX_1560, DerivedCavity, clausius_mossotti, u0_from_radius

MAX_TERMS = 20000


def wiscombe_nmax(x):
    """Number of partial waves ``ceil(x + 4 x^(1/3) + 2)``."""
    return int(math.ceil(x + 4.0 * x ** (1.0 / 3.0) + 2.0))


@dataclass(frozen=True)
class MieCoefficients:
    size_parameter: float
    relative_index: float
    a: np.ndarray
    b: np.ndarray

    @property
    def n_max(self):
        return len(self.a)

    def q_sca(self):
        """Scattering efficiency."""
        x = self.size_parameter
        if x == 0:
            return 0.0
        n = np.arange(1, self.n_max + 1)
        return 2.0 / x**2 * np.sum((2 * n + 1) * (np.abs(self.a) ** 2 + np.abs(self.b) ** 2))

    def q_ext(self):
        """Extinction efficiency (optical theorem)."""
        x = self.size_parameter
        if x == 0:
            return 0.0
        n = np.arange(1, self.n_max + 1)
        return 2.0 / x**2 * np.sum((2 * n + 1) * (self.a + self.b).real)


def _log_derivative(z, n_max):
    """D_n(z) = psi_n'(z) / psi_n(z) for n = 0..n_max by downward recurrence."""
    start = max(n_max, int(abs(z))) + 16
    d = np.zeros(start + 1)
    for n in range(start, 0, -1):
        d[n - 1] = n / z - 1.0 / (d[n] + n / z)
    return d[: n_max + 1]


def _riccati_bessel(x, n_max):
    """psi_n and chi_n for n = 0..n_max by upward recurrence.

    Returns arrays of length ``n_max + 1`` holding indices 0..n_max and the
    n = -1 values separately.
    """
    psi = np.empty(n_max + 1)
    chi = np.empty(n_max + 1)
    psi_prev, chi_prev = math.cos(x), -math.sin(x)
    psi[0], chi[0] = math.sin(x), math.cos(x)
    for n in range(1, n_max + 1):
        psi[n] = (2 * n - 1) / x * psi[n - 1] - psi_prev
        chi[n] = (2 * n - 1) / x * chi[n - 1] - chi_prev
        psi_prev, chi_prev = psi[n - 1], chi[n - 1]
    return psi, chi


def mie_coefficients(x, n_rel, n_max=None, max_terms=MAX_TERMS) -> MieCoefficients:
    """External Mie coefficients ``a_n``, ``b_n`` of a homogeneous sphere.

    Parameters
    ----------
    x : float
        Size parameter ``k R``.
    n_rel : float
        Real relative refractive index (no absorption).
    n_max : int, optional
        Truncation; defaults to the Wiscombe bound.
    """
    if x < 0:
        raise ConfigError("size parameter must be non-negative")
    if not n_rel > 0:
        raise ConfigError("relative index must be positive")
    if n_max is None:
        n_max = wiscombe_nmax(x)
    if n_max > max_terms:
        raise ResourceError(f"{n_max} partial waves exceed the cap of {max_terms}")
    if x == 0 or n_rel == 1.0:
        zeros = np.zeros(n_max, dtype=complex)
        return MieCoefficients(float(x), float(n_rel), zeros, zeros.copy())

    d = _log_derivative(n_rel * x, n_max)[1:]
    psi, chi = _riccati_bessel(x, n_max)
    xi = psi - 1j * chi
    n = np.arange(1, n_max + 1)
    ta = d / n_rel + n / x
    tb = d * n_rel + n / x
    a = (ta * psi[1:] - psi[:-1]) / (ta * xi[1:] - xi[:-1])
    b = (tb * psi[1:] - psi[:-1]) / (tb * xi[1:] - xi[:-1])
    return MieCoefficients(float(x), float(n_rel), a, b)


def _beam_weights(n, kd):
    """TE/TM partial-wave weights of the standing wave.

    The field is ``exp(ikd) e^{ikz} + exp(-ikd) e^{-ikz}``; the backward wave
    carries parity (-1)^n relative to the forward one.
    """
    fwd, bwd = np.exp(1j * kd), np.exp(-1j * kd)
    sign = (-1.0) ** n
    return fwd + sign * bwd, fwd - sign * bwd


def axial_force_series(coeffs: MieCoefficients, kd):
    """Dimensionless axial force ``S`` for an on-axis standing wave.

    The physical force is ``F = pi eps0 E0^2 / (2 k^2) * S`` for a standing
    wave of peak amplitude ``E0``.
    """
    a, b = coeffs.a, coeffs.b
    nm = len(a)
    if nm == 0:
        return 0.0
    n = np.arange(1, nm + 2)
    te, tm = _beam_weights(n, kd)
    a1 = np.append(a, 0.0)[1:]
    b1 = np.append(b, 0.0)[1:]
    n = n[:-1]
    te_n, te_n1 = te[:-1], te[1:]
    tm_n, tm_n1 = tm[:-1], tm[1:]
    adjacent = tm_n * np.conj(tm_n1) * (0.5 * (a + np.conj(a1)) - a * np.conj(a1)) + te_n * np.conj(
        te_n1
    ) * (0.5 * (b + np.conj(b1)) - b * np.conj(b1))
    mixed = tm_n * np.conj(te_n) * (0.5 * (a + np.conj(b)) - a * np.conj(b))
    terms = n * (n + 2) / (n + 1) * adjacent.real + (2 * n + 1) / (n * (n + 1)) * mixed.real
    return float(np.sum(terms))


@dataclass(frozen=True)
class ForceFactor:
    radius: float
    ratio: float


def force_factor_from_coefficients(coeffs: MieCoefficients):
    x, m = coeffs.size_parameter, coeffs.relative_index
    cm = clausius_mossotti(m * m)
    if x == 0 or cm == 0:
        return 1.0
    # force amplitude = -F(kd = pi/4); the dipole amplitude is 2 x^3 K in units of S
    return -axial_force_series(coeffs, math.pi / 4) / (2.0 * x**3 * cm)


def standing_wave_force_factor(radius, n_rel=SILICON_INDEX_1560, k=2 * math.pi / 1560e-9, n_max=None):
    """Signed ratio ``U_x / U_0`` of Mie to point-dipole axial force."""
    if radius < 0:
        raise ConfigError("radius must be non-negative")
    coeffs = mie_coefficients(k * radius, n_rel, n_max=n_max)
    return ForceFactor(float(radius), force_factor_from_coefficients(coeffs))


def force_factor_curve(radii, n_rel=SILICON_INDEX_1560, k=2 * math.pi / 1560e-9):
    return np.array([standing_wave_force_factor(r, n_rel, k).ratio for r in np.asarray(radii)])


def effective_ux(radius, y_offset, cav: DerivedCavity, relative_permittivity=SILICON_INDEX_1560**2):
    """Effective coupling ``U0(R) * factor(R) * exp(-2 y^2 / w^2)`` in rad/s."""
    u0 = u0_from_radius(radius, relative_permittivity, cav)
    if radius == 0:
        return 0.0
    ratio = standing_wave_force_factor(radius, math.sqrt(relative_permittivity), cav.k).ratio
    return u0 * ratio * math.exp(-2.0 * y_offset**2 / cav.waist**2)


# ---------------------------------------------------------------------------
# independent route: stress tensor quadrature


def _pi_tau(mu, n_max):
    pi = np.zeros((n_max + 1,) + mu.shape)
    tau = np.zeros_like(pi)
    pi[1] = 1.0
    tau[1] = mu
    for n in range(2, n_max + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


def _scattered_field(coeffs, rho, theta, phi):
    """Scattered E and H (Cartesian) of a unit x-polarised wave along +z.

    Units: k = 1, eps0 = mu0 = 1 so that the incident H equals E in size.
    """
    a, b = coeffs.a, coeffs.b
    nm = len(a)
    n = np.arange(1, nm + 1)
    en = (1j**n * (2 * n + 1) / (n * (n + 1)))[:, None, None]
    pi, tau = _pi_tau(np.cos(theta), nm)
    orders = np.arange(nm + 1)
    h = spherical_jn(orders, rho) + 1j * spherical_yn(orders, rho)
    hn = h[1:][:, None, None]
    dh = (rho * h[:-1] - n * h[1:])[:, None, None] / rho
    radial = (n * (n + 1))[:, None, None] * np.sin(theta) * pi * hn / rho
    cp, sp = np.cos(phi), np.sin(phi)
    ca, cb = a[:, None, None], b[:, None, None]
    e_r = np.sum(en * 1j * ca * cp * radial, 0)
    e_t = np.sum(en * (1j * ca * cp * tau * dh - cb * cp * pi * hn), 0)
    e_p = np.sum(en * (-1j * ca * sp * pi * dh + cb * sp * tau * hn), 0)
    h_r = np.sum(en * 1j * cb * sp * radial, 0)
    h_t = np.sum(en * (1j * cb * sp * tau * dh - ca * sp * pi * hn), 0)
    h_p = np.sum(en * (1j * cb * cp * pi * dh - ca * cp * tau * hn), 0)

    def cart(r, t, p):
        st, ct = np.sin(theta), np.cos(theta)
        return np.array(
            [r * st * cp + t * ct * cp - p * sp, r * st * sp + t * ct * sp + p * cp, r * ct - t * st]
        )

    return cart(e_r, e_t, e_p), cart(h_r, h_t, h_p)


def _forward_wave_total(coeffs, points):
    x, y, z = points
    rho = float(np.sqrt(x**2 + y**2 + z**2).flat[0])
    theta = np.arccos(np.clip(z / rho, -1, 1))
    phi = np.arctan2(y, x)
    e_s, h_s = _scattered_field(coeffs, rho, theta, phi)
    ph = np.exp(1j * z)
    zero = np.zeros_like(ph)
    return np.array([ph, zero, zero]) + e_s, np.array([zero, ph, zero]) + h_s


def stress_tensor_force(x, n_rel, kd, surface_radius=None, n_theta=None, n_phi=24, n_max=None):
    """Axial force by quadrature of the Maxwell stress tensor.

    The standing wave ``x_hat cos(k (z + d))`` of unit peak amplitude is
    built from the +z wave and its image under a rotation by pi about the
    polarisation axis.  Returns the Cartesian force in units where
    ``k = eps0 = mu0 = 1``; the point-dipole reference is
    ``-pi x^3 K sin(2 kd)``.
    """
    coeffs = mie_coefficients(x, n_rel, n_max=n_max)
    rs = x if surface_radius is None else surface_radius
    if n_theta is None:
        n_theta = 2 * coeffs.n_max + 40
    u, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(u)
    phi = np.arange(n_phi) * 2 * np.pi / n_phi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    weight = w[:, None] * (2 * np.pi / n_phi) * rs**2
    normal = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    e1, h1 = _forward_wave_total(coeffs, rs * normal)
    flip = np.array([1.0, -1.0, -1.0])[:, None, None]
    e2, h2 = _forward_wave_total(coeffs, flip * rs * normal)
    e2, h2 = flip * e2, flip * h2
    fw, bw = 0.5 * np.exp(1j * kd), 0.5 * np.exp(-1j * kd)
    e = fw * e1 + bw * e2
    h = fw * h1 + bw * h2
    en = np.sum(e * normal, 0)
    hn = np.sum(h * normal, 0)
    energy = np.sum(np.abs(e) ** 2, 0) + np.sum(np.abs(h) ** 2, 0)
    traction = 0.5 * (e * np.conj(en) + h * np.conj(hn)).real - 0.25 * energy * normal
    return np.sum(traction * weight, axis=(1, 2))


def stress_tensor_force_factor(radius, n_rel=SILICON_INDEX_1560, k=2 * math.pi / 1560e-9, **kwargs):
    """Force factor from :func:`stress_tensor_force` evaluated at kd = pi/4."""
    x = k * radius
    cm = clausius_mossotti(n_rel**2)
    fz = stress_tensor_force(x, n_rel, math.pi / 4, **kwargs)[2]
    return -fz / (math.pi * x**3 * cm)
