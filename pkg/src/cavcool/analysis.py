"""Measurement pipeline operating on normalised scattering and phase traces.

The pipeline mirrors the experimental evaluation: fit the Gaussian transit
envelope of ``S_N``, classify its extrema (antinode passages, node
passages, channelling turning points), invert ``S_N / envelope`` into a
trajectory, read velocities from fringe periods, check the exit-velocity
estimate with the area ratio, and turn trap frequency and phase modulation
into a coupling strength and a particle size.

The mode function is ``cos^2(k x)``: maxima of ``S_N`` sit on antinodes
and the inversion returns ``x`` modulo the lattice and a global sign.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate as spi
from scipy.optimize import brentq, curve_fit, minimize_scalar
from scipy.signal import find_peaks, peak_prominences, savgol_filter
from scipy.special import ellipk, erf, wofz

from .errors import (
    AmbiguityError,
    DetectionError,
    FitError,
    InconsistencyError,
    InsufficientDataError,
    ReconstructionError,
    UnboundError,
    WindowingError,
)
from .mie import standing_wave_force_factor
from .params import C_LIGHT, HBAR, SILICON_DENSITY, SILICON_INDEX_1560, DerivedCavity, sphere_mass, u0_from_radius
from .signals import DetectorTraces, SNTrace, normalized_scattering

NODE_THRESHOLD = 0.05
# notable-fringe levels for noise-free input: velocities use the 1e-3 floor,
# the area ratio three times that
NOTABLE_LEVEL = 3e-3
FRINGE_LEVEL = 1e-3


# ---------------------------------------------------------------------------
# envelope


@dataclass(frozen=True)
class EnvelopeFit:
    amplitude: float
    center: float
    half_width: float
    rms_residual: float
    n_points: int

    def __call__(self, t):
        return self.amplitude * np.exp(-2.0 * (np.asarray(t) - self.center) ** 2 / self.half_width**2)

    def v_z(self, waist):
        return waist / self.half_width

    def integral(self, t1, t2):
        """Integral of the envelope between ``t1`` and ``t2``."""
        s = math.sqrt(2.0) / self.half_width
        return (
            self.amplitude
            * self.half_width
            * math.sqrt(math.pi / 8.0)
            * (erf(s * (t2 - self.center)) - erf(s * (t1 - self.center)))
        )


def _gauss(t, a, t0, tau):
    return a * np.exp(-2.0 * (t - t0) ** 2 / tau**2)


def _refine(t, y, idx):
    """Parabolic vertex through three samples around each index."""
    idx = np.asarray(idx, int)
    inner = (idx > 0) & (idx < len(y) - 1)
    tv = t[idx].astype(float)
    yv = y[idx].astype(float)
    i = idx[inner]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(den != 0, 0.5 * (y0 - y2) / den, 0.0)
    off = np.clip(off, -0.5, 0.5)
    dt = t[i + 1] - t[i]
    tv[inner] = t[i] + off * dt
    yv[inner] = y1 - 0.25 * (y0 - y2) * off
    return tv, yv


def smooth(y, noise_level=0.0, window=9):
    """Savitzky-Golay smoothing for noisy input; identity when noise-free."""
    y = np.asarray(y, float)
    if noise_level <= 0 or window < 3 or len(y) <= window:
        return y
    return savgol_filter(y, window | 1, 2)


def estimate_noise_floor(s: SNTrace, edge=0.05, resolution=1e-9):
    """Robust standard deviation of ``S_N`` from the first and last samples.

    Uses median absolute fourth differences in the outer ``edge`` fraction
    of the record, which suppress a well-sampled fringe by ``(2 pi / N)^4``
    but keep white noise.  When second and fourth differences disagree the
    residual is deterministic signal, not noise.  Values below
    ``resolution`` count as noise-free.
    """
    n = max(int(edge * len(s.s_n)), 10)
    if 2 * n >= len(s.s_n):
        return 0.0

    def robust(order, norm):
        d = np.concatenate([np.diff(s.s_n[:n], order), np.diff(s.s_n[-n:], order)])
        return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(norm))

    sigma2, sigma4 = robust(2, 6.0), robust(4, 70.0)
    if sigma4 <= resolution or sigma4 < 0.3 * sigma2:
        return 0.0
    return sigma4


def fit_envelope(s: SNTrace, min_peaks=5, noise_level=0.0) -> EnvelopeFit:
    """Gaussian ``A exp(-2 (t - t0)^2 / tau^2)`` through the local maxima.

    Traces with fewer than ``min_peaks`` maxima (no fringes) are fitted
    sample by sample.  With ``noise_level`` (standard deviation of
    ``S_N``) the trace is smoothed and only maxima standing out by four
    noise widths are used.  ``tau`` equals ``w / v_z``.
    """
    t = s.t
    y = smooth(s.s_n, noise_level)
    if len(t) < 5 or not np.max(y) > 0:
        raise DetectionError("no scattering signal")
    peaks, _ = find_peaks(y, prominence=4.0 * noise_level if noise_level > 0 else None)
    if len(peaks) >= min_peaks:
        tp, yp = _refine(t, y, peaks)
    else:
        tp, yp = t, y
    w = np.clip(yp, 0, None)
    if not np.sum(w) > 0:
        raise DetectionError("no transit found")
    t0 = np.sum(w * tp) / np.sum(w)
    var = np.sum(w * (tp - t0) ** 2) / np.sum(w)
    tau0 = 2.0 * math.sqrt(var) if var > 0 else (t[-1] - t[0]) / 4
    a0 = float(np.max(yp))
    try:
        popt, _ = curve_fit(_gauss, tp, yp, p0=[a0, t0, tau0], maxfev=20000, xtol=1e-14, ftol=1e-14)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"envelope fit failed: {exc}") from exc
    a, c, tau = float(popt[0]), float(popt[1]), abs(float(popt[2]))
    if not (np.all(np.isfinite(popt)) and 0 < a <= 1.5 and tau > 0):
        raise FitError(f"envelope fit diverged: A={a}, tau={tau}")
    if not t[0] <= c <= t[-1]:
        raise DetectionError("envelope centre outside the record; transit incomplete")
    resid = float(np.sqrt(np.mean((_gauss(tp, a, c, tau) - yp) ** 2)))
    return EnvelopeFit(a, c, tau, resid, len(tp))


# ---------------------------------------------------------------------------
# extrema


@dataclass(frozen=True)
class Extremum:
    t: float
    value: float
    kind: str  # "max", "node" or "turn"
    s_n: float


@dataclass
class ExtremaClassification:
    events: list
    threshold: float
    ratio: np.ndarray = field(repr=False)
    local_envelope: np.ndarray = field(repr=False)
    ambiguous: list = field(default_factory=list)

    def of_kind(self, kind):
        return [e for e in self.events if e.kind == kind]

    @property
    def maxima(self):
        return self.of_kind("max")

    @property
    def node_minima(self):
        return self.of_kind("node")

    @property
    def turning_points(self):
        return self.of_kind("turn")


def _local_envelope(t, env_fit, tmax, smax):
    """Log-linear interpolation of the maxima, Gaussian-shaped beyond them."""
    g = env_fit(t)
    if len(tmax) == 0:
        return g
    out = np.empty_like(t)
    lo, hi = t < tmax[0], t > tmax[-1]
    mid = ~(lo | hi)
    out[mid] = np.exp(np.interp(t[mid], tmax, np.log(smax)))
    out[lo] = g[lo] * smax[0] / env_fit(tmax[0])
    out[hi] = g[hi] * smax[-1] / env_fit(tmax[-1])
    return out


def classify_extrema(
    s: SNTrace,
    env: EnvelopeFit,
    node_threshold=NODE_THRESHOLD,
    noise_level=0.0,
    prominence=None,
    strict=True,
) -> ExtremaClassification:
    """Locate and classify the extrema of ``S_N / envelope``.

    Minima below ``node_threshold`` (relative to the local envelope through
    the maxima) are node passages, the others channelling turning points.
    ``noise_level`` is the standard deviation of ``S_N``; minima within
    three noise widths of the threshold raise :class:`AmbiguityError`
    (with ``strict=False`` they are classified by the threshold anyway and
    listed in ``ambiguous``).
    """
    t = s.t
    y = smooth(s.s_n, noise_level)
    g = env(t)
    floor = max(3.0 * noise_level, 1e-300)
    valid = g > floor
    r0 = np.where(valid, y / np.where(valid, g, 1.0), 0.0)
    if prominence is None:
        prominence = 1e-3
    imax, _ = find_peaks(r0, prominence=prominence)
    imin, _ = find_peaks(-r0, prominence=prominence)
    imax = imax[valid[imax]]
    imin = imin[valid[imin]]
    if noise_level > 0:
        # the excursion must stand out of the noise scaled to the envelope
        sig = 2.5 * noise_level / np.where(valid, g, np.inf)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if len(imax):
                imax = imax[peak_prominences(r0, imax)[0] > sig[imax]]
            if len(imin):
                imin = imin[peak_prominences(-r0, imin)[0] > sig[imin]]
    if len(imax) == 0:
        raise DetectionError("no antinode passages found")
    tmax, rmax = _refine(t, r0, imax)
    smax = np.clip(rmax, 1e-300, None) * env(tmax)
    local = _local_envelope(t, env, tmax, smax)
    ratio = y / local
    tmin, rmin0 = _refine(t, r0, imin)
    rmin = rmin0 * env(tmin) / _local_envelope(tmin, env, tmax, smax)

    merged = [(tm, 1.0, "max", sm) for tm, sm in zip(tmax, smax)]
    merged += [(tm, rm, "min", rm * env(tm)) for tm, rm in zip(tmin, rmin)]
    merged.sort(key=lambda e: e[0])
    events = []
    for ev in merged:
        if events and events[-1][2] == ev[2]:
            prev = events[-1]
            better = ev[1] > prev[1] if ev[2] == "max" else ev[1] < prev[1]
            if better:
                events[-1] = ev
            continue
        events.append(ev)

    out, ambiguous = [], []
    for tm, val, kind, sn in events:
        if kind == "min":
            kind = "node" if val < node_threshold else "turn"
            if noise_level > 0:
                band = 3.0 * noise_level / max(float(_local_envelope(np.array([tm]), env, tmax, smax)[0]), 1e-300)
                if abs(val - node_threshold) < band:
                    ambiguous.append((float(tm), float(val)))
        out.append(Extremum(float(tm), float(val), kind, float(sn)))
    if ambiguous and strict:
        raise AmbiguityError(
            f"{len(ambiguous)} minima within the noise band of the node threshold {node_threshold}",
            ambiguous,
        )
    return ExtremaClassification(out, node_threshold, ratio, local, ambiguous)


# ---------------------------------------------------------------------------
# trajectory


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    trapped: np.ndarray
    events: list

    def untrapped_mask(self):
        return ~self.trapped


def _trapped_mask(t, events):
    """Samples between the maxima that bracket each run of turning points."""
    mask = np.zeros(len(t), bool)
    kinds = [e.kind for e in events]
    i = 0
    while i < len(events):
        if kinds[i] != "turn":
            i += 1
            continue
        j = i
        while j + 2 < len(events) and kinds[j + 2] == "turn":
            j += 2
        start = events[i - 1].t if i > 0 else t[0]
        stop = events[j + 1].t if j + 1 < len(events) else t[-1]
        mask |= (t >= start) & (t <= stop)
        i = j + 1
    return mask


def reconstruct_trajectory(
    s: SNTrace, cls: ExtremaClassification, env: EnvelopeFit | None = None, wavelength=1560e-9
) -> Trajectory:
    """Invert ``S_N`` into ``x(t)`` (sign and lattice offset are arbitrary).

    Between extrema ``k x = j pi + sigma arccos(sqrt(r))``.  Crossing an
    antinode flips ``sigma``; crossing a node moves to the next antinode;
    a turning point leaves both unchanged.  Near antinode and node passages
    the inversion is insensitive, so a core of half a quarter fringe is
    replaced by a straight line fitted to the flanks within one quarter
    fringe on each side.
    """
    k = 2 * math.pi / wavelength
    t = s.t
    events = cls.events
    kinds = [e.kind for e in events]
    for a, b in zip(kinds, kinds[1:]):
        if (a == "max") == (b == "max"):
            raise ReconstructionError(f"non-alternating extrema sequence: {kinds}")
    theta = np.arccos(np.sqrt(np.clip(cls.ratio, 0.0, 1.0)))

    n_seg = len(events) + 1
    j = np.zeros(n_seg)
    sigma = np.zeros(n_seg)
    if not events or kinds[0] == "max":
        sig = -1.0
    else:
        sig = 1.0
    jj = 0.0
    j[0], sigma[0] = jj, sig
    for n, kind in enumerate(kinds, start=1):
        if kind == "max":
            sig = -sig
        elif kind == "node":
            jj += sig
            sig = -sig
        j[n], sigma[n] = jj, sig
    tev = np.array([e.t for e in events])
    seg = np.searchsorted(tev, t, side="right")
    kx = j[seg] * math.pi + sigma[seg] * theta
    x = kx / k

    for n, ev in enumerate(events):
        if ev.kind == "turn":
            continue
        gaps = []
        if n > 0:
            gaps.append(ev.t - events[n - 1].t)
        if n + 1 < len(events):
            gaps.append(events[n + 1].t - ev.t)
        if not gaps:
            continue
        q = 0.5 * float(np.mean(gaps))
        dt = t - ev.t
        window = np.abs(dt) <= q
        core = np.abs(dt) < 0.5 * q
        flank = window & ~core
        left, right = flank & (dt < 0), flank & (dt > 0)
        if left.sum() < 1 or right.sum() < 1 or flank.sum() < 3 or not core.any():
            continue
        coef = np.polyfit(t[flank] - ev.t, x[flank], 1)
        x[core] = np.polyval(coef, t[core] - ev.t)
    return Trajectory(t, x, _trapped_mask(t, events), events)


def align_trajectory(x_rec, x_true, wavelength):
    """Best global sign and lattice offset mapping ``x_rec`` onto ``x_true``.

    Returns the aligned reconstruction.
    """
    half = wavelength / 2
    best, best_err = None, np.inf
    for sgn in (1.0, -1.0):
        d = x_true - sgn * x_rec
        n = np.round(np.median(d) / half)
        cand = sgn * x_rec + n * half
        err = np.sqrt(np.mean((cand - x_true) ** 2))
        if err < best_err:
            best, best_err = cand, err
    return best


# ---------------------------------------------------------------------------
# velocities


def _fringes(cls: ExtremaClassification, level):
    """(t1, t2) of consecutive maxima that both exceed ``level`` in S_N.

    For a free particle this is one lattice period; for a channelled one
    it is half an oscillation, as in the experimental evaluation.
    """
    mx = [e for e in cls.events if e.kind == "max"]
    return [(a.t, b.t) for a, b in zip(mx, mx[1:]) if a.s_n > level and b.s_n > level]


def fringe_period(cls: ExtremaClassification, which="entry", noise_floor=0.0, min_level=0.0):
    """``(t_start, t_end)`` of the first or last notable full fringe."""
    level = max(3.0 * noise_floor, min_level)
    fr = _fringes(cls, level)
    if not fr:
        raise InsufficientDataError(f"no complete fringe above level {level:g}")
    if which == "entry":
        return fr[0]
    if which == "exit":
        return fr[-1]
    raise ValueError("which must be 'entry' or 'exit'")


def extract_vx(
    s: SNTrace,
    cls: ExtremaClassification,
    env: EnvelopeFit | None = None,
    which="entry",
    wavelength=1560e-9,
    noise_floor=0.0,
    min_level=0.0,
):
    """Transverse speed ``lambda / (2 T)`` from one full fringe."""
    t1, t2 = fringe_period(cls, which, noise_floor, min_level)
    return wavelength / (2.0 * (t2 - t1))


def cooling_factor(v_in, v_out):
    return (v_in / v_out) ** 2


# ---------------------------------------------------------------------------
# area ratio


@dataclass(frozen=True)
class AreaRatio:
    r_a: float
    a1: float
    a2: float
    t1: float
    t2: float
    offset: float


def area_ratio(
    s: SNTrace,
    d: DetectorTraces | None,
    env: EnvelopeFit,
    cls: ExtremaClassification | None = None,
    noise_floor=0.0,
    min_level=0.0,
    n_fit=4,
    channel="normalized",
) -> AreaRatio:
    """``r_A = 2 A1 / A2`` between the last two notable maxima of the exit wing.

    ``A1`` integrates the offset-corrected signal between the two antinode
    passages, ``A2`` the Gaussian envelope over the same interval (centre
    and width from the ``S_N`` envelope, amplitude fitted to the last
    ``n_fit`` maxima).  ``channel="normalized"`` integrates ``S_N``;
    ``channel="scattering"`` integrates the raw ``I_s`` of ``d``, which also
    carries the intracavity-intensity modulation.
    """
    if cls is None:
        cls = classify_extrema(s, env)
    level = max(3.0 * noise_floor, min_level)
    maxima = [e for e in cls.maxima if e.t > env.center and e.s_n > level]
    if len(maxima) < 2:
        raise WindowingError("exit wing holds fewer than two notable maxima")
    t1, t2 = maxima[-2].t, maxima[-1].t
    if not t2 - t1 > 2.0 / s.sample_rate:
        raise WindowingError("last two maxima are not separated")
    if channel == "normalized":
        t, sig = s.t, np.asarray(s.s_n, float)
    elif channel == "scattering":
        if d is None:
            raise ValueError("the scattering channel needs detector traces")
        t, sig = d.t, np.asarray(d.i_s, float)
    else:
        raise ValueError(f"unknown channel {channel!r}")
    outside = env(t) < 1e-4 * env.amplitude
    offset = float(np.median(sig[outside])) if outside.sum() > 10 else 0.0
    inside = (t > t1) & (t < t2)
    tt = np.concatenate([[t1], t[inside], [t2]])
    yy = np.concatenate([[np.interp(t1, t, sig)], sig[inside], [np.interp(t2, t, sig)]]) - offset
    a1 = float(spi.trapezoid(yy, tt))
    fit_t = np.array([e.t for e in maxima[-n_fit:]])
    fit_y = np.interp(fit_t, t, sig) - offset
    shape = env(fit_t) / env.amplitude
    scale = float(np.sum(fit_y * shape) / np.sum(shape**2))
    a2 = scale * env.integral(t1, t2) / env.amplitude
    if not a2 > 0:
        raise WindowingError("envelope area vanishes")
    return AreaRatio(2.0 * a1 / a2, a1, a2, t1, t2, offset)


# ---------------------------------------------------------------------------
# weak-potential velocity perturbation


def _im_erf_scaled(x, y):
    """``exp(-y^2) Im erf(x + i y)`` without overflow (y >= 0)."""
    x = np.abs(np.asarray(x, float))
    z = -y + 1j * x
    return -(np.exp(-(x**2) - 2j * x * y) * wofz(z)).imag


def velocity_perturbation(v0, v_z, u_x, photon_number, mass, t, wavelength=1560e-9, waist=65e-6):
    """First-order transverse velocity of a particle crossing a static lattice.

    The particle moves as ``x = v0 t`` through the potential
    ``-hbar U_x |a|^2 cos^2(k x) exp(-2 v_z^2 t^2 / w^2)``; the result is

        v0 + sqrt(pi/8) (k w hbar U_x |a|^2 / (m v_z))
           * exp(-k^2 w^2 v0^2 / (2 v_z^2)) Im erf(sqrt(2) v_z t / w + i k w v0 / (sqrt(2) v_z)).
    """
    k = 2 * math.pi / wavelength
    t = np.asarray(t, float)
    pref = math.sqrt(math.pi / 8.0) * k * waist * HBAR * u_x * photon_number / (mass * v_z)
    xx = math.sqrt(2.0) * v_z * t / waist
    yy = k * waist * v0 / (math.sqrt(2.0) * v_z)
    dv = pref * _im_erf_scaled(xx, yy)
    if not np.all(np.isfinite(dv)):
        return velocity_perturbation_quadrature(v0, v_z, u_x, photon_number, mass, t, wavelength, waist)
    return v0 + dv


def velocity_perturbation_quadrature(v0, v_z, u_x, photon_number, mass, t, wavelength=1560e-9, waist=65e-6):
    """Same quantity by adaptive quadrature of the force along ``x = v0 t``."""
    k = 2 * math.pi / wavelength
    acc = HBAR * u_x * photon_number * k / mass
    b, c = 2 * k * v0, 2 * v_z**2 / waist**2
    width = 1.0 / math.sqrt(c)
    lo = -12.0 * width

    def force(tp):
        return math.sin(b * tp) * math.exp(-c * tp * tp)

    out = []
    for ti in np.atleast_1d(t):
        if ti <= lo:
            out.append(v0)
            continue
        val, _ = spi.quad(force, lo, float(ti), limit=2000, epsabs=1e-13 * width, epsrel=1e-11)
        out.append(v0 - acc * val)
    out = np.array(out)
    return out if np.ndim(t) else float(out[0])


# ---------------------------------------------------------------------------
# trap frequency and inversions


def trap_frequency(p_in, u_x, mass, kappa, wavelength=1560e-9):
    """``(1/2pi) sqrt(k P_in U_x / (m c kappa))``."""
    k = 2 * math.pi / wavelength
    return math.sqrt(k * p_in * u_x / (mass * C_LIGHT * kappa)) / (2 * math.pi)


def anharmonic_correction(f_measured, energy_fraction, interpretation="energy"):
    """Harmonic frequency from a large-amplitude oscillation frequency.

    The lattice well maps onto a pendulum with angle ``2 k x``; the period
    grows by ``(2/pi) K(m)`` where ``K`` is the complete elliptic integral
    of the first kind in the parameter convention ``m = k^2`` (scipy's
    ``ellipk``).  With ``interpretation="energy"`` the fraction is
    ``E / V0`` and ``m`` equals it; with ``"amplitude"`` it is the position
    amplitude over the antinode-node distance, ``m = sin^2(pi f / 2)``.
    """
    if interpretation == "energy":
        m = energy_fraction
    elif interpretation == "amplitude":
        m = math.sin(0.5 * math.pi * energy_fraction) ** 2
    else:
        raise ValueError(f"unknown interpretation {interpretation!r}")
    if not 0 <= energy_fraction < 1:
        raise UnboundError(f"energy fraction {energy_fraction} is not a bound orbit")
    return f_measured * 2.0 / math.pi * float(ellipk(m))


def _phase_model(t, s, coupling, cav: DerivedCavity):
    """Cavity phase relative to the empty cavity for a coupling history."""
    gam0 = complex(cav.kappa, -cav.detuning)
    a0 = cav.eta / gam0
    mid = 0.5 * (s[1:] + s[:-1])
    dt = np.diff(t)
    g = gam0 - 1j * coupling * mid
    decay = np.exp(-g * dt)
    drive = cav.eta * (1 - decay) / g
    a = np.empty(len(t), complex)
    a[0] = a0
    for i in range(len(dt)):
        a[i + 1] = a[i] * decay[i] + drive[i]
    return np.unwrap(np.angle(a / a0))


def ux_from_phase(
    t,
    phase,
    s_n,
    cav: DerivedCavity,
    env: EnvelopeFit | None = None,
    method="auto",
    window=0.5,
    quasi_static_limit=0.2,
):
    """Effective coupling from the phase modulation.

    ``quasi``: per fringe of ``S_N`` inside the window where the envelope
    exceeds ``window`` of its peak, invert the peak-to-peak phase with
    ``arctan((Delta + U e)/kappa) - arctan(Delta/kappa)``.  ``model``:
    least squares of the cavity equation driven by ``U * S_N(t)``.
    ``auto`` picks ``quasi`` when the fringe angular frequency is below
    ``quasi_static_limit * kappa``.
    """
    t = np.asarray(t, float)
    phase = np.asarray(phase, float)
    s_n = np.asarray(s_n, float)
    span = np.ptp(phase)
    if span == 0:
        return 0.0
    if env is None:
        env = fit_envelope(SNTrace(t, s_n))
    sel = env(t) >= window * env.amplitude
    peaks, _ = find_peaks(np.where(sel, s_n, 0.0), prominence=1e-3)
    kappa, delta = cav.kappa, cav.detuning
    if method == "auto":
        if len(peaks) >= 2:
            period = float(np.median(np.diff(t[peaks])))
            method = "quasi" if 2 * math.pi / period < quasi_static_limit * kappa else "model"
        else:
            method = "model"
    if method == "quasi":
        if len(peaks) < 2:
            raise InsufficientDataError("need two maxima for the quasi-static inversion")
        values = []
        for i0, i1 in zip(peaks[:-1], peaks[1:]):
            seg = slice(i0, i1 + 1)
            pp = np.ptp(phase[seg])
            e = float(np.max(s_n[seg]))
            values.append((kappa * math.tan(pp + math.atan(delta / kappa)) - delta) / e)
        return float(np.median(values))
    if method != "model":
        raise ValueError(f"unknown method {method!r}")

    def cost(u):
        return float(np.mean((_phase_model(t, s_n, u * kappa, cav) - phase) ** 2))

    res = minimize_scalar(cost, bounds=(0.0, 30.0), method="bounded", options={"xatol": 1e-7})
    return float(res.x) * kappa


def infer_radius(
    f_trap,
    u_x,
    cav: DerivedCavity,
    density=SILICON_DENSITY,
    n_rel=SILICON_INDEX_1560,
    r_max=400e-9,
    point_particle=False,
):
    """Radius and transverse offset consistent with ``f_trap`` and ``U_x``.

    The radius follows from the trap-frequency formula with the sphere mass,
    the offset from ``U_x = U0(R) F(R) exp(-2 y^2 / w^2)`` where ``F`` is the
    Mie force factor (1 for ``point_particle``).  Both by bracketed roots.
    """
    p = cav.input_power

    def freq_gap(r):
        return trap_frequency(p, u_x, sphere_mass(r, density), cav.kappa, cav.wavelength) - f_trap

    lo = 1e-3 * r_max
    if freq_gap(lo) < 0 or freq_gap(r_max) > 0:
        raise InconsistencyError(
            f"no radius in (0, {r_max:.3g}] m reproduces f_trap = {f_trap:.4g} Hz with U_x = {u_x:.4g} rad/s"
        )
    radius = brentq(freq_gap, lo, r_max, xtol=1e-15, rtol=1e-13)
    factor = 1.0 if point_particle else standing_wave_force_factor(radius, n_rel, cav.k).ratio
    on_axis = u0_from_radius(radius, n_rel**2, cav) * factor
    w = cav.waist

    def ux_gap(y):
        return on_axis * math.exp(-2.0 * y**2 / w**2) - u_x

    if ux_gap(0.0) < -1e-12 * abs(u_x):
        raise InconsistencyError(
            f"U_x = {u_x:.4g} exceeds the on-axis coupling {on_axis:.4g} of a {radius * 1e9:.1f} nm sphere"
        )
    y = 0.0 if ux_gap(0.0) <= 0 else brentq(ux_gap, 0.0, 10 * w, xtol=1e-15)
    return {"radius": radius, "y_offset": y, "force_factor": factor, "on_axis_coupling": on_axis}


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class AnalysisReport:
    v_z: float
    v_x_in: float
    v_x_out: float
    cooling_factor: float
    r_a: float | None
    trapped: bool
    f_trap_measured: float | None
    f_trap_harmonic: float | None
    energy_fraction: float | None
    u_x: float | None
    inferred_radius: float | None
    inferred_y_offset: float | None
    envelope: EnvelopeFit
    trajectory: Trajectory = field(repr=False)
    classification: ExtremaClassification = field(repr=False)
    noise_floor: float = 0.0
    notes: list = field(default_factory=list)

    def summary(self):
        keys = (
            "v_z",
            "v_x_in",
            "v_x_out",
            "cooling_factor",
            "r_a",
            "trapped",
            "f_trap_measured",
            "f_trap_harmonic",
            "energy_fraction",
            "u_x",
            "inferred_radius",
            "inferred_y_offset",
            "noise_floor",
            "notes",
        )
        out = {k: getattr(self, k) for k in keys}
        out["envelope"] = asdict(self.envelope)
        out["n_turning_points"] = len(self.classification.turning_points)
        out["n_node_passages"] = len(self.classification.node_minima)
        out["n_antinode_passages"] = len(self.classification.maxima)
        return out

    def save(self, out_dir):
        """Report JSON plus CSVs for the envelope, extrema and trajectory."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(_clean(self.summary()), indent=2, sort_keys=True))
        t = self.trajectory.t
        np.savetxt(
            out_dir / "envelope.csv",
            np.column_stack([t, self.envelope(t), self.classification.local_envelope]),
            delimiter=",",
            header="t_s,envelope_fit,envelope_local",
            comments="",
            fmt="%.12g",
        )
        with open(out_dir / "extrema.csv", "w") as fh:
            fh.write("t_s,ratio,S_N,kind\n")
            for e in self.classification.events:
                fh.write(f"{e.t:.12g},{e.value:.12g},{e.s_n:.12g},{e.kind}\n")
        np.savetxt(
            out_dir / "trajectory.csv",
            np.column_stack([t, self.trajectory.x, self.trajectory.trapped.astype(int)]),
            delimiter=",",
            header="t_s,x_m,trapped",
            comments="",
            fmt="%.12g",
        )


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def turning_point_statistics(cls: ExtremaClassification):
    """Oscillation frequency and mean energy fraction of the channelled part."""
    ev = cls.events
    turns = [i for i, e in enumerate(ev) if e.kind == "turn"]
    periods = []
    for a in turns:
        # a full period spans three turning points separated by antinode passages
        if a + 4 < len(ev) and ev[a + 2].kind == "turn" and ev[a + 4].kind == "turn":
            periods.append(ev[a + 4].t - ev[a].t)
    if not periods:
        return None, None
    fraction = float(np.median([1.0 - ev[i].value for i in turns]))
    return 1.0 / float(np.median(periods)), fraction


def analyze(
    d: DetectorTraces,
    cav: DerivedCavity,
    noise_floor=None,
    min_level=NOTABLE_LEVEL,
    node_threshold=NODE_THRESHOLD,
    anharmonicity="energy",
    density=SILICON_DENSITY,
    n_rel=SILICON_INDEX_1560,
    fringe_level=FRINGE_LEVEL,
) -> AnalysisReport:
    """Run the whole evaluation on one transit.

    ``noise_floor`` is the standard deviation of ``S_N``; by default it is
    estimated at the ends of the record.  Velocities use fringes whose maxima
    exceed ``max(3 * noise_floor, fringe_level)``, the area ratio those above
    ``max(3 * noise_floor, min_level)``.
    """
    notes = []
    s = normalized_scattering(d)
    if noise_floor is None:
        noise_floor = estimate_noise_floor(s)
    env = fit_envelope(s, noise_level=noise_floor)
    cls = classify_extrema(s, env, node_threshold, noise_level=noise_floor, strict=False)
    if cls.ambiguous:
        notes.append(f"{len(cls.ambiguous)} minima within the noise band of the node threshold")
    traj = reconstruct_trajectory(s, cls, env, cav.wavelength)
    v_in = extract_vx(s, cls, env, "entry", cav.wavelength, noise_floor, fringe_level)
    v_out = extract_vx(s, cls, env, "exit", cav.wavelength, noise_floor, fringe_level)
    try:
        r_a = float(area_ratio(s, d, env, cls, noise_floor, min_level).r_a)
    except WindowingError as exc:
        r_a = None
        notes.append(f"area ratio unavailable: {exc}")
    trapped = len(cls.turning_points) > 0
    f_meas, fraction = turning_point_statistics(cls)
    f_harm = None
    if f_meas is not None:
        try:
            f_harm = anharmonic_correction(f_meas, fraction, anharmonicity)
        except UnboundError as exc:
            notes.append(str(exc))
    try:
        u_x = ux_from_phase(d.t, d.phase, s.s_n, cav, env)
    except (InsufficientDataError, FitError) as exc:
        u_x = None
        notes.append(f"coupling unavailable: {exc}")
    radius = y_off = None
    if f_harm and u_x:
        try:
            inv = infer_radius(f_harm, u_x, cav, density, n_rel)
            radius, y_off = inv["radius"], inv["y_offset"]
        except InconsistencyError as exc:
            notes.append(str(exc))
    return AnalysisReport(
        v_z=env.v_z(cav.waist),
        v_x_in=v_in,
        v_x_out=v_out,
        cooling_factor=cooling_factor(v_in, v_out),
        r_a=r_a,
        trapped=trapped,
        f_trap_measured=f_meas,
        f_trap_harmonic=f_harm,
        energy_fraction=fraction,
        u_x=u_x,
        inferred_radius=radius,
        inferred_y_offset=y_off,
        envelope=env,
        trajectory=traj,
        classification=cls,
        noise_floor=noise_floor,
        notes=notes,
    )
