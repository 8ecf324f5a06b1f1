"""Coupled cavity-field and particle dynamics.

The intracavity amplitude ``a`` (normalised to photon number) and the
particle's phase space are integrated jointly::

    da/dt   = eta - [kappa - i Delta - i U f^2(x, y, z)] a
    m d2x/dt2 = -hbar k U_x |a|^2 sin(2 k x) exp(-2 (y^2 + z^2) / w^2)

with ``f^2 = cos^2(k x) exp(-2 (y^2 + z^2) / w^2)``; ``x = 0`` is an
antinode.  ``y`` and ``z`` move ballistically, ``z`` optionally under
gravity along ``-z``.  By default the cavity shift ``U`` equals the force
coupling ``U_x``; pass ``shift_coupling`` to decouple them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import lsim

from . import _dopri
from .errors import ConfigError, DivergenceError, IntegrationError
from .params import G_ACCEL, HBAR, DerivedCavity, ParticleDerived

TRACE_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "re_a", "im_a")


@dataclass(frozen=True)
class SimOptions:
    rtol: float = 1e-8
    atol: float = 1e-12
    sample_rate: float = 10e6
    gravity: bool = True
    servo_corner: float | None = None
    frozen_field: bool = False
    max_step: float | None = None
    max_steps: int = 50_000_000


@dataclass(frozen=True)
class SimState:
    t: float
    position: tuple
    velocity: tuple
    field: complex

    def __post_init__(self):
        values = [self.t, *self.position, *self.velocity, self.field.real, self.field.imag]
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("non-finite initial state")


@dataclass
class SimTrace:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    vz: np.ndarray
    field: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def state(self, i) -> SimState:
        return SimState(
            float(self.t[i]),
            (float(self.x[i]), float(self.y[i]), float(self.z[i])),
            (float(self.vx[i]), float(self.vy[i]), float(self.vz[i])),
            complex(self.field[i]),
        )

    def to_array(self):
        return np.column_stack(
            [self.t, self.x, self.y, self.z, self.vx, self.vy, self.vz, self.field.real, self.field.imag]
        )

    def save(self, path):
        """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (metadata)."""
        path = Path(path)
        np.savetxt(path, self.to_array(), delimiter=",", header=",".join(TRACE_COLUMNS), comments="", fmt="%.17g")
        path.with_suffix(".json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        sidecar = path.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        t, x, y, z, vx, vy, vz, re, im = data.T
        return cls(t, x, y, z, vx, vy, vz, re + 1j * im, meta)


def mode_envelope(y, z, waist):
    return np.exp(-2.0 * (np.asarray(y) ** 2 + np.asarray(z) ** 2) / waist**2)


def mode_function_sq(x, y, z, cav: DerivedCavity):
    """``f^2`` at the given positions."""
    return np.cos(cav.k * np.asarray(x)) ** 2 * mode_envelope(y, z, cav.waist)


def quasi_static_field(f2, cav: DerivedCavity, coupling):
    """``eta / (kappa - i (Delta + U f^2))``."""
    return cav.eta / (cav.kappa - 1j * (cav.detuning + coupling * np.asarray(f2)))


def integrate(
    cav: DerivedCavity,
    pd: ParticleDerived,
    u_x: float,
    init: SimState,
    t_span,
    options: SimOptions | None = None,
    shift_coupling: float | None = None,
) -> SimTrace:
    """Integrate field and motion over ``t_span`` and sample uniformly.

    Raises
    ------
    IntegrationError
        Step size fell below the floor (or the step budget ran out).
    DivergenceError
        The state became non-finite.
    """
    opt = options or SimOptions()
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ConfigError(f"invalid time span {t_span}")
    if opt.sample_rate <= 0:
        raise ConfigError("sample rate must be positive")
    if opt.servo_corner is not None and opt.servo_corner > opt.sample_rate / 2:
        raise ConfigError("servo corner frequency above Nyquist")
    kappa, k, w = cav.kappa, cav.k, cav.waist
    shift = u_x if shift_coupling is None else shift_coupling
    scale = cav.eta / kappa if cav.eta > 0 else 1.0
    if u_x != 0 and not pd.mass > 0:
        raise ConfigError("a massless particle cannot couple to the field")
    force = HBAR * k**2 * u_x * scale**2 / (pd.mass * kappa**2) if u_x != 0 else 0.0

    p = np.zeros(_dopri.NPARAM)
    p[_dopri.P_DELTA] = cav.detuning / kappa
    p[_dopri.P_SHIFT] = shift / kappa
    p[_dopri.P_FORCE] = force
    p[_dopri.P_GRAV] = G_ACCEL / (w * kappa**2) if opt.gravity else 0.0
    p[_dopri.P_CORNER] = 2 * math.pi * (opt.servo_corner or 0.0) / kappa
    p[_dopri.P_SERVO] = 1.0 if opt.servo_corner else 0.0
    p[_dopri.P_FROZEN] = 1.0 if opt.frozen_field else 0.0
    p[_dopri.P_DRIVE] = cav.eta / (kappa * scale)

    (x0, y0, z0), (vx0, vy0, vz0) = init.position, init.velocity
    a0 = init.field / scale
    state = np.array(
        [a0.real, a0.imag, k * x0, k * vx0 / kappa, y0 / w, vy0 / (w * kappa), z0 / w, vz0 / (w * kappa), 0.0]
    )
    n_samples = int(math.floor((t1 - t0) * opt.sample_rate * (1 + 1e-12))) + 1
    t_out = t0 + np.arange(n_samples) / opt.sample_rate
    t_out = t_out[t_out <= t1]
    tau_out = kappa * t_out
    hmax = kappa * opt.max_step if opt.max_step else 1.0
    span = kappa * (t1 - t0)
    out, status, nsteps, nrej, t_reached = _dopri.integrate_dense(
        state,
        kappa * t0,
        kappa * t1,
        tau_out,
        p,
        opt.rtol,
        opt.atol,
        min(1e-3, hmax),
        hmax,
        1e-13 * max(span, 1.0),
        opt.max_steps,
        _dopri._A,
        _dopri._B,
        _dopri._C,
        _dopri._E,
        _dopri._P,
    )
    if status == _dopri.STATUS_NONFINITE:
        raise DivergenceError(f"non-finite state at t = {t_reached / kappa:.6e} s")
    if status == _dopri.STATUS_UNDERFLOW:
        raise IntegrationError(
            f"step size underflow at t = {t_reached / kappa:.6e} s after {nsteps} steps ({nrej} rejected)"
        )
    if status == _dopri.STATUS_MAXSTEPS:
        raise IntegrationError(f"step budget {opt.max_steps} exhausted at t = {t_reached / kappa:.6e} s")
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite samples in output")

    meta = {
        "cavity": _jsonable(asdict(cav.config)),
        "kappa": kappa,
        "eta": cav.eta,
        "mass": pd.mass,
        "u0": pd.u0,
        "u_x": u_x,
        "shift_coupling": shift,
        "options": _jsonable(asdict(opt)),
        "initial_state": _jsonable(asdict(init)),
        "steps": int(nsteps),
        "rejected_steps": int(nrej),
    }
    return SimTrace(
        t=t_out[: len(out)],
        x=out[:, 2] / k,
        y=out[:, 4] * w,
        z=out[:, 6] * w,
        vx=out[:, 3] * kappa / k,
        vy=out[:, 5] * w * kappa,
        vz=out[:, 7] * w * kappa,
        field=(out[:, 0] + 1j * out[:, 1]) * scale,
        metadata=meta,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def transit_state(cav: DerivedCavity, v_x, v_z, entry_phase=0.0, y_offset=0.0, z_start=3.0, v_y=0.0):
    """Initial state ``z_start`` waists below the mode axis, empty-cavity field.

    ``entry_phase`` is ``k x`` at the start, measured from an antinode.
    """
    return SimState(
        0.0,
        (entry_phase / cav.k, y_offset, -z_start * cav.waist),
        (v_x, v_y, v_z),
        cav.empty_field,
    )


def transit_span(cav: DerivedCavity, v_z, z_start=3.0):
    """Time to travel from ``-z_start`` to ``+z_start`` waists."""
    return (0.0, 2 * z_start * cav.waist / abs(v_z))


def simulate_transit(
    cav: DerivedCavity,
    pd: ParticleDerived,
    u_x,
    v_x,
    v_z,
    entry_phase=0.0,
    y_offset=0.0,
    z_start=3.0,
    options: SimOptions | None = None,
    shift_coupling=None,
) -> SimTrace:
    init = transit_state(cav, v_x, v_z, entry_phase, y_offset, z_start)
    return integrate(cav, pd, u_x, init, transit_span(cav, v_z, z_start), options, shift_coupling)


def transverse_energy(trace: SimTrace, cav: DerivedCavity, pd: ParticleDerived, u_x):
    """Kinetic plus optical potential energy along the standing-wave axis."""
    env = mode_envelope(trace.y, trace.z, cav.waist)
    pot = -HBAR * u_x * np.abs(trace.field) ** 2 * np.cos(cav.k * trace.x) ** 2 * env
    return 0.5 * pd.mass * trace.vx**2 + pot


def formal_field_solution(t, f2, cav: DerivedCavity, coupling, t_eval=None, a_start=None, nodes=8):
    """Field from the delay integral over a sampled coupling history.

    ``f2`` is the mode function squared along the trajectory at times ``t``;
    it is interpolated with a cubic spline.  The amplitude at ``t[0]``
    defaults to the empty-cavity steady state.  Returns the amplitude at
    ``t`` (or at ``t_eval``, which must lie inside ``t``).
    """
    t = np.asarray(t, float)
    f2 = np.asarray(f2, float)
    if len(t) < 4:
        raise ConfigError("need at least four trajectory samples")
    dt = np.diff(t)
    spline = CubicSpline(t, f2)
    if np.max(dt) * max(cav.kappa, abs(cav.detuning)) > 0.5:
        warnings.warn("trajectory sampling coarse compared with the cavity response", RuntimeWarning, stacklevel=2)
    if coupling * np.max(np.abs(spline(t, 2))) * np.max(dt) ** 3 > 1e-2:
        warnings.warn("coupling history under-resolved; delay integral may be inaccurate", RuntimeWarning, stacklevel=2)
    phase = spline.antiderivative()
    gam = complex(cav.kappa, -cav.detuning)
    u, wq = np.polynomial.legendre.leggauss(nodes)
    left, right = t[:-1], t[1:]
    tq = 0.5 * (left + right)[:, None] + 0.5 * dt[:, None] * u[None, :]
    ph_right = phase(right)
    kernel = np.exp(-gam * (right[:, None] - tq) + 1j * coupling * (ph_right[:, None] - phase(tq)))
    drive = cav.eta * 0.5 * dt * (kernel @ wq)
    carry = np.exp(-gam * dt + 1j * coupling * (ph_right - phase(left)))
    a = np.empty(len(t), dtype=complex)
    a[0] = cav.empty_field if a_start is None else a_start
    for j in range(len(dt)):
        a[j + 1] = a[j] * carry[j] + drive[j]
    if t_eval is None:
        return a
    return np.interp(t_eval, t, a.real) + 1j * np.interp(t_eval, t, a.imag)


def servo_filter(shift, corner_frequency, sample_rate):
    """First-order high-pass (AC coupling) of a uniformly sampled series.

    The filter starts from rest, so a constant input decays as
    ``exp(-2 pi f_c t)``.
    """
    shift = np.asarray(shift, float)
    if corner_frequency <= 0:
        raise ConfigError("corner frequency must be positive")
    if corner_frequency > sample_rate / 2:
        raise ConfigError("corner frequency above Nyquist")
    wc = 2 * math.pi * corner_frequency
    t = np.arange(len(shift)) / sample_rate
    _, out, _ = lsim(([1.0, 0.0], [1.0, wc]), shift, t)
    return out
