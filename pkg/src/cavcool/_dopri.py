"""Dormand-Prince 5(4) with the Shampine 4th-order dense output.

Compiled with numba for the fixed right-hand side of the cavity/particle
system in dimensionless units (time in 1/kappa, x in 1/k, y and z in
waists, field in units of the resonant empty-cavity amplitude).

State layout::

    0 Re a   1 Im a   2 k x   3 k v_x / kappa
    4 y / w  5 v_y / (w kappa)   6 z / w   7 v_z / (w kappa)
    8 low-pass state of the servo (slow part of the resonance shift)
"""

import math

import numpy as np
from numba import njit

NSTATE = 9

# parameter vector layout
P_DELTA, P_SHIFT, P_FORCE, P_GRAV, P_CORNER, P_SERVO, P_FROZEN, P_DRIVE = range(8)
NPARAM = 8

STATUS_OK, STATUS_UNDERFLOW, STATUS_NONFINITE, STATUS_MAXSTEPS = 0, 1, 2, 3

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


@njit(cache=True)
def rhs(y, p, out):
    env = math.exp(-2.0 * (y[4] * y[4] + y[6] * y[6]))
    c = math.cos(y[2])
    f2 = c * c * env
    ar, ai = y[0], y[1]
    shift = p[P_SHIFT] * f2
    if p[P_SERVO] != 0.0:
        eff = shift - y[8]
        out[8] = p[P_CORNER] * (shift - y[8])
    else:
        eff = shift
        out[8] = 0.0
    if p[P_FROZEN] != 0.0:
        out[0] = 0.0
        out[1] = 0.0
    else:
        det = p[P_DELTA] + eff
        out[0] = p[P_DRIVE] - ar - det * ai
        out[1] = -ai + det * ar
    out[2] = y[3]
    out[3] = -p[P_FORCE] * (ar * ar + ai * ai) * math.sin(2.0 * y[2]) * env
    out[4] = y[5]
    out[5] = 0.0
    out[6] = y[7]
    out[7] = -p[P_GRAV]


@njit(cache=True)
def integrate_dense(y0, t0, t1, t_out, p, rtol, atol, h0, hmax, hmin, max_steps, A, B, C, E, P):
    n = y0.shape[0]
    n_out = t_out.shape[0]
    out = np.empty((n_out, n))
    k = np.empty((7, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    y = y0.copy()
    t = t0
    h = min(h0, hmax)
    j = 0
    while j < n_out and t_out[j] <= t0:
        out[j] = y
        j += 1
    rhs(y, p, k[0])
    nsteps = 0
    nrej = 0
    status = STATUS_OK
    while t < t1 and j < n_out:
        if nsteps >= max_steps:
            status = STATUS_MAXSTEPS
            break
        if t + h > t1:
            h = t1 - t
        for s in range(1, 7):
            for i in range(n):
                acc = 0.0
                for q in range(s):
                    acc += A[s, q] * k[q, i]
                ytmp[i] = y[i] + h * acc
            rhs(ytmp, p, k[s])
        # stage 6 argument is the 5th order solution (FSAL)
        err = 0.0
        finite = True
        for i in range(n):
            acc = 0.0
            for q in range(6):
                acc += B[q] * k[q, i]
            ynew[i] = y[i] + h * acc
            e = 0.0
            for q in range(7):
                e += E[q] * k[q, i]
            e *= h
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e / sc) ** 2
            if not math.isfinite(ynew[i]):
                finite = False
        err = math.sqrt(err / n)
        if not finite or not math.isfinite(err):
            if h <= hmin:
                status = STATUS_NONFINITE
                break
            h *= 0.1
            nrej += 1
            continue
        if err <= 1.0:
            tn = t + h
            while j < n_out and t_out[j] <= tn:
                th = (t_out[j] - t) / h
                th2 = th * th
                for i in range(n):
                    acc = 0.0
                    for q in range(7):
                        acc += k[q, i] * (P[q, 0] * th + P[q, 1] * th2 + P[q, 2] * th2 * th + P[q, 3] * th2 * th2)
                    out[j, i] = y[i] + h * acc
                j += 1
            for i in range(n):
                y[i] = ynew[i]
                k[0, i] = k[6, i]
            t = tn
            nsteps += 1
            fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h * fac, hmax)
        else:
            nrej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < hmin:
                status = STATUS_UNDERFLOW
                break
    return out[:j], status, nsteps, nrej, t
