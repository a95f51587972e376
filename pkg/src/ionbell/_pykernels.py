"""Pure-numpy twins of the routines in ``_ckernels.pyx``.

Same algorithms, same step-size control, same tableau; used when the
extension is not built or ``IONBELL_PURE_PYTHON`` is set.
"""
import math

import numpy as np
from scipy.special import erf

TRUNC_SIGMAS = 3.0
EDGE_TOL = 1e-12
_NORM = math.erf(TRUNC_SIGMAS / math.sqrt(2.0))


def _ramp_cdf(x, ramp):
    half = 0.5 * ramp
    sigma = ramp / (2.0 * TRUNC_SIGMAS)
    inner = 0.5 * (erf(x / (sigma * math.sqrt(2.0))) + _NORM) / _NORM
    return np.where(x <= -half, 0.0, np.where(x >= half, 1.0, inner))


def envelope_samples(shape, u, duration, ramp):
    u = np.asarray(u, dtype=np.float64)
    tol = EDGE_TOL * duration
    inside = (u >= -tol) & (u <= duration + tol)
    if shape == 0 or ramp <= 0.0:
        return np.where(inside, 1.0, 0.0)
    flat = duration - ramp
    with np.errstate(invalid="ignore", divide="ignore"):
        val = _ramp_cdf(u - 0.5 * ramp, ramp) - _ramp_cdf(u - 0.5 * ramp - flat, ramp)
    return np.where(inside, val, 0.0)


def _envelope_scalar(shape, u, duration, ramp):
    tol = EDGE_TOL * duration
    if u < -tol or u > duration + tol:
        return 0.0
    if shape == 0 or ramp <= 0.0:
        return 1.0
    half = 0.5 * ramp
    sigma = ramp / (2.0 * TRUNC_SIGMAS)

    def cdf(x):
        if x <= -half:
            return 0.0
        if x >= half:
            return 1.0
        return 0.5 * (math.erf(x / (sigma * math.sqrt(2.0))) + _NORM) / _NORM

    flat = duration - ramp
    return cdf(u - half) - cdf(u - half - flat)


def trapezoid_loop(t0, h, coupling, omega, phase):
    coupling = np.asarray(coupling, dtype=np.float64)
    n = coupling.size
    t = t0 + h * np.arange(n)
    g = 2 * np.pi * coupling * np.exp(1j * (omega * t + phase))
    alpha = np.zeros(n, dtype=np.complex128)
    alpha[1:] = np.cumsum(-1j * 0.5 * h * (g[1:] + g[:-1]))
    q = -np.real(np.conj(alpha) * g)
    area = 0.5 * h * float(np.sum(q[1:] + q[:-1]))
    return alpha, area


def _rhs(t, y, ladder, omega, phase, shape, t_on, duration, ramp):
    out = np.zeros_like(y)
    env = 2.0 * math.pi * _envelope_scalar(shape, t - t_on, duration, ramp)
    if env == 0.0:
        return out
    up = env * complex(math.cos(omega * t + phase), math.sin(omega * t + phase))
    down = up.conjugate()
    lad = ladder[:, None]
    out[1:] += -1j * up * lad * y[:-1]
    out[:-1] += -1j * down * lad * y[1:]
    return out


C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
)


def propagate_ladder(y0, ladder, omega, phase, shape, t_on, duration, ramp,
                     t0, t1, rtol, atol, h0, max_steps):
    y = np.array(y0, dtype=np.complex128, copy=True)
    ladder = np.asarray(ladder, dtype=np.float64)
    if t1 <= t0:
        return y, 0, 0, True
    args = (ladder, omega, phase, shape, t_on, duration, ramp)
    t, h = t0, min(h0, t1 - t0)
    accepted = rejected = 0
    completed = True
    k1 = _rhs(t, y, *args)
    while t < t1:
        if accepted + rejected >= max_steps:
            completed = False
            break
        if t + h > t1:
            h = t1 - t
        k2 = _rhs(t + C2 * h, y + h * A21 * k1, *args)
        k3 = _rhs(t + C3 * h, y + h * (A31 * k1 + A32 * k2), *args)
        k4 = _rhs(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3), *args)
        k5 = _rhs(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), *args)
        k6 = _rhs(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), *args)
        ynew = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = _rhs(t + h, ynew, *args)
        ev = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = float(np.max(np.abs(ev) / scale))
        if err <= 1.0:
            t += h
            y = ynew
            k1 = k7
            accepted += 1
        else:
            rejected += 1
        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
        h *= fac
    return y, accepted, rejected, completed
