# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: trapezoid loop integrals and the Fock-ladder propagator.

Mirrors ``_pykernels`` exactly; both are selected through ``ionbell.kernels``.
"""
import numpy as np

from libc.math cimport cos, sin, erf, sqrt, fabs, pow, M_PI

cdef double TRUNC_SIGMAS = 3.0
cdef double EDGE_TOL = 1e-12  # relative slack on the support of the envelope


cdef inline double _ramp_cdf(double x, double ramp) noexcept nogil:
    cdef double half = 0.5 * ramp
    cdef double sigma, norm
    if x <= -half:
        return 0.0
    if x >= half:
        return 1.0
    sigma = ramp / (2.0 * TRUNC_SIGMAS)
    norm = erf(TRUNC_SIGMAS / sqrt(2.0))
    return 0.5 * (erf(x / (sigma * sqrt(2.0))) + norm) / norm


cdef inline double _mod(double complex z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef inline double _envelope(int shape, double u, double duration, double ramp) noexcept nogil:
    cdef double flat
    cdef double tol = EDGE_TOL * duration
    if u < -tol or u > duration + tol:
        return 0.0
    if shape == 0 or ramp <= 0.0:
        return 1.0
    flat = duration - ramp
    return _ramp_cdf(u - 0.5 * ramp, ramp) - _ramp_cdf(u - 0.5 * ramp - flat, ramp)


def envelope_samples(int shape, double[::1] u, double duration, double ramp):
    cdef Py_ssize_t k, n = u.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for k in range(n):
        o[k] = _envelope(shape, u[k], duration, ramp)
    return out


def trapezoid_loop(double t0, double h, double[::1] coupling, double omega, double phase):
    """alpha_k = -i int_0^{t_k} 2 pi c(t) exp(i(omega t + phase)) dt on a uniform grid.

    Returns the sampled trajectory and the trapezoid estimate of
    Im int alpha^* d alpha.
    """
    cdef Py_ssize_t k, n = coupling.shape[0]
    alpha = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] a = alpha
    cdef double complex g_prev, g_next, acc = 0.0
    cdef double tk, q_prev, q_next, area = 0.0
    cdef double two_pi = 2.0 * M_PI
    tk = t0
    g_prev = two_pi * coupling[0] * (cos(omega * tk + phase) + 1j * sin(omega * tk + phase))
    q_prev = 0.0
    for k in range(1, n):
        tk = t0 + k * h
        g_next = two_pi * coupling[k] * (cos(omega * tk + phase) + 1j * sin(omega * tk + phase))
        acc = acc - 1j * 0.5 * h * (g_prev + g_next)
        a[k] = acc
        # Im(conj(alpha) * (-i g)) = -Re(conj(alpha) * g)
        q_next = -(acc.real * g_next.real + acc.imag * g_next.imag)
        area += 0.5 * h * (q_prev + q_next)
        q_prev = q_next
        g_prev = g_next
    return alpha, area


cdef void _rhs(double t, double complex[:, ::1] y, double complex[:, ::1] out,
               double[::1] ladder, double omega, double phase, int shape,
               double t_on, double duration, double ramp) noexcept nogil:
    cdef Py_ssize_t n, m
    cdef Py_ssize_t dim = y.shape[0], cols = y.shape[1]
    cdef double env = 2.0 * M_PI * _envelope(shape, t - t_on, duration, ramp)
    cdef double complex up = env * (cos(omega * t + phase) + 1j * sin(omega * t + phase))
    cdef double complex down = up.conjugate()
    cdef double complex minus_i = -1j
    cdef double complex cu, cd
    if env == 0.0:
        for n in range(dim):
            for m in range(cols):
                out[n, m] = 0.0
        return
    for m in range(cols):
        out[0, m] = 0.0
    for n in range(dim - 1):
        cu = minus_i * up * ladder[n]
        cd = minus_i * down * ladder[n]
        for m in range(cols):
            out[n + 1, m] = cu * y[n, m]
            out[n, m] = out[n, m] + cd * y[n + 1, m]


# Dormand-Prince 5(4) tableau
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40


def propagate_ladder(y0, double[::1] ladder, double omega, double phase,
                     int shape, double t_on, double duration, double ramp,
                     double t0, double t1, double rtol, double atol,
                     double h0, long max_steps):
    """Adaptive DOPRI5 integration of dY/dt = -i H(t) Y over [t0, t1].

    H couples |n> and |n+1> with amplitude 2 pi env(t) ladder[n], carrying
    exp(+i(omega t + phase)) on the raising part.
    Returns (Y(t1), accepted_steps, rejected_steps, completed).
    """
    y_arr = np.array(y0, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, ::1] y = y_arr
    cdef Py_ssize_t dim = y.shape[0], cols = y.shape[1]
    cdef Py_ssize_t n, m
    k_arrays = [np.empty((dim, cols), dtype=np.complex128) for _ in range(7)]
    cdef double complex[:, ::1] k1 = k_arrays[0]
    cdef double complex[:, ::1] k2 = k_arrays[1]
    cdef double complex[:, ::1] k3 = k_arrays[2]
    cdef double complex[:, ::1] k4 = k_arrays[3]
    cdef double complex[:, ::1] k5 = k_arrays[4]
    cdef double complex[:, ::1] k6 = k_arrays[5]
    cdef double complex[:, ::1] k7 = k_arrays[6]
    tmp_arr = np.empty((dim, cols), dtype=np.complex128)
    ynew_arr = np.empty((dim, cols), dtype=np.complex128)
    cdef double complex[:, ::1] tmp = tmp_arr
    cdef double complex[:, ::1] ynew = ynew_arr
    cdef double t = t0, h = h0, err, sc, e, fac
    cdef long accepted = 0, rejected = 0
    cdef double complex ev
    cdef bint completed = True

    if t1 <= t0:
        return y_arr, 0, 0, True
    if h > t1 - t0:
        h = t1 - t0

    _rhs(t, y, k1, ladder, omega, phase, shape, t_on, duration, ramp)
    while t < t1:
        if accepted + rejected >= max_steps:
            completed = False
            break
        if t + h > t1:
            h = t1 - t
        for n in range(dim):
            for m in range(cols):
                tmp[n, m] = y[n, m] + h * A21 * k1[n, m]
        _rhs(t + C2 * h, tmp, k2, ladder, omega, phase, shape, t_on, duration, ramp)
        for n in range(dim):
            for m in range(cols):
                tmp[n, m] = y[n, m] + h * (A31 * k1[n, m] + A32 * k2[n, m])
        _rhs(t + C3 * h, tmp, k3, ladder, omega, phase, shape, t_on, duration, ramp)
        for n in range(dim):
            for m in range(cols):
                tmp[n, m] = y[n, m] + h * (A41 * k1[n, m] + A42 * k2[n, m] + A43 * k3[n, m])
        _rhs(t + C4 * h, tmp, k4, ladder, omega, phase, shape, t_on, duration, ramp)
        for n in range(dim):
            for m in range(cols):
                tmp[n, m] = y[n, m] + h * (A51 * k1[n, m] + A52 * k2[n, m] + A53 * k3[n, m]
                                           + A54 * k4[n, m])
        _rhs(t + C5 * h, tmp, k5, ladder, omega, phase, shape, t_on, duration, ramp)
        for n in range(dim):
            for m in range(cols):
                tmp[n, m] = y[n, m] + h * (A61 * k1[n, m] + A62 * k2[n, m] + A63 * k3[n, m]
                                           + A64 * k4[n, m] + A65 * k5[n, m])
        _rhs(t + h, tmp, k6, ladder, omega, phase, shape, t_on, duration, ramp)
        for n in range(dim):
            for m in range(cols):
                ynew[n, m] = y[n, m] + h * (B1 * k1[n, m] + B3 * k3[n, m] + B4 * k4[n, m]
                                            + B5 * k5[n, m] + B6 * k6[n, m])
        _rhs(t + h, ynew, k7, ladder, omega, phase, shape, t_on, duration, ramp)
        err = 0.0
        for n in range(dim):
            for m in range(cols):
                ev = h * (E1 * k1[n, m] + E3 * k3[n, m] + E4 * k4[n, m] + E5 * k5[n, m]
                          + E6 * k6[n, m] + E7 * k7[n, m])
                sc = atol + rtol * max(_mod(y[n, m]), _mod(ynew[n, m]))
                e = _mod(ev) / sc
                if e > err:
                    err = e
        if err <= 1.0:
            t = t + h
            for n in range(dim):
                for m in range(cols):
                    y[n, m] = ynew[n, m]
                    k1[n, m] = k7[n, m]
            accepted += 1
        else:
            rejected += 1
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * pow(err, -0.2)
            if fac > 5.0:
                fac = 5.0
            elif fac < 0.2:
                fac = 0.2
        h = h * fac
    return y_arr, accepted, rejected, completed
