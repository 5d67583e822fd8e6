# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled theta-method kernel for the polynomial model family.

Operation-for-operation twin of ``_pykernel.py``.
"""

from libc.math cimport cos, pow, fabs, isfinite, NAN

FAIL_NONE = -1


cdef inline double envelope(double level, double scale, double eta, const double[:] amps,
                            const double[:] freqs, long n_terms, double t) noexcept nogil:
    cdef double v = level + scale * pow(t, eta)
    cdef double s = 0.0
    cdef long k
    for k in range(n_terms):
        s += amps[k] * cos(freqs[k] * t)
    return v + s


cdef inline int implicit_poly(double e, double mu, double kappa, double c, double b, double tol,
                              long max_iter, double* x_out) noexcept nogil:
    cdef double x, fx, r, thr, jac, step, lam, xn, fn, rn
    cdef int it = 0, accepted, h
    if c == 0.0:
        x_out[0] = b
        return 0
    x = b + c * (e * (mu * b - kappa * (b * b * b)))
    fx = e * (mu * x - kappa * (x * x * x))
    r = x - c * fx - b
    thr = tol * (1.0 + fabs(b))
    while fabs(r) > thr:
        if it >= max_iter or not isfinite(r):
            x_out[0] = NAN
            return -1
        jac = 1.0 - c * (e * (mu - 3.0 * kappa * (x * x)))
        if jac != 0.0 and isfinite(jac):
            step = -r / jac
        else:
            step = (b + c * fx) - x
        lam = 1.0
        accepted = 0
        for h in range(40):
            xn = x + lam * step
            fn = e * (mu * xn - kappa * (xn * xn * xn))
            rn = xn - c * fn - b
            if fabs(rn) < fabs(r):
                accepted = 1
                break
            lam *= 0.5
        if not accepted:
            xn = b + c * fx
            fn = e * (mu * xn - kappa * (xn * xn * xn))
            rn = xn - c * fn - b
        x = xn
        fx = fn
        r = rn
        it += 1
    x_out[0] = x
    return it


def implicit_poly_py(double e, double mu, double kappa, double c, double b, double tol, long max_iter):
    cdef double x
    cdef int it = implicit_poly(e, mu, kappa, c, b, tol, max_iter, &x)
    return x, it


def theta_poly_path(double mu, double kappa, double sigma, double gamma,
                    const double[:] env_level, const double[:] env_scale, const double[:] env_eta,
                    const double[:, :] env_amps, const double[:, :] env_freqs, const long[:] env_nterms,
                    const double[:] tau, const double[:] gauss, const long[:] counts,
                    const double[:] marks, double theta, double delta, double x0,
                    double tol, long max_iter, double[:] out_x, double[:] out_b,
                    double[:] out_fl, double[:] out_gl, double[:] out_j, long[:] out_it):
    cdef Py_ssize_t n_steps = gauss.shape[0]
    cdef Py_ssize_t n, j, off = 0
    cdef double c = theta * delta
    cdef double one_m = 1.0 - theta
    cdef double x = x0, t, t1, eF, eH, e1, fl, gl, jsum, b
    cdef int it
    out_x[0] = x
    with nogil:
        for n in range(n_steps):
            t = tau[n]
            eF = envelope(env_level[0], env_scale[0], env_eta[0], env_amps[0], env_freqs[0], env_nterms[0], t)
            fl = eF * (mu * x - kappa * (x * x * x))
            gl = envelope(env_level[1], env_scale[1], env_eta[1], env_amps[1], env_freqs[1], env_nterms[1], t) * (sigma * x)
            eH = envelope(env_level[2], env_scale[2], env_eta[2], env_amps[2], env_freqs[2], env_nterms[2], t)
            jsum = 0.0
            for j in range(off, off + counts[n]):
                jsum += eH * (gamma * x * marks[j])
            off += counts[n]
            b = x + one_m * fl * delta + gl * gauss[n] + jsum
            t1 = tau[n + 1]
            e1 = envelope(env_level[0], env_scale[0], env_eta[0], env_amps[0], env_freqs[0], env_nterms[0], t1)
            it = implicit_poly(e1, mu, kappa, c, b, tol, max_iter, &x)
            if it < 0:
                with gil:
                    return n
            out_b[n] = b
            out_fl[n] = fl
            out_gl[n] = gl
            out_j[n] = jsum
            out_it[n] = it
            out_x[n + 1] = x
    return FAIL_NONE
