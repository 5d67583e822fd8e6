"""Pure-Python theta-method kernel for the polynomial model family.

Mirrors ``_ckernel.pyx`` operation for operation so both backends produce
the same floating-point results. Used when the compiled extension is not
available or when ``TCLEVY_BACKEND=python``.
"""

import math

FAIL_NONE = -1


def envelope(level, scale, eta, amps, freqs, n_terms, t):
    v = level + scale * t**eta
    s = 0.0
    for k in range(n_terms):
        s += amps[k] * math.cos(freqs[k] * t)
    return v + s


def implicit_poly(e, mu, kappa, c, b, tol, max_iter):
    """Solve ``x - c * e * (mu x - kappa x**3) = b``; returns ``(x, iterations)`` or ``(nan, -1)``."""
    if c == 0.0:
        return b, 0
    x = b + c * (e * (mu * b - kappa * (b * b * b)))
    fx = e * (mu * x - kappa * (x * x * x))
    r = x - c * fx - b
    thr = tol * (1.0 + abs(b))
    it = 0
    while abs(r) > thr:
        if it >= max_iter or not math.isfinite(r):
            return math.nan, -1
        jac = 1.0 - c * (e * (mu - 3.0 * kappa * (x * x)))
        if jac != 0.0 and math.isfinite(jac):
            step = -r / jac
        else:
            step = (b + c * fx) - x
        lam = 1.0
        accepted = False
        for _ in range(40):
            xn = x + lam * step
            fn = e * (mu * xn - kappa * (xn * xn * xn))
            rn = xn - c * fn - b
            if abs(rn) < abs(r):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            xn = b + c * fx
            fn = e * (mu * xn - kappa * (xn * xn * xn))
            rn = xn - c * fn - b
        x, fx, r = xn, fn, rn
        it += 1
    return x, it


def theta_poly_path(mu, kappa, sigma, gamma, env_level, env_scale, env_eta, env_amps,
                    env_freqs, env_nterms, tau, gauss, counts, marks, theta, delta, x0,
                    tol, max_iter, out_x, out_b, out_fl, out_gl, out_j, out_it):
    """Theta-method recursion on one path; fills the output buffers.

    Returns -1 on success or the index of the step whose implicit solve failed.
    """
    n_steps = len(gauss)
    # plain lists: indexing numpy arrays element-wise is several times slower
    tau, gauss, counts, marks = (list(map(float, tau)), gauss.tolist(), counts.tolist(), marks.tolist())
    env_amps = [list(row) for row in env_amps.tolist()]
    env_freqs = [list(row) for row in env_freqs.tolist()]
    env_level, env_scale, env_eta = env_level.tolist(), env_scale.tolist(), env_eta.tolist()
    env_nterms = env_nterms.tolist()
    xs, bs, fls, gls, js, its = [x0], [], [], [], [], []
    c = theta * delta
    one_m = 1.0 - theta
    x = x0
    off = 0
    status = FAIL_NONE
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
        x, it = implicit_poly(e1, mu, kappa, c, b, tol, max_iter)
        if it < 0:
            status = n
            break
        bs.append(b)
        fls.append(fl)
        gls.append(gl)
        js.append(jsum)
        its.append(it)
        xs.append(x)
    k = len(bs)
    out_x[: k + 1] = xs
    out_b[:k] = bs
    out_fl[:k] = fls
    out_gl[:k] = gls
    out_j[:k] = js
    out_it[:k] = its
    return status
