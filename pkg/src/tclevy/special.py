"""Gamma ratios, the Mittag-Leffler function and exponential-moment series.

These are the closed forms for moments of the inverse stable subordinator
``E``: real-order moments ``Gamma(p+1)/Gamma(alpha p+1) t**(alpha p)`` and the
exponential moments ``E[exp(xi E_t**r)]`` expressed as power series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

from .errors import DomainError

ML_MAX_ABS_Z = 50.0
# E_alpha(z) grows like exp(z**(1/alpha)); past this the value leaves double range
ML_MAX_GROWTH = 700.0
ML_MAX_TERMS = 200_000


def gamma_ratio(a: float, b: float) -> float:
    """Return Gamma(a) / Gamma(b) for a, b > 0."""
    if a <= 0 or b <= 0:
        raise DomainError("gamma_ratio needs positive arguments")
    if a < 170.0 and b < 170.0:
        return math.gamma(a) / math.gamma(b)
    return math.exp(math.lgamma(a) - math.lgamma(b))


def moment_oracle(alpha: float, p: float, t: float) -> float:
    """Exact p-th moment of the inverse alpha-stable subordinator at time t.

    The same formula with ``t = |t - s|`` gives the increment moment bound.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if p < 0:
        raise DomainError(f"moment order must be nonnegative, got {p}")
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    if p == 0:
        return 1.0
    return gamma_ratio(p + 1.0, alpha * p + 1.0) * t ** (alpha * p)


def increment_moment_oracle(alpha: float, p: float, s: float, t: float) -> float:
    return moment_oracle(alpha, p, abs(t - s))


def _peak_log10_term(alpha: float, az: float) -> float:
    # log-terms k*log|z| - lgamma(alpha k + 1) are concave in k, so walk to the top
    lz = math.log(az)
    best = 0.0
    k = 0
    while k < ML_MAX_TERMS:
        k += 1
        cur = k * lz - math.lgamma(alpha * k + 1.0)
        if cur < best and k * alpha > 1.0:
            break
        best = max(best, cur)
    return best / math.log(10.0)


def mittag_leffler(alpha: float, z: float, rel_tol: float = 1e-20) -> float:
    """One-parameter Mittag-Leffler function ``sum_k z**k / Gamma(alpha k + 1)``.

    The series is summed in extended precision, with the working precision
    raised by the number of digits lost to cancellation for negative ``z``.
    Summation stops once three consecutive terms past the peak fall below
    ``rel_tol`` times the partial sum.

    Raises
    ------
    DomainError
        If ``|z| > 50`` or ``|z|**(1/alpha) > 700`` (value or cancellation
        beyond what the series can deliver in double precision).
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not math.isfinite(z):
        raise DomainError(f"argument must be finite, got {z}")
    az = abs(z)
    if az > ML_MAX_ABS_Z or (az > 0 and az ** (1.0 / alpha) > ML_MAX_GROWTH):
        raise DomainError(
            f"Mittag-Leffler argument z={z} outside the series domain "
            f"(|z| <= {ML_MAX_ABS_Z} and |z|**(1/alpha) <= {ML_MAX_GROWTH})"
        )
    if z == 0.0:
        return 1.0
    digits = 25 + max(0, math.ceil(_peak_log10_term(alpha, az)))
    with mpmath.workdps(digits):
        zm = mpmath.mpf(z)
        am = mpmath.mpf(alpha)
        tol = mpmath.mpf(rel_tol)
        total = mpmath.mpf(1)
        power = mpmath.mpf(1)
        prev = mpmath.mpf(1)
        small = 0
        for k in range(1, ML_MAX_TERMS):
            power *= zm
            term = power * mpmath.rgamma(am * k + 1)
            total += term
            if abs(term) < tol * abs(total) and abs(term) <= abs(prev):
                small += 1
                if small == 3:
                    return float(total)
            else:
                small = 0
            prev = term
    raise DomainError(f"Mittag-Leffler series did not settle within {ML_MAX_TERMS} terms at z={z}")


@dataclass(frozen=True)
class ExpMomentResult:
    """Outcome of :func:`exp_moment_power`.

    ``status`` is ``"finite"``, ``"divergent"`` (r above the critical power)
    or ``"indeterminate"`` (r exactly at it). ``value`` is the partial sum in
    the finite case, ``inf`` when divergent and ``nan`` when indeterminate.
    """

    value: float
    status: str
    critical_r: float
    n_terms: int = 0
    last_term_ratio: float = math.nan
    converged: bool = False

    @property
    def diverges(self) -> bool:
        return self.status == "divergent"


def exp_moment_power(
    alpha: float,
    xi: float,
    r: float,
    t: float,
    k_max: int | None = None,
    rel_tol: float = 1e-17,
) -> ExpMomentResult:
    """Series for ``E[exp(xi * E_t**r)]``.

    With ``r = 1`` the series is ``mittag_leffler(alpha, xi * t**alpha)``. If
    ``k_max`` is None the sum runs until the truncation rule fires.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if xi <= 0 or r <= 0 or t <= 0:
        raise DomainError("xi, r and t must be positive")
    critical = 1.0 / (1.0 - alpha)
    if r > critical:
        return ExpMomentResult(math.inf, "divergent", critical)
    if r == critical:
        return ExpMomentResult(math.nan, "indeterminate", critical)

    lxi = math.log(xi)
    lt = math.log(t)
    cap = k_max if k_max is not None else ML_MAX_TERMS

    def log_term(k: int) -> float:
        return (
            k * lxi
            - math.lgamma(k + 1.0)
            + math.lgamma(r * k + 1.0)
            - math.lgamma(alpha * r * k + 1.0)
            + alpha * r * k * lt
        )

    terms = [1.0]
    partial = 1.0
    small = 0
    prev_log = 0.0
    ratio = math.nan
    converged = False
    for k in range(1, cap + 1):
        lk = log_term(k)
        if lk > 709.0:
            raise DomainError(f"exponential-moment series overflows at term {k}")
        term = math.exp(lk)
        terms.append(term)
        partial += term
        ratio = math.exp(lk - prev_log)
        prev_log = lk
        if k_max is None:
            if term < rel_tol * partial and ratio <= 1.0:
                small += 1
                if small == 3:
                    converged = True
                    break
            else:
                small = 0
    else:
        converged = k_max is not None and ratio < 1.0
    return ExpMomentResult(math.fsum(terms), "finite", critical, len(terms), ratio, converged)
