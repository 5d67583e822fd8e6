"""Coupled multi-resolution Monte Carlo: strong error, empirical order, moment checks."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, ExperimentAborted, SolverError
from .models import CoefficientModel, predicted_order
from .noise import JumpMeasureSpec, make_panel
from .schemes import SchemePath, ThetaConfig, check_config, interpolate_many, st_path
from .special import mittag_leffler, moment_oracle
from .streams import derive
from .subordinator import StableSpec, SubordinatorPath, extend_increments, generate_path

FAILED_PATH_LIMIT = 1e-3
CHUNK = 64


def _is_power_of_two(r: float) -> bool:
    if r < 1.0:
        return False
    k = round(math.log2(r))
    return r == 2.0**k


@dataclass(frozen=True)
class LevelLadder:
    """Step sizes ``delta_fine * factor**(L-1), ..., delta_fine`` plus a reference step.

    The reference level (default: ``delta_fine`` itself) stands in for the
    exact solution and is excluded from the order fit.
    """

    delta_fine: float
    n_levels: int
    factor: int = 2
    reference_delta: float | None = None

    def __post_init__(self):
        if self.n_levels < 3:
            raise DomainError("a ladder needs at least 3 levels")
        if self.factor != 2:
            raise DomainError("only dyadic ladders (factor 2) are supported")
        if self.reference_delta is None:
            object.__setattr__(self, "reference_delta", self.delta_fine)
        if not _is_power_of_two(self.delta_fine / self.reference_delta):
            raise DomainError("delta_fine must be a power-of-two multiple of the reference step")
        if not self.deltas[0] < 1.0:
            raise DomainError("coarsest step must be below 1")

    @property
    def deltas(self) -> tuple:
        return tuple(self.delta_fine * self.factor ** (self.n_levels - 1 - i) for i in range(self.n_levels))

    @property
    def multipliers(self) -> tuple:
        return tuple(int(round(d / self.reference_delta)) for d in self.deltas)

    @property
    def fit_levels(self) -> tuple:
        """Indices of levels entering the fit (the reference level never does)."""
        return tuple(i for i, m in enumerate(self.multipliers) if m > 1)

    def check(self, model: CoefficientModel, theta: float) -> None:
        for d in self.deltas:
            check_config(ThetaConfig(theta, d), model)

    def to_dict(self) -> dict:
        return {"delta_fine": self.delta_fine, "n_levels": self.n_levels, "factor": self.factor,
                "reference_delta": self.reference_delta}


@dataclass(frozen=True)
class CoupledLevel:
    delta: float
    multiplier: int
    sub_path: SubordinatorPath
    noise: object
    scheme: SchemePath | None = None


def coupled_drivers(alpha: float, horizon: float, ladder: LevelLadder, jumps: JumpMeasureSpec,
                    master_seed: int, path_index: int) -> tuple:
    """One reference-resolution driver, aggregated exactly onto every level.

    Returns ``(reference, levels)``. Coarse subordinator values are subsamples
    of the fine values, coarse Gaussian increments are sums of fine ones, and
    coarse jump batches concatenate the fine batches.
    """
    ref = ladder.reference_delta
    mults = ladder.multipliers
    top = max(mults)
    values = extend_increments(alpha, ref, derive(master_seed, path_index, "stable"), horizon, multiple=top)
    full = make_panel(values.size - 1, ref, jumps, master_seed, path_index)
    ref_path = SubordinatorPath.from_values(StableSpec(alpha, ref, horizon), values)
    reference = CoupledLevel(ref, 1, ref_path, full.truncated(ref_path.n_steps))
    levels = []
    for d, m in zip(ladder.deltas, mults):
        if m == 1:
            levels.append(reference)
            continue
        sub = SubordinatorPath.from_values(StableSpec(alpha, d, horizon), values[::m])
        levels.append(CoupledLevel(d, m, sub, full.aggregated(m, sub.n_steps)))
    return reference, levels


def coupled_simulation(model: CoefficientModel, alpha: float, horizon: float, ladder: LevelLadder,
                       theta: float, master_seed: int, path_index: int, backend: str = "auto",
                       solver_tol: float = 1e-12):
    """Integrate the ST scheme on every level of one coupled driver."""
    reference, levels = coupled_drivers(alpha, horizon, ladder, model.jumps, master_seed, path_index)

    def run(lv: CoupledLevel) -> CoupledLevel:
        cfg = ThetaConfig(theta, lv.delta, solver_tol=solver_tol)
        return CoupledLevel(lv.delta, lv.multiplier, lv.sub_path, lv.noise,
                            st_path(model, lv.sub_path, lv.noise, cfg, backend=backend))

    reference = run(reference)
    levels = [reference if lv.multiplier == 1 else run(lv) for lv in levels]
    return reference, levels


def sup_error(coarse: np.ndarray, fine: np.ndarray, multiplier: int, points: str = "union") -> float:
    """``sup_t |X_coarse(t) - X_fine(t)|`` for the two piecewise-constant paths.

    Coarse grid points are every ``multiplier``-th fine point, so fine grid
    index ``j`` sits on coarse plateau ``j // multiplier``. ``"union"``
    takes the max over all fine grid points, which is the exact supremum
    over ``[0, T]``; ``"coarse"`` only looks at the coarse grid points.
    """
    j = np.arange(fine.size)
    if points == "coarse":
        j = j[::multiplier]
    elif points != "union":
        raise DomainError(f"unknown sup point set {points!r}")
    return float(np.max(np.abs(coarse[j // multiplier] - fine[j])))


def _error_chunk(args):
    (model, alpha, horizon, ladder, theta, seed, backend, points), start, stop = args
    fit = ladder.fit_levels
    errs = np.full((stop - start, len(fit)), np.nan)
    failed = np.zeros(stop - start, dtype=bool)
    for row, i in enumerate(range(start, stop)):
        try:
            reference, levels = coupled_simulation(model, alpha, horizon, ladder, theta, seed, i, backend)
        except SolverError:
            failed[row] = True
            continue
        fine = reference.scheme.st_values
        for col, li in enumerate(fit):
            lv = levels[li]
            errs[row, col] = sup_error(lv.scheme.st_values, fine, lv.multiplier, points)
    return errs, failed


def _chunks(n_paths: int, size: int):
    return [(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]


def map_paths(func, static: tuple, n_paths: int, workers: int = 1, chunk: int = CHUNK):
    """Run ``func((static, start, stop))`` over fixed path chunks, in order.

    Chunk boundaries do not depend on ``workers``, so results do not either.
    """
    jobs = [(static, a, b) for a, b in _chunks(n_paths, chunk)]
    if workers <= 1 or len(jobs) == 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    r2: float

    @property
    def ci_halfwidth(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def fit_order(points) -> OrderFit:
    """Weighted least squares of ``log error`` on ``log delta``.

    ``points`` are ``(delta, error, std_error)`` triples; weights are
    ``(error / std_error)**2``, the inverse variance of ``log error``. The
    confidence interval is the 95% Student-t slope interval.
    """
    pts = [tuple(map(float, p)) for p in points]
    if len(pts) < 3:
        raise DomainError("order fit needs at least 3 points")
    d = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    se = np.array([p[2] for p in pts])
    if np.any(e <= 0) or np.any(d <= 0):
        raise DomainError("order fit needs positive steps and errors (degenerate experiment?)")
    x = np.log(d)
    y = np.log(e)
    w = (e / se) ** 2 if np.all(se > 0) else np.ones_like(e)
    w = w / w.sum()
    xm = np.dot(w, x)
    ym = np.dot(w, y)
    sxx = np.dot(w, (x - xm) ** 2)
    slope = np.dot(w, (x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - intercept - slope * x
    n = len(pts)
    ss_res = np.dot(w, resid**2)
    ss_tot = np.dot(w, (y - ym) ** 2)
    # weights are normalized, so rescale residual variance by the effective count
    s2 = ss_res / (n - 2) * n
    se_slope = math.sqrt(s2 / (sxx * n)) if s2 > 0 else 0.0
    tq = stats.t.ppf(0.975, n - 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return OrderFit(float(slope), float(intercept), float(slope - tq * se_slope),
                    float(slope + tq * se_slope), float(r2))


@dataclass(frozen=True)
class LevelError:
    delta: float
    mc_error: float
    std_error: float
    n_paths: int


@dataclass(frozen=True)
class StrongErrorReport:
    levels: tuple
    reference_delta: float
    alpha: float
    theta: float
    n_failed: int
    fitted_order: float = math.nan
    intercept: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    r2: float = math.nan
    degenerate: bool = False
    predicted_order: float = math.nan
    binding_exponent: str = ""
    notes: tuple = field(default_factory=tuple)

    def csv_rows(self):
        yield ("delta", "error", "std_error", "n_paths")
        for lv in self.levels:
            yield (lv.delta, lv.mc_error, lv.std_error, lv.n_paths)

    def summary(self) -> dict:
        out = {k: getattr(self, k) for k in ("fitted_order", "ci_low", "ci_high", "r2", "predicted_order",
                                              "binding_exponent", "degenerate", "n_failed", "reference_delta",
                                              "alpha", "theta")}
        out["levels"] = [asdict(lv) for lv in self.levels]
        out["notes"] = list(self.notes)
        return out


def strong_error(model: CoefficientModel, alpha: float, horizon: float, ladder: LevelLadder, theta: float,
                 n_paths: int, master_seed: int, workers: int = 1, sup_points: str = "union",
                 backend: str = "auto") -> StrongErrorReport:
    """Estimate ``E sup_t |X_delta(t) - X_ref(t)|`` per level and fit the order.

    Paths whose implicit solve fails on any level are excluded and counted;
    more than 0.1% failures abort the experiment.
    """
    notes = []
    if not 0.5 < alpha < 1.0:
        msg = f"alpha={alpha} outside (1/2, 1): no theoretical order to compare with"
        warnings.warn(msg)
        notes.append(msg)
    if not 0.5 <= theta <= 1.0:
        msg = f"theta={theta} outside [1/2, 1]"
        warnings.warn(msg)
        notes.append(msg)
    if n_paths < 1:
        raise DomainError("n_paths must be at least 1")
    ladder.check(model, theta)
    results = map_paths(_error_chunk, (model, alpha, horizon, ladder, theta, master_seed, backend, sup_points),
                        n_paths, workers)
    errs = np.concatenate([r[0] for r in results])
    failed = np.concatenate([r[1] for r in results])
    n_failed = int(failed.sum())
    if n_failed > FAILED_PATH_LIMIT * n_paths:
        raise ExperimentAborted(f"{n_failed} of {n_paths} paths failed in the implicit solve")
    errs = errs[~failed]
    n_ok = errs.shape[0]
    levels = []
    for col, li in enumerate(ladder.fit_levels):
        col_e = errs[:, col]
        mean = float(col_e.mean())
        se = float(col_e.std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else 0.0
        levels.append(LevelError(ladder.deltas[li], mean, se, n_ok))
    pred, binding = predicted_order(model.constants, alpha)
    base = dict(levels=tuple(levels), reference_delta=ladder.reference_delta, alpha=alpha, theta=theta,
                n_failed=n_failed, predicted_order=pred, binding_exponent=binding, notes=tuple(notes))
    if len(levels) < 3 or any(lv.mc_error <= 0.0 for lv in levels):
        return StrongErrorReport(degenerate=True, **base)
    fit = fit_order([(lv.delta, lv.mc_error, lv.std_error) for lv in levels])
    return StrongErrorReport(fitted_order=fit.slope, intercept=fit.intercept, ci_low=fit.ci_low,
                             ci_high=fit.ci_high, r2=fit.r2, **base)


# ---------------------------------------------------------------------------
# moment validators

@dataclass(frozen=True)
class Check:
    """One statistical check: ``estimate`` against an allowed band."""

    name: str
    estimate: float
    std_error: float
    reference: float
    lower: float
    upper: float
    z_score: float
    passed: bool
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_se(values: np.ndarray) -> tuple:
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _z(est, ref, se):
    if se > 0:
        return (est - ref) / se
    return 0.0 if est == ref else math.copysign(math.inf, est - ref)


def sandwich_bias(alpha: float, p: float, t: float, delta: float) -> float:
    """Bound on ``E[E_t**p] - E[E~_t**p]`` implied by ``E - delta <= E~ <= E``.

    ``p * delta * E[E_t**(p-1)]`` for ``p >= 1`` (mean value theorem),
    ``delta**p`` for ``0 < p < 1`` (subadditivity), 0 for ``p = 0``.
    """
    if p == 0:
        return 0.0
    if p < 1:
        return delta**p
    return p * delta * moment_oracle(alpha, p - 1.0, t)


def inverse_samples(alpha: float, t: float, n_paths: int, delta: float, seed: int) -> np.ndarray:
    """``E~_t`` on ``n_paths`` independent paths (``E~_t = N delta`` with horizon ``t``)."""
    spec = StableSpec(alpha, delta, t)
    return np.array([generate_path(spec, seed, i).n_steps * delta for i in range(n_paths)])


def validate_inverse_moments(alpha: float, t: float, p_list, n_paths: int, delta: float, seed: int,
                             oracle_scale: float = 1.0, samples: np.ndarray | None = None) -> list:
    """Monte Carlo moments of ``E~_t`` against ``Gamma(p+1)/Gamma(alpha p+1) t**(alpha p)``.

    Passes when the estimate lies in ``[oracle - bias - 3 SE, oracle + 3 SE]``.
    ``oracle_scale`` deliberately distorts the oracle (failure-path testing).
    """
    if any(p < 0 for p in p_list):
        raise DomainError("moment orders must be nonnegative")
    e = inverse_samples(alpha, t, n_paths, delta, seed) if samples is None else samples
    out = []
    for p in p_list:
        est, se = _mean_se(e**p)
        oracle = oracle_scale * moment_oracle(alpha, p, t)
        bias = sandwich_bias(alpha, p, t, delta)
        lo, hi = oracle - bias - 3.0 * se, oracle + 3.0 * se
        out.append(Check(f"inverse_moment[alpha={alpha},p={p},t={t}]", est, se, oracle, lo, hi,
                         _z(est, oracle, se), lo <= est <= hi,
                         {"alpha": alpha, "p": p, "t": t, "delta": delta, "n_paths": n_paths, "bias": bias}))
    return out


def _terminal_chunk(args):
    (model, alpha, t, delta, theta, seed, backend, times), start, stop = args
    cfg = ThetaConfig(theta, delta)
    spec = StableSpec(alpha, delta, t)
    out = np.empty((stop - start, len(times)))
    for row, i in enumerate(range(start, stop)):
        sub = generate_path(spec, seed, i)
        noise = make_panel(sub.n_steps, delta, model.jumps, seed, i)
        st = st_path(model, sub, noise, cfg, backend=backend)
        out[row] = interpolate_many(st, sub, times)
    return out


def sample_states(model: CoefficientModel, alpha: float, times, n_paths: int, delta: float, seed: int,
                  theta: float = 1.0, workers: int = 1, backend: str = "auto") -> np.ndarray:
    """ST states at physical ``times`` on ``n_paths`` paths, shape ``(n_paths, len(times))``."""
    times = tuple(float(s) for s in times)
    horizon = max(times)
    res = map_paths(_terminal_chunk, (model, alpha, horizon, delta, theta, seed, backend, times),
                    n_paths, workers)
    return np.concatenate(res)


def moment_bound(model: CoefficientModel, alpha: float, t: float) -> float:
    """``2**(h-1) E_alpha((2 h K1 + lam K0) t**alpha) (1 + |x0|**(2h))``."""
    k = model.constants
    rate = 2.0 * k.h * k.K1 + model.jumps.lam * k.K0
    z = rate * t**alpha
    try:
        ml = mittag_leffler(alpha, z)
    except DomainError as exc:
        raise DomainError(f"moment bound series argument (2hK1 + lam K0) t**alpha = {z} out of range: {exc}") from exc
    return 2.0 ** (k.h - 1.0) * ml * (1.0 + abs(model.x0) ** (2.0 * k.h))


def validate_solution_moment_bound(model: CoefficientModel, alpha: float, t: float, n_paths: int, delta: float,
                                   seed: int, theta: float = 1.0, bound_scale: float = 1.0,
                                   workers: int = 1) -> Check:
    """One-sided check ``E|X_t|**(2h) <= bound + 3 SE`` with the ST path as proxy for ``X``."""
    rhs = bound_scale * moment_bound(model, alpha, t)
    x = sample_states(model, alpha, (t,), n_paths, delta, seed, theta, workers)[:, 0]
    est, se = _mean_se(np.abs(x) ** (2.0 * model.constants.h))
    return Check(f"solution_moment_bound[alpha={alpha},t={t},lam={model.jumps.lam}]", est, se, rhs,
                 -math.inf, rhs + 3.0 * se, _z(est, rhs, se), est <= rhs + 3.0 * se,
                 {"alpha": alpha, "t": t, "delta": delta, "n_paths": n_paths, "h": model.constants.h})


def validate_increment_scaling(model: CoefficientModel, alpha: float, lags, n_paths: int, delta: float,
                               seed: int, theta: float = 1.0, anchor: float = 0.0, workers: int = 1) -> Check:
    """Log-log slope of ``E|X_{s+lag} - X_s|`` against ``lag``.

    Passes when the slope lies in ``[alpha/2 - 0.15, alpha + 0.15]``.
    """
    lags = tuple(float(v) for v in lags)
    times = (anchor,) + tuple(anchor + v for v in lags)
    x = sample_states(model, alpha, times, n_paths, delta, seed, theta, workers)
    pts = []
    for k, lag in enumerate(lags, start=1):
        m, se = _mean_se(np.abs(x[:, k] - x[:, 0]))
        pts.append((lag, m, se))
    fit = fit_order(pts)
    lo, hi = alpha / 2.0 - 0.15, alpha + 0.15
    return Check(f"increment_scaling[alpha={alpha}]", fit.slope, fit.ci_halfwidth / 1.96, alpha / 2.0, lo, hi,
                 0.0, lo <= fit.slope <= hi,
                 {"lags": list(lags), "means": [p[1] for p in pts], "std_errors": [p[2] for p in pts],
                  "anchor": anchor, "delta": delta, "n_paths": n_paths, "r2": fit.r2})


def _second_moment_chunk(args):
    (model, alpha, horizon, delta, theta, seed, backend, n_max), start, stop = args
    cfg = ThetaConfig(theta, delta)
    spec = StableSpec(alpha, delta, horizon)
    acc = np.zeros(n_max + 1)
    for i in range(start, stop):
        sub = generate_path(spec, seed, i)
        noise = make_panel(sub.n_steps, delta, model.jumps, seed, i)
        x = st_path(model, sub, noise, cfg, backend=backend).st_values
        sq = x**2
        k = min(sq.size, n_max + 1)
        acc[:k] += sq[:k]
        acc[k:] += sq[-1]
    return acc


def uniform_second_moment(model: CoefficientModel, alpha: float, theta: float, delta: float, n_paths: int,
                          seed: int, workers: int = 1, backend: str = "auto") -> float:
    """``max_n E|X_{tau_{n ^ N}}|**2``: the second moment over the grid, each path frozen after its horizon."""
    n_max = int(math.ceil(8.0 * model.horizon**alpha / math.gamma(1 + alpha) / delta)) + 16
    res = map_paths(_second_moment_chunk, (model, alpha, model.horizon, delta, theta, seed, backend, n_max),
                    n_paths, workers)
    acc = np.sum(res, axis=0)
    return float(acc.max() / n_paths)
