"""Stochastic theta method and the forward-backward Euler-Maruyama companion.

Both schemes run on the random grid ``tau_n = D_{n delta}``; on that grid the
time-changed Brownian increment is ``B_{(n+1)delta} - B_{n delta}`` and the
jump integral is a sum over the step's batch of marks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, SolverError
from .models import CoefficientModel, ModelConstants, PolynomialModel
from .noise import NoisePanel, compensator_weight, make_panel
from .subordinator import StableSpec, SubordinatorPath, generate_path


@dataclass(frozen=True)
class ThetaConfig:
    theta: float
    delta: float
    solver_tol: float = 1e-12
    solver_max_iter: int = 100

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")


def delta_star(constants: ModelConstants, theta: float) -> float:
    """Largest admissible step ``min{1, 1/(2 K1 theta), 1/(K5 theta)}``."""
    bound = 1.0
    # a zero constant imposes no restriction; products are tested, not factors, against underflow
    for rate in (2.0 * constants.K1 * theta, constants.K5 * theta):
        if rate > 0.0:
            bound = min(bound, 1.0 / rate)
    return bound


def check_config(cfg: ThetaConfig, model: CoefficientModel) -> None:
    ds = delta_star(model.constants, cfg.theta)
    if not cfg.delta < ds:
        raise DomainError(f"delta={cfg.delta} is not below delta*={ds} for theta={cfg.theta}")


@dataclass(frozen=True)
class SchemePath:
    """ST trajectory on the grid ``tau_0..tau_N`` plus per-step diagnostics.

    ``b_values[n]`` is the right-hand side handed to the implicit solve of
    step ``n``; ``drift_left``, ``diffusion_left`` and ``jump_sums`` are the
    coefficient evaluations at ``(tau_n, X_n)`` that the FBEM scheme reuses.
    """

    grid: np.ndarray = field(repr=False)
    st_values: np.ndarray = field(repr=False)
    iterations: np.ndarray = field(repr=False)
    b_values: np.ndarray = field(repr=False)
    drift_left: np.ndarray = field(repr=False)
    diffusion_left: np.ndarray = field(repr=False)
    jump_sums: np.ndarray = field(repr=False)
    theta: float = 0.0
    delta: float = 0.0
    fbem_values: np.ndarray | None = field(default=None, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def n_steps(self) -> int:
        return self.grid.size - 1

    @property
    def final(self) -> float:
        return float(self.st_values[-1])

    def norm_bound_excess(self, K1: float, tol: float = 0.0) -> float:
        """Largest ``|x|**2 - (|b|**2 + 2 K1 theta delta) / (1 - 2 K1 theta delta)`` over the steps."""
        if self.n_steps == 0 or self.theta == 0.0:
            return -math.inf
        q = 2.0 * K1 * self.theta * self.delta
        bound = (self.b_values**2 + q) / (1.0 - q)
        return float(np.max(self.st_values[1:] ** 2 - bound)) - 10.0 * tol


def _finite_difference(model, t, x):
    h = 1e-6 * (1.0 + abs(x))
    return (model.F(t, x + h) - model.F(t, x - h)) / (2.0 * h)


def implicit_solve(model: CoefficientModel, t_next: float, b: float, theta: float, delta: float,
                   tol: float = 1e-12, max_iter: int = 100, step: int | None = None):
    """Solve ``x - theta * F(t_next, x) * delta = b``.

    Damped Newton from the explicit predictor ``b + theta delta F(t_next, b)``,
    halving the step until the residual drops and falling back to a
    fixed-point update when that fails. Convergence means a residual of at
    most ``tol * (1 + |b|)``.

    Returns ``(x, iterations)``; raises :class:`SolverError` on failure.
    """
    c = theta * delta
    if c == 0.0:
        return b, 0
    F = model.F
    dF = model.dF_dx
    x = b + c * F(t_next, b)
    fx = F(t_next, x)
    r = x - c * fx - b
    thr = tol * (1.0 + abs(b))
    it = 0
    while abs(r) > thr:
        if it >= max_iter or not math.isfinite(r):
            raise SolverError(f"implicit solve did not converge (residual {r:.3e})", step)
        d = dF(t_next, x) if dF is not None else _finite_difference(model, t_next, x)
        jac = 1.0 - c * d
        if jac != 0.0 and math.isfinite(jac):
            stp = -r / jac
        else:
            stp = (b + c * fx) - x
        lam = 1.0
        accepted = False
        for _ in range(40):
            xn = x + lam * stp
            fn = F(t_next, xn)
            rn = xn - c * fn - b
            if abs(rn) < abs(r):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            xn = b + c * fx
            fn = F(t_next, xn)
            rn = xn - c * fn - b
        x, fx, r = xn, fn, rn
        it += 1
    return x, it


def _check_shapes(sub_path: SubordinatorPath, noise: NoisePanel):
    if noise.n_steps != sub_path.n_steps:
        raise DomainError(f"noise panel has {noise.n_steps} steps, path has {sub_path.n_steps}")


def st_path(model: CoefficientModel, sub_path: SubordinatorPath, noise: NoisePanel, cfg: ThetaConfig,
            backend: str = "auto", decompose: bool = False, check: bool = True) -> SchemePath:
    """Integrate the stochastic theta scheme along one subordinator path.

    The jump contribution is the raw batch sum ``sum_z H(tau_n, X_n, z)``: the
    compensated-measure integral plus the compensator integral add up to it
    exactly. ``decompose=True`` evaluates the two parts separately (generic
    backend only) and records them in ``extras`` for term-by-term checks.

    ``backend`` is ``"auto"`` (compiled kernel when the model allows it),
    ``"compiled"``, ``"python"`` (kernel fallback) or ``"generic"`` (model
    callables, any model).
    """
    _check_shapes(sub_path, noise)
    if check:
        check_config(cfg, model)
    if decompose:
        backend = "generic"
    if backend != "generic" and isinstance(model, PolynomialModel):
        return _kernel_path(model, sub_path, noise, cfg, kernels.get(backend))
    if backend not in ("auto", "generic"):
        raise DomainError(f"backend {backend!r} needs a polynomial-family model")
    return _generic_path(model, sub_path, noise, cfg, decompose)


def _kernel_path(model: PolynomialModel, sub_path, noise, cfg, impl) -> SchemePath:
    n = noise.n_steps
    tau = np.ascontiguousarray(sub_path.values, dtype=float)
    out_x = np.empty(n + 1)
    out_b = np.empty(n)
    out_fl = np.empty(n)
    out_gl = np.empty(n)
    out_j = np.empty(n)
    out_it = np.empty(n, dtype=np.int64)
    env = kernels.pack_envelopes((model.env_F, model.env_G, model.env_H))
    status = impl.theta_poly_path(
        float(model.mu), float(model.kappa), float(model.sigma), float(model.gamma),
        env["env_level"], env["env_scale"], env["env_eta"], env["env_amps"], env["env_freqs"],
        env["env_nterms"], tau, np.ascontiguousarray(noise.gauss), np.ascontiguousarray(noise.counts, dtype=np.int64),
        np.ascontiguousarray(noise.marks, dtype=float), float(cfg.theta), float(cfg.delta), float(model.x0),
        float(cfg.solver_tol), int(cfg.solver_max_iter), out_x, out_b, out_fl, out_gl, out_j, out_it,
    )
    if status >= 0:
        raise SolverError("implicit solve did not converge", int(status))
    return SchemePath(sub_path.grid, out_x, out_it, out_b, out_fl, out_gl, out_j, cfg.theta, cfg.delta)


def _generic_path(model, sub_path, noise, cfg, decompose) -> SchemePath:
    n = noise.n_steps
    tau = sub_path.values.tolist()
    gauss = noise.gauss.tolist()
    offsets = noise.offsets.tolist()
    marks = noise.marks.tolist()
    theta, delta = cfg.theta, cfg.delta
    one_m = 1.0 - theta
    weight = compensator_weight(model.jumps, delta)
    xs = [model.x0]
    bs, fls, gls, js, its = [], [], [], [], []
    comp_parts, tilde_parts = [], []
    x = model.x0
    for k in range(n):
        t = tau[k]
        fl = model.F(t, x)
        gl = model.G(t, x)
        jsum = 0.0
        for z in marks[offsets[k]: offsets[k + 1]]:
            jsum += model.H(t, x, z)
        if decompose:
            comp = weight * model.compensator_integral(t, x)
            tilde = jsum - comp
            comp_parts.append(comp)
            tilde_parts.append(tilde)
            b = x + one_m * fl * delta + gl * gauss[k] + tilde + comp
        else:
            b = x + one_m * fl * delta + gl * gauss[k] + jsum
        x, it = implicit_solve(model, tau[k + 1], b, theta, delta, cfg.solver_tol, cfg.solver_max_iter, step=k)
        bs.append(b)
        fls.append(fl)
        gls.append(gl)
        js.append(jsum)
        its.append(it)
        xs.append(x)
    extras = {}
    if decompose:
        extras = {"compensated": np.array(tilde_parts), "compensator": np.array(comp_parts)}
    return SchemePath(sub_path.grid, np.array(xs, dtype=float), np.array(its, dtype=np.int64),
                      np.array(bs), np.array(fls), np.array(gls), np.array(js), theta, delta,
                      extras=extras)


def fbem_path(model: CoefficientModel, sub_path: SubordinatorPath, noise: NoisePanel,
              cfg: ThetaConfig, st: SchemePath) -> np.ndarray:
    """Explicit FBEM states, with every coefficient evaluated at the ST iterate ``X_n``."""
    _check_shapes(sub_path, noise)
    if st.n_steps != noise.n_steps or st.delta != cfg.delta or st.theta != cfg.theta:
        raise DomainError("ST path was not computed with this panel and configuration")
    delta = cfg.delta
    fl = st.drift_left.tolist()
    gl = st.diffusion_left.tolist()
    js = st.jump_sums.tolist()
    dB = noise.gauss.tolist()
    xh = float(model.x0)
    out = [xh]
    for k in range(noise.n_steps):
        xh = xh + fl[k] * delta + gl[k] * dB[k] + js[k]
        out.append(xh)
    return np.array(out)


def with_fbem(model, sub_path, noise, cfg, st: SchemePath) -> SchemePath:
    from dataclasses import replace
    return replace(st, fbem_values=fbem_path(model, sub_path, noise, cfg, st))


def grid_index(path: SchemePath, t: float, horizon: float) -> int:
    if not 0.0 <= t <= horizon:
        raise DomainError(f"t={t} outside [0, {horizon}]")
    return int(np.searchsorted(path.grid, t, side="right")) - 1


def interpolate(path: SchemePath, sub_path: SubordinatorPath, t: float) -> float:
    """Value of the interpolated ST process at physical time ``t``.

    The simulable clock is flat between grid points, so every correction
    integral over ``[tau_{n_t}, t]`` vanishes and the interpolant is the
    last grid value at or before ``t``.
    """
    return float(path.st_values[grid_index(path, t, sub_path.spec.horizon)])


def interpolate_many(path: SchemePath, sub_path: SubordinatorPath, ts) -> np.ndarray:
    ts = np.asarray(ts, dtype=float)
    if ts.size and (ts.min() < 0.0 or ts.max() > sub_path.spec.horizon):
        raise DomainError("evaluation times outside [0, horizon]")
    return path.st_values[np.searchsorted(path.grid, ts, side="right") - 1]


def simulate(model: CoefficientModel, alpha: float, cfg: ThetaConfig, seed: int, path_index: int = 0,
             backend: str = "auto", fbem: bool = False):
    """Sample subordinator and noise from ``seed`` and integrate; returns ``(sub_path, noise, scheme)``."""
    spec = StableSpec(alpha, cfg.delta, model.horizon)
    sub = generate_path(spec, seed, path_index)
    noise = make_panel(sub.n_steps, cfg.delta, model.jumps, seed, path_index)
    st = st_path(model, sub, noise, cfg, backend=backend)
    if fbem:
        st = with_fbem(model, sub, noise, cfg, st)
    return sub, noise, st
