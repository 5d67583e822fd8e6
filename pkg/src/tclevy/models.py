"""Coefficient models ``(F, G, H)`` with their declared structural constants.

Built-in models belong to the polynomial family

    F(t, x) = phi_F(t) * (mu * x - kappa * x**3)
    G(t, x) = phi_G(t) * sigma * x
    H(t, x, z) = phi_H(t) * gamma * x * z

with time envelopes ``phi``. Every constant (growth, monotonicity,
one-sided Lipschitz, Hoelder-in-time) is derived analytically from the
parameters; :func:`audit` checks the declarations on random samples.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .noise import JumpMeasureSpec


@dataclass(frozen=True)
class Envelope:
    """Time envelope ``level + scale * t**eta + sum_k amps[k] * cos(freqs[k] * t)``.

    ``eta`` is the declared Hoelder exponent and ``holder`` the declared
    Hoelder constant on ``[0, inf)``. Use the constructors below rather than
    building one by hand.
    """

    level: float = 1.0
    scale: float = 0.0
    eta: float = 1.0
    amps: tuple = ()
    freqs: tuple = ()
    holder: float = 0.0
    kind: str = "constant"

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"envelope exponent must lie in (0, 1], got {self.eta}")

    def __call__(self, t):
        if isinstance(t, np.ndarray):
            v = self.level + self.scale * np.power(t, self.eta)
            for a, w in zip(self.amps, self.freqs):
                v = v + a * np.cos(w * t)
            return v
        v = self.level + self.scale * t**self.eta
        s = 0.0
        for a, w in zip(self.amps, self.freqs):
            s += a * math.cos(w * t)
        return v + s

    @property
    def is_constant(self) -> bool:
        return self.scale == 0.0 and not self.amps

    def bounds(self, horizon: float) -> tuple[float, float]:
        """Lower and upper bounds of the envelope on ``[0, horizon]``."""
        p = self.scale * horizon**self.eta
        wiggle = sum(abs(a) for a in self.amps)
        return self.level + min(0.0, p) - wiggle, self.level + max(0.0, p) + wiggle

    def sup_abs(self, horizon: float) -> float:
        lo, hi = self.bounds(horizon)
        return max(abs(lo), abs(hi))


def constant_envelope(level: float = 1.0) -> Envelope:
    return Envelope(level=level)


def power_envelope(eta: float, scale: float = 1.0, level: float = 1.0) -> Envelope:
    """``level + scale * t**eta``; ``|s**eta - t**eta| <= |s - t|**eta`` gives Hoelder constant ``|scale|``."""
    return Envelope(level=level, scale=scale, eta=eta, holder=abs(scale), kind="power")


def weierstrass_envelope(eta: float, scale: float = 0.5, level: float = 1.0,
                         base: float = 2.0, n_terms: int = 32) -> Envelope:
    """Envelope that is exactly ``eta``-Hoelder at every time, not just at ``t = 0``.

    ``level + scale * W(t) / W_max`` with ``W(t) = sum_k base**(-k eta) cos(pi base**k t)``
    truncated to ``n_terms`` terms (resolution ``base**-n_terms``). Splitting the
    series where ``base**k |s - t| ~ 1`` bounds the Hoelder constant of ``W`` by
    ``pi b**(1-eta) / (b**(1-eta) - 1) + 2 / (1 - b**-eta)``.
    """
    if not 0.0 < eta < 1.0:
        raise DomainError(f"Weierstrass envelope needs eta in (0, 1), got {eta}")
    if base <= 1.0:
        raise DomainError("base must exceed 1")
    raw = [base ** (-k * eta) for k in range(n_terms)]
    w_max = sum(raw)
    amps = tuple(scale * r / w_max for r in raw)
    freqs = tuple(math.pi * base**k for k in range(n_terms))
    g = base ** (1.0 - eta)
    holder_w = math.pi * g / (g - 1.0) + 2.0 / (1.0 - base ** (-eta))
    return Envelope(level=level, eta=eta, amps=amps, freqs=freqs,
                    holder=abs(scale) * holder_w / w_max, kind="weierstrass")


@dataclass(frozen=True)
class ModelConstants:
    """Declared constants: growth power ``h``, ``C(h)`` (``growth``), ``K0..K5``, Hoelder exponents."""

    h: float
    growth: float
    K0: float
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    eta_F: float = 1.0
    eta_G: float = 1.0
    eta_H: float = 1.0

    def __post_init__(self):
        if self.h < 1:
            raise DomainError(f"growth power h must be >= 1, got {self.h}")
        for name in ("eta_F", "eta_G", "eta_H"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v}")


def predicted_order(constants: ModelConstants, alpha: float) -> tuple[float, str]:
    """Theoretical strong order and the name of the binding exponent."""
    cands = {"eta_F": constants.eta_F, "eta_G": constants.eta_G,
             "eta_H": constants.eta_H, "alpha/2": alpha / 2.0}
    name = min(cands, key=lambda k: (cands[k], k != "alpha/2"))
    return cands[name], name


class CoefficientModel:
    """Interface shared by all models (scalar state, ``d = 1``).

    Subclasses provide ``F``, ``G``, ``H``, ``compensator_integral``,
    ``lipschitz_radius`` and the attributes ``constants``, ``jumps``,
    ``x0``, ``horizon``. ``dF_dx`` may be None, in which case the implicit
    solver differentiates numerically. Evaluation must be reentrant and
    broadcast over numpy arrays.
    """

    dim = 1
    dF_dx = None
    name = "custom"

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class FunctionModel(CoefficientModel):
    """Model from user callables; constants are whatever the caller declares."""

    F: Callable
    G: Callable
    H: Callable
    constants: ModelConstants
    jumps: JumpMeasureSpec
    x0: float = 1.0
    horizon: float = 1.0
    compensator: Callable | None = None
    lipschitz: Callable | None = None
    dF_dx: Callable | None = None
    name: str = "custom"

    def compensator_integral(self, t, x, n_nodes: int = 10_000):
        if self.compensator is not None:
            return self.compensator(t, x)
        nodes, weights = self.jumps.quadrature(n_nodes)
        return float(np.dot(weights, self.H(t, x, nodes)))

    def lipschitz_radius(self, radius: float) -> float:
        if self.lipschitz is None:
            return math.inf
        return self.lipschitz(radius)


@dataclass(frozen=True)
class PolynomialModel(CoefficientModel):
    mu: float
    kappa: float
    sigma: float
    gamma: float
    jumps: JumpMeasureSpec
    x0: float = 1.0
    env_F: Envelope = field(default_factory=constant_envelope)
    env_G: Envelope = field(default_factory=constant_envelope)
    env_H: Envelope = field(default_factory=constant_envelope)
    horizon: float = 1.0
    radius: float = 10.0
    name: str = "polynomial"

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("cubic coefficient kappa must be nonnegative")
        if self.env_F.bounds(self.horizon)[0] < 0.0:
            raise DomainError("drift envelope must stay nonnegative on [0, horizon]")
        object.__setattr__(self, "constants", self._derive_constants())

    # coefficients; written so scalar and array calls run the same arithmetic
    def F(self, t, x):
        return self.env_F(t) * (self.mu * x - self.kappa * (x * x * x))

    def dF_dx(self, t, x):
        return self.env_F(t) * (self.mu - 3.0 * self.kappa * (x * x))

    def G(self, t, x):
        return self.env_G(t) * (self.sigma * x)

    def H(self, t, x, z):
        return self.env_H(t) * (self.gamma * x * z)

    def compensator_integral(self, t, x):
        return self.env_H(t) * (self.gamma * x * self.jumps.mean())

    def lipschitz_radius(self, radius: float) -> float:
        """``C(R)`` of the local Lipschitz condition on the ball of radius ``R``."""
        T = self.horizon
        return (self.env_F.sup_abs(T) * (abs(self.mu) + 3.0 * self.kappa * radius**2)
                + self.env_G.sup_abs(T) * abs(self.sigma)
                + self.env_H.sup_abs(T) * abs(self.gamma) * self.jumps.moment(1))

    def _derive_constants(self) -> ModelConstants:
        T = self.horizon
        loF, hiF = self.env_F.bounds(T)
        supG = self.env_G.sup_abs(T)
        supH = self.env_H.sup_abs(T)
        h = 1.0 if self.kappa == 0.0 else 3.0
        mu_eff = self.mu * (hiF if self.mu > 0 else loF)
        return ModelConstants(
            h=h,
            growth=max(hiF * (abs(self.mu) + self.kappa), supG * abs(self.sigma)),
            K0=supH**2 * self.gamma**2 * self.jumps.moment(2),
            K1=max(mu_eff + (2.0 * h - 1.0) / 2.0 * supG**2 * self.sigma**2, 0.0),
            K2=self.env_F.holder * (abs(self.mu) + self.kappa * self.radius**2),
            K3=self.env_G.holder * abs(self.sigma),
            K4=self.env_H.holder * abs(self.gamma) * self.jumps.moment(1),
            K5=max(mu_eff, 0.0),
            eta_F=self.env_F.eta,
            eta_G=self.env_G.eta,
            eta_H=self.env_H.eta,
        )

    def params(self) -> dict:
        return {"mu": self.mu, "kappa": self.kappa, "sigma": self.sigma, "gamma": self.gamma,
                "x0": self.x0, "horizon": self.horizon}


def builtin_linear(a: float, sigma: float, gamma: float, jump: JumpMeasureSpec, x0: float,
                   horizon: float = 1.0) -> PolynomialModel:
    """``F = a x``, ``G = sigma x``, ``H = gamma x z``; globally Lipschitz, ``h = 1``."""
    return PolynomialModel(mu=a, kappa=0.0, sigma=sigma, gamma=gamma, jumps=jump, x0=x0,
                           horizon=horizon, name="linear")


def builtin_cubic(mu: float, sigma: float, gamma: float, jump: JumpMeasureSpec, x0: float,
                  horizon: float = 1.0, radius: float = 10.0) -> PolynomialModel:
    """``F = -x**3 + mu x``: only locally Lipschitz, one-sided Lipschitz with ``K5 = mu``."""
    if mu < 0:
        raise DomainError("cubic model expects mu >= 0")
    return PolynomialModel(mu=mu, kappa=1.0, sigma=sigma, gamma=gamma, jumps=jump, x0=x0,
                           horizon=horizon, radius=radius, name="cubic")


def time_modulated(base: PolynomialModel, envelopes, horizon: float | None = None,
                   radius: float | None = None) -> PolynomialModel:
    """Multiply ``F``, ``G``, ``H`` by time envelopes ``(phi_F, phi_G, phi_H)``.

    ``None`` entries keep the base coefficient unchanged. Constants and
    Hoelder exponents are re-derived for the modulated model.
    """
    if not isinstance(base, PolynomialModel):
        raise TypeError("time_modulated needs a polynomial-family model with known constants")
    names = ("env_F", "env_G", "env_H")
    changes = {}
    for name, env in zip(names, envelopes):
        if env is None:
            continue
        if not getattr(base, name).is_constant or getattr(base, name).level != 1.0:
            raise DomainError(f"{name} of the base model is already modulated")
        changes[name] = env
    if horizon is not None:
        changes["horizon"] = horizon
    if radius is not None:
        changes["radius"] = radius
    tag = "+".join(n[-1] for n in names if n in changes) or "none"
    changes["name"] = f"{base.name}-mod[{tag}]"
    return dataclasses.replace(base, **changes)


# ---------------------------------------------------------------------------
# assumption audit

@dataclass(frozen=True)
class AuditEntry:
    assumption: str
    quantity: str
    ratio: float
    declared: float
    passed: bool


@dataclass(frozen=True)
class AuditReport:
    entries: tuple
    n_samples: int
    radius: float
    slack: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, quantity: str) -> AuditEntry:
        for e in self.entries:
            if e.quantity == quantity:
                return e
        raise KeyError(quantity)

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "radius": self.radius, "slack": self.slack,
                "passed": self.passed, "entries": [dataclasses.asdict(e) for e in self.entries]}


def _exceeds(ratio: float, declared: float, slack: float) -> bool:
    # relative guard absorbs last-bit rounding when a sample hits the sharp constant
    guard = 1e-9 * max(1.0, abs(declared))
    return ratio > declared + slack * max(1.0, abs(declared)) + guard


def audit(model: CoefficientModel, radius: float, n_samples: int, rng: np.random.Generator,
          slack: float = 0.0, n_nodes: int = 200) -> AuditReport:
    """Check the declared constants on random ``(s, t, x, y)`` samples in ``[0, T] x ball(R)``.

    Each entry records the largest observed ratio of the left-hand side to
    the constant-free right-hand side. The one-sided Lipschitz condition is
    judged in its squared form; the ratio with exponent one on ``|x - y|`` is
    reported for reference only.
    """
    if radius <= 0 or n_samples < 1:
        raise DomainError("audit needs radius > 0 and at least one sample")
    # coincident samples (x == y, s == t) give 0/0; those ratios are dropped below
    with np.errstate(divide="ignore", invalid="ignore"):
        return _audit(model, radius, n_samples, rng, slack, n_nodes)


def _audit(model, radius, n_samples, rng, slack, n_nodes):
    T = model.horizon
    k = model.constants
    s = T * rng.random(n_samples)
    t = T * rng.random(n_samples)
    x = radius * (2.0 * rng.random(n_samples) - 1.0)
    y = radius * (2.0 * rng.random(n_samples) - 1.0)
    nodes, weights = model.jumps.quadrature(n_nodes)
    zz = nodes[None, :]

    def nu_int(values):
        return values @ weights

    dxy = np.abs(x - y)
    Hx = model.H(t[:, None], x[:, None], zz)
    Hy = model.H(t[:, None], y[:, None], zz)
    Fx, Fy = model.F(t, x), model.F(t, y)
    Gx, Gy = model.G(t, x), model.G(t, y)

    lip = (np.abs(Fx - Fy) + np.abs(Gx - Gy) + nu_int(np.abs(Hx - Hy))) / dxy
    growth = np.maximum(np.abs(Fx), np.abs(Gx)) / (1.0 + np.abs(x) ** k.h)
    jump2 = nu_int(Hx**2) / (1.0 + x**2)
    mono = (x * Fx + (2.0 * k.h - 1.0) / 2.0 * Gx**2) / (1.0 + x**2)
    dst = np.abs(s - t)
    lin = 1.0 + np.abs(x)
    holF = np.abs(model.F(s, x) - Fx) / (lin * dst**k.eta_F)
    holG = np.abs(model.G(s, x) - Gx) / (lin * dst**k.eta_G)
    holH = nu_int(np.abs(model.H(s[:, None], x[:, None], zz) - Hx)) / (lin * dst**k.eta_H)
    osl = (x - y) * (Fx - Fy)
    osl_sq = osl / dxy**2
    osl_lin = osl / dxy

    c_r = model.lipschitz_radius(radius)
    rows = [
        ("local_lipschitz", "C(R)", lip, c_r),
        ("polynomial_growth", "C(h)", growth, k.growth),
        ("polynomial_growth", "K0", jump2, k.K0),
        ("monotone", "K1", mono, k.K1),
        ("time_continuity", "K2", holF, k.K2),
        ("time_continuity", "K3", holG, k.K3),
        ("time_continuity", "K4", holH, k.K4),
        ("one_sided_lipschitz", "K5", osl_sq, k.K5),
    ]
    entries = []
    for assumption, qty, vals, declared in rows:
        vals = vals[np.isfinite(vals)]
        worst = float(vals.max()) if vals.size else 0.0
        entries.append(AuditEntry(assumption, qty, worst, declared, not _exceeds(worst, declared, slack)))
    worst_lin = osl_lin[np.isfinite(osl_lin)]
    worst_lin = float(worst_lin.max()) if worst_lin.size else 0.0
    # informational: exponent one on |x - y|, never judged
    entries.append(AuditEntry("one_sided_lipschitz", "K5_linear_form", worst_lin, k.K5, True))
    return AuditReport(tuple(entries), n_samples, radius, slack)
