"""Alpha-stable subordinator paths and the step approximation of their inverse."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .special import exp_moment_power, gamma_ratio, increment_moment_oracle, mittag_leffler, moment_oracle
from .streams import derive, open_unit

__all__ = [
    "StableSpec",
    "SubordinatorPath",
    "sample_stable_increment",
    "generate_path",
    "extend_increments",
    "inverse_at",
    "inverse_index",
    "moment_oracle",
    "increment_moment_oracle",
    "mittag_leffler",
    "exp_moment_power",
    "gamma_ratio",
]

DEFAULT_MAX_STEPS = 10**9
BLOCK = 512


@dataclass(frozen=True)
class StableSpec:
    alpha: float
    delta: float
    horizon: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.horizon > 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")


def sample_stable_increment(alpha: float, delta: float, rng: np.random.Generator, size=None):
    """Draw ``D_delta`` for the subordinator with Laplace exponent ``xi**alpha``.

    Kanter's representation of the positive stable law: with ``U`` uniform on
    (0, pi) and ``W`` unit exponential,
    ``S = sin(aU) / sin(U)**(1/a) * (sin((1-a)U) / W)**((1-a)/a)`` satisfies
    ``E exp(-xi S) = exp(-xi**a)``; the increment is ``delta**(1/a) * S``.
    Evaluated in log space so that extreme draws stay finite.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    u = np.pi * open_unit(rng, size)
    w = rng.standard_exponential(size)
    w = np.maximum(w, np.finfo(float).tiny)
    log_s = (
        np.log(np.sin(alpha * u))
        - np.log(np.sin(u)) / alpha
        + (1.0 - alpha) / alpha * (np.log(np.sin((1.0 - alpha) * u)) - np.log(w))
        + np.log(delta) / alpha
    )
    out = np.clip(np.exp(log_s), np.finfo(float).tiny, np.finfo(float).max)
    if size is None:
        return float(out)
    return out


def extend_increments(alpha: float, delta: float, rng: np.random.Generator, horizon: float,
                      multiple: int = 1, max_steps: int = DEFAULT_MAX_STEPS) -> np.ndarray:
    """Accumulate ``D_{n delta}`` until the path first exceeds ``horizon``.

    Returns the absolute values ``D_0 = 0, D_delta, ...`` ending at the first
    point beyond ``horizon``, padded further until the number of increments is
    a multiple of ``multiple`` (so that every coarsening by a divisor of
    ``multiple`` also reaches past the horizon). Increments are drawn in fixed
    blocks, so increment ``i`` depends only on the stream and ``i``.
    """
    blocks = []
    total = 0.0
    count = 0
    while True:
        inc = sample_stable_increment(alpha, delta, rng, BLOCK)
        blocks.append(inc)
        count += BLOCK
        total += float(inc.sum())
        if total > horizon:
            values = np.concatenate(([0.0], np.cumsum(np.concatenate(blocks))))
            first = int(np.searchsorted(values, horizon, side="right"))
            if first < values.size:
                n_inc = -(-first // multiple) * multiple
                if n_inc < values.size:
                    return values[: n_inc + 1]
        if count > max_steps:
            raise DomainError(f"subordinator path exceeded {max_steps} steps before the horizon")


@dataclass(frozen=True)
class SubordinatorPath:
    """Sampled values ``D_{n delta}`` for ``n = 0..N+1``.

    ``values[N] <= horizon < values[N+1]``; the last stored point is the
    single overshoot beyond the horizon.
    """

    spec: StableSpec
    values: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.values.size - 2

    @property
    def grid(self) -> np.ndarray:
        """Random time grid ``tau_0 .. tau_N`` inside [0, horizon]."""
        return self.values[:-1]

    @classmethod
    def from_values(cls, spec: StableSpec, values: np.ndarray) -> "SubordinatorPath":
        """Truncate an absolute-value sequence to the first horizon exceedance."""
        values = np.asarray(values, dtype=float)
        first = int(np.searchsorted(values, spec.horizon, side="right"))
        if first >= values.size:
            raise DomainError("values never exceed the horizon")
        out = values[: first + 1].copy()
        out.setflags(write=False)
        return cls(spec, out)


def generate_path(spec: StableSpec, seed: int, path_index: int = 0,
                  max_steps: int = DEFAULT_MAX_STEPS) -> SubordinatorPath:
    """Simulate one subordinator path; deterministic in ``(spec, seed, path_index)``."""
    rng = derive(seed, path_index, "stable")
    values = extend_increments(spec.alpha, spec.delta, rng, spec.horizon, max_steps=max_steps)
    return SubordinatorPath.from_values(spec, values)


def inverse_index(path: SubordinatorPath, t: float) -> int:
    """Plateau index ``n`` with ``t`` in ``[D_{n delta}, D_{(n+1) delta})``."""
    if not 0.0 <= t <= path.spec.horizon:
        raise DomainError(f"t={t} outside [0, {path.spec.horizon}]")
    return int(np.searchsorted(path.values, t, side="right")) - 1


def inverse_at(path: SubordinatorPath, t: float) -> float:
    """Step approximation of the inverse subordinator, ``(min{n: D_n > t} - 1) delta``."""
    return inverse_index(path, t) * path.spec.delta


def inverse_on_grid(path: SubordinatorPath, ts) -> np.ndarray:
    ts = np.asarray(ts, dtype=float)
    if ts.size and (ts.min() < 0.0 or ts.max() > path.spec.horizon):
        raise DomainError("evaluation times outside [0, horizon]")
    return (np.searchsorted(path.values, ts, side="right") - 1) * path.spec.delta


def theoretical_mean_steps(alpha: float, delta: float, horizon: float) -> float:
    """Expected plateau count ``E[E_T] / delta``; handy for sizing buffers."""
    return horizon**alpha / math.gamma(1.0 + alpha) / delta
