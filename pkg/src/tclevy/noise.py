"""Driving noise on the operational clock.

On the plateau grid of the inverse subordinator the time-changed Brownian
motion advances by ``B_{(n+1)delta} - B_{n delta}`` per step, and the Poisson
random measure contributes a batch of marks per operational window of
length ``delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .streams import derive, open_unit

JUMP_FAMILIES = ("uniform", "two_point", "none")


@dataclass(frozen=True)
class JumpMeasureSpec:
    """Finite mark measure ``nu`` on ``{|z| < c}`` with jump rate ``lam``.

    ``family`` selects the normalized mark law: ``"uniform"`` on (-c, c),
    ``"two_point"`` with equal atoms at ``+-atom``, or ``"none"`` (no marks).
    ``total_mass`` is ``nu({|z| < c})``.
    """

    lam: float
    c: float
    total_mass: float = 1.0
    family: str = "uniform"
    atom: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0.0 or not math.isfinite(self.lam):
            raise DomainError(f"jump rate must be finite and nonnegative, got {self.lam}")
        if not self.c > 0.0:
            raise DomainError(f"mark radius c must be positive, got {self.c}")
        if not 0.0 <= self.total_mass < math.inf:
            raise DomainError(f"total mass must be finite and nonnegative, got {self.total_mass}")
        if self.family not in JUMP_FAMILIES:
            raise DomainError(f"unknown jump family {self.family!r}")
        if self.family == "two_point" and not 0.0 < self.atom < self.c:
            raise DomainError(f"two-point atom must lie in (0, c), got {self.atom}")

    @property
    def descriptor(self) -> dict:
        return {"family": self.family, "c": self.c, "total_mass": self.total_mass,
                "atom": self.atom, "lam": self.lam}

    @property
    def active(self) -> bool:
        return self.family != "none" and self.total_mass > 0.0 and self.lam > 0.0

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` marks from ``nu / total_mass``."""
        if n == 0 or self.family == "none":
            return np.zeros(0)
        if self.family == "uniform":
            return self.c * (2.0 * open_unit(rng, n) - 1.0)
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return self.atom * signs

    def moment(self, p: float) -> float:
        """``int |z|**p nu(dz)``."""
        if self.family == "none":
            return 0.0
        if self.family == "uniform":
            return self.total_mass * self.c**p / (p + 1.0)
        return self.total_mass * self.atom**p

    def mean(self) -> float:
        """``int z nu(dz)``; zero for both symmetric families."""
        return 0.0

    def quadrature(self, n_nodes: int = 10_000):
        """Nodes and weights integrating against ``nu``.

        Midpoint rule for the uniform family, exact atoms otherwise.
        """
        if self.family == "none" or self.total_mass == 0.0:
            return np.zeros(1), np.zeros(1)
        if self.family == "uniform":
            h = 2.0 * self.c / n_nodes
            nodes = -self.c + h * (np.arange(n_nodes) + 0.5)
            return nodes, np.full(n_nodes, self.total_mass / n_nodes)
        return np.array([-self.atom, self.atom]), np.full(2, 0.5 * self.total_mass)

    def integrate(self, g, n_nodes: int = 10_000) -> float:
        nodes, weights = self.quadrature(n_nodes)
        return float(np.dot(weights, g(nodes)))


def uniform_jumps(lam: float, c: float, total_mass: float = 1.0) -> JumpMeasureSpec:
    return JumpMeasureSpec(lam, c, total_mass, "uniform")


def two_point_jumps(lam: float, c: float, atom: float, total_mass: float = 1.0) -> JumpMeasureSpec:
    return JumpMeasureSpec(lam, c, total_mass, "two_point", atom)


def no_jumps(c: float = 1.0) -> JumpMeasureSpec:
    return JumpMeasureSpec(0.0, c, 0.0, "none")


def gaussian_increments(n_steps: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """``n_steps`` i.i.d. Normal(0, delta) increments."""
    if n_steps < 0:
        raise DomainError("n_steps must be nonnegative")
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    return math.sqrt(delta) * rng.standard_normal(n_steps)


def jump_counts(spec: JumpMeasureSpec, delta: float, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    if not spec.active:
        return np.zeros(n_steps, dtype=np.int64)
    return rng.poisson(spec.lam * spec.total_mass * delta, n_steps).astype(np.int64)


def jump_batch(spec: JumpMeasureSpec, delta: float, rng: np.random.Generator,
               mark_rng: np.random.Generator | None = None) -> np.ndarray:
    """Atoms of the Poisson measure on one operational window of length ``delta``."""
    k = int(jump_counts(spec, delta, 1, rng)[0])
    return spec.sample_marks(rng if mark_rng is None else mark_rng, k)


def compensator_weight(spec: JumpMeasureSpec, delta: float) -> float:
    """Operational-time weight ``lam * delta`` of the compensator integral."""
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    return spec.lam * delta


@dataclass(frozen=True)
class NoisePanel:
    """Gaussian increments and jump batches for ``n_steps`` scheme steps.

    Jump marks are stored flat in step order; batch ``n`` is
    ``marks[offsets[n]:offsets[n+1]]``.
    """

    delta: float
    gauss: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    marks: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.gauss.shape != self.counts.shape:
            raise DomainError("gauss and jump counts must have one entry per step")
        if int(self.counts.sum()) != self.marks.size:
            raise DomainError("jump counts do not match the number of marks")

    @property
    def n_steps(self) -> int:
        return self.gauss.size

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts)))

    @property
    def jump_batches(self) -> list:
        return np.split(self.marks, np.cumsum(self.counts)[:-1]) if self.n_steps else []

    def truncated(self, n_steps: int) -> "NoisePanel":
        off = int(self.counts[:n_steps].sum())
        return NoisePanel(self.delta, self.gauss[:n_steps], self.counts[:n_steps], self.marks[:off])

    def aggregated(self, factor: int, n_steps: int) -> "NoisePanel":
        """Coarsen by ``factor``: sum Gaussian increments, concatenate batches.

        The result has ``n_steps`` coarse steps and covers the first
        ``factor * n_steps`` fine steps.
        """
        m = factor * n_steps
        if m > self.n_steps:
            raise DomainError("not enough fine steps to aggregate")
        g = self.gauss[:m].reshape(n_steps, factor).sum(axis=1)
        cnt = self.counts[:m].reshape(n_steps, factor).sum(axis=1)
        return NoisePanel(self.delta * factor, g, cnt, self.marks[: int(cnt.sum())])


def make_panel(n_steps: int, delta: float, jumps: JumpMeasureSpec, master_seed: int,
               path_index: int = 0) -> NoisePanel:
    """Noise panel from disjoint sub-streams of one master seed."""
    gauss = gaussian_increments(n_steps, delta, derive(master_seed, path_index, "gauss"))
    counts = jump_counts(jumps, delta, n_steps, derive(master_seed, path_index, "jump_count"))
    marks = jumps.sample_marks(derive(master_seed, path_index, "jump_mark"), int(counts.sum()))
    return NoisePanel(delta, gauss, counts, marks)
