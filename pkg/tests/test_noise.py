import math

import numpy as np
import pytest

from tclevy.errors import DomainError
from tclevy.noise import (JumpMeasureSpec, NoisePanel, compensator_weight, gaussian_increments, jump_batch,
                          jump_counts, make_panel, no_jumps, two_point_jumps, uniform_jumps)
from tclevy.streams import derive


def test_gaussian_empty_and_domain():
    assert gaussian_increments(0, 0.1, derive(1)).size == 0
    with pytest.raises(DomainError):
        gaussian_increments(3, 0.0, derive(1))


def test_gaussian_moments():
    n, d = 10**6, 0.01
    g = gaussian_increments(n, d, derive(2, 0, "gauss"))
    assert abs(g.mean()) < 3 * math.sqrt(d / n)
    assert abs(g.var() - d) < 3 * d * math.sqrt(2 / n)


def test_gaussian_deterministic():
    a = gaussian_increments(100, 0.1, derive(4, 2, "gauss"))
    b = gaussian_increments(100, 0.1, derive(4, 2, "gauss"))
    assert np.array_equal(a, b)


def test_zero_mass_gives_empty_batches():
    spec = uniform_jumps(3.0, 0.5, total_mass=0.0)
    rng = derive(1, 0, "jump_count")
    assert all(jump_batch(spec, 0.5, rng).size == 0 for _ in range(1000))


def test_poisson_count_mean():
    spec = uniform_jumps(1.0, 0.5)
    k = jump_counts(spec, 0.5, 10**6, derive(6, 0, "jump_count"))
    assert abs(k.mean() - 0.5) < 3 * math.sqrt(0.5 / 10**6)


def test_count_mean_scales_with_mass():
    spec = uniform_jumps(2.0, 0.5, total_mass=1.5)
    k = jump_counts(spec, 0.1, 10**6, derive(6, 1, "jump_count"))
    assert abs(k.mean() - 0.3) < 3 * math.sqrt(0.3 / 10**6)


def test_marks_inside_support():
    spec = uniform_jumps(1.0, 0.5)
    z = spec.sample_marks(derive(7, 0, "jump_mark"), 10**6)
    assert np.all(np.abs(z) < 0.5)
    tp = two_point_jumps(1.0, 0.5, 0.3)
    assert set(np.unique(tp.sample_marks(derive(7), 1000))) == {-0.3, 0.3}


def test_compensator_weight_examples():
    assert compensator_weight(uniform_jumps(0.0, 0.5), 0.3) == 0.0
    assert compensator_weight(uniform_jumps(2.0, 0.5), 0.25) == 0.5
    assert compensator_weight(uniform_jumps(1.5, 0.5), 0.1) == pytest.approx(0.15, rel=1e-15)


@pytest.mark.parametrize("g", [lambda z: z, lambda z: z**2, lambda z: np.cos(3 * z), lambda z: np.abs(z)])
def test_compensated_measure_is_centered(g):
    spec = uniform_jumps(1.3, 0.5)
    delta, n = 0.2, 10**5
    counts = jump_counts(spec, delta, n, derive(12, 0, "jump_count"))
    marks = spec.sample_marks(derive(12, 0, "jump_mark"), int(counts.sum()))
    owner = np.repeat(np.arange(n), counts)
    sums = np.bincount(owner, weights=g(marks), minlength=n)
    comp = compensator_weight(spec, delta) * spec.integrate(g)
    x = sums - comp
    assert abs(x.mean()) < 3 * x.std(ddof=1) / math.sqrt(n)


def test_moments_and_quadrature():
    spec = uniform_jumps(1.0, 0.5, total_mass=2.0)
    assert spec.moment(2) == pytest.approx(2.0 * 0.25 / 3.0)
    assert spec.integrate(lambda z: z**2) == pytest.approx(spec.moment(2), rel=1e-7)
    assert spec.integrate(lambda z: np.abs(z)) == pytest.approx(spec.moment(1), rel=1e-7)
    tp = two_point_jumps(1.0, 0.5, 0.3, total_mass=2.0)
    assert tp.integrate(lambda z: z**2) == pytest.approx(tp.moment(2))


def test_spec_validation():
    with pytest.raises(DomainError):
        JumpMeasureSpec(-1.0, 0.5)
    with pytest.raises(DomainError):
        JumpMeasureSpec(1.0, 0.0)
    with pytest.raises(DomainError):
        JumpMeasureSpec(1.0, 0.5, family="cauchy")
    with pytest.raises(DomainError):
        two_point_jumps(1.0, 0.5, 0.5)
    assert not no_jumps().active


def test_panel_shapes_and_reproducibility():
    spec = uniform_jumps(2.0, 0.5)
    a = make_panel(500, 0.05, spec, 3, 1)
    b = make_panel(500, 0.05, spec, 3, 1)
    assert a.n_steps == 500 == len(a.jump_batches)
    assert np.array_equal(a.gauss, b.gauss) and np.array_equal(a.marks, b.marks)
    assert np.array_equal(np.concatenate(a.jump_batches), a.marks)
    # disjoint sub-streams: jump activity does not perturb the Gaussian stream
    c = make_panel(500, 0.05, no_jumps(), 3, 1)
    assert np.array_equal(a.gauss, c.gauss)


def test_panel_aggregation():
    spec = uniform_jumps(2.0, 0.5)
    fine = make_panel(64, 0.01, spec, 5)
    coarse = fine.aggregated(8, 7)
    assert coarse.n_steps == 7 and coarse.delta == pytest.approx(0.08)
    assert coarse.gauss.sum() == pytest.approx(fine.gauss[:56].sum(), rel=1e-12, abs=1e-15)
    assert np.array_equal(coarse.marks, fine.marks[: int(fine.counts[:56].sum())])
    with pytest.raises(DomainError):
        fine.aggregated(8, 9)


def test_panel_rejects_inconsistent_shapes():
    with pytest.raises(DomainError):
        NoisePanel(0.1, np.zeros(3), np.zeros(2, dtype=np.int64), np.zeros(0))
    with pytest.raises(DomainError):
        NoisePanel(0.1, np.zeros(2), np.array([1, 0]), np.zeros(0))
