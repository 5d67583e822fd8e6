import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tclevy.convergence as conv
from tclevy.convergence import (LevelLadder, coupled_drivers, coupled_simulation, fit_order, moment_bound,
                                sandwich_bias, strong_error, sup_error, uniform_second_moment,
                                validate_increment_scaling, validate_inverse_moments,
                                validate_solution_moment_bound)
from tclevy.errors import DomainError, ExperimentAborted, SolverError
from tclevy.models import builtin_cubic, builtin_linear
from tclevy.noise import no_jumps, uniform_jumps
from tclevy.special import mittag_leffler, moment_oracle

from conftest import reference_linear

LADDER = LevelLadder(2**-8, 5, reference_delta=2**-10)


# ---------------------------------------------------------------------------
# ladder and coupling

def test_ladder_layout():
    assert LADDER.deltas == (2**-4, 2**-5, 2**-6, 2**-7, 2**-8)
    assert LADDER.multipliers == (64, 32, 16, 8, 4)
    assert LevelLadder(2**-8, 5).reference_delta == 2**-8
    assert LevelLadder(2**-8, 5).fit_levels == (0, 1, 2, 3)


@pytest.mark.parametrize("args", [(2**-8, 2), (2**-8, 5, 3), (2**-8, 5, 2, 3 * 2**-10), (0.25, 4)])
def test_ladder_rejects_bad_layouts(args):
    with pytest.raises(DomainError):
        LevelLadder(*args)


def test_ladder_checks_delta_star():
    hot = builtin_cubic(12.0, 0.5, 0.2, uniform_jumps(1.0, 0.5), 1.0)
    with pytest.raises(DomainError):
        LADDER.check(hot, 1.0)


def test_coupling_is_exact_aggregation():
    jumps = uniform_jumps(2.0, 0.5)
    top = max(LADDER.multipliers)
    for seed in range(1000):
        ref, levels = coupled_drivers(0.8, 1.0, LADDER, jumps, seed, seed % 7)
        fine_v = ref.sub_path.values
        full = None
        for lv in levels:
            m, n = lv.multiplier, lv.sub_path.n_steps
            v = lv.sub_path.values
            # coarse subordinator values are fine values, bit for bit, wherever both exist
            shared = min(v.size, (fine_v.size - 1) // m + 1)
            assert np.array_equal(v[:shared], fine_v[: (shared - 1) * m + 1: m])
            assert v[-2] <= 1.0 < v[-1]
            if n * m > ref.noise.n_steps and full is None:
                full = conv.make_panel(ref.sub_path.n_steps + top, LADDER.reference_delta, jumps, seed, seed % 7)
            src = ref.noise if n * m <= ref.noise.n_steps else full
            g = src.gauss[: n * m].reshape(n, m).sum(axis=1)
            assert np.allclose(lv.noise.gauss, g, rtol=1e-12, atol=1e-15)
            assert int(lv.noise.counts.sum()) == int(src.counts[: n * m].sum()) == lv.noise.marks.size


def test_coupling_shares_one_driver():
    jumps = uniform_jumps(2.0, 0.5)
    ref, levels = coupled_drivers(0.8, 1.0, LADDER, jumps, 3, 0)
    top = max(LADDER.multipliers)
    full = conv.make_panel(ref.sub_path.n_steps + top, LADDER.reference_delta, jumps, 3, 0)
    for lv in levels:
        m, n = lv.multiplier, lv.sub_path.n_steps
        g = full.gauss[: n * m].reshape(n, m).sum(axis=1)
        assert np.allclose(lv.noise.gauss, g, rtol=1e-12, atol=1e-15)
        assert np.array_equal(lv.noise.counts, full.counts[: n * m].reshape(n, m).sum(axis=1))
        assert np.array_equal(lv.noise.marks, full.marks[: lv.noise.marks.size])


def test_levels_see_the_same_marks():
    jumps = uniform_jumps(3.0, 0.5)
    for seed in range(200):
        _, levels = coupled_drivers(0.8, 1.0, LevelLadder(2**-6, 3), jumps, seed, 0)
        longest = max((lv.noise.marks for lv in levels), key=len)
        for lv in levels:
            assert np.array_equal(lv.noise.marks, longest[: lv.noise.marks.size])


def test_coupled_simulation_levels(linear):
    ref, levels = coupled_simulation(linear, 0.8, 1.0, LADDER, 1.0, 5, 0)
    assert ref.scheme.n_steps == ref.sub_path.n_steps
    for lv in levels:
        assert lv.scheme.st_values[0] == linear.x0
        assert lv.scheme.delta == lv.delta


# ---------------------------------------------------------------------------
# error functional

def test_sup_error_union_and_coarse():
    fine = np.array([0.0, 1.0, 5.0, 6.0, 3.0, 3.0, 0.5])
    coarse = np.array([0.0, 2.5, 3.0, 0.0])
    # coarse plateau j // 2 is compared with fine index j; the worst gap sits between coarse points
    assert sup_error(coarse, fine, 2, "union") == 3.5
    assert sup_error(coarse, fine, 2, "coarse") == 2.5
    with pytest.raises(DomainError):
        sup_error(coarse, fine, 2, "grid")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.sampled_from([2, 4, 8]))
def test_union_sup_is_exact_sup_of_step_functions(seed, m):
    rng = np.random.default_rng(seed)
    nf = int(rng.integers(1, 60))
    fine = rng.normal(size=nf)
    coarse = rng.normal(size=(nf - 1) // m + 1)
    tf = np.sort(rng.uniform(0, 1, nf - 1))
    tf = np.concatenate(([0.0], tf))
    tc = tf[::m]
    ts = np.concatenate((tf, rng.uniform(0, 1, 500)))
    xf = fine[np.searchsorted(tf, ts, side="right") - 1]
    xc = coarse[np.searchsorted(tc, ts, side="right") - 1]
    assert sup_error(coarse, fine, m) == np.max(np.abs(xc - xf))
    assert sup_error(coarse, fine, m, "coarse") <= sup_error(coarse, fine, m)


# ---------------------------------------------------------------------------
# order fit

def test_fit_exact_lines():
    d = 2.0 ** -np.arange(4, 9)
    f = fit_order([(x, x**0.5, 0.01 * x**0.5) for x in d])
    assert abs(f.slope - 0.5) < 1e-12 and f.r2 == pytest.approx(1.0)
    f = fit_order([(x, 3 * x, 0.0) for x in d])
    assert f.slope == pytest.approx(1.0, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3.0), abs=1e-12)


def test_fit_jittered_line():
    rng = np.random.default_rng(0)
    d = 2.0 ** -np.arange(4, 9)
    e = 0.7 * d**0.4 * (1 + 0.01 * rng.standard_normal(d.size))
    f = fit_order([(x, y, 0.01 * y) for x, y in zip(d, e)])
    assert 0.38 <= f.slope <= 0.42
    assert f.ci_low < f.slope < f.ci_high


def test_fit_ci_matches_ordinary_regression_when_unweighted():
    rng = np.random.default_rng(1)
    x = np.log(2.0 ** -np.arange(3, 10))
    y = 0.3 * x + 0.05 * rng.standard_normal(x.size)
    f = fit_order([(math.exp(a), math.exp(b), 0.0) for a, b in zip(x, y)])
    from scipy import stats
    lr = stats.linregress(x, y)
    tq = stats.t.ppf(0.975, x.size - 2)
    assert f.slope == pytest.approx(lr.slope, rel=1e-12)
    assert f.ci_high - f.slope == pytest.approx(tq * lr.stderr, rel=1e-9)
    assert f.r2 == pytest.approx(lr.rvalue**2, rel=1e-12)


def test_fit_rejects_degenerate_input():
    with pytest.raises(DomainError):
        fit_order([(0.1, 0.0, 0.0), (0.05, 0.1, 0.0), (0.025, 0.1, 0.0)])
    with pytest.raises(DomainError):
        fit_order([(0.1, 1.0, 0.1), (0.05, 0.5, 0.1)])


# ---------------------------------------------------------------------------
# strong error

def test_frozen_model_is_degenerate(frozen):
    rep = strong_error(frozen, 0.8, 1.0, LADDER, 1.0, 50, 1)
    assert rep.degenerate
    assert all(lv.mc_error == 0.0 for lv in rep.levels)
    assert math.isnan(rep.fitted_order)


def test_report_fields(linear):
    rep = strong_error(linear, 0.8, 1.0, LADDER, 1.0, 200, 1)
    assert [lv.delta for lv in rep.levels] == list(LADDER.deltas)
    assert all(lv.n_paths == 200 for lv in rep.levels)
    assert rep.predicted_order == pytest.approx(0.4) and rep.binding_exponent == "alpha/2"
    rows = list(rep.csv_rows())
    assert rows[0] == ("delta", "error", "std_error", "n_paths")
    s = rep.summary()
    for key in ("fitted_order", "ci_low", "ci_high", "r2", "predicted_order", "binding_exponent"):
        assert key in s


def test_worker_count_does_not_change_results(linear):
    a = strong_error(linear, 0.8, 1.0, LADDER, 1.0, 150, 9, workers=1)
    b = strong_error(linear, 0.8, 1.0, LADDER, 1.0, 150, 9, workers=3)
    assert a.levels == b.levels and a.fitted_order == b.fitted_order


def test_warns_outside_covered_range(linear):
    with pytest.warns(UserWarning, match="alpha"):
        rep = strong_error(linear, 0.45, 1.0, LevelLadder(2**-6, 3), 1.0, 20, 1)
    assert rep.notes
    with pytest.warns(UserWarning, match="theta"):
        strong_error(linear, 0.8, 1.0, LevelLadder(2**-6, 3), 0.2, 20, 1)


def _flaky(bad):
    real = conv.coupled_simulation

    def run(model, alpha, horizon, ladder, theta, seed, i, backend="auto", solver_tol=1e-12):
        if i in bad:
            raise SolverError("forced", 0)
        return real(model, alpha, horizon, ladder, theta, seed, i, backend, solver_tol)
    return run


def test_failed_paths_excluded_and_counted(monkeypatch, linear):
    monkeypatch.setattr(conv, "coupled_simulation", _flaky({5}))
    rep = strong_error(linear, 0.8, 1.0, LevelLadder(2**-6, 3), 1.0, 1000, 1)
    assert rep.n_failed == 1
    assert all(lv.n_paths == 999 for lv in rep.levels)


def test_too_many_failures_abort(monkeypatch, linear):
    monkeypatch.setattr(conv, "coupled_simulation", _flaky({1, 2}))
    with pytest.raises(ExperimentAborted):
        strong_error(linear, 0.8, 1.0, LevelLadder(2**-6, 3), 1.0, 1000, 1)


# ---------------------------------------------------------------------------
# validators

def test_sandwich_bias_forms():
    assert sandwich_bias(0.5, 0.0, 1.0, 0.01) == 0.0
    assert sandwich_bias(0.5, 1.0, 1.0, 0.01) == 0.01
    assert sandwich_bias(0.5, 2.0, 1.0, 0.01) == pytest.approx(0.02 * moment_oracle(0.5, 1.0, 1.0))
    assert sandwich_bias(0.5, 0.5, 1.0, 0.01) == pytest.approx(0.1)


def test_zeroth_moment_exact():
    (c,) = validate_inverse_moments(0.7, 1.0, [0.0], 100, 0.01, 1)
    assert c.estimate == 1.0 and c.reference == 1.0 and c.std_error == 0.0 and c.passed


def test_inverse_moment_examples():
    c1 = validate_inverse_moments(0.5, 1.0, [1.0], 10**4, 0.01, 2)[0]
    assert c1.reference == pytest.approx(1.1284, abs=1e-4) and c1.passed
    c2 = validate_inverse_moments(0.8, 2.0, [2.0], 10**4, 0.01, 3)[0]
    assert c2.reference == pytest.approx(math.gamma(3) / math.gamma(2.6) * 2**1.6)
    assert c2.passed


def test_inverse_moment_wrong_oracle_fails():
    c = validate_inverse_moments(0.5, 1.0, [1.0], 10**4, 0.01, 2, oracle_scale=1.1)[0]
    assert not c.passed and abs(c.z_score) > 3


def test_moment_bound_formula(linear):
    k = linear.constants
    want = 2.0 ** (k.h - 1) * mittag_leffler(0.8, (2 * k.h * k.K1 + 1.0 * k.K0)) * (1 + abs(linear.x0) ** 2)
    assert moment_bound(linear, 0.8, 1.0) == pytest.approx(want, rel=1e-15)


def test_frozen_moment_bound_trivial(frozen):
    c = validate_solution_moment_bound(frozen, 0.8, 1.0, 100, 0.01, 1)
    assert c.estimate == 1.0 and c.reference >= 2.0 and c.passed


def test_linear_moment_bound_holds():
    for lam in (0.0, 1.0):
        c = validate_solution_moment_bound(reference_linear(lam=lam), 0.8, 1.0, 2000, 2**-7, 4)
        assert c.passed


def test_moment_bound_series_domain_error():
    hot = builtin_cubic(30.0, 0.5, 0.2, uniform_jumps(1.0, 0.5), 1.0)
    with pytest.raises(DomainError, match="t\\*\\*alpha"):
        moment_bound(hot, 0.8, 1.0)


def test_increment_scaling_small_run(linear):
    c = validate_increment_scaling(linear, 0.8, 2.0 ** -np.arange(2, 7), 2000, 2**-9, 5)
    assert c.passed, c


def test_uniform_second_moment_bounded_across_steps():
    grow = builtin_linear(0.5, 0.5, 0.2, uniform_jumps(1.0, 0.5), 1.0)
    vals = [uniform_second_moment(grow, 0.8, 1.0, 2.0**-k, 1000, 3) for k in range(4, 9)]
    assert max(vals) / min(vals) < 2.0
    assert all(v > 1.0 for v in vals)


# ---------------------------------------------------------------------------
# statistical invariants of the order experiment (5000 paths)

@pytest.mark.slow
def test_order_reproducible_across_seeds(linear):
    orders = [strong_error(linear, 0.8, 1.0, LADDER, 1.0, 5000, seed).fitted_order for seed in range(11, 16)]
    assert max(orders) - min(orders) < 0.1


@pytest.mark.slow
def test_reference_proxy_bias_subdominant(linear):
    base = strong_error(linear, 0.8, 1.0, LADDER, 1.0, 5000, 21)
    finer = strong_error(linear, 0.8, 1.0, LevelLadder(2**-8, 5, reference_delta=2**-11), 1.0, 5000, 21)
    assert abs(finer.fitted_order - base.fitted_order) < 0.5 * (base.ci_high - base.ci_low)


@pytest.mark.slow
def test_error_decreases_with_step(linear):
    hits = 0
    for seed in range(30, 40):
        e = [lv.mc_error for lv in strong_error(linear, 0.8, 1.0, LADDER, 1.0, 5000, seed).levels]
        hits += all(a > b for a, b in zip(e, e[1:]))
    assert hits >= 10 * 0.95
