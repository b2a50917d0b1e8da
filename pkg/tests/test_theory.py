from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blendmpc import tabular
from blendmpc.theory import (
    BoundInputs,
    bound_tradeoff_curve,
    h_step_bound,
    h_step_terms,
    horizon_agreement,
    one_step_bound,
    one_step_residual,
    optimal_horizon,
    simulation_gap_bound,
)

# Exact rational evaluation of the H-step bound at gamma=0.9, H=2, alpha=0.1,
# eps=0.5, c in [0, 1], V in [0, 10] (done once with sympy, see test below).
GOLDEN_H2 = Fraction(299, 19)

alphas = st.floats(0.0, 2.0)
epsilons = st.floats(0.0, 5.0)
gammas = st.floats(0.05, 0.995)
horizons = st.integers(1, 200)


def test_golden_value():
    b = BoundInputs(alpha=0.1, epsilon=0.5, gamma=0.9, H=2, c_min=0, c_max=1, V_min=0, V_max=10)
    assert h_step_bound(b) == pytest.approx(float(GOLDEN_H2), rel=1e-14)


def test_golden_value_matches_symbolic_evaluation():
    sp = pytest.importorskip("sympy")
    g, a, e, H = sp.Rational(9, 10), sp.Rational(1, 10), sp.Rational(1, 2), 2
    dc, dv = 1, 10
    exact = 2 * (g * (1 - g ** (H - 1)) / ((1 - g**H) * (1 - g)) * a * H * sp.Rational(dc, 2)
                 + g**H * a * H / (1 - g**H) * sp.Rational(dv, 2) + a / (1 - g) + g**H * e / (1 - g**H))
    assert exact == sp.Rational(GOLDEN_H2.numerator, GOLDEN_H2.denominator)


@given(epsilons, gammas, horizons)
def test_alpha_zero_reduces_to_value_error_term(eps, gamma, h):
    b = BoundInputs(0.0, eps, gamma, h, 0, 1, 0, 10)
    gh = gamma**h
    assert h_step_bound(b) == pytest.approx(2.0 * gh * eps / (1.0 - gh), rel=1e-12, abs=1e-300)


def test_zero_errors_give_zero():
    assert h_step_bound(BoundInputs(0, 0, 0.9, 5, 0, 1, 0, 10)) == 0.0
    assert one_step_bound(0, 0, 0.9, 0, 10) == 0.0
    assert simulation_gap_bound(BoundInputs(0, 0.3, 0.9, 5, 0, 1, 0, 10)) == 0.0


@given(alphas, alphas, epsilons, epsilons, gammas, horizons)
def test_monotone_in_alpha_and_epsilon(a1, a2, e1, e2, gamma, h):
    lo = BoundInputs(min(a1, a2), min(e1, e2), gamma, h, 0, 1, 0, 10)
    hi = BoundInputs(max(a1, a2), max(e1, e2), gamma, h, 0, 1, 0, 10)
    assert 0.0 <= h_step_bound(lo) <= h_step_bound(hi)


@given(alphas, epsilons, gammas, horizons)
def test_bound_zero_only_without_errors(a, e, gamma, h):
    v = h_step_bound(BoundInputs(a, e, gamma, h, 0, 1, 0, 10))
    if a > 0 or e > 0:
        assert v > 0 or gamma**h * e == 0.0
    else:
        assert v == 0.0


def test_terms_sum_to_total():
    t = h_step_terms(BoundInputs(0.1, 0.5, 0.9, 2, 0, 1, 0, 10))
    assert t.total == pytest.approx(2 * (t.cost_model + t.value_model + t.one_step_model + t.value_error))
    assert t.one_step_model == pytest.approx(1.0)


def test_input_validation():
    with pytest.raises(ValueError):
        BoundInputs(0.1, 0.1, 0.9, 0)
    with pytest.raises(ValueError):
        BoundInputs(0.1, 0.1, 1.0, 1)
    with pytest.raises(ValueError):
        BoundInputs(-0.1, 0.1, 0.9, 1)
    with pytest.raises(ValueError):
        BoundInputs(0.1, 0.1, 0.9, 1, c_min=2, c_max=1)


@given(epsilons, gammas)
def test_one_step_alpha_zero(eps, gamma):
    assert one_step_bound(0.0, eps, gamma, 0, 10) == pytest.approx(2 * gamma * eps / (1 - gamma))


@given(alphas, epsilons, gammas, st.floats(-10, 10), st.floats(0, 10))
def test_one_step_depends_only_on_value_range(a, e, gamma, vmin, width):
    assert one_step_bound(a, e, gamma, vmin, vmin + width) == pytest.approx(one_step_bound(a, e, gamma, 0.0, width))


@given(alphas, epsilons, gammas, st.floats(0, 10))
def test_one_step_residual_vanishes(a, e, gamma, width):
    scale = 1.0 + one_step_bound(a, e, gamma, 0.0, width)
    assert abs(one_step_residual(a, e, gamma, 0.0, width)) <= 1e-12 * scale


def test_one_step_residual_is_identically_zero_symbolically():
    sp = pytest.importorskip("sympy")
    g, a, e, d = sp.symbols("gamma alpha epsilon D", positive=True)
    h1 = 2 * (g * a / (1 - g**1) * d / 2 + a / (1 - g) + g * e / (1 - g))
    assert sp.simplify(h1 - 2 * (g * e + a + g * a * d / 2) / (1 - g)) == 0


def test_optimal_horizon_limits():
    assert optimal_horizon(0.0, 0.3, 0.99, 0, 10) == 0.0
    assert optimal_horizon(0.5, 0.0, 0.99, 0, 10) == pytest.approx(100.0, rel=1e-12)
    assert optimal_horizon(0.5, 0.0, 0.9, 0, 10) == pytest.approx(10.0, rel=1e-12)
    # eps equal to alpha * range / 4 halves the horizon
    assert optimal_horizon(2.5, 1.0, 0.9, 0, 10) == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(ValueError):
        optimal_horizon(0.0, 0.0, 0.9, 0, 10)


@given(epsilons, epsilons, st.floats(0.01, 2.0), gammas)
def test_optimal_horizon_monotone(e1, e2, a, gamma):
    lo, hi = sorted((e1, e2))
    assert optimal_horizon(lo, a, gamma, 0, 10) <= optimal_horizon(hi, a, gamma, 0, 10)


@given(st.floats(0.01, 5.0), alphas, alphas, gammas)
def test_optimal_horizon_decreasing_in_alpha(e, a1, a2, gamma):
    lo, hi = sorted((a1, a2))
    assert optimal_horizon(e, hi, gamma, 0, 10) <= optimal_horizon(e, lo, gamma, 0, 10)


def test_simulation_gap_at_h1():
    b = BoundInputs(0.2, 0.0, 0.9, 1, 0, 1, 0, 10)
    assert simulation_gap_bound(b) == pytest.approx(0.9 * 0.2 * 10 / 2 + 0.2)


def test_simulation_gap_dominates_tabular_gaps():
    rng = np.random.default_rng(2024)
    for _ in range(30):
        m = tabular.random_mdp(rng, 5, 3)
        alpha = rng.uniform(0.01, 0.4)
        mh = tabular.perturb(m, alpha, rng)
        gamma = float(rng.choice([0.5, 0.9, 0.99]))
        h = int(rng.integers(1, 25))
        policy = rng.dirichlet(np.ones(3), size=5)
        v_max = rng.uniform(0.5, 10)
        terminal = rng.uniform(0, v_max, size=5)
        gap = np.abs(tabular.h_step_cost(m, policy, gamma, h, terminal) - tabular.h_step_cost(mh, policy, gamma, h, terminal)).max()
        c_lo = min(m.costs.min(), mh.costs.min())
        c_hi = max(m.costs.max(), mh.costs.max())
        assert gap <= simulation_gap_bound(BoundInputs(alpha, 0.0, gamma, h, c_lo, c_hi, 0.0, v_max))


def test_tradeoff_curve_alpha_zero_strictly_decreasing():
    curve = bound_tradeoff_curve(BoundInputs(0.0, 0.5, 0.99, 1), range(1, 129))
    assert np.all(np.diff(curve.bounds) < 0)
    assert curve.argmin_H == 128
    assert curve.h_star == pytest.approx(100.0)


def test_tradeoff_curve_interior_minimum():
    curve = bound_tradeoff_curve(BoundInputs(0.1, 0.5, 0.9, 1, 0, 1, 0, 10), range(1, 7))
    assert curve.argmin_H == 4
    assert curve.rows[1].bound == pytest.approx(float(GOLDEN_H2))


def test_tradeoff_curve_needs_range():
    with pytest.raises(ValueError):
        bound_tradeoff_curve(BoundInputs(0.1, 0.5, 0.9, 1), [])


def test_horizon_agreement_reports_deviation():
    report = horizon_agreement(BoundInputs(0.1, 0.5, 0.9, 1, 0, 1, 0, 10), range(1, 50))
    assert report["argmin_H"] == 4
    assert report["h_star"] == pytest.approx(0.5 / (0.1 * (0.5 + 0.25)))
    assert report["deviation"] == 4 - 7
    assert horizon_agreement(BoundInputs(0, 0, 0.9, 1), range(1, 5))["h_star"] is None


def test_horizon_agreement_script_reports_counts():
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "scripts" / "horizon_agreement.py"
    out = subprocess.run([sys.executable, str(script), "--h-max", "200"], capture_output=True, text=True, check=True)
    rows = out.stdout.strip().splitlines()
    assert rows[0] == "alpha,epsilon,gamma,h_star,argmin_H,deviation"
    assert len(rows) > 1 and "within +-1:" in out.stderr
