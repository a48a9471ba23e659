import numpy as np
import pytest

from provmark.schedule import DiffusionSchedule, make_linear_schedule
from provmark.theory import (closed_form_bias_plain_claim, closed_form_bias_valid,
                             closed_form_bias_wrong, mc_second_moment,
                             second_moment_plain_claim, second_moment_valid,
                             second_moment_wrong, simulate_bias_plain_claim,
                             simulate_bias_valid, simulate_bias_wrong, theory_report)

SCHED = make_linear_schedule(50)


def test_single_step_valid_bias_hand_value():
    # t=1: delta = c_1(m) (v - e) with c_1 = sqrt(1-abar_1) - sqrt(a_1-abar_1)/m
    sched = DiffusionSchedule(num_steps=1, beta=np.array([0.36]))
    m, e, v = 1.25, 0.3, -0.7
    c1 = np.sqrt(0.36) - np.sqrt(0.64 - 0.64) / m  # abar_1 = a_1 = 0.64
    delta = closed_form_bias_valid(sched, 1, m, np.array([e]), np.array([v]))
    assert delta == pytest.approx(c1 * (v - e), rel=1e-12)
    sim = simulate_bias_valid(sched, 1, m, np.array([e]), np.array([v]), x_start=2.0)
    assert sim == pytest.approx(delta, rel=1e-12)


@pytest.mark.parametrize("t", [1, 2, 5, 50])
@pytest.mark.parametrize("m", [0.8, 1.0, 1.1])
def test_valid_closed_form_matches_simulation(t, m):
    rng = np.random.default_rng(17)
    eps_fwd = rng.standard_normal((40, t))
    eps_inv = rng.standard_normal((40, t))
    x0 = rng.standard_normal(40)
    cf = closed_form_bias_valid(SCHED, t, m, eps_fwd, eps_inv)
    sim = simulate_bias_valid(SCHED, t, m, eps_fwd, eps_inv, x_start=x0)
    assert np.allclose(sim, cf, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("t", [1, 2, 5, 50])
def test_wrong_closed_form_matches_simulation(t):
    rng = np.random.default_rng(23)
    m, n = 1.1, 0.85
    eps_fwd = rng.standard_normal((40, t))
    eps_inv = rng.standard_normal((40, t))
    xs, xr = rng.standard_normal(40), rng.standard_normal(40)
    cf = closed_form_bias_wrong(SCHED, t, m, n, xs, xr, eps_fwd, eps_inv)
    sim = simulate_bias_wrong(SCHED, t, m, n, xs, xr, eps_fwd, eps_inv)
    assert np.allclose(sim, cf, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("t", [1, 2, 5, 50])
def test_plain_claim_closed_form_matches_simulation(t):
    rng = np.random.default_rng(29)
    q = 1.2
    eps_fwd = rng.standard_normal((40, t))
    eps_inv = rng.standard_normal((40, t))
    xs, xr = rng.standard_normal(40), rng.standard_normal(40)
    cf = closed_form_bias_plain_claim(SCHED, t, q, xs, xr, eps_fwd, eps_inv)
    sim = simulate_bias_plain_claim(SCHED, t, q, xs, xr, eps_fwd, eps_inv)
    assert np.allclose(sim, cf, rtol=1e-10, atol=1e-12)


def test_valid_bias_independent_of_start():
    rng = np.random.default_rng(31)
    eps_fwd = rng.standard_normal((10, 20))
    eps_inv = rng.standard_normal((10, 20))
    a = simulate_bias_valid(SCHED, 20, 1.1, eps_fwd, eps_inv, x_start=0.0)
    b = simulate_bias_valid(SCHED, 20, 1.1, eps_fwd, eps_inv, x_start=50.0)
    assert np.allclose(a, b, atol=1e-8)


def test_equal_coefficient_gap_is_exactly_two():
    for t in (1, 5, 25, 50):
        for m in (0.8, 1.0, 1.3):
            gap = second_moment_wrong(SCHED, t, m, m) - second_moment_valid(SCHED, t, m)
            assert gap == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("t", [1, 5, 25, 50])
def test_mc_matches_formula_valid(t):
    rng = np.random.default_rng(100 + t)
    mc = mc_second_moment(SCHED, t, "valid", 4000, rng, m=1.1)
    assert mc == pytest.approx(second_moment_valid(SCHED, t, 1.1), rel=0.05)


@pytest.mark.parametrize("t", [1, 5, 25, 50])
def test_mc_matches_formula_wrong(t):
    rng = np.random.default_rng(200 + t)
    mc = mc_second_moment(SCHED, t, "wrong", 4000, rng, m=1.1, n=0.9)
    assert mc == pytest.approx(second_moment_wrong(SCHED, t, 1.1, 0.9), rel=0.05)


@pytest.mark.parametrize("t", [1, 5, 25, 50])
def test_mc_matches_formula_plain_claim(t):
    rng = np.random.default_rng(300 + t)
    mc = mc_second_moment(SCHED, t, "plain_claim", 4000, rng, q=0.9)
    assert mc == pytest.approx(second_moment_plain_claim(SCHED, t, 0.9), rel=0.05)


def test_orderings_over_grid():
    smc = second_moment_valid(SCHED, 50, 1.1)
    for n in np.linspace(0.75, 1.5, 11):
        assert second_moment_wrong(SCHED, 50, 1.1, float(n)) > smc
    assert second_moment_plain_claim(SCHED, 50, 0.9) > smc
    assert second_moment_plain_claim(SCHED, 50, 1.1) > smc


def test_valid_moment_monotone_in_t():
    curve = [second_moment_valid(SCHED, t, 1.1) for t in range(1, 51)]
    assert np.all(np.diff(curve) >= 0)


def test_shared_salt_same_second_moment():
    # a reused Box-Muller amplitude leaves the second moment unchanged
    rng = np.random.default_rng(55)
    shared = mc_second_moment(SCHED, 50, "wrong", 30_000, rng, m=1.1, n=1.1,
                              shared_salt=True)
    formula = second_moment_wrong(SCHED, 50, 1.1, 1.1)
    assert shared == pytest.approx(formula, rel=0.06)


def test_report_structure_and_flags():
    rep = theory_report(n_trials=500, seed=1)
    assert rep["valid_moment_monotone_in_t"] is True
    assert rep["plain_claim_exceeds_valid"] is True
    assert all(row["exceeds_valid"] for row in rep["wrong_key_grid"])
    for t, row in rep["per_t"].items():
        assert row["gap_at_equal_coef"] == pytest.approx(2.0, rel=1e-9)
        for key in ("valid", "wrong", "plain_claim"):
            cf, mc = row["closed_form"][key], row["monte_carlo"][key]
            assert mc == pytest.approx(cf, rel=0.25)
