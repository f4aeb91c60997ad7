import math

import numpy as np
import pytest
from scipy import integrate

import talab.mechanisms as mech
from talab.equilibrium import BidFunction, solve_ode
from talab.mechanisms import (
    AuctionSpec,
    DiscreteAtomSpec,
    Draw,
    MechanismError,
    draw_from_uniforms,
    run_once,
    sa_reserve_closed_form,
    simulate,
    simulate_draws,
)
from talab.rng import uniform_block


@pytest.fixture(scope="module")
def doubling_bid():
    grid = np.linspace(0.0, 1.0, 51)
    return BidFunction(grid, 2.0 * grid, np.full_like(grid, 2.0))


@pytest.fixture(scope="module")
def solved_ta(u01, u02):
    bid, _ = solve_ode(u01, u02, 2)
    return AuctionSpec("ta", 2, u01, u02, bid_fn=bid)


# ---------------------------------------------------------------------------
# run_once rules
# ---------------------------------------------------------------------------


def test_ta_single_draw(u01, u02, doubling_bid):
    spec = AuctionSpec("ta", 2, u01, u02, bid_fn=doubling_bid)
    out = run_once(spec, Draw(np.array([0.4, 0.3]), w=0.5, tie_u=0.9, intervention_u=0.0))
    assert out.winner == "weak" and out.winner_index == 0
    assert out.price == 0.5
    assert out.surplus == 0.4


def test_ta_strong_wins(u01, u02, doubling_bid):
    spec = AuctionSpec("ta", 2, u01, u02, bid_fn=doubling_bid)
    out = run_once(spec, Draw(np.array([0.4, 0.3]), w=1.2, tie_u=0.9, intervention_u=0.0))
    assert out.winner == "strong"
    assert out.price == pytest.approx(0.8)
    assert out.surplus == 1.2


def test_ta_discrete_tie_goes_to_strong(u01):
    spec = AuctionSpec("ta_discrete", 2, u01, DiscreteAtomSpec(k=2.0, p=0.75))
    out = run_once(spec, Draw(np.array([0.4, 0.3]), w=2.0, tie_u=0.1, intervention_u=0.0))
    assert out.winner == "strong"
    assert out.price == 2.0
    out = run_once(spec, Draw(np.array([0.4, 0.3]), w=0.0, tie_u=0.1, intervention_u=0.0))
    assert out.winner == "weak"
    assert out.price == 0.0


def test_sa_reserve_branches(u01, u02):
    spec = AuctionSpec("sa_reserve", 2, u01, u02, reserve=1.5)
    out = run_once(spec, Draw(np.array([0.7, 0.2]), w=1.9, tie_u=0.0, intervention_u=0.0))
    assert out.winner == "strong" and out.price == 1.5 and out.surplus == 1.9
    out = run_once(spec, Draw(np.array([0.7, 0.2]), w=1.1, tie_u=0.0, intervention_u=0.0))
    assert out.winner == "weak" and out.price == pytest.approx(0.2) and out.surplus == 0.7


def test_sa_price_is_second_highest(u01, u02):
    spec = AuctionSpec("sa", 2, u01, u02)
    out = run_once(spec, Draw(np.array([0.7, 0.2]), w=0.5, tie_u=0.0, intervention_u=0.0))
    assert out.winner == "weak" and out.price == 0.5 and out.surplus == 0.7


def test_intervention_zeroing(u01, u02, doubling_bid):
    spec = AuctionSpec("ta_intervention", 2, u01, u02, intervention_p=0.75,
                       bid_fn=doubling_bid)
    # intervention_u >= p: the strong bid is replaced by zero
    out = run_once(spec, Draw(np.array([0.4, 0.3]), w=1.9, tie_u=0.9, intervention_u=0.8))
    assert out.winner == "weak" and out.price == 0.0
    out = run_once(spec, Draw(np.array([0.4, 0.3]), w=1.9, tie_u=0.9, intervention_u=0.2))
    assert out.winner == "strong" and out.price == pytest.approx(0.8)


def test_first_stage_tie_uniform(u01, u02, doubling_bid):
    spec = AuctionSpec("ta", 2, u01, u02, bid_fn=doubling_bid)
    d = Draw(np.array([0.4, 0.4]), w=0.1, tie_u=0.6, intervention_u=0.0)
    assert run_once(spec, d).winner_index == 1
    d = Draw(np.array([0.4, 0.4]), w=0.1, tie_u=0.4, intervention_u=0.0)
    assert run_once(spec, d).winner_index == 0


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------


def test_spec_validation(u01, u02, doubling_bid):
    with pytest.raises(MechanismError, match="bid schedule"):
        AuctionSpec("ta", 2, u01, u02)
    with pytest.raises(MechanismError, match="r >= v_bar"):
        AuctionSpec("sa_reserve", 2, u01, u02, reserve=0.5)
    with pytest.raises(MechanismError, match="intervention_p"):
        AuctionSpec("ta_intervention", 2, u01, u02, bid_fn=doubling_bid)
    with pytest.raises(MechanismError, match="two-point"):
        AuctionSpec("ta_discrete", 2, u01, u02)
    with pytest.raises(MechanismError, match="exceed"):
        AuctionSpec("ta_discrete", 2, u01, DiscreteAtomSpec(k=0.8, p=0.9))
    with pytest.raises(MechanismError):
        AuctionSpec("sa", 1, u01, u02)


# ---------------------------------------------------------------------------
# simulate: determinism and parity
# ---------------------------------------------------------------------------


def test_simulate_deterministic_and_thread_invariant(solved_ta):
    a = simulate(solved_ta, 50_000, seed=7, threads=1)
    b = simulate(solved_ta, 50_000, seed=7, threads=8)
    c = simulate(solved_ta, 50_000, seed=7, threads=3)
    assert a == b == c
    assert a != simulate(solved_ta, 50_000, seed=8)


def test_block_matches_run_once(u01, u02, solved_ta, doubling_bid):
    specs = [
        solved_ta,
        AuctionSpec("sa", 2, u01, u02),
        AuctionSpec("sa_reserve", 2, u01, u02, reserve=1.5),
        AuctionSpec("ta_intervention", 2, u01, u02, intervention_p=0.75,
                    bid_fn=doubling_bid),
        AuctionSpec("ta_discrete", 2, u01, DiscreteAtomSpec(k=2.0, p=0.75)),
    ]
    for spec in specs:
        u = uniform_block(31, 0, 400, spec.stride)
        scalars = [run_once(spec, draw_from_uniforms(spec, row)) for row in u]
        rev, sur = mech._block_outcomes(spec, u)
        assert np.array_equal([o.price for o in scalars], rev), spec.kind
        assert np.array_equal([o.surplus for o in scalars], sur), spec.kind


def test_ta_revenue_identity_per_draw(solved_ta):
    # per draw, revenue = min(b(v_max), w)
    u = uniform_block(13, 0, 2000, solved_ta.stride)
    v = solved_ta.weak.quantile(u[:, :2])
    w = solved_ta.strong.quantile(u[:, 2])
    rev, _ = mech._block_outcomes(solved_ta, u)
    expect = np.minimum(solved_ta.bid_fn(v.max(axis=1)), w)
    assert np.array_equal(rev, expect)


def test_price_never_exceeds_winning_bid(solved_ta):
    # revenue <= surplus side condition: price <= winner's bid, surplus = winner value
    u = uniform_block(17, 0, 2000, solved_ta.stride)
    rev, sur = mech._block_outcomes(solved_ta, u)
    v = solved_ta.weak.quantile(u[:, :2])
    w = solved_ta.strong.quantile(u[:, 2])
    winning_bid = np.maximum(solved_ta.bid_fn(v.max(axis=1)), w)
    assert np.all(rev <= winning_bid + 1e-12)


def test_surplus_identity_and_expected_payoffs(solved_ta):
    # ex post, surplus is exactly the winner's value; a weak winner CAN pay above
    # value (overbidding), so only expected payoffs are nonnegative, per side
    n = 200_000
    u = uniform_block(19, 0, n, solved_ta.stride)
    v = solved_ta.weak.quantile(u[:, :2])
    w = solved_ta.strong.quantile(u[:, 2])
    rev, sur = mech._block_outcomes(solved_ta, u)
    weak_win = solved_ta.bid_fn(v.max(axis=1)) > w
    assert np.array_equal(sur, np.where(weak_win, v.max(axis=1), w))
    weak_pay = np.where(weak_win, sur - rev, 0.0)
    strong_pay = np.where(~weak_win, sur - rev, 0.0)
    assert np.any(sur - rev < 0)  # ex-post losses do occur for weak winners
    for pay in (weak_pay, strong_pay):
        se = pay.std(ddof=1) / math.sqrt(n)
        assert pay.mean() > -3 * se


# ---------------------------------------------------------------------------
# Monte Carlo vs oracles
# ---------------------------------------------------------------------------


def test_discrete_revenue_matches_atom_value(u01):
    spec = AuctionSpec("ta_discrete", 2, u01, DiscreteAtomSpec(k=2.0, p=0.75))
    out = simulate(spec, 1_000_000, seed=42)
    r = out["revenue"]
    assert abs(r.mean - 1.5) <= 3 * r.std_error
    s = out["surplus"]
    assert abs(s.mean - (1.5 + 0.25 * 0.5)) <= 3 * s.std_error


def test_sa_revenue_matches_quadrature(u01, u02):
    # E[second-highest of (v1, v2, w)] via the survival function of the median
    def surv(t):
        a = min(t, 1.0)
        c = t / 2.0
        both = a * a + 2 * a * c - 2 * a * a * c
        return 1.0 - both

    expect, _ = integrate.quad(surv, 0.0, 2.0, points=[1.0], epsabs=1e-12)
    assert expect == pytest.approx(7.0 / 12.0, abs=1e-10)
    out = simulate(AuctionSpec("sa", 2, u01, u02), 1_000_000, seed=3)
    r = out["revenue"]
    assert abs(r.mean - expect) <= 3 * r.std_error


def test_ta_revenue_matches_quadrature(solved_ta):
    # E[min(b(v_max), w)] with v_max density N F^(N-1) f
    bid = solved_ta.bid_fn
    g = solved_ta.strong

    def integrand(v):
        b = bid(v)
        inner = g.partial_mean(b) + b * (1.0 - g.cdf(b))
        return inner * 2.0 * v

    expect, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, limit=200)
    out = simulate(solved_ta, 1_000_000, seed=11)
    r = out["revenue"]
    assert abs(r.mean - expect) <= 3 * r.std_error
    # frozen closed-form for the exact uniform equilibrium b = 4v/3
    assert expect == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_revenue_below_surplus(solved_ta, u01, u02):
    for spec in (solved_ta, AuctionSpec("sa", 2, u01, u02)):
        out = simulate(spec, 100_000, seed=5)
        assert out["revenue"].mean <= out["surplus"].mean


# ---------------------------------------------------------------------------
# reserve closed forms
# ---------------------------------------------------------------------------


def test_reserve_closed_form_values(u01, u02):
    cf = sa_reserve_closed_form(u01, u02, 2, 1.5)
    assert cf["revenue"] == pytest.approx(0.625, abs=1e-12)
    assert cf["surplus"] == pytest.approx(0.9375, abs=1e-12)


def test_reserve_at_support_top(u01, u02):
    cf = sa_reserve_closed_form(u01, u02, 2, 2.0)
    assert cf["revenue"] == pytest.approx(1.0 / 3.0, abs=1e-10)


def test_reserve_precondition(u01, u02):
    with pytest.raises(MechanismError, match="r >= v_bar"):
        sa_reserve_closed_form(u01, u02, 2, 0.5)


def test_reserve_closed_form_vs_monte_carlo(u01, u02):
    for i, r in enumerate(np.linspace(1.0, 1.9, 5)):
        cf = sa_reserve_closed_form(u01, u02, 2, float(r))
        spec = AuctionSpec("sa_reserve", 2, u01, u02, reserve=float(r))
        out = simulate(spec, 400_000, seed=100 + i)
        for key in ("revenue", "surplus"):
            est = out[key]
            assert abs(est.mean - cf[key]) <= 3 * est.std_error, (r, key)


def test_revenue_estimate_fields(solved_ta):
    out = simulate(solved_ta, 1000, seed=9)
    est = out["revenue"]
    assert est.n == 1000 and est.seed == 9
    rev, _ = simulate_draws(solved_ta, 1000, seed=9)
    assert est.std_error == pytest.approx(rev.std(ddof=1) / math.sqrt(1000), rel=1e-12)
