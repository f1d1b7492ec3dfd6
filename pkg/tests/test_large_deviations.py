"""Rate-function machinery: the log transform, tilt solve, decay rates,
expansions and the convexity margin."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cdi.large_deviations import (
    ConvexityReport,
    LdContext,
    LdDomainError,
    RateEval,
    b_of_beta,
    c_of_beta,
    convexity_margin,
    endpoint_constant,
    expansions,
    lambda_deriv,
    lambda_fn,
    power_integral,
    power_integral_closed_form,
    rate_I,
    rate_J,
    rate_eval,
    tau,
    tau_full,
    verify_thm3,
)
from cdi.simulation import SimConfig


CTX13 = LdContext(beta=1.3)
CTX2 = LdContext(beta=2.0)
CTX3 = LdContext(beta=3.0)


# ---------------------------------------------------------------------------
# the transform and its derivatives


def test_transform_vanishes_at_zero():
    for ctx in (CTX13, CTX2, CTX3):
        assert lambda_fn(ctx, 0.0) == 0.0
        assert lambda_deriv(ctx, 0.0, order=1) == pytest.approx(1.0, rel=1e-12)


def test_transform_closed_value_beta2():
    # at index 2 and argument -1 the transform reduces to ln 2 - pi/2
    val = lambda_fn(CTX2, -1.0)
    assert val == pytest.approx(oracles.CLOSED_LAMBDA_BETA2_NEG1, rel=1e-11)
    assert val == pytest.approx(oracles.simpson_lambda_beta2_neg1(), rel=1e-9)


def test_derivative_closed_value_beta2():
    # lambda'(-1) at index 2 is the arctangent integral pi/4
    assert lambda_deriv(CTX2, -1.0, order=1) == pytest.approx(math.pi / 4.0,
                                                              rel=1e-12)


@pytest.mark.parametrize("ctx", [CTX13, CTX3])
@pytest.mark.parametrize("u", [-0.4, 0.2])
def test_derivative_matches_finite_difference(ctx, u):
    if u >= ctx.u_max:
        pytest.skip("argument outside the transform domain")
    step = 1e-6 * max(1.0, abs(u))
    fd1 = (lambda_fn(ctx, u + step) - lambda_fn(ctx, u - step)) / (2.0 * step)
    assert lambda_deriv(ctx, u, order=1) == pytest.approx(fd1, rel=1e-6)
    fd2 = (lambda_deriv(ctx, u + step) - lambda_deriv(ctx, u - step)) / (2.0 * step)
    assert lambda_deriv(ctx, u, order=2) == pytest.approx(fd2, rel=1e-5)


def test_second_derivative_positive():
    for ctx in (CTX13, CTX2, CTX3):
        for u in (-5.0, -1.0, 0.0, 0.5 * ctx.u_max):
            assert lambda_deriv(ctx, u, order=2) > 0.0


def test_deep_tilt_branch_is_smooth():
    # the analytic large-argument factorization must join the direct
    # quadrature without a seam; straddle the dispatch point
    for ctx in (CTX13, CTX2, CTX3):
        b1 = ctx.beta - 1.0
        u_a, u_b = -9.9 / b1, -10.3 / b1
        mid = 0.5 * (u_a + u_b)
        secant = (lambda_fn(ctx, u_a) - lambda_fn(ctx, u_b)) / (u_a - u_b)
        assert secant == pytest.approx(lambda_deriv(ctx, mid, order=1), rel=1e-4)
        ratio = lambda_deriv(ctx, u_a, 1) / lambda_deriv(ctx, u_b, 1)
        assert 1.0 < ratio < 1.1


def test_extreme_tilt_values_finite():
    for ctx in (CTX13, CTX2, CTX3):
        u = -1e9 / (ctx.beta - 1.0)
        val = lambda_fn(ctx, u)
        d1 = lambda_deriv(ctx, u, order=1)
        assert math.isfinite(val) and val < 0.0
        assert 0.0 < d1 < 1.0


def test_transform_domain_errors():
    with pytest.raises(LdDomainError):
        LdContext(beta=1.0)
    with pytest.raises(LdDomainError):
        LdContext(beta=0.5)
    with pytest.raises(LdDomainError):
        lambda_fn(CTX2, CTX2.u_max * 1.001)
    with pytest.raises(LdDomainError):
        lambda_deriv(CTX2, CTX2.u_max, order=1)
    with pytest.raises(LdDomainError):
        lambda_deriv(CTX2, 0.0, order=4)


# ---------------------------------------------------------------------------
# quadrature identity and the index constants


@pytest.mark.parametrize("beta", [1.3, 2.0, 3.0])
def test_power_integral_identity(beta):
    assert abs(power_integral(beta) - power_integral_closed_form(beta)) < 1e-12


def test_index_constants_frozen():
    for beta, want in oracles.C_BETA.items():
        assert c_of_beta(beta) == pytest.approx(want, rel=1e-12)
    for beta, want in oracles.B_BETA.items():
        assert b_of_beta(beta) == pytest.approx(want, rel=1e-12)
        assert b_of_beta(beta) == pytest.approx(c_of_beta(beta) / (beta - 1.0),
                                                rel=1e-14)
    assert b_of_beta(2.0) == c_of_beta(2.0)
    for beta, want in oracles.ENDPOINT_CONST.items():
        assert endpoint_constant(beta) == pytest.approx(want, rel=1e-12)
    assert endpoint_constant(2.0) == pytest.approx(math.log(2.0), rel=1e-13)


# ---------------------------------------------------------------------------
# tilt solve


def test_tau_fixed_point_at_one():
    for ctx in (CTX13, CTX2, CTX3):
        r = tau_full(ctx, 1.0)
        assert r.tau == 0.0 and r.ln_gap == 0.0


def test_tau_frozen_values_beta2():
    for x, want in oracles.TAU_BETA2.items():
        if want == 0.0:
            assert tau(CTX2, x) == 0.0
        else:
            assert tau(CTX2, x) == pytest.approx(want, rel=1e-10)


def test_tau_matches_independent_bisection():
    for x in (0.3, 0.7, 1.6, 3.5):
        assert tau(CTX2, x) == pytest.approx(oracles.beta2_tau(x), rel=1e-9)


def test_tau_monotone_saturating():
    # tau itself saturates onto the endpoint in double precision; the
    # endpoint gap keeps strict monotonicity arbitrarily far out
    xs = np.geomspace(0.05, 40.0, 25)
    for ctx in (CTX13, CTX3):
        rs = [tau_full(ctx, float(x)) for x in xs]
        ts = [r.tau for r in rs]
        gaps = [r.ln_gap for r in rs]
        assert all(b >= a for a, b in zip(ts, ts[1:]))
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert all(t <= ctx.u_max for t in ts)
        assert ts[-1] > 0.9 * ctx.u_max
        for x, t in zip(xs, ts):
            assert (t > 0.0) == (x > 1.0) or x == 1.0


def test_tau_defining_equation_roundtrip():
    for ctx in (CTX13, CTX2, CTX3):
        for x in (0.3, 0.9, 1.5, 4.0):
            assert lambda_deriv(ctx, tau(ctx, x), order=1) == pytest.approx(
                x, rel=1e-9)


def test_tau_endpoint_representation():
    # far in the upper tail tau collides with the domain endpoint in double
    # precision; the solve must still carry the endpoint gap exactly
    r = tau_full(CTX2, 1e6)
    assert r.tau <= CTX2.u_max
    assert math.isfinite(r.ln_gap) and r.ln_gap < -10.0
    assert rate_I(CTX2, 1e6) == pytest.approx(1e6, rel=1e-4)


def test_tau_domain_errors():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(LdDomainError):
            tau_full(CTX2, bad)


# ---------------------------------------------------------------------------
# rate functions


def test_rate_values_beta2():
    assert rate_I(CTX2, 2.0) == pytest.approx(oracles.I_BETA2_AT_2, rel=1e-10)
    for x in (0.25, 0.5, 2.0, 5.0):
        assert rate_I(CTX2, x) == pytest.approx(oracles.beta2_rate_i(x), rel=1e-9)


def test_rates_vanish_only_at_one():
    for ctx in (CTX13, CTX2, CTX3):
        assert abs(rate_I(ctx, 1.0)) < 1e-14
        assert abs(rate_J(ctx, 1.0)) < 1e-14
        for x in (0.1, 0.5, 0.9, 1.1, 2.0, 10.0):
            assert rate_I(ctx, x) > 0.0
            assert rate_J(ctx, x) > 0.0


def test_by_parts_identity():
    # the transform at the tilt equals ln h + beta x tau; ties the direct
    # log-integral path to the solve-and-gap path
    for ctx in (CTX13, CTX2, CTX3):
        for x in (0.5, 2.0):
            r = tau_full(ctx, x)
            want = r.ln_gap + ctx.beta * x * r.tau
            assert lambda_fn(ctx, r.tau) == pytest.approx(want, rel=1e-9)


def test_rate_is_legendre_transform():
    for ctx in (CTX13, CTX2, CTX3):
        for x in (0.5, 0.9, 1.5, 3.0):
            t = tau(ctx, x)
            assert rate_I(ctx, x) == pytest.approx(
                x * t - lambda_fn(ctx, t), rel=1e-9)


def test_rate_eval_bundle():
    ev = rate_eval(CTX2, 2.0)
    assert isinstance(ev, RateEval)
    assert ev.x == 2.0
    assert ev.tau == tau(CTX2, 2.0)
    assert ev.I == rate_I(CTX2, 2.0)
    assert ev.J == pytest.approx(2.0 * rate_I(CTX2, 2.0), rel=1e-12)
    with pytest.raises(LdDomainError):
        rate_J(CTX2, 0.0)


@settings(max_examples=20, deadline=None)
@given(beta=st.sampled_from([1.3, 2.0, 2.7]),
       x=st.floats(min_value=0.05, max_value=20.0))
def test_rate_properties(beta, x):
    ctx = LdContext(beta=beta)
    r = tau_full(ctx, x)
    assert (r.tau > 0.0) == (x > 1.0) or x == 1.0
    assert (r.ln_gap < 0.0) == (x > 1.0) or x == 1.0
    assert rate_I(ctx, x) >= 0.0
    assert rate_J(ctx, x) == pytest.approx(
        x * rate_I(ctx, x ** (beta - 1.0)), rel=1e-12)
    if r.ln_gap > -15.0:
        # roundtrip through the double tau; closer to the endpoint the
        # reconstructed gap 1-(beta-1)tau loses the digits the solve kept
        assert lambda_deriv(ctx, r.tau, order=1) == pytest.approx(x, rel=1e-8)


# ---------------------------------------------------------------------------
# expansions


@pytest.mark.parametrize("ctx", [CTX13, CTX2, CTX3])
def test_small_x_expansions(ctx):
    x = 1e-3
    ev = expansions(ctx, x)
    assert rate_J(ctx, x) == pytest.approx(ev.j_small, abs=5e-3)
    assert rate_I(ctx, x) == pytest.approx(ev.i_small, rel=2e-3)


@pytest.mark.parametrize("ctx", [CTX13, CTX2, CTX3])
def test_large_x_expansions_improve(ctx):
    rel = lambda x: abs(rate_I(ctx, x) / expansions(ctx, x).i_large - 1.0)
    relj = lambda x: abs(rate_J(ctx, x) / expansions(ctx, x).j_large - 1.0)
    assert rel(50.0) < rel(5.0) < 1.0
    assert relj(50.0) < relj(5.0) < 1.0
    assert rel(50.0) < 0.2
    with pytest.raises(LdDomainError):
        expansions(ctx, 0.0)


# ---------------------------------------------------------------------------
# convexity margin and the sampling cross-check


def test_convexity_margin_positive():
    rep = convexity_margin(2.0, x_lo=0.5, x_hi=5.0, n_points=10)
    assert isinstance(rep, ConvexityReport)
    assert rep.min_dd_i > 0.0
    assert rep.min_dd_j > 0.0
    assert rep.n_points == 10
    assert rep.dps >= 40
    assert 0.5 <= rep.argmin_x_i <= 5.0


def test_decay_rate_cross_check_hitting(kingman):
    cfg = SimConfig(seed=404, replicates=20_000, trunc_tol=2.0)
    rep = verify_thm3(CTX2, kingman, 2.0, [10, 25], cfg, side="hitting")
    assert rep.target == rate_I(CTX2, 2.0)
    assert [r["n"] for r in rep.rows] == [10, 25]
    for row in rep.rows:
        assert row["estimate"] > 0.0
        assert math.isfinite(row["rate_estimate"])
    assert math.isfinite(rep.final_gap_rel)
    assert rep.final_gap_rel < 0.5
    d = rep.to_json_dict()
    assert d["side"] == "hitting" and len(d["rows"]) == 2


def test_decay_rate_cross_check_population(kingman):
    cfg = SimConfig(seed=405, replicates=20_000, trunc_tol=2.0)
    rep = verify_thm3(CTX2, kingman, 1.6, [10, 25], cfg, side="population")
    assert rep.target == rate_J(CTX2, 1.6)
    assert [r["level"] for r in rep.rows] == [16, 40]
    for row in rep.rows:
        assert row["x_effective"] == pytest.approx(1.6, rel=0.01)
    with pytest.raises(ValueError):
        verify_thm3(CTX2, kingman, 1.6, [10], cfg, side="bogus")
