"""Acceptance gate: one test per shipped claim, at the stated tolerance.

Each test prints one pass/fail line under pytest -v.  Tolerances, replicate
counts, seeds and runtime budgets are fixed here on purpose; loosening any
of them is a contract change, not a test fix.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from cdi.cli import main as cli_main
from cdi.large_deviations import (
    LdContext,
    convexity_margin,
    expansions,
    power_integral,
    power_integral_closed_form,
    rate_I,
    rate_J,
    tau,
    verify_thm3,
)
from cdi.limit_laws import (
    f_alpha_cdf,
    f_alpha_mc_cdf,
    falpha_spec,
    verify_clt,
    verify_corollary,
    verify_lln,
    verify_thm1_limit,
    verify_thm2iii,
)
from cdi.rate_models import preset
from cdi.simulation import SimConfig, naive_estimate, sample_Zs, tilted_estimate

pytestmark = pytest.mark.acceptance
from cdi.tail_analysis import tail_moments


def test_criterion_01_tail_sum_identities():
    t0 = time.perf_counter()
    cases = {
        "kingman": (oracles.kingman_lam, oracles.kingman_A, 4_000_000),
        "geometric": (oracles.geometric_lam, oracles.geometric_A, 800),
    }
    for name, (lam_fn, a_fn, terms) in cases.items():
        model = preset(name)
        for n in (2, 10, 100):
            st = tail_moments(model, n)
            lhs = st.A**2 - st.B**2
            rhs = oracles.cross_term_rhs(lam_fn, a_fn, n, terms)
            assert abs(lhs - rhs) <= 1e-9 * abs(rhs), (name, n)
            # one-step recursion: lambda_{n+1} (A_n - A_{n+1}) = 1
            a_next = tail_moments(model, n + 1).A
            lam_next = float(lam_fn(np.array([n + 1.0]))[0])
            assert abs(lam_next * (st.A - a_next) - 1.0) <= 1e-9, (name, n)
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.parametrize("beta", [1.3, 2.0, 3.0])
def test_criterion_02_quadrature_identity(beta):
    assert abs(power_integral(beta) - power_integral_closed_form(beta)) < 1e-10


def test_criterion_03_inverse_tilt_closed_form():
    ctx = LdContext(beta=2.0)
    for x in (0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0):
        want = 0.0 if x == 1.0 else oracles.beta2_tau(x)
        assert abs(tau(ctx, x) - want) <= 1e-8, x
    recomputed = oracles.beta2_rate_i(2.0)
    assert abs(recomputed - oracles.I_BETA2_AT_2) < 1e-12
    assert abs(rate_I(ctx, 2.0) - recomputed) <= 1e-6


@pytest.mark.parametrize("beta", [1.3, 2.0, 3.0])
def test_criterion_04_rate_function_shape(beta):
    ctx = LdContext(beta=beta)
    assert abs(rate_I(ctx, 1.0)) < 1e-10
    assert abs(rate_J(ctx, 1.0)) < 1e-10
    for x in np.geomspace(0.02, 50.0, 50):
        x = float(x)
        i_val, j_val = rate_I(ctx, x), rate_J(ctx, x)
        assert i_val >= 0.0 and j_val >= 0.0
        if abs(x - 1.0) > 1e-9:
            assert i_val > 0.0 and j_val > 0.0
    rep = convexity_margin(beta)  # 50-point log grid on [0.02, 50]
    assert rep.n_points == 50
    assert rep.min_dd_i > 0.0
    assert rep.min_dd_j > 0.0
    # near zero the population rate flattens onto its endpoint expansion
    x = 1e-3
    assert abs(rate_J(ctx, x) - expansions(ctx, x).j_small) < 5e-3


def test_criterion_05_gaussian_limit():
    t0 = time.perf_counter()
    model = preset("kingman")
    ks_500 = verify_clt(model, 500, SimConfig(seed=1001, replicates=10_000),
                        threshold=0.03)
    ks_20 = verify_clt(model, 20, SimConfig(seed=1001, replicates=10_000),
                       threshold=0.03)
    assert ks_500.passed
    assert ks_500.ks_statistic < 0.03
    assert ks_500.ks_statistic < ks_20.ks_statistic
    assert time.perf_counter() - t0 < 60.0


def test_criterion_06_fluctuation_variance():
    t0 = time.perf_counter()
    cfg = SimConfig(seed=2024, replicates=10_000)
    kingman = preset("kingman")
    t_k = tail_moments(kingman, 500).A
    rep_k = verify_corollary(kingman, [t_k], cfg)
    assert 0.30 <= rep_k.sample_variance <= 0.37
    poly = preset("polytail", c=1.0, beta=3.0)
    t_p = tail_moments(poly, 500).A
    rep_p = verify_corollary(poly, [t_p], cfg)
    assert 0.18 <= rep_p.sample_variance <= 0.22
    assert time.perf_counter() - t0 < 300.0


def test_criterion_07_fast_decay_limit_family():
    model = preset("geometric")
    cfg = SimConfig(seed=3003, replicates=10_000)
    rep1 = verify_thm1_limit(model, 30, cfg, threshold=0.03)
    assert rep1.passed and rep1.ks_statistic < 0.03
    rep2 = verify_thm2iii(model, 30, cfg, k_values=(-2, -1, 0, 1, 2),
                          threshold=0.03)
    assert rep2.passed and rep2.ks_statistic < 0.03
    # the two evaluators of the limit distribution agree within 3 se
    spec = falpha_spec(model.alpha)
    for k in (-2, -1, 0, 1, 2):
        x = spec.alpha ** (-float(k))
        exact = f_alpha_cdf(spec, x)
        mc, se = f_alpha_mc_cdf(spec, x, n_samples=200_000, seed=404)
        assert abs(mc - exact) <= 3.0 * se, k


def test_criterion_08_speed_concentration():
    t0 = time.perf_counter()
    model = preset("kingman")
    spreads = []
    for v, seed in ((100, 81), (1000, 82)):
        t = tail_moments(model, v).A
        cfg = SimConfig(seed=seed, replicates=4000)
        rep = verify_lln(model, t, cfg, threshold=0.02)
        assert rep.passed, v
        z = sample_Zs(model, t, cfg)
        spreads.append(float(np.std(z / v, ddof=1)))
    assert spreads[1] < spreads[0]
    assert time.perf_counter() - t0 < 60.0


def test_criterion_09_tilted_rare_event_rates():
    t0 = time.perf_counter()
    model = preset("kingman")
    ctx = LdContext(beta=2.0)
    target = rate_I(ctx, 2.0)

    cfg = SimConfig(seed=777, replicates=100_000, trunc_tol=2.0)
    rep = verify_thm3(ctx, model, 2.0, [25, 50, 100], cfg, side="hitting")
    gaps = [row["gap_rel"] for row in rep.rows]
    assert gaps[-1] <= 0.15
    assert gaps[0] >= gaps[1] >= gaps[2]

    # tilted vs naive at a non-rare threshold: overlapping 95% intervals
    n_mid, x_mild = 25, 1.2
    a_n = tail_moments(model, n_mid).A
    theta = tau(ctx, x_mild) * n_mid / a_n
    big = SimConfig(seed=778, replicates=1_000_000, trunc_tol=2.0)
    est_t = tilted_estimate(model, n_mid, x_mild, theta, big)
    est_n = naive_estimate(model, n_mid, x_mild,
                           SimConfig(seed=779, replicates=1_000_000,
                                     trunc_tol=2.0))
    assert abs(est_t.point - est_n.point) <= 1.96 * (est_t.std_error
                                                     + est_n.std_error)

    # at the rare threshold the naive error is the binomial one at the
    # tilted point estimate; zero naive hits carry no usable error bar
    row50 = rep.rows[1]
    p_hat = row50["estimate"]
    rse_tilted = row50["std_error"] / p_hat
    rse_naive = math.sqrt((1.0 - p_hat) / (p_hat * row50["replicates"]))
    assert rse_naive >= 10.0 * rse_tilted
    assert time.perf_counter() - t0 < 600.0


def test_criterion_10_manifest_replay(tmp_path, capsys):
    for name, argv in {
        "table.csv": ["ld", "table", "--beta", "2.0", "--x", "0.5,1,2"],
        "verify.json": ["verify", "lln", "--preset", "kingman", "--v", "50",
                        "--reps", "300", "--seed", "5"],
    }.items():
        out = tmp_path / name
        assert cli_main(argv + ["--out", str(out)]) == 0
        manifest = str(out) + ".manifest.json"
        assert json.loads(open(manifest).read())["outputs"][0]["path"] == str(out)
        assert cli_main(["replay", manifest]) == 0
        assert (tmp_path / (name + ".replay")).read_bytes() == out.read_bytes()
    capsys.readouterr()
