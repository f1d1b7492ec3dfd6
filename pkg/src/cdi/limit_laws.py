"""Limit-law evaluation and goodness-of-fit verification.

Covers three regimes of the normalized hitting time and population size:
the geometric-rate limit F_alpha (a weighted sum of unit exponentials with
geometric weights), the Gaussian regime for models whose second tail norm
dominates the third, and the population-size normal limit with variance
1/(2 beta - 1) for regularly varying rates.

F_alpha is represented as the law of sum_i alpha^i (1-alpha) E_i with E_i
independent unit exponentials; this reproduces the product Laplace
transform factor by factor and admits both an exact hypoexponential CDF
(partial fractions over distinct rates) and a direct sampling estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, stats

from .rate_models import RateModel
from .simulation import SimConfig, sample_hitting_times, sample_Zs
from .tail_analysis import speed, tail_moments

__all__ = [
    "FAlphaSpec",
    "GofReport",
    "CorollaryReport",
    "IllConditionedError",
    "falpha_spec",
    "f_alpha_cdf",
    "f_alpha_mc_cdf",
    "f_alpha_sample",
    "f_alpha_mean_var",
    "laplace_product",
    "threshold_shift",
    "verify_lln",
    "verify_thm1_limit",
    "verify_thm2iii",
    "verify_clt",
    "verify_corollary",
]

_MC_DEFAULT = 200_000


class IllConditionedError(ValueError):
    """Hypoexponential evaluation refused outside its conditioning domain."""


@dataclass(frozen=True)
class FAlphaSpec:
    alpha: float
    n_terms: int
    method: str = "hypoexponential"

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0,1), got {self.alpha}")
        if self.n_terms < 1:
            raise ValueError(f"n_terms must be >= 1, got {self.n_terms}")
        if self.method not in ("hypoexponential", "monte_carlo"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def weights(self) -> np.ndarray:
        i = np.arange(self.n_terms)
        return self.alpha**i * (1.0 - self.alpha)


def falpha_spec(alpha: float, n_terms: int | None = None,
                method: str = "hypoexponential") -> FAlphaSpec:
    """Spec with the default truncation: smallest k with alpha^k < 1e-10,
    capped at 60 (geometric bound on the missing mass)."""
    if n_terms is None:
        if alpha <= 0.0:
            n_terms = 1
        else:
            n_terms = min(60, max(1, math.ceil(-10.0 * math.log(10.0) / math.log(alpha))))
    return FAlphaSpec(alpha=alpha, n_terms=n_terms, method=method)


def _hypoexp_coefficients(alpha: float, k: int) -> np.ndarray:
    """Partial-fraction coefficients c_i = prod_{j != i} r_j/(r_j - r_i)
    for rates r_i = 1/w_i, written in the cancellation-free product form
    c_i = (-1)^i alpha^{i(i+1)/2} / (prod_{d<=i}(1-a^d) prod_{d<=k-1-i}(1-a^d))."""
    if k == 1:
        return np.ones(1)
    d = np.arange(1, k)
    log_fac = np.concatenate([[0.0], np.cumsum(np.log1p(-alpha**d.astype(float)))])
    i = np.arange(k)
    log_c = (i * (i + 1) / 2.0) * math.log(alpha) - log_fac[i] - log_fac[k - 1 - i]
    return np.where(i % 2 == 0, 1.0, -1.0) * np.exp(log_c)


def f_alpha_cdf(spec: FAlphaSpec, x) -> float | np.ndarray:
    """F_alpha(x); exact partial fractions or Monte Carlo per spec.method."""
    if spec.method == "monte_carlo":
        val, _ = f_alpha_mc_cdf(spec, x)
        return val
    if spec.alpha > 0.9 or spec.n_terms > 60:
        raise IllConditionedError(
            f"hypoexponential evaluation ill-conditioned for alpha={spec.alpha}, "
            f"n_terms={spec.n_terms}; use method='monte_carlo'"
        )
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0.0):
        raise ValueError("F_alpha is supported on [0, inf)")
    if spec.alpha == 0.0:
        out = -np.expm1(-xs)
        return float(out) if np.isscalar(x) else out
    c = _hypoexp_coefficients(spec.alpha, spec.n_terms)
    r = 1.0 / spec.weights
    # survival = sum_i c_i exp(-r_i x); exponents clipped, vanished terms drop out
    expo = -np.outer(xs.ravel(), r)
    surv = np.exp(np.clip(expo, -745.0, 0.0)) @ c
    out = np.clip(1.0 - surv, 0.0, 1.0).reshape(xs.shape)
    return float(out) if np.isscalar(x) else out


def f_alpha_sample(spec: FAlphaSpec, n_samples: int, seed: int = 0) -> np.ndarray:
    """Direct draws of sum_i w_i E_i at the spec's truncation."""
    rng = np.random.default_rng((seed, 0xFA))
    u = rng.random((n_samples, spec.n_terms))
    return (-np.log1p(-u)) @ spec.weights


def f_alpha_mc_cdf(spec: FAlphaSpec, x, n_samples: int = _MC_DEFAULT,
                   seed: int = 0) -> tuple[float | np.ndarray, float | np.ndarray]:
    """Monte Carlo estimate of F_alpha(x) with its standard error."""
    y = f_alpha_sample(spec, n_samples, seed)
    xs = np.asarray(x, dtype=float)
    p = np.mean(y[None, :] <= xs.ravel()[:, None], axis=1).reshape(xs.shape)
    se = np.sqrt(np.maximum(p * (1.0 - p), 0.0) / n_samples)
    if np.isscalar(x):
        return float(p), float(se)
    return p, se


def laplace_product(spec: FAlphaSpec, u: float) -> float:
    """Truncated product transform prod_{i<n_terms} (1 + u w_i)^{-1}."""
    return float(np.exp(-np.sum(np.log1p(u * spec.weights))))


def f_alpha_mean_var(spec: FAlphaSpec) -> tuple[float, float]:
    """Mean and variance by numerical integration of the survival function
    (limits: 1 and (1-alpha)/(1+alpha) as n_terms grows)."""
    surv = lambda t: 1.0 - f_alpha_cdf(spec, t)
    m1, _ = integrate.quad(surv, 0.0, np.inf, limit=200)
    m2, _ = integrate.quad(lambda t: 2.0 * t * surv(t), 0.0, np.inf, limit=200)
    return m1, m2 - m1 * m1


# ---------------------------------------------------------------------------
# goodness-of-fit reports


@dataclass(frozen=True)
class GofReport:
    ks_statistic: float
    sample_size: int
    reference: str  # std_normal | f_alpha | custom
    passed: bool
    threshold: float = math.nan
    test_id: str = ""
    model_label: str = ""
    n: int | None = None
    t: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.ks_statistic <= 1.0):
            raise ValueError(f"KS statistic outside [0,1]: {self.ks_statistic}")
        if self.reference not in ("std_normal", "f_alpha", "custom"):
            raise ValueError(f"unknown reference {self.reference!r}")

    def to_json_dict(self) -> dict:
        out = {
            "test_id": self.test_id,
            "model": self.model_label,
            "ks": self.ks_statistic,
            "threshold": self.threshold,
            "pass": self.passed,
            "seed": self.seed,
        }
        if self.n is not None:
            out["n"] = self.n
        if self.t is not None:
            out["t"] = self.t
        return out


@dataclass(frozen=True)
class CorollaryReport:
    gof: GofReport
    sample_variance: float
    target_variance: float
    h_numeric: float
    h_target: float
    passed: bool

    def to_json_dict(self) -> dict:
        out = self.gof.to_json_dict()
        out.update({
            "sample_variance": self.sample_variance,
            "target_variance": self.target_variance,
            "h_numeric": self.h_numeric,
            "h_target": self.h_target,
            "pass": self.passed,
        })
        return out


def _ks_against(sample: np.ndarray, cdf) -> float:
    return float(stats.kstest(sample, cdf).statistic)


def verify_thm1_limit(model: RateModel, n: int, cfg: SimConfig,
                      threshold: float = 0.03,
                      spec: FAlphaSpec | None = None) -> GofReport:
    """KS distance between the empirical law of T_n/A_n and F_alpha."""
    if spec is None:
        if model.alpha is None:
            raise ValueError(
                "model has no geometric rate ratio alpha; pass an explicit FAlphaSpec"
            )
        spec = falpha_spec(model.alpha)
    a_n = tail_moments(model, n).A
    sample = sample_hitting_times(model, n, cfg) / a_n
    ks = _ks_against(sample, lambda z: f_alpha_cdf(spec, np.maximum(z, 0.0)))
    return GofReport(ks_statistic=ks, sample_size=cfg.replicates,
                     reference="f_alpha", passed=ks < threshold,
                     threshold=threshold, test_id="thm1-limit",
                     model_label=model.label, n=n, seed=cfg.seed)


def verify_thm2iii(model: RateModel, n: int, cfg: SimConfig,
                   k_values: Sequence[int] = (-2, -1, 0, 1, 2),
                   threshold: float = 0.03,
                   spec: FAlphaSpec | None = None) -> GofReport:
    """Max deviation of empirical P(Z(A_n) <= n+k) from F_alpha(alpha^{-k})
    over the level shifts k."""
    if spec is None:
        if model.alpha is None:
            raise ValueError("k-shift comparison needs the model's alpha")
        spec = falpha_spec(model.alpha)
    a_n = tail_moments(model, n).A
    z = sample_Zs(model, a_n, cfg)
    dev = 0.0
    for k in k_values:
        emp = float(np.mean(z <= n + k))
        ref = float(f_alpha_cdf(spec, spec.alpha ** (-float(k))))
        dev = max(dev, abs(emp - ref))
    return GofReport(ks_statistic=dev, sample_size=cfg.replicates,
                     reference="f_alpha", passed=dev < threshold,
                     threshold=threshold, test_id="thm2iii",
                     model_label=model.label, n=n, seed=cfg.seed)


def verify_clt(model: RateModel, n: int, cfg: SimConfig,
               threshold: float = 0.03) -> GofReport:
    """KS distance between the standardized hitting time (T_n - A_n)/B_n
    and the standard normal; models outside the Gaussian domain are
    expected to fail and the report simply records that."""
    st = tail_moments(model, n, power_rel=1e-6)
    sample = (sample_hitting_times(model, n, cfg) - st.A) / st.B
    ks = _ks_against(sample, stats.norm.cdf)
    return GofReport(ks_statistic=ks, sample_size=cfg.replicates,
                     reference="std_normal", passed=ks < threshold,
                     threshold=threshold, test_id="clt",
                     model_label=model.label, n=n, seed=cfg.seed)


def threshold_shift(model: RateModel, n: int, x: float) -> float:
    """(A_n - A_m)/B_m with m = n + floor(x sqrt(n)); approaches
    x sqrt(2 beta - 1) for regularly varying rates of index beta."""
    m = n + int(math.floor(x * math.sqrt(n)))
    st_m = tail_moments(model, m, power_rel=1e-6)
    a_n = tail_moments(model, n, power_rel=1e-6).A
    return (a_n - st_m.A) / st_m.B


def verify_lln(model: RateModel, t: float, cfg: SimConfig,
               threshold: float = 0.02) -> GofReport:
    """Law-of-large-numbers check: |mean of Z(t)/v(t) - 1| below threshold.
    The deviation statistic is recorded in the ks field (reference custom)."""
    v = speed(model, t, max_index=cfg.cap)
    z = sample_Zs(model, t, cfg)
    dev = abs(float(np.mean(z)) / v - 1.0)
    return GofReport(ks_statistic=min(dev, 1.0), sample_size=cfg.replicates,
                     reference="custom", passed=dev < threshold,
                     threshold=threshold, test_id="lln",
                     model_label=model.label, t=t, seed=cfg.seed)


def verify_corollary(model: RateModel, t_grid, cfg: SimConfig,
                     threshold: float = 0.05, x_probe: float = 1.0,
                     n_probe: int = 10_000) -> CorollaryReport:
    """Empirical law of (Z(t) - v(t))/sqrt(v(t)) against a centred normal
    with variance 1/(2 beta - 1), pooled over the t grid; also checks the
    threshold-shift value against x sqrt(2 beta - 1) at level n_probe."""
    if model.beta is None:
        raise ValueError("corollary verification needs a regular-variation index beta")
    ts = [float(t_grid)] if np.isscalar(t_grid) else [float(t) for t in t_grid]
    target = 1.0 / (2.0 * model.beta - 1.0)
    pooled = []
    for t in ts:
        v = speed(model, t, max_index=cfg.cap)
        z = sample_Zs(model, t, cfg)
        pooled.append((z - v) / math.sqrt(v))
    w = np.concatenate(pooled)
    sample_variance = float(w.var(ddof=1))
    scale = math.sqrt(2.0 * model.beta - 1.0)
    ks = _ks_against(w * scale, stats.norm.cdf)
    h_num = threshold_shift(model, n_probe, x_probe)
    h_tgt = x_probe * scale
    var_ok = abs(sample_variance / target - 1.0) <= 0.115
    gof = GofReport(ks_statistic=ks, sample_size=w.size,
                    reference="std_normal", passed=ks < threshold,
                    threshold=threshold, test_id="corollary",
                    model_label=model.label, t=ts[0], seed=cfg.seed)
    return CorollaryReport(gof=gof, sample_variance=sample_variance,
                           target_variance=target, h_numeric=h_num,
                           h_target=h_tgt, passed=var_ok)
