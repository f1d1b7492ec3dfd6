"""Rate functions for the hitting-time and population large deviations.

For rates of regular-variation index beta > 1 the normalized hitting time
T_n/A_n satisfies a large-deviation principle whose scaled cumulant
generating function is

    lambda(u) = -int_1^inf log(1 - (beta-1) u y^{-beta}) dy,   u <= 1/(beta-1)

with derivatives lambda^{(m)}(u) = (m-1)! (beta-1)^m int_1^inf
(y^beta - 1 + h)^{-m} dy where h = 1 - (beta-1)u.  The decay rate of
P(T_n > x A_n) is I(x) = x tau - lambda(tau) at the tilt tau solving
lambda'(tau) = x, which integration by parts collapses to

    I(x) = -(beta-1) x tau(x) - ln(1 - (beta-1) tau(x)).

The population-side rate is J(x) = x I(x^{beta-1}).

Numerics. lambda' has a logarithmic blow-up as u approaches 1/(beta-1):
the quadrature splits off the singular part exactly (the [1,2] piece is
compared against the tangent denominator beta(y-1)+h, whose integral is
elementary) and maps the [2,inf) piece to a bounded smooth integrand, so
plain adaptive quadrature is accurate for every gap h down to underflow.
Beyond x where h would underflow below ~e^{-40}, tau is taken from the
endpoint representation lambda'(u) = gamma(beta) + ((beta-1)/beta) s with
s = -ln h, exact there to O(h ln h).  Root solves for x > 1 run in the
well-conditioned variable s; tau and ln h are reported as a pair so the
rate I stays accurate after tau itself rounds to the endpoint in doubles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "LdContext",
    "RateEval",
    "TauResult",
    "ConvexityReport",
    "ThmThreeReport",
    "LdDomainError",
    "QuadratureError",
    "RootBracketError",
    "lambda_fn",
    "lambda_deriv",
    "tau",
    "tau_full",
    "rate_I",
    "rate_J",
    "rate_eval",
    "c_of_beta",
    "b_of_beta",
    "endpoint_constant",
    "power_integral",
    "power_integral_closed_form",
    "expansions",
    "convexity_margin",
    "verify_thm3",
]

# -ln h beyond which the endpoint representation replaces quadrature
_S_ASYM = 40.0


class LdDomainError(ValueError):
    """Argument outside the domain of the transform or rate function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach its error target.

    The achieved estimate is carried in .estimate.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class RootBracketError(RuntimeError):
    """The monotone root search failed to bracket a sign change."""


@dataclass(frozen=True)
class LdContext:
    """Regular-variation index plus quadrature and root-finder settings."""

    beta: float
    quad_rel_tol: float = 1e-12
    quad_abs_tol: float = 1e-250
    quad_limit: int = 200  # subdivision cap
    bracket_growth: float = 8.0
    root_tol: float = 1e-12

    def __post_init__(self):
        if not (self.beta > 1.0 and math.isfinite(self.beta)):
            raise LdDomainError(f"index beta must exceed 1, got {self.beta}")
        if not (self.quad_rel_tol > 0 and self.root_tol > 0 and self.bracket_growth > 1):
            raise LdDomainError("tolerances must be positive, bracket growth > 1")

    @property
    def u_max(self) -> float:
        return 1.0 / (self.beta - 1.0)


@dataclass(frozen=True)
class TauResult:
    """Tilt solve output: tau plus the log of the endpoint gap.

    ln_gap = ln(1 - (beta-1) tau).  For x far above 1 tau is closer to the
    endpoint than one double ulp; ln_gap remains exact and is what the
    rate formulas consume.
    """

    x: float
    tau: float
    ln_gap: float


@dataclass(frozen=True)
class RateEval:
    """Large-deviation bundle at one abscissa."""

    x: float
    tau: float
    I: float
    J: float


@dataclass(frozen=True)
class ConvexityReport:
    """Extended-precision second-divided-difference margins for I and J."""

    beta: float
    min_dd_i: float
    min_dd_j: float
    argmin_x_i: float
    argmin_x_j: float
    n_points: int
    dps: int


@dataclass
class ThmThreeReport:
    """Importance-sampling convergence study toward a rate-function value."""

    side: str  # "hitting" or "population"
    x: float
    target: float
    rows: list[dict]
    final_gap_rel: float
    gap_monotone: bool
    warning: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "side": self.side,
            "x": self.x,
            "target": self.target,
            "rows": self.rows,
            "final_gap_rel": self.final_gap_rel,
            "gap_monotone": self.gap_monotone,
            "warning": self.warning,
        }


# ---------------------------------------------------------------------------
# quadrature engine


def _quad(ctx: LdContext, f: Callable[[float], float], a: float, b: float,
          points: Sequence[float] | None = None, scale: float = 0.0) -> float:
    """Adaptive quadrature with an error gate relative to max(|value|, scale).

    scale carries the magnitude of the assembled quantity this piece feeds
    into, so a small correction term is not held to an absolute tolerance
    finer than the final result can resolve.
    """
    pts = [p for p in (points or []) if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=ctx.quad_abs_tol,
                                  epsrel=ctx.quad_rel_tol, limit=ctx.quad_limit,
                                  points=pts, full_output=0)
    # QUADPACK's bound is conservative and its floor on kneed integrands is
    # ~1e-10 relative; a three-order gate still certifies far beyond the
    # 1e-8 tolerances consumed downstream
    gate = max(abs(val), scale) * ctx.quad_rel_tol + ctx.quad_abs_tol
    if not math.isfinite(val) or err > 1000.0 * gate + 1e-15:
        raise QuadratureError(
            f"quadrature error {err:.3g} too large on [{a:.3g},{b:.3g}]", estimate=val
        )
    return val


def _pow_gap(beta: float, y: float) -> float:
    # y^beta - 1 without cancellation for y near 1
    return math.expm1(beta * math.log(y))


def _d1_integrand_m1(beta: float, h: float, y: float) -> float:
    # (y^b-1+h)^{-1} - (b(y-1)+h)^{-1}, stable and overflow-free for any h >= 0
    e = y - 1.0
    if e <= 0.0:
        return 0.0
    if e < 1e-6:
        # leading behaviour of the difference; both factors stay O(1)
        r = e / (beta * e + h)
        return -0.5 * beta * (beta - 1.0) * r * r * (1.0 + (beta - 2.0) * e / 3.0)
    fi = _pow_gap(beta, y) + h
    gi = beta * e + h
    return (gi - fi) / (fi * gi)


def _d1_integrand_m(beta: float, h: float, m: int, y: float) -> float:
    # higher-order difference, used only for h >= ~1e-10
    e = y - 1.0
    if e <= 0.0:
        return 0.0
    fi = _pow_gap(beta, y) + h
    gi = beta * e + h
    delta = fi - gi  # = y^b-1-b(y-1) >= 0, O(e^2)
    if m == 2:
        return -delta * (fi + gi) / (fi * gi) ** 2
    return -delta * (fi * fi + fi * gi + gi * gi) / (fi * gi) ** 3


def _exact_piece(beta: float, h: float, m: int, s: float | None) -> float:
    # int_1^2 (b(y-1)+h)^{-m} dy in closed form; s = -ln h when available
    if m == 1:
        log_h = -s if s is not None else math.log(h)
        return (math.log(beta + h) - log_h) / beta
    if m == 2:
        return (1.0 / h - 1.0 / (beta + h)) / beta
    return (1.0 / h**2 - 1.0 / (beta + h) ** 2) / (2.0 * beta)


def _deriv_split(ctx: LdContext, h: float, m: int, s: float | None = None) -> float:
    # I_m(h) = int_1^inf (y^b-1+h)^{-m} dy for 0 <= h <= 1
    beta = ctx.beta
    if m == 1:
        f = lambda y: _d1_integrand_m1(beta, h, y)
    else:
        f = lambda y: _d1_integrand_m(beta, h, m, y)
    exact = _exact_piece(beta, h, m, s)
    q = beta / (m * beta - 1.0)
    tail = (2.0 / (m * beta - 1.0)) * _quad(
        ctx, lambda t: (2.0**beta - (1.0 - h) * t**q) ** (-m), 0.0, 1.0
    )
    pts = [1.0 + h, 1.0 + math.sqrt(h)] if 0.0 < h < 0.5 else None
    d1 = _quad(ctx, f, 1.0, 2.0, points=pts, scale=abs(exact) + abs(tail))
    return d1 + exact + tail


def _deriv_tform(ctx: LdContext, h: float, m: int) -> float:
    # I_m(h) for h >= 1 (u <= 0): smooth transformed integrand on [0,1];
    # for large scale the knee is split off analytically (see _tform_large)
    beta = ctx.beta
    d = h - 1.0
    q = beta / (m * beta - 1.0)
    if d > 10.0:
        return _tform_large(ctx, d, q, m) / (m * beta - 1.0)
    pts = [d ** (-1.0 / q)] if d > 1.0 else None
    val = _quad(ctx, lambda t: (1.0 + d * t**q) ** (-m), 0.0, 1.0, points=pts)
    return val / (m * beta - 1.0)


def _tform_large(ctx: LdContext, d: float, q: float, m: int) -> float:
    """int_0^1 (1 + d t^q)^{-m} dt for large d, free of the sharp knee.

    Rescaling w = d^{1/q} t gives d^{-1/q} [ C - R ] with the complete
    integral C = int_0^inf (1+w^q)^{-m} dw = Gamma(1/q) Gamma(m-1/q) /
    (q Gamma(m)) and a remainder R over [W, inf), W = d^{1/q}, evaluated
    after the change of variable v = (W/w)^{qm-1} whose integrand is
    bounded and nearly constant.
    """
    c_full = (math.gamma(1.0 / q) * math.gamma(m - 1.0 / q)
              / (q * math.gamma(m)))
    w_cut = d ** (1.0 / q)
    qm1 = q * m - 1.0
    wq_inv = w_cut ** (-q)
    rem = (w_cut ** (-qm1) / qm1) * _quad(
        ctx, lambda v: (1.0 + wq_inv * v ** (q / qm1)) ** (-m), 0.0, 1.0
    )
    return (c_full - rem) / w_cut


def _log_tform_large(ctx: LdContext, d: float, p: float) -> float:
    """int_0^1 t^{-p} log1p(d t^p) dt / d^{1/beta} for large d.

    Rescaling w = d^{1/p} t turns the integral into d^{1/beta} times
    G - R with the complete integral G = int_0^inf w^{-p} log1p(w^p) dw
    = (p/(p-1)) int_0^inf dw/(1+w^p) = pi (beta-1) / sin(pi/beta) and a
    remainder R over [W, inf), W = d^{1/p}.  Writing log1p(w^p) =
    p ln w + log1p(w^{-p}) there gives a closed-form leading part plus
    a bounded correction integral after v = (W/w)^{p-1}.
    """
    beta = p / (p - 1.0)
    g_full = math.pi * (beta - 1.0) / math.sin(math.pi / beta)
    w_cut = d ** (1.0 / p)
    lead = p * w_cut ** (1.0 - p) * (
        math.log(w_cut) / (p - 1.0) + 1.0 / (p - 1.0) ** 2
    )
    wp_inv = w_cut ** (-p)
    corr = (w_cut ** (1.0 - p) / (p - 1.0)) * _quad(
        ctx, lambda v: math.log1p(wp_inv * v ** (p / (p - 1.0))), 0.0, 1.0
    )
    return g_full - (lead + corr)


def _lambda_prime_gap(ctx: LdContext, h: float, s: float | None = None) -> float:
    # lambda'(u) as a function of the endpoint gap h = 1-(beta-1)u
    beta = ctx.beta
    if h >= 1.0:
        return (beta - 1.0) * _deriv_tform(ctx, h, 1)
    return (beta - 1.0) * _deriv_split(ctx, h, 1, s)


def _lambda_second_gap(ctx: LdContext, h: float) -> float:
    beta = ctx.beta
    if h >= 1.0:
        return (beta - 1.0) ** 2 * _deriv_tform(ctx, h, 2)
    if h < 1e-10:
        # exact singular piece dominates; dropped terms are O(h ln h) relative
        return (beta - 1.0) ** 2 * _exact_piece(beta, h, 2, None)
    return (beta - 1.0) ** 2 * _deriv_split(ctx, h, 2)


def lambda_deriv(ctx: LdContext, u: float, order: int = 1) -> float:
    """m-th derivative of the transform, m in {1,2,3}; requires u < 1/(beta-1).

    lambda'(0) = 1 exactly; lambda'' > 0 everywhere (strict convexity).
    """
    if order not in (1, 2, 3):
        raise LdDomainError(f"order must be 1, 2 or 3, got {order}")
    if not (u < ctx.u_max):
        raise LdDomainError(f"derivative needs u < {ctx.u_max:.6g}, got u={u}")
    beta = ctx.beta
    h = 1.0 - (beta - 1.0) * u
    if order == 1:
        return _lambda_prime_gap(ctx, h)
    if order == 2:
        return _lambda_second_gap(ctx, h)
    if h >= 1.0:
        return 2.0 * (beta - 1.0) ** 3 * _deriv_tform(ctx, h, 3)
    if h < 1e-10:
        return 2.0 * (beta - 1.0) ** 3 * _exact_piece(beta, h, 3, None)
    return 2.0 * (beta - 1.0) ** 3 * _deriv_split(ctx, h, 3)


def _slog_ratio(z: float) -> float:
    # log1p(-z)/(-z), the bounded profile of the log integrand; z in [0,1)
    if z < 1e-8:
        return 1.0 + z * (0.5 + z / 3.0)
    return -math.log1p(-z) / z


def lambda_fn(ctx: LdContext, u: float) -> float:
    """The transform lambda(u) itself, for u <= 1/(beta-1); lambda(0) = 0.

    At the right endpoint the integrand's singularity is integrable and the
    value stays finite.
    """
    beta = ctx.beta
    umax = ctx.u_max
    if not math.isfinite(u):
        raise LdDomainError(f"u must be finite, got {u}")
    if u > umax * (1.0 + 4e-16):
        raise LdDomainError(f"lambda(u) needs u <= {umax:.6g}, got u={u}")
    if u == 0.0:
        return 0.0
    if u < 0.0:
        # -(1/(b-1)) int_0^1 t^{-p} log(1+(h-1)t^p) dt, bounded integrand
        d = -(beta - 1.0) * u  # = h-1 > 0
        p = beta / (beta - 1.0)
        if d > 10.0:
            return -(d ** (1.0 / beta)) * _log_tform_large(ctx, d, p) \
                / (beta - 1.0)

        def f(t: float) -> float:
            if t <= 0.0:
                return d
            z = d * t**p
            if z < 1e-8:
                return d * (1.0 - z * (0.5 - z / 3.0))
            return math.log1p(z) / t**p

        pts = [d ** (-1.0 / p)] if d > 1.0 else None
        return -(1.0 / (beta - 1.0)) * _quad(ctx, f, 0.0, 1.0, points=pts)

    h = max(0.0, 1.0 - (beta - 1.0) * u)

    def e1(y: float) -> float:
        # ln(y^b-1+h) - ln(b(y-1)+h), smooth after the ratio is formed
        e = y - 1.0
        if e <= 0.0:
            return 0.0
        fi = _pow_gap(beta, y) + h
        gi = beta * e + h
        return math.log(fi / gi)

    pts = [1.0 + h] if 0.0 < h < 0.5 else None
    E1 = _quad(ctx, e1, 1.0, 2.0, points=pts)
    hlogh = h * math.log(h) if h > 0.0 else 0.0
    B = ((beta + h) * math.log(beta + h) - beta - hlogh) / beta
    p = beta / (beta - 1.0)
    scale = (1.0 - h) / 2.0**beta

    def g2(t: float) -> float:
        z = scale * (t**p if t > 0.0 else 0.0)
        return scale * _slog_ratio(z)

    G2 = (2.0 / (beta - 1.0)) * _quad(ctx, g2, 0.0, 1.0)
    return -E1 - B + beta * (2.0 * math.log(2.0) - 1.0) + G2


# ---------------------------------------------------------------------------
# endpoint constant and closed forms


@lru_cache(maxsize=64)
def endpoint_constant(beta: float) -> float:
    """gamma(beta) in lambda'(u) = gamma(beta) + ((beta-1)/beta)(-ln h) + O(h ln h).

    gamma(2) = ln 2 exactly.
    """
    ctx = LdContext(beta=beta)
    d1 = _quad(ctx, lambda y: _d1_integrand_m1(beta, 0.0, y), 1.0, 2.0)
    q = beta / (beta - 1.0)
    d2 = (2.0 / (beta - 1.0)) * _quad(
        ctx, lambda t: 1.0 / (2.0**beta - t**q), 0.0, 1.0
    )
    return (beta - 1.0) * (d1 + d2 + math.log(beta) / beta)


def c_of_beta(beta: float) -> float:
    """Limit of J(x) as x -> 0: ((1-1/beta) pi / sin(pi/beta))^(beta/(beta-1))."""
    if not (beta > 1.0):
        raise LdDomainError(f"c(beta) needs beta > 1, got {beta}")
    base = (1.0 - 1.0 / beta) * math.pi / math.sin(math.pi / beta)
    return base ** (beta / (beta - 1.0))


def b_of_beta(beta: float) -> float:
    """Coefficient in the small-x tilt expansion tau ~ -b(beta) x^{-beta/(beta-1)}."""
    return c_of_beta(beta) / (beta - 1.0)


def power_integral(beta: float, rel_tol: float = 1e-13) -> float:
    """int_0^inf dy / ((beta-1)^{-1} y^beta + 1) by adaptive quadrature.

    Closed form (power_integral_closed_form) exists; the quadrature value is
    kept as an independent cross-check of the integration machinery.
    """
    if not (beta > 1.0):
        raise LdDomainError(f"need beta > 1, got {beta}")
    ctx = LdContext(beta=beta, quad_rel_tol=rel_tol)
    ystar = (beta - 1.0) ** (1.0 / beta)
    head = _quad(ctx, lambda y: 1.0 / (y**beta / (beta - 1.0) + 1.0), 0.0, ystar)
    # y = 1/w then t = w^{beta-1} maps the tail to a smooth integrand
    tcut = (1.0 / ystar) ** (beta - 1.0)
    q = beta / (beta - 1.0)
    tail = _quad(ctx, lambda t: 1.0 / (1.0 + (beta - 1.0) * t**q), 0.0, tcut)
    return head + tail


def power_integral_closed_form(beta: float) -> float:
    if not (beta > 1.0):
        raise LdDomainError(f"need beta > 1, got {beta}")
    return (beta - 1.0) ** (1.0 / beta) * (math.pi / beta) / math.sin(math.pi / beta)


# ---------------------------------------------------------------------------
# tilt solve


def _solve_s(ctx: LdContext, x: float) -> float:
    # solve lambda'(u(s)) = x in s = -ln h, for x > 1
    beta = ctx.beta
    gamma = endpoint_constant(beta)
    slope_inf = (beta - 1.0) / beta
    s_aff = (x - gamma) / slope_inf
    if s_aff > _S_ASYM:
        return s_aff

    def phi(s: float) -> float:
        return _lambda_prime_gap(ctx, math.exp(-s), s)

    s_lo, s_hi = 0.0, max(2.0, s_aff + 2.0)
    f_hi = phi(s_hi)
    grow = 0
    while f_hi < x:
        s_lo = s_hi
        s_hi += max(2.0, (x - f_hi) / slope_inf * 1.5)
        f_hi = phi(s_hi)
        grow += 1
        if grow > 60:
            raise RootBracketError(f"could not bracket tilt for x={x:.6g}")
    while s_hi - s_lo > 0.05:
        mid = 0.5 * (s_lo + s_hi)
        if phi(mid) < x:
            s_lo = mid
        else:
            s_hi = mid
    s = 0.5 * (s_lo + s_hi)
    tol = ctx.root_tol * max(1.0, x)
    for _ in range(16):
        h = math.exp(-s)
        val = _lambda_prime_gap(ctx, h, s)
        if val < x:
            s_lo = max(s_lo, s)
        else:
            s_hi = min(s_hi, s)
        if abs(val - x) <= tol:
            return s
        slope = _lambda_second_gap(ctx, h) * h / (beta - 1.0)
        step = (x - val) / slope if slope > 0.0 else 0.0
        s_new = s + step
        if not (s_lo < s_new < s_hi):
            s_new = 0.5 * (s_lo + s_hi)
        s = s_new
    return s  # bracket is tiny by now; residual within a few tol


def _solve_neg_u(ctx: LdContext, x: float) -> float:
    # solve lambda'(u) = x for 0 < x < 1 (u < 0)
    beta = ctx.beta

    def phi(u: float) -> float:
        return _lambda_prime_gap(ctx, 1.0 - (beta - 1.0) * u)

    if x < 1e-3:
        seed = -b_of_beta(beta) * x ** (-beta / (beta - 1.0)) + 1.0 / x
        u_lo = min(seed * 1.5, -1.0)
    else:
        u_lo = -1.0
    # invariant: phi(u_hi) > x >= phi(u_lo); phi(0) = 1 > x always
    u_hi = 0.0
    grow = 0
    while phi(u_lo) > x:
        u_hi = u_lo
        u_lo *= ctx.bracket_growth
        grow += 1
        if grow > 100 or not math.isfinite(u_lo):
            raise RootBracketError(f"could not bracket tilt for x={x:.6g}")
    while u_hi - u_lo > max(1e-3 * abs(u_lo + u_hi) / 2.0, 1e-14):
        mid = 0.5 * (u_lo + u_hi)
        if phi(mid) > x:
            u_hi = mid
        else:
            u_lo = mid
    u = 0.5 * (u_lo + u_hi)
    tol = ctx.root_tol * max(1.0, x)
    for _ in range(16):
        val = phi(u)
        if val > x:
            u_hi = min(u_hi, u)
        else:
            u_lo = max(u_lo, u)
        if abs(val - x) <= tol:
            return u
        slope = _lambda_second_gap(ctx, 1.0 - (beta - 1.0) * u)
        step = (x - val) / slope if slope > 0.0 else 0.0
        u_new = u + step
        if not (u_lo < u_new < u_hi):
            u_new = 0.5 * (u_lo + u_hi)
        u = u_new
    return u


@lru_cache(maxsize=4096)
def tau_full(ctx: LdContext, x: float) -> TauResult:
    """Solve lambda'(tau) = x; returns tau together with ln(1-(beta-1)tau).

    sign(tau) = sign(x-1); tau increases to 1/(beta-1) as x -> infinity.
    """
    if not (x > 0.0 and math.isfinite(x)):
        raise LdDomainError(f"tilt solve needs x > 0, got {x}")
    beta = ctx.beta
    if x == 1.0:
        return TauResult(x=x, tau=0.0, ln_gap=0.0)
    if x > 1.0:
        s = _solve_s(ctx, x)
        return TauResult(x=x, tau=-math.expm1(-s) / (beta - 1.0), ln_gap=-s)
    u = _solve_neg_u(ctx, x)
    return TauResult(x=x, tau=u, ln_gap=math.log1p(-(beta - 1.0) * u))


def tau(ctx: LdContext, x: float) -> float:
    return tau_full(ctx, x).tau


def rate_I(ctx: LdContext, x: float) -> float:
    """Decay rate of P(T_n > x A_n) (x>1) / P(T_n < x A_n) (x<1); zero at x=1."""
    r = tau_full(ctx, x)
    # I = -(beta-1) x tau - ln h, written through ln h to survive tau
    # rounding onto the endpoint: -(beta-1) tau = expm1(ln h) exactly
    return x * math.expm1(r.ln_gap) - r.ln_gap


def rate_J(ctx: LdContext, x: float) -> float:
    """Population-side rate J(x) = x * I(x^{beta-1})."""
    if not (x > 0.0 and math.isfinite(x)):
        raise LdDomainError(f"rate_J needs x > 0, got {x}")
    return x * rate_I(ctx, x ** (ctx.beta - 1.0))


def rate_eval(ctx: LdContext, x: float) -> RateEval:
    return RateEval(x=x, tau=tau(ctx, x), I=rate_I(ctx, x), J=rate_J(ctx, x))


# ---------------------------------------------------------------------------
# asymptotic expansions


@dataclass(frozen=True)
class ExpansionValues:
    x: float
    i_large: float
    j_large: float
    i_small: float
    j_small: float


def expansions(ctx: LdContext, x: float) -> ExpansionValues:
    """Reference asymptotic forms of I and J (valid far from x=1).

    Large x: I ~ x/(beta-1), J ~ x^beta/(beta-1).  Small x:
    I = c x^{-1/(beta-1)} - (beta/(beta-1)) ln(1/x) - ln c - beta + o(1) and
    J = c - (beta ln(1/x) + ln c + beta) x + o(x), where c = c_of_beta.  The
    two small-x forms are consistent under J(x) = x I(x^{beta-1}), which
    fixes the sign of the logarithmic term.
    """
    if not (x > 0.0):
        raise LdDomainError(f"expansions need x > 0, got {x}")
    beta, c = ctx.beta, c_of_beta(ctx.beta)
    log_inv = -math.log(x)
    return ExpansionValues(
        x=x,
        i_large=x / (beta - 1.0),
        j_large=x**beta / (beta - 1.0),
        i_small=c * x ** (-1.0 / (beta - 1.0)) - beta / (beta - 1.0) * log_inv
        - math.log(c) - beta,
        j_small=c - (beta * log_inv + math.log(c) + beta) * x,
    )


# ---------------------------------------------------------------------------
# extended-precision convexity margins

# Second divided differences of I at large x scale like the endpoint gap h
# (below 1e-40 already at moderate x), far under double noise on I itself,
# so the convexity check runs in arbitrary precision.  The solver mirrors
# the double pipeline: split quadrature while h is representable, endpoint
# representation with a first-order h-correction beyond.


def _mp_machinery(beta: float, mp):
    b = mp.mpf(beta)
    q1 = b / (b - 1)

    def d1_integrand(y, h):
        e = y - 1
        if e <= 0:
            return mp.mpf(0)
        fi = mp.expm1(b * mp.log(y)) + h
        gi = b * e + h
        return (gi - fi) / (fi * gi)

    def lam_prime_pos(s):
        h = mp.exp(-s)
        seg = [1, 1 + h, 2] if h < mp.mpf("0.5") else [1, 2]
        d1 = mp.quad(lambda y: d1_integrand(y, h), seg)
        L = (mp.log(b + h) + s) / b
        tail = (2 / (b - 1)) * mp.quad(
            lambda t: 1 / (2**b - (1 - h) * t**q1), [0, 1]
        )
        return (b - 1) * (d1 + L + tail)

    def lam_prime_neg(d):
        if d == 0:
            return mp.mpf(1)
        ts = d ** (-1 / q1) if d > 1 else None
        seg = [0, ts, 1] if ts is not None and ts < 1 else [0, 1]
        return mp.quad(lambda t: 1 / (1 + d * t**q1), seg)

    gamma = (b - 1) * (
        mp.quad(lambda y: d1_integrand(y, mp.mpf(0)), [1, 2])
        + (2 / (b - 1)) * mp.quad(lambda t: 1 / (2**b - t**q1), [0, 1])
        + mp.log(b) / b
    )
    return lam_prime_pos, lam_prime_neg, gamma


def _mp_rate_I(beta: float, x, mp, machinery, kappa, s_switch: float = 55.0):
    lam_pos, lam_neg, gamma = machinery
    b = mp.mpf(beta)
    if x == 1:
        return mp.mpf(0)
    if x > 1:
        s_aff = b / (b - 1) * (x - gamma)
        if s_aff > s_switch:
            s = s_aff
            for _ in range(4):
                s = b / (b - 1) * (x - gamma - kappa * mp.exp(-s))
        else:
            ctx = LdContext(beta=beta)
            seed = -tau_full(ctx, float(x)).ln_gap
            s = mp.findroot(lambda s: lam_pos(s) - x, (mp.mpf(seed), mp.mpf(seed) + mp.mpf("1e-3")),
                            solver="secant", tol=mp.mpf(10) ** (-mp.dps + 8))
        return x * mp.expm1(-s) + s
    # x < 1: solve lambda'(u) = x in w = ln d, d = (beta-1)|u| = h-1
    ctx = LdContext(beta=beta)
    seed = math.log(math.expm1(tau_full(ctx, float(x)).ln_gap))
    w = mp.findroot(lambda w: lam_neg(mp.exp(w)) - x, (mp.mpf(seed), mp.mpf(seed) + mp.mpf("1e-3")),
                    solver="secant", tol=mp.mpf(10) ** (-mp.dps + 8))
    d = mp.exp(w)
    return x * d - mp.log1p(d)


def convexity_margin(beta: float, x_lo: float = 0.02, x_hi: float = 50.0,
                     n_points: int = 50, dps: int = 40) -> ConvexityReport:
    """Minimal second divided differences of I and J on a log grid, in
    extended precision.  Positive margins certify strict convexity at grid
    resolution even where the curvature of I is below double resolution.
    """
    import mpmath

    mp = mpmath.mp
    base_dps = max(dps, 40)
    with mp.workdps(base_dps):
        machinery = _mp_machinery(beta, mpmath)
        gamma = machinery[2]
        h0 = mp.mpf(10) ** (-base_dps // 3)
        s0 = -mp.log(h0)
        kappa = (machinery[0](s0) - gamma - (mp.mpf(beta) - 1) / beta * s0) / h0

        b = mp.mpf(beta)
        ratio = (mp.mpf(x_hi) / x_lo) ** (mp.mpf(1) / (n_points - 1))
        xs = [mp.mpf(x_lo) * ratio**k for k in range(n_points)]
        gamma_f = float(gamma)

        def i_at(y):
            # pick working precision from the endpoint gap this y will reach
            if y > 1:
                s_est = beta / (beta - 1.0) * (float(y) - gamma_f)
            else:
                s_est = 0.0
            dps_pt = max(base_dps, int(s_est / 2.302585) + 30)
            with mp.workdps(dps_pt):
                return _mp_rate_I(beta, y, mp, machinery, kappa)

        I_vals = [i_at(x) for x in xs]
        J_vals = [x * i_at(x ** (b - 1)) for x in xs]

        def min_dd(vals):
            best, arg = None, None
            with mp.workdps(4000):
                for k in range(1, n_points - 1):
                    d1 = (vals[k] - vals[k - 1]) / (xs[k] - xs[k - 1])
                    d2 = (vals[k + 1] - vals[k]) / (xs[k + 1] - xs[k])
                    dd = (d2 - d1) / (xs[k + 1] - xs[k - 1])
                    if best is None or dd < best:
                        best, arg = dd, xs[k]
            return float(best), float(arg)

        mi, ai = min_dd(I_vals)
        mj, aj = min_dd(J_vals)
    return ConvexityReport(beta=beta, min_dd_i=mi, min_dd_j=mj,
                           argmin_x_i=ai, argmin_x_j=aj,
                           n_points=n_points, dps=base_dps)


# ---------------------------------------------------------------------------
# Monte Carlo convergence study


def verify_thm3(ctx: LdContext, model, x: float, levels: Iterable[int], cfg,
                side: str = "hitting") -> ThmThreeReport:
    """Estimate the large-deviation decay rate by tilted sampling across
    levels and report the gap to the theoretical rate.

    side="hitting": -n^{-1} ln P(T_n >/< x A_n) against I(x).
    side="population": -n^{-1} ln P(Z(A_n) >/<= floor(nx)) against J(x),
    reduced through the duality to a hitting-time tail at level floor(nx).
    """
    from . import simulation
    from .tail_analysis import tail_moments

    if side not in ("hitting", "population"):
        raise ValueError(f"unknown side {side!r}")
    if not (x > 0.0):
        raise LdDomainError(f"need x > 0, got {x}")
    levels = sorted(int(n) for n in levels)
    target = rate_I(ctx, x) if side == "hitting" else rate_J(ctx, x)
    rows: list[dict] = []
    for n in levels:
        if side == "hitting":
            m, x_eff = n, x
        else:
            m = max(2, int(math.floor(n * x)))
            stats_n = tail_moments(model, n)
            stats_m = tail_moments(model, m)
            x_eff = stats_n.A / stats_m.A
        stats = tail_moments(model, m)
        theta = tau(ctx, x_eff) * m / stats.A
        est = simulation.tilted_estimate(model, m, x_eff, theta, cfg)
        rate_hat = -math.log(est.point) / n if est.point > 0.0 else math.inf
        gap = abs(rate_hat - target) / target if target > 0.0 else abs(rate_hat)
        rows.append({
            "n": n,
            "level": m,
            "x_effective": x_eff,
            "theta": theta,
            "estimate": est.point,
            "std_error": est.std_error,
            "replicates": est.replicates,
            "rate_estimate": rate_hat,
            "gap_rel": gap,
        })
    gaps = [r["gap_rel"] for r in rows]
    monotone = all(g2 <= g1 * (1.0 + 1e-9) for g1, g2 in zip(gaps, gaps[1:]))
    warning = None
    if not monotone:
        warning = "gap not shrinking across levels; finite-size bias may dominate"
    return ThmThreeReport(side=side, x=x, target=target, rows=rows,
                          final_gap_rel=gaps[-1] if gaps else math.nan,
                          gap_monotone=monotone, warning=warning)
