"""Tail sums, speed of descent, and condition diagnostics.

For a model with rates lambda_n the three tail statistics are

    A_n   = sum_{i>n} 1/lambda_i        (mean time to reach n from infinity)
    B_n^2 = sum_{i>n} 1/lambda_i^2      (variance of that time)
    C_n^3 = sum_{i>n} 1/lambda_i^3      (third-moment scale)

The speed of descent v(t) is the generalized inverse of n -> A_n:
v(t) = n exactly when A_n <= t < A_{n-1}, and v(t) = 1 once t >= A_1, so
that v(A_n) = n on the nose.

All truncated sums carry certified error bounds.  Exact tail rules are used
when the model has one; otherwise tails are bounded by integral comparison,
which needs the rates to be nondecreasing beyond the truncation point (this
is checked on probes and on the summed range).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import integrate

from .rate_models import ModelKind, RateModel, rate, rates, tail_mean

__all__ = [
    "TailStats",
    "ConditionReport",
    "TailSumError",
    "MaxIndexExceeded",
    "default_max_index",
    "tail_moments",
    "speed",
    "condition_diagnostics",
]

_CHUNK = 1 << 20  # summation block size


class TailSumError(RuntimeError):
    """A certified tail bound could not be reached within the index horizon."""

    def __init__(self, message: str, horizon: int):
        super().__init__(message)
        self.horizon = horizon


class MaxIndexExceeded(RuntimeError):
    """The speed search ran past the configured maximum index."""

    def __init__(self, message: str, max_index: int):
        super().__init__(message)
        self.max_index = max_index


def default_max_index() -> int:
    """Index cap used by truncation searches; override with CDI_MAX_INDEX."""
    raw = os.environ.get("CDI_MAX_INDEX", "")
    if raw:
        try:
            v = int(raw)
        except ValueError as exc:
            raise ValueError(f"CDI_MAX_INDEX must be an integer, got {raw!r}") from exc
        if v < 4:
            raise ValueError(f"CDI_MAX_INDEX must be >= 4, got {v}")
        return v
    return 100_000_000


@dataclass(frozen=True)
class TailStats:
    """Tail statistics at a fixed level n with certified truncation error.

    ``err_bound`` is the certified absolute error on A.  ``b2_err_rel`` and
    ``c3_err_rel`` are certified relative errors on B^2 and C^3.
    """

    n: int
    A: float
    B: float
    C: float
    err_bound: float
    b2_err_rel: float = 0.0
    c3_err_rel: float = 0.0


@dataclass
class ConditionReport:
    """Trajectory of one condition diagnostic at log-spaced levels."""

    condition_id: str
    samples: list[tuple[int, float]]
    verdict: str  # consistent | inconclusive | inconsistent
    horizon: int
    target: float | None = None  # asserted limit, when one is known

    def to_json_dict(self) -> dict:
        return {
            "condition_id": self.condition_id,
            "samples": [{"n": int(n), "value": float(v)} for n, v in self.samples],
            "verdict": self.verdict,
            "horizon": int(self.horizon),
        }


# ---------------------------------------------------------------------------
# certified tail bounds


def _check_nondecreasing_beyond(model: RateModel, N: int) -> None:
    # The sup/integral bounds assume rates do not decrease beyond N.
    probes = np.unique(np.geomspace(N, 64.0 * N, 16).astype(np.int64))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        lam = np.asarray(model.rate_rule(probes.astype(np.float64)), dtype=np.float64)
        decreasing = bool(np.any(np.diff(lam) < 0.0))
    if decreasing:
        raise TailSumError(
            f"rates are not nondecreasing beyond N={N}; tail bounds cannot be certified",
            horizon=N,
        )


def _tail_mean_interval(model: RateModel, N: int) -> tuple[float, float]:
    """Certified interval [lo, hi] containing A_N = sum_{i>N} 1/lambda_i."""
    if model.tail_rule is not None:
        raw = float(np.asarray(model.tail_rule(np.asarray([float(N)])))[0])
        if raw == 0.0:
            # a decreasing positive rule underflowed; the tail is below
            # the smallest subnormal and certifiably negligible
            return 0.0, 5e-324
    exact = tail_mean(model, N)
    if exact is not None:
        return exact, exact
    if model.tail_bound_rule is not None:
        return 0.0, float(model.tail_bound_rule(N))
    _check_nondecreasing_beyond(model, N)

    def inv_rate(x: float) -> float:
        return 1.0 / float(model.rate_rule(np.asarray([x]))[0])

    # integral comparison for nondecreasing rates:
    #   int_{N+1}^inf 1/lambda <= A_N <= int_N^inf 1/lambda
    def integral_from(a: float) -> float:
        val, err = integrate.quad(lambda s: inv_rate(a / s) * a / s**2, 0.0, 1.0,
                                  limit=200, epsabs=0.0, epsrel=1e-10)
        if not math.isfinite(val):
            raise TailSumError(f"tail integral beyond N={N} did not converge", horizon=N)
        return val + abs(err)

    hi = integral_from(float(N))
    lo = max(0.0, integral_from(float(N + 1)) - 2.0 * abs(hi) * 1e-9)
    return min(lo, hi), hi


def _integral_inv_power(model: RateModel, a: float, p: int) -> tuple[float, float]:
    """(value, abs error) of int_a^inf lambda(y)^{-p} dy via y = a/s."""

    def g(s: float) -> float:
        y = a / s
        with np.errstate(over="ignore", divide="ignore"):
            lam = float(model.rate_rule(np.asarray([y]))[0])
        if not lam > 0.0:
            return math.inf
        ll = p * math.log(lam)
        if ll > 700.0:  # lambda^{-p} below double range
            return 0.0
        return (a / (s * s)) * math.exp(-ll)

    val, err = integrate.quad(g, 0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-9)
    if not math.isfinite(val):
        raise TailSumError(
            f"power-{p} tail integral beyond N={a:g} did not converge", int(a))
    return val, abs(err)


def _power_tail_interval(model: RateModel, N: int, p: int,
                         a_hi: float) -> tuple[float, float]:
    """Certified (midpoint, half-width) bracketing sum_{i>N} lambda_i^{-p}.

    The cheap bracket is [0, A_N / lambda_{N+1}^{p-1}] from the sup bound.
    When that is too wide, integral comparison (valid for nondecreasing
    rates, checked on probes) gives [int_{N+1}^inf, int_N^inf] of
    lambda(y)^{-p} dy, which shrinks like lambda_N^{-p} instead.
    """
    with np.errstate(over="ignore", divide="ignore"):
        lam1 = float(model.rate_rule(np.asarray([float(N + 1)]))[0])
    sup_hi = 0.0
    if math.isfinite(lam1) and lam1 > 0.0:
        logq = (p - 1) * math.log(lam1)
        sup_hi = a_hi * math.exp(-logq) if logq < 700.0 else 0.0
    best = (sup_hi / 2.0, sup_hi / 2.0)
    if best[1] == 0.0:
        return best
    try:
        _check_nondecreasing_beyond(model, N)
        lo_i, e1 = _integral_inv_power(model, float(N + 1), p)
        hi_i, e2 = _integral_inv_power(model, float(N), p)
    except (TailSumError, ValueError, OverflowError):
        return best
    if 0.0 <= lo_i <= hi_i and math.isfinite(hi_i):
        err = (hi_i - lo_i) / 2.0 + e1 + e2
        if err < best[1]:
            best = ((lo_i + hi_i) / 2.0, err)
    return best


def _sum_powers(model: RateModel, n: int, tol_a: float, rel_pow: float,
                horizon: int, need_a: bool) -> tuple[float, float, float, float, float, float]:
    """Chunked sums of 1/lambda^k, k=1..3, over i>n with certified tails.

    Returns (S1, S2, S3, errA, relB2, relC3).  S1 includes a midpoint tail
    correction when the model has no exact tail rule and need_a is set.
    """
    S1 = S2 = S3 = 0.0
    lo = n + 1
    target = max(2 * n, 64)
    while True:
        N = min(target, horizon)
        while lo <= N:
            hi = min(lo + _CHUNK - 1, N)
            lam = rates(model, lo, hi)
            with np.errstate(invalid="ignore"):  # inf - inf in the diff
                decreasing = bool(np.any(np.diff(lam) < 0.0))
            if decreasing and hi > 4 * n + 64:
                # decreasing rates deep in the tail break the sup bound
                raise TailSumError(
                    f"rates decrease inside the summed tail near i={hi}",
                    horizon=horizon,
                )
            inv = 1.0 / lam
            S1 += float(np.sum(inv))
            S2 += float(np.sum(inv * inv))
            S3 += float(np.sum(inv * inv * inv))
            lo = hi + 1
        a_lo, a_hi = _tail_mean_interval(model, N)
        mid_b, err_b = _power_tail_interval(model, N, 2, a_hi)
        mid_c, err_c = _power_tail_interval(model, N, 3, a_hi)
        ok_a = (not need_a) or (a_hi - a_lo) / 2.0 <= tol_a
        ok_b = err_b <= rel_pow * (S2 + mid_b)
        ok_c = err_c <= rel_pow * (S3 + mid_c)
        if ok_a and ok_b and ok_c:
            S2 += mid_b
            S3 += mid_c
            err_a = (a_hi - a_lo) / 2.0
            if need_a:
                S1 += (a_lo + a_hi) / 2.0
            rel_b2 = err_b / S2 if S2 > 0.0 else 0.0
            rel_c3 = err_c / S3 if S3 > 0.0 else 0.0
            return S1, S2, S3, err_a, rel_b2, rel_c3
        if N >= horizon:
            raise TailSumError(
                f"tail bounds not certified by index {horizon} "
                f"(errA<={(a_hi - a_lo) / 2.0:.3g}, relB2<={err_b / max(S2, 1e-300):.3g})",
                horizon=horizon,
            )
        target = min(2 * N, horizon)


def tail_moments(model: RateModel, n: int, tol: float = 1e-10,
                 power_rel: float = 1e-9, horizon: int | None = None) -> TailStats:
    """Tail statistics A_n, B_n, C_n with certified truncation control.

    ``tol`` is the absolute certified error on A (zero when the model has an
    exact tail rule).  ``power_rel`` is the certified relative error on B^2
    and C^3.  Raises TailSumError when the bounds cannot be met below
    ``horizon`` (default: the configured maximum index).
    """
    if n < 1:
        raise ValueError(f"tail statistics need n >= 1, got n={n}")
    if not (tol > 0.0 and power_rel > 0.0):
        raise ValueError("tolerances must be positive")
    horizon = horizon if horizon is not None else default_max_index()
    a_exact = None
    if model.tail_rule is not None:
        raw = float(np.asarray(model.tail_rule(np.asarray([float(n)])))[0])
        if raw == 0.0:
            raise TailSumError(
                f"A_{n} of model {model.label!r} underflows double precision",
                horizon,
            )
        a_exact = tail_mean(model, n)
    S1, S2, S3, err_a, rel_b2, rel_c3 = _sum_powers(
        model, n, tol, power_rel, horizon, need_a=a_exact is None
    )
    A = a_exact if a_exact is not None else S1
    err = 0.0 if a_exact is not None else err_a
    if err > tol:
        raise TailSumError(f"certified error {err:.3g} on A exceeds tol={tol:.3g}", horizon)
    return TailStats(
        n=int(n), A=float(A), B=float(math.sqrt(S2)), C=float(np.cbrt(S3)),
        err_bound=float(err), b2_err_rel=float(rel_b2), c3_err_rel=float(rel_c3),
    )


# ---------------------------------------------------------------------------
# speed of descent


def _tail_mean_at(model: RateModel, n: int, tol: float, horizon: int) -> float:
    exact = tail_mean(model, n)
    if exact is not None:
        return exact
    S1, _, _, err_a, _, _ = _sum_powers(model, n, tol, 1.0, horizon, need_a=True)
    return S1


def speed(model: RateModel, t: float, max_index: int | None = None) -> int:
    """Speed of descent v(t): the level n with A_n <= t < A_{n-1}; 1 if t >= A_1.

    For models with exact tail rules the boundary comparisons are exact, so
    speed(model, A_n) == n.  Raises MaxIndexExceeded when the search passes
    ``max_index`` (default: the configured maximum index).
    """
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError(f"speed needs a finite t > 0, got t={t}")
    cap = max_index if max_index is not None else default_max_index()
    tol = max(t * 1e-9, 1e-300)

    def A(k: int) -> float:
        return _tail_mean_at(model, k, tol, cap * 8)

    if A(1) <= t:
        return 1
    lo, hi = 1, 2
    while A(hi) > t:
        lo = hi
        hi *= 2
        if hi > cap:
            raise MaxIndexExceeded(
                f"v(t) for t={t:.6g} exceeds the configured maximum index {cap}",
                max_index=cap,
            )
    # invariant: A(lo) > t >= A(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if A(mid) <= t:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# condition diagnostics


def _verdict_limit(ns: np.ndarray, vals: np.ndarray, target: float) -> str:
    # distance-to-limit policy; the 20% band is relative to |target|, or to the
    # trajectory start when the target is zero
    d = np.abs(vals - target)
    scale = abs(target) if target != 0.0 else max(d[0], 1e-300)
    band = 0.2 * scale
    decade_idx = int(np.searchsorted(ns, ns[-1] / 10.0))
    decade_idx = min(decade_idx, len(ns) - 2)
    moved_away = d[-1] > 2.0 * max(d[decade_idx], 1e-300) and d[-1] > 0.05 * scale
    if moved_away:
        return "inconsistent"
    last3 = d[-3:]
    if len(last3) == 3 and np.all(np.diff(last3) <= 1e-12 + 0.05 * last3[:-1]) and d[-1] <= band:
        return "consistent"
    return "inconclusive"


def _verdict_partial_sum(ns: np.ndarray, vals: np.ndarray) -> str:
    # vals are nondecreasing partial sums; look at per-decade growth
    if len(ns) < 4 or vals[-1] <= 0.0:
        return "inconclusive"
    i1 = min(int(np.searchsorted(ns, ns[-1] / 10.0)), len(ns) - 2)
    i2 = min(int(np.searchsorted(ns, ns[-1] / 100.0)), i1)
    g_last = vals[-1] - vals[i1]
    g_prev = vals[i1] - vals[i2]
    if g_prev > 0.0 and g_last >= 0.95 * g_prev:
        return "inconsistent"
    if g_last <= 0.5 * max(g_prev, 1e-300) and g_last <= 0.05 * vals[-1]:
        return "consistent"
    return "inconclusive"


def _verdict_ratio_below_one(ns: np.ndarray, vals: np.ndarray) -> str:
    # condition asks for limsup < 1; vals are ratios in (0, 1]
    gap = 1.0 - vals
    if np.all(vals[-3:] <= 0.8):
        return "consistent"
    i1 = min(int(np.searchsorted(ns, ns[-1] / 10.0)), len(ns) - 2)
    if vals[-1] > 0.95 and gap[-1] < 0.5 * max(gap[i1], 1e-300):
        return "inconsistent"
    return "inconclusive"


_SQRT_HUGE = math.sqrt(np.finfo(np.float64).max)


def _usable_horizon(model: RateModel, horizon: int, tail_factor: int) -> int:
    """Largest grid top <= horizon whose diagnostics stay in float range.

    Fast-growing rate sequences (geometric, stretched, loglog) push
    lambda^2 and the certification band at tail_factor * n outside double
    precision long before the requested horizon.  Values there carry no
    information (the quantities are below resolvable precision), so the
    grid is clipped rather than reported as inf/nan ratios.
    """

    def ok(n: int) -> bool:
        probe = tail_factor * n
        try:
            with np.errstate(over="ignore"):
                if not rate(model, probe + 1) < _SQRT_HUGE:
                    return False
                tail_mean(model, probe)  # raises once the rule underflows
        except (ValueError, OverflowError):
            return False
        return True

    if ok(horizon):
        return horizon
    lo, hi = 13, horizon
    if not ok(lo):
        raise TailSumError(
            f"model {model.label!r} leaves double-precision range below "
            f"index {tail_factor * lo}; no usable diagnostic grid", lo)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def condition_diagnostics(
    model: RateModel,
    horizon: int = 1_000_000,
    n_points: int = 40,
    eps: Iterable[float] = (0.1, 0.5),
    x_factors: Iterable[float] = (1.5, 2.0, 4.0),
    tail_factor: int = 8,
) -> dict[str, ConditionReport]:
    """Evaluate condition trajectories at log-spaced levels up to ``horizon``.

    Returns one ConditionReport per diagnostic:

    * ``c2``: lambda_n / lambda_{n+1} (limit alpha < 1 would put the model in
      the fast regime; limit 1 is the slow regime, reported as ``a1``'s view)
    * ``fast_regime``: 1 / (lambda_{n+1} A_n), limit 1 - alpha
    * ``Rxr@x``: A_{floor(nx)} / A_n for each x factor
    * ``BoA``: B_n / A_n
    * ``cond1`` and ``cond1e@eps``: partial sums of the squared reciprocals
      (lambda_{i+1} A_i)^{-2} and (lambda_{i+1} A_{floor(i(1-eps))})^{-2}
    * ``cond2``: C_n / B_n
    * ``crv_ratio``: (beta-1) lambda_n A_n / n when the index beta is known

    Power-sum tails beyond ``tail_factor * horizon`` enter through certified
    midpoint corrections; trajectory values at the top of the grid carry a
    relative error of order (1/tail_factor)^3 at worst.
    """
    if horizon < 100:
        raise ValueError("horizon too small for meaningful trajectories")
    horizon = _usable_horizon(model, int(horizon), int(tail_factor))
    top = horizon + 1
    n_top = tail_factor * horizon

    # tail bases at `top` via chunked summation
    base1 = base2 = base3 = 0.0
    lo = top + 1
    while lo <= n_top:
        hi = min(lo + _CHUNK - 1, n_top)
        lam = rates(model, lo, hi)
        inv = 1.0 / lam
        base1 += float(np.sum(inv))
        base2 += float(np.sum(inv * inv))
        base3 += float(np.sum(inv * inv * inv))
        lo = hi + 1
    a_lo, a_hi = _tail_mean_interval(model, n_top)
    lam_next = float(model.rate_rule(np.asarray([float(n_top + 1)]))[0])
    base1 += (a_lo + a_hi) / 2.0
    base2 += a_hi / lam_next / 2.0
    base3 += a_hi / lam_next**2 / 2.0
    a_exact_rule = model.tail_rule is not None

    # arrays over i = 2..top (index i maps to slot i-2)
    lam = rates(model, 2, top)
    inv = 1.0 / lam
    idx = np.arange(2, top + 1, dtype=np.int64)

    def suffix(power_arr: np.ndarray, base: float) -> np.ndarray:
        # out[k] = sum_{j>k} arr[j] + base, aligned with idx
        s = np.cumsum(power_arr[::-1])[::-1]
        out = np.empty_like(s)
        out[:-1] = s[1:]
        out[-1] = 0.0
        return out + base

    if a_exact_rule:
        A_arr = np.asarray(model.tail_rule(idx.astype(np.float64)), dtype=np.float64)
    else:
        A_arr = suffix(inv, base1)
    B2_arr = suffix(inv * inv, base2)
    C3_arr = suffix(inv * inv * inv, base3)
    A1 = float(A_arr[0] + inv[0])  # A_1 = A_2 + 1/lambda_2

    def A_at(n_vals: np.ndarray) -> np.ndarray:
        out = np.empty(len(n_vals))
        small = n_vals < 2
        out[small] = A1
        out[~small] = A_arr[np.minimum(n_vals[~small], top) - 2]
        return out

    grid = np.unique(np.geomspace(2, horizon, n_points).astype(np.int64))
    g = grid - 2  # slots

    reports: dict[str, ConditionReport] = {}
    known = dict(model.known_conditions)

    def add(cid: str, vals: np.ndarray, verdict: str, target: float | None = None) -> None:
        reports[cid] = ConditionReport(
            condition_id=cid,
            samples=[(int(n), float(v)) for n, v in zip(grid, vals)],
            verdict=verdict,
            horizon=int(horizon),
            target=target,
        )

    # rate ratio: limit alpha < 1 (c2) or = 1 (a1)
    lam_ratio = lam[g] / lam[g + 1]
    if model.alpha is not None:
        tgt = model.alpha
    elif known.get("a1"):
        tgt = 1.0
    else:
        tgt = float(lam_ratio[-1])  # no asserted limit; judge stabilization only
    add("c2", lam_ratio, _verdict_limit(grid, lam_ratio, tgt),
        model.alpha if model.alpha is not None else None)

    # fast-regime recursion quantity 1/(lambda_{n+1} A_n) -> 1 - alpha
    fr = 1.0 / (lam[np.minimum(g + 1, top - 2)] * A_arr[g])
    fr_t = (1.0 - model.alpha) if model.alpha is not None else float(fr[-1])
    add("fast_regime", fr, _verdict_limit(grid, fr, fr_t),
        (1.0 - model.alpha) if model.alpha is not None else None)

    for x in x_factors:
        nx = np.minimum((grid * float(x)).astype(np.int64), top)
        vals = A_at(nx) / A_arr[g]
        add(f"Rxr@{x:g}", vals, _verdict_ratio_below_one(grid, vals))

    boa = np.sqrt(B2_arr[g]) / A_arr[g]
    add("BoA", boa, _verdict_limit(grid, boa, 0.0), 0.0)

    cond2 = np.cbrt(C3_arr[g]) / np.sqrt(B2_arr[g])
    add("cond2", cond2, _verdict_limit(grid, cond2, 0.0), 0.0)

    # partial sums over i = 2..horizon of (lambda_{i+1} A_i)^{-2}
    lam_shift = lam[1:]  # lambda_{i+1} for i = 2..top-1
    terms1 = 1.0 / (lam_shift * A_arr[:-1]) ** 2
    csum1 = np.cumsum(terms1)
    add("cond1", csum1[g], _verdict_partial_sum(grid, csum1[g]))

    i_arr = idx[:-1]
    for e in eps:
        back = np.maximum((i_arr * (1.0 - float(e))).astype(np.int64), 1)
        terms = 1.0 / (lam_shift * A_at(back)) ** 2
        cs = np.cumsum(terms)
        add(f"cond1e@{e:g}", cs[g], _verdict_partial_sum(grid, cs[g]))

    if model.beta is not None:
        crv = (model.beta - 1.0) * lam[g] * A_arr[g] / grid
        add("crv_ratio", crv, _verdict_limit(grid, crv, 1.0), 1.0)

    return reports
