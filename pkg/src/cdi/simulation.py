"""Exact sampling of hitting times and population sizes, and tilted
importance sampling for rare-event tails.

The hitting time T_n is a sum of independent exponentials with rates
lambda_i, i > n.  Sampling truncates the sum at a level K chosen so the
neglected tail mean A_K is below tolerance, and substitutes the residual's
mean (policy mean_substitute), which keeps E T_n exact; a separate guard
keeps the neglected standard deviation B_K a small fraction of B_n so that
distributional checks are unaffected at test resolution.

Population sizes Z(t) use the duality {Z(t) > n} = {T_n > t}: holding
times are drawn downward from the truncation level and Z(t) is read off as
the first level whose cumulative time drops below t.

Reproducibility contract: one pseudo-random substream per 512-replicate
block, derived from (seed, block index); uniforms are drawn in fixed
column batches and reduced in fixed order, so results are bit-identical
for a given SimConfig regardless of scheduling.  Exponentials use the
inverse transform x = -log1p(-u)/rate, which couples runs monotonically:
the zero-tilt estimator consumes exactly the same uniforms as a naive run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .rate_models import RateModel, rates
from .tail_analysis import (MaxIndexExceeded, TailSumError, _tail_mean_interval,
                            default_max_index, tail_moments)

__all__ = [
    "SimConfig",
    "PathSample",
    "TiltedModel",
    "EstimateCI",
    "TruncationError",
    "TiltDomainError",
    "DivergentMgfError",
    "choose_trunc_level",
    "sample_hitting_time",
    "sample_hitting_times",
    "sample_path",
    "sample_Z",
    "sample_Zs",
    "log_mgf",
    "mgf",
    "tilted_estimate",
    "naive_estimate",
]

_BLOCK = 512      # replicates per RNG substream
_COLS = 16384     # uniforms drawn per column batch
_RETRY_TAG = 0x5A  # stream namespace for per-replicate resampling


class TruncationError(RuntimeError):
    """No admissible truncation level below the index cap."""

    def __init__(self, message: str, required_tail: float):
        super().__init__(message)
        self.required_tail = required_tail


class TiltDomainError(ValueError):
    """Tilt parameter meets or exceeds a death rate on the sampled range."""


class DivergentMgfError(ValueError):
    """Moment generating function argument at or beyond a rate."""


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    replicates: int = 1
    trunc_tol: float = 1e-3
    max_index: int | None = None  # None: use the configured global cap

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not (self.trunc_tol > 0.0):
            raise ValueError(f"trunc_tol must be > 0, got {self.trunc_tol}")

    @property
    def cap(self) -> int:
        return self.max_index if self.max_index is not None else default_max_index()


@dataclass(frozen=True)
class PathSample:
    """Hitting times over a window of levels from one realization."""

    n_low: int
    n_high: int
    hitting_times: np.ndarray  # T_m for m = n_low..n_high
    trunc_level: int
    residual_policy: str = "mean_substitute"

    def __post_init__(self):
        t = self.hitting_times
        if len(t) != self.n_high - self.n_low + 1:
            raise ValueError("window length does not match hitting_times")
        if np.any(t < 0.0) or np.any(np.diff(t) >= 0.0):
            raise ValueError("hitting times must be positive and strictly decreasing in the level")
        if self.trunc_level < self.n_high:
            raise ValueError("truncation level below window top")

    def hitting_time(self, m: int) -> float:
        if not (self.n_low <= m <= self.n_high):
            raise IndexError(f"level {m} outside window [{self.n_low}, {self.n_high}]")
        return float(self.hitting_times[m - self.n_low])

    def population_at(self, t: float) -> int | None:
        """Z(t) read from this path; None when Z(t) would exceed the window."""
        T = self.hitting_times
        if T[-1] > t:
            return None
        # smallest m with T_m <= t; T decreasing in m
        idx = int(np.searchsorted(-T, -t, side="left"))
        return self.n_low + idx


@dataclass(frozen=True)
class TiltedModel:
    """Death rates shifted by a tilt: lambda_i - theta for i > n."""

    base: RateModel
    n: int
    theta: float

    def rates_on(self, lo: int, hi: int) -> np.ndarray:
        lam = rates(self.base, lo, hi) - self.theta
        if np.any(lam <= 0.0):
            bad = int(lo + np.argmax(rates(self.base, lo, hi) - self.theta <= 0.0))
            raise TiltDomainError(
                f"tilt {self.theta:.6g} >= rate at level {bad}; tilted rate not positive"
            )
        return lam


@dataclass(frozen=True)
class EstimateCI:
    point: float
    std_error: float
    replicates: int
    seed: int
    log_point: float = -math.inf  # natural log of the point estimate
    ess: float = 0.0              # effective sample size of hit weights
    degenerate: bool = False      # all indicators equal (no variance signal)


# ---------------------------------------------------------------------------
# truncation level selection


def _tail_mean_upper(model: RateModel, k: int) -> float:
    lo, hi = _tail_mean_interval(model, k)
    return hi


def _smallest_index_with_tail(model: RateModel, target: float, cap: int,
                              start: int) -> int:
    """Smallest K (within doubling resolution, exact for closed-form tails)
    with certified A_K <= target."""
    k = max(start, 4)
    if _tail_mean_upper(model, k) <= target:
        lo = start
    else:
        while _tail_mean_upper(model, k) > target:
            lo = k
            k *= 2
            if k > cap:
                raise TruncationError(
                    f"no truncation level below cap {cap} reaches tail mean {target:.3g}",
                    required_tail=target,
                )
        lo = k // 2
    hi = k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _tail_mean_upper(model, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def choose_trunc_level(model: RateModel, n: int, cfg: SimConfig,
                       sd_fraction: float = 0.03) -> int:
    """Truncation level for T_n draws: A_K <= trunc_tol and the neglected
    standard deviation at most sd_fraction of B_n."""
    cap = cfg.cap
    K = _smallest_index_with_tail(model, cfg.trunc_tol, cap, start=n + 1)
    b_n = tail_moments(model, n, tol=max(cfg.trunc_tol, 1e-12),
                       power_rel=1e-3, horizon=8 * cap).B
    # cheap certified bound: B_K^2 <= A_K / lambda_{K+1}
    while True:
        a_k = _tail_mean_upper(model, K)
        lam_next = float(model.rate_rule(np.asarray([float(K + 1)]))[0])
        if math.sqrt(a_k / lam_next) <= sd_fraction * b_n:
            return K
        K *= 2
        if K > cap:
            raise TruncationError(
                f"variance guard not satisfiable below cap {cap}",
                required_tail=cfg.trunc_tol,
            )


# ---------------------foundation: blocked exponential sums


def _block_streams(seed: int, n_blocks: int):
    return [np.random.default_rng((seed, b)) for b in range(n_blocks)]


def _sum_exponentials(lam: np.ndarray, rng: np.random.Generator,
                      n_rows: int) -> np.ndarray:
    """Row sums of independent Exp(lam_j) draws, fixed column-batch order."""
    total = np.zeros(n_rows)
    for lo in range(0, lam.size, _COLS):
        chunk = lam[lo:lo + _COLS]
        u = rng.random((n_rows, chunk.size))
        total += np.sum(-np.log1p(-u) / chunk, axis=1)
    return total


def _draw_hitting_sums(lam: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """replicates x row-sum draws of sum_j Exp(lam_j), blocked streams."""
    out = np.empty(cfg.replicates)
    n_blocks = (cfg.replicates + _BLOCK - 1) // _BLOCK
    for b in range(n_blocks):
        lo = b * _BLOCK
        rows = min(_BLOCK, cfg.replicates - lo)
        rng = np.random.default_rng((cfg.seed, b))
        out[lo:lo + rows] = _sum_exponentials(lam, rng, rows)
    return out


# ---------------------------------------------------------------------------
# hitting-time sampling


def sample_hitting_time(model: RateModel, n: int, cfg: SimConfig,
                        rng: np.random.Generator | None = None,
                        residual_policy: str = "mean_substitute") -> float:
    """One draw of T_n = sum_{i>n} Exp(lambda_i), truncated at a certified
    level; the neglected tail is replaced by its mean A_K (mean bias zero)
    or dropped (bias <= trunc_tol)."""
    if n < 1:
        raise ValueError(f"hitting time needs n >= 1, got {n}")
    if residual_policy not in ("mean_substitute", "drop"):
        raise ValueError(f"unknown residual policy {residual_policy!r}")
    K = choose_trunc_level(model, n, cfg)
    lam = rates(model, n + 1, K)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u = rng.random(lam.size)
    t = float(np.sum(-np.log1p(-u) / lam))
    if residual_policy == "mean_substitute":
        t += sum(_tail_mean_interval(model, K)) / 2.0
    return t


def sample_hitting_times(model: RateModel, n: int, cfg: SimConfig,
                         residual_policy: str = "mean_substitute") -> np.ndarray:
    """cfg.replicates independent draws of T_n (blocked substreams)."""
    if n < 1:
        raise ValueError(f"hitting time needs n >= 1, got {n}")
    K = choose_trunc_level(model, n, cfg)
    lam = rates(model, n + 1, K)
    out = _draw_hitting_sums(lam, cfg)
    if residual_policy == "mean_substitute":
        out += sum(_tail_mean_interval(model, K)) / 2.0
    return out


def sample_path(model: RateModel, n_low: int, n_high: int, cfg: SimConfig,
                rng: np.random.Generator | None = None,
                residual_policy: str = "mean_substitute") -> PathSample:
    """Hitting times T_m for every m in [n_low, n_high] from one realization."""
    if not (1 <= n_low <= n_high):
        raise ValueError(f"need 1 <= n_low <= n_high, got [{n_low}, {n_high}]")
    K = choose_trunc_level(model, n_high, cfg)
    lam = rates(model, n_low + 1, K)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u = rng.random(lam.size)
    x = -np.log1p(-u) / lam
    # suffix sums: T_m - residual = sum over i in (m, K]
    suffix = np.concatenate([np.cumsum(x[::-1])[::-1], [0.0]])
    window = suffix[: n_high - n_low + 1]
    resid = sum(_tail_mean_interval(model, K)) / 2.0 if residual_policy == "mean_substitute" else 0.0
    return PathSample(
        n_low=n_low, n_high=n_high,
        hitting_times=window + resid,
        trunc_level=K, residual_policy=residual_policy,
    )


# ---------------------------------------------------------------------------
# population sampling through the duality


def _z_trunc_level(model: RateModel, t: float, cfg: SimConfig) -> tuple[int, float]:
    from .tail_analysis import speed

    v = speed(model, t, max_index=cfg.cap)
    stats_v = tail_moments(model, max(v, 1), tol=1e-12 + t * 1e-9,
                           power_rel=1e-3, horizon=8 * cfg.cap)
    cap = cfg.cap
    K = max(v + 1, 4)
    while True:
        a_k = _tail_mean_upper(model, K)
        lam_next = float(model.rate_rule(np.asarray([float(K + 1)]))[0])
        b_k = math.sqrt(a_k / lam_next)  # certified upper bound on B_K
        if a_k + 12.0 * b_k <= t and b_k <= 0.1 * stats_v.B:
            break
        K *= 2
        if K > cap:
            raise TruncationError(
                f"population sampling at t={t:.3g} needs truncation beyond cap {cap}",
                required_tail=t,
            )
    resid = sum(_tail_mean_interval(model, K)) / 2.0
    return K, resid


def _z_from_block(lam_desc: np.ndarray, rng: np.random.Generator, rows: int,
                  threshold: float, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Z values for one block; flags rows where the start level was too low."""
    running = np.zeros(rows)
    count = np.zeros(rows, dtype=np.int64)
    for lo in range(0, lam_desc.size, _COLS):
        chunk = lam_desc[lo:lo + _COLS]
        u = rng.random((rows, chunk.size))
        x = -np.log1p(-u) / chunk
        np.cumsum(x, axis=1, out=x)
        x += running[:, None]
        count += np.sum(x <= threshold, axis=1)
        running = x[:, -1].copy()
    z = K - count
    return z, count == 0


def sample_Z(model: RateModel, t: float, cfg: SimConfig,
             rng: np.random.Generator | None = None) -> int:
    """One draw of the population size Z(t), exact up to documented
    truncation bias; resamples with a doubled start level if the start
    proves too low."""
    z = _sample_zs_impl(model, t, cfg, single_rng=rng, n_draws=1)
    return int(z[0])


def sample_Zs(model: RateModel, t: float, cfg: SimConfig) -> np.ndarray:
    """cfg.replicates draws of Z(t) (blocked substreams)."""
    return _sample_zs_impl(model, t, cfg, single_rng=None, n_draws=cfg.replicates)


def _sample_zs_impl(model: RateModel, t: float, cfg: SimConfig,
                    single_rng, n_draws: int) -> np.ndarray:
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError(f"population sampling needs finite t > 0, got {t}")
    K, resid = _z_trunc_level(model, t, cfg)
    threshold = t - resid
    lam_desc = np.ascontiguousarray(rates(model, 2, K)[::-1])  # i = K..2
    out = np.empty(n_draws, dtype=np.int64)
    n_blocks = (n_draws + _BLOCK - 1) // _BLOCK
    for b in range(n_blocks):
        lo = b * _BLOCK
        rows = min(_BLOCK, n_draws - lo)
        rng = single_rng if single_rng is not None else np.random.default_rng((cfg.seed, b))
        z, too_low = _z_from_block(lam_desc, rng, rows, threshold, K)
        out[lo:lo + rows] = z
        for r in np.nonzero(too_low)[0]:
            out[lo + r] = _resample_z_row(model, t, cfg, K, lo + r)
    return out


def _resample_z_row(model: RateModel, t: float, cfg: SimConfig,
                    K_failed: int, rep_index: int) -> int:
    K = K_failed
    while True:
        K *= 2
        if K > cfg.cap:
            raise MaxIndexExceeded(
                f"Z(t) resampling exceeded the index cap {cfg.cap}", max_index=cfg.cap
            )
        resid = sum(_tail_mean_interval(model, K)) / 2.0
        lam_desc = np.ascontiguousarray(rates(model, 2, K)[::-1])
        rng = np.random.default_rng((cfg.seed, _RETRY_TAG, rep_index, K))
        z, too_low = _z_from_block(lam_desc, rng, 1, t - resid, K)
        if not too_low[0]:
            return int(z[0])


# ---------------------------------------------------------------------------
# moment generating function


def log_mgf(model: RateModel, n: int, u: float, rel_tol: float = 1e-12) -> float:
    """log E exp(u T_n) = -sum_{i>n} log(1 - u/lambda_i), summed over a
    certified range with the remainder replaced by its linearization -u A_N;
    the neglected curvature is bounded by (u^2/2) sum_{i>N} lambda_i^{-2}
    <= (u^2/2) A_N / lambda_{N+1} and kept below rel_tol of the result."""
    if n < 1:
        raise ValueError(f"mgf needs n >= 1, got {n}")
    if u == 0.0:
        return 0.0
    lam_first = float(model.rate_rule(np.asarray([float(n + 1)]))[0])
    if u >= lam_first:
        raise DivergentMgfError(
            f"mgf argument {u:.6g} >= lambda_{{{n + 1}}} = {lam_first:.6g}"
        )
    chunk = 1 << 20
    cap = default_max_index() * 8
    total = 0.0
    hi = n
    while True:
        lo, hi = hi + 1, min(hi + chunk, cap)
        lam = rates(model, lo, hi)
        if u > 0.0 and np.any(lam <= u):
            bad = int(lo + np.argmax(lam <= u))
            raise DivergentMgfError(f"mgf argument {u:.6g} >= rate at level {bad}")
        total += float(np.sum(np.log1p(-u / lam)))
        a_lo, a_hi = _tail_mean_interval(model, hi)
        lam_next = float(model.rate_rule(np.asarray([float(hi + 1)]))[0])
        shrink = max(1.0 - u / lam_next, 1e-9) if u > 0.0 else 1.0
        err = (0.5 * u * u * a_hi / lam_next) / shrink + abs(u) * (a_hi - a_lo)
        if err <= rel_tol * (abs(total) + abs(u) * a_hi + 1e-30):
            return -total + u * 0.5 * (a_lo + a_hi)
        if hi >= cap:
            raise TailSumError(
                f"mgf tail not certifiable to {rel_tol:.1g} below index {cap}",
                horizon=cap,
            )


def mgf(model: RateModel, n: int, u: float, rel_tol: float = 1e-12) -> float:
    """E exp(u T_n) as a convergent product over the tail rates."""
    return math.exp(log_mgf(model, n, u, rel_tol))


# ---------------------------------------------------------------------------
# tilted importance sampling


def tilted_estimate(model: RateModel, n: int, x: float, theta: float,
                    cfg: SimConfig) -> EstimateCI:
    """Estimate P(T_n > x A_n) for x >= 1, or P(T_n < x A_n) for x < 1, by
    exponential tilting with parameter theta (theta = 0 is the naive
    estimator on the same uniforms).

    The sampled range (n, K] is tilted to rates lambda_i - theta and each
    replicate is weighted by exp(C - theta S), where C is the log mgf of
    the sampled range at theta and S the sampled part of the sum; the
    residual beyond K enters the threshold comparison through its mean but
    stays out of the likelihood ratio.  Estimation runs in log space; the
    standard error is the usual weighted-sample one.
    """
    if n < 1:
        raise ValueError(f"tilted estimate needs n >= 1, got {n}")
    if not (x > 0.0 and math.isfinite(x)):
        raise ValueError(f"need x > 0, got {x}")
    stats = tail_moments(model, n, tol=min(1.0, cfg.trunc_tol), power_rel=1e-3,
                         horizon=8 * cfg.cap)
    a_n = stats.A
    # rare-event truncation rule: tie the neglected tail to the event scale
    tail_target = cfg.trunc_tol * min(1.0, x * a_n) * 1e-3
    K = _smallest_index_with_tail(model, tail_target, cfg.cap, start=n + 1)
    lam = rates(model, n + 1, K)
    if theta != 0.0 and np.min(lam) <= theta:
        raise TiltDomainError(
            f"tilt {theta:.6g} not below min rate {np.min(lam):.6g} on ({n}, {K}]"
        )
    lam_t = lam - theta
    log_weight_const = -float(np.sum(np.log1p(-theta / lam))) if theta != 0.0 else 0.0
    resid = sum(_tail_mean_interval(model, K)) / 2.0
    # t_block below carries the deterministic residual mean; the likelihood
    # ratio covers the sampled coordinates only, so cancel it out of theta*t
    log_weight_const += theta * resid
    threshold = x * a_n
    upper = x >= 1.0

    m_run = -math.inf
    s1 = s2 = 0.0
    hits = 0
    n_blocks = (cfg.replicates + _BLOCK - 1) // _BLOCK
    for b in range(n_blocks):
        rows = min(_BLOCK, cfg.replicates - b * _BLOCK)
        rng = np.random.default_rng((cfg.seed, b))
        t_block = _sum_exponentials(lam_t, rng, rows) + resid
        hit = (t_block > threshold) if upper else (t_block < threshold)
        k = int(np.sum(hit))
        if k == 0:
            continue
        hits += k
        lw = log_weight_const - theta * t_block[hit]
        bmax = float(np.max(lw))
        if bmax > m_run:
            scale = math.exp(m_run - bmax) if m_run > -math.inf else 0.0
            s1 *= scale
            s2 *= scale * scale
            m_run = bmax
        a = np.exp(lw - m_run)
        s1 += float(np.sum(a))
        s2 += float(np.sum(a * a))

    R = cfg.replicates
    if hits == 0:
        return EstimateCI(point=0.0, std_error=0.0, replicates=R, seed=cfg.seed,
                          log_point=-math.inf, ess=0.0, degenerate=True)
    log_point = m_run + math.log(s1 / R)
    point = math.exp(log_point) if log_point > -700.0 else 0.0
    # Var(w 1) / R with w*1 having second moment e^{2m} s2 / R
    mean_sq = (s1 / R) ** 2
    var = max(s2 / R - mean_sq, 0.0) / R
    std_error = math.exp(m_run) * math.sqrt(var) if m_run > -350.0 else 0.0
    degenerate = hits == R and theta == 0.0  # all indicators equal
    return EstimateCI(point=point, std_error=std_error, replicates=R,
                      seed=cfg.seed, log_point=log_point,
                      ess=(s1 * s1 / s2) if s2 > 0.0 else 0.0,
                      degenerate=degenerate)


def naive_estimate(model: RateModel, n: int, x: float, cfg: SimConfig) -> EstimateCI:
    """Plain Monte Carlo estimate of the same tail event (zero tilt)."""
    return tilted_estimate(model, n, x, 0.0, cfg)
