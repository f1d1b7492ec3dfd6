"""Death-rate models for pure death processes that come down from infinity.

A model assigns a positive death rate lambda_n to every population size
n >= 2 (state 1 is absorbing).  The process jumps n -> n-1 after an
Exp(lambda_n) holding time.  Everything downstream (tail sums, speed of
descent, samplers, rate functions) consumes these models through a small
surface: ``rate``/``rates`` for the jump rates, ``tail_mean`` when the mean
descent time from infinity to n is available in closed form, and
``tail_mean_bound`` for certified upper bounds on neglected tails.

Summability of 1/lambda_n is what makes descent from infinity finite; all
built-in presets satisfy it by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "ModelKind",
    "RateModel",
    "rate",
    "rates",
    "tail_mean",
    "tail_mean_bound",
    "kingman",
    "triple_merge",
    "regularly_varying",
    "from_tail_means",
    "custom",
    "preset",
    "PRESET_NAMES",
]


class ModelKind(enum.Enum):
    KINGMAN = "kingman"
    TRIPLE_MERGE = "triplemerge"
    REG_VARYING = "regvarying"
    FROM_TAIL_MEANS = "fromtailmeans"
    CUSTOM = "custom"


# Condition identifiers used in diagnostics and preset metadata.  Each names a
# summability / ratio condition on the rate sequence:
#   c1     sum of 1/lambda_i converges (descent from infinity)
#   c2     lambda_n / lambda_{n+1} -> alpha in [0, 1)   (fast decay)
#   a1     lambda_n / lambda_{n+1} -> 1                 (slow decay)
#   a11    A_{floor(nx)} = o(A_n) for x > 1
#   Rxr    limsup A_{floor(nx)} / A_n < 1 for x > 1
#   BoA    1/lambda_n = o(A_n), equivalently B_n = o(A_n)
#   cond1  sum of (lambda_{i+1} A_i)^{-2} converges
#   cond1e sum of (lambda_{i+1} A_{floor(i(1-eps))})^{-2} converges
#   cond2  C_n = o(B_n)
# where A_n, B_n^2, C_n^3 are the tail sums of 1/lambda, 1/lambda^2,
# 1/lambda^3 beyond n.
CONDITION_IDS = ("c1", "c2", "a1", "a11", "Rxr", "BoA", "cond1", "cond1e", "cond2")


def _quiet_rule(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    if getattr(fn, "_quiet_rule", False):
        return fn

    def wrapped(arr: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return fn(arr)

    wrapped._quiet_rule = True
    return wrapped


@dataclass(frozen=True, eq=False)
class RateModel:
    """Immutable description of a pure death process via its rates.

    ``rate_rule`` maps an array of indices (as floats) to rates; it must be
    positive on n >= 2.  ``tail_rule``, when given, returns the exact tail
    mean A_n = sum_{i>n} 1/lambda_i for n >= 1 and must be strictly
    decreasing and positive.  ``tail_bound_rule`` maps N to a certified upper
    bound on A_N for models without an exact tail rule.
    """

    kind: ModelKind
    rate_rule: Callable[[np.ndarray], np.ndarray]
    tail_rule: Callable[[np.ndarray], np.ndarray] | None = None
    tail_bound_rule: Callable[[int], float] | None = None
    beta: float | None = None          # regular-variation index of the rates, when known
    alpha: float | None = None         # limit of lambda_n/lambda_{n+1}, when known and < 1
    label: str = ""
    params: Mapping[str, float] = field(default_factory=dict)
    known_conditions: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        bad = set(self.known_conditions) - set(CONDITION_IDS)
        if bad:
            raise ValueError(f"unknown condition ids: {sorted(bad)}")
        # out-of-range rule values (overflow to inf, underflow to 0) carry
        # meaning downstream; keep their evaluation warning-free everywhere
        object.__setattr__(self, "rate_rule", _quiet_rule(self.rate_rule))
        if self.tail_rule is not None:
            object.__setattr__(self, "tail_rule", _quiet_rule(self.tail_rule))

    def __repr__(self) -> str:  # params dict kept short on purpose
        ps = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"RateModel({self.label or self.kind.value}{', ' + ps if ps else ''})"


def rate(model: RateModel, n: int) -> float:
    """Death rate at population size n (n >= 2)."""
    if n < 2:
        raise ValueError(f"rates are defined for n >= 2, got n={n}")
    with np.errstate(over="ignore", divide="ignore"):
        return float(model.rate_rule(np.asarray([float(n)]))[0])


def rates(model: RateModel, lo: int, hi: int) -> np.ndarray:
    """Vector of rates lambda_lo..lambda_hi (inclusive)."""
    if lo < 2 or hi < lo:
        raise ValueError(f"need 2 <= lo <= hi, got lo={lo}, hi={hi}")
    out = _rates_cached(model, int(lo), int(hi))
    return out


@lru_cache(maxsize=32)
def _rates_cached(model: RateModel, lo: int, hi: int) -> np.ndarray:
    # RateModel is frozen with identity hash, so caching on it is sound.
    idx = np.arange(lo, hi + 1, dtype=np.float64)
    with np.errstate(over="ignore", divide="ignore"):
        # an over/underflowed rate reads as an instantaneous step: 1/inf = 0
        lam = np.asarray(model.rate_rule(idx), dtype=np.float64)
    if lam.shape != idx.shape:
        raise ValueError("rate_rule must return one rate per index")
    if not np.all(lam > 0.0):
        k = int(idx[np.argmax(~(lam > 0.0))])
        raise ValueError(f"rate_rule produced a non-positive rate at n={k}")
    lam.setflags(write=False)
    return lam


def tail_mean(model: RateModel, n: int) -> float | None:
    """Exact A_n = sum_{i>n} 1/lambda_i when the model carries a closed form."""
    if model.tail_rule is None:
        return None
    if n < 1:
        raise ValueError(f"tail means are defined for n >= 1, got n={n}")
    a = float(model.tail_rule(np.asarray([float(n)]))[0])
    if not (a > 0.0 and math.isfinite(a)):
        raise ValueError(f"tail rule produced a non-positive or non-finite A_{n}={a}")
    return a


def tail_mean_bound(model: RateModel, n: int) -> float | None:
    """Certified upper bound on A_n for models without an exact tail rule."""
    exact = tail_mean(model, n)
    if exact is not None:
        return exact
    if model.tail_bound_rule is None:
        return None
    return float(model.tail_bound_rule(int(n)))


# ---------------------------------------------------------------------------
# constructors


def kingman() -> RateModel:
    """Pairwise-merge rates lambda_n = n(n-1)/2.

    The tail mean telescopes: 1/lambda_i = 2(1/(i-1) - 1/i), so A_n = 2/n
    exactly.
    """
    return RateModel(
        kind=ModelKind.KINGMAN,
        rate_rule=lambda i: i * (i - 1.0) / 2.0,
        tail_rule=lambda n: 2.0 / n,
        beta=2.0,
        label="kingman",
        known_conditions={
            "c1": True, "a1": True, "Rxr": True, "a11": False,
            "BoA": True, "cond1": True, "cond1e": True, "cond2": True,
            "c2": False,
        },
    )


def _triple_merge_rates(i: np.ndarray) -> np.ndarray:
    # number of 3-subsets of 2i items
    return 2.0 * i * (2.0 * i - 1.0) * (2.0 * i - 2.0) / 6.0


def triple_merge() -> RateModel:
    """Triple-merge rates lambda_n = binom(2n, 3).

    Half the lineage count of a coalescent in which three lineages merge at a
    time.  The rates grow like (4/3) n^3, so the regular-variation index is 3
    and A_n ~ (3/8) n^{-2}.  Certified tail bound: lambda_i >= (4/3)(i-1)^3
    for i >= 2, hence A_N <= (3/8)(N-1)^{-2}.
    """
    return RateModel(
        kind=ModelKind.TRIPLE_MERGE,
        rate_rule=_triple_merge_rates,
        tail_bound_rule=lambda N: 0.375 / (N - 1.0) ** 2,
        beta=3.0,
        label="triplemerge",
        known_conditions={
            "c1": True, "a1": True, "Rxr": True, "a11": False,
            "BoA": True, "cond1": True, "cond1e": True, "cond2": True,
            "c2": False,
        },
    )


def regularly_varying(beta: float, slow_factor: Callable[[np.ndarray], np.ndarray] | None = None,
                      label: str = "") -> RateModel:
    """Rates lambda_n = n^beta L(n) with beta > 1 and a positive slow factor L.

    ``slow_factor`` must accept real (float) arguments; the default is
    L(n) = 1.  Summability of 1/lambda requires beta > 1.
    """
    if not beta > 1.0:
        raise ValueError(f"regular variation needs beta > 1, got beta={beta}")
    L = slow_factor if slow_factor is not None else (lambda i: np.ones_like(i))

    def rule(i: np.ndarray) -> np.ndarray:
        return i**beta * np.asarray(L(i), dtype=np.float64)

    return RateModel(
        kind=ModelKind.REG_VARYING,
        rate_rule=rule,
        beta=float(beta),
        label=label or f"regvarying(beta={beta:g})",
        params={"beta": float(beta)},
        known_conditions={"c1": True, "a1": True, "Rxr": True, "BoA": True,
                          "cond1": True, "cond1e": True, "cond2": True},
    )


def from_tail_means(tail_rule: Callable[[np.ndarray], np.ndarray], label: str = "",
                    **meta) -> RateModel:
    """Model defined by its exact tail means A_n (n >= 1).

    Rates come from consecutive differences: lambda_n = 1/(A_{n-1} - A_n).
    The rule must be strictly decreasing and positive; this is checked on
    every queried range.  Generic differences lose roughly
    eps * A_n / (A_{n-1} - A_n) relative accuracy to cancellation; presets
    ship dedicated difference formulas instead.
    """

    def rule(i: np.ndarray) -> np.ndarray:
        a_prev = np.asarray(tail_rule(i - 1.0), dtype=np.float64)
        a_here = np.asarray(tail_rule(i), dtype=np.float64)
        gap = a_prev - a_here
        if not (np.all(gap > 0.0) and np.all(a_here > 0.0)):
            raise ValueError("tail rule must be strictly decreasing and positive")
        return 1.0 / gap

    return RateModel(
        kind=ModelKind.FROM_TAIL_MEANS,
        rate_rule=rule,
        tail_rule=tail_rule,
        label=label or "fromtailmeans",
        **meta,
    )


def custom(rate_rule: Callable[[np.ndarray], np.ndarray], label: str = "",
           tail_bound_rule: Callable[[int], float] | None = None) -> RateModel:
    """Model from a user rate rule; no analytic tail information assumed."""
    return RateModel(
        kind=ModelKind.CUSTOM,
        rate_rule=rate_rule,
        tail_bound_rule=tail_bound_rule,
        label=label or "custom",
    )


# ---------------------------------------------------------------------------
# presets
#
# Each preset fixes the exact tail means A_n together with a cancellation-free
# difference formula for the rates.  Arguments of the log-based families are
# shifted by one index so that A_1 is finite and the sequence is strictly
# decreasing from n = 1 on; the shift changes no asymptotics.


def _logpow(a: float) -> RateModel:
    # A_n = (log(n+1))^{-a}
    if not a > 0.0:
        raise ValueError(f"logpow needs a > 0, got a={a}")

    def tail(n: np.ndarray) -> np.ndarray:
        return np.log(n + 1.0) ** (-a)

    def rule(i: np.ndarray) -> np.ndarray:
        # A_{i-1} - A_i = (log i)^{-a} * (1 - (log i / log(i+1))^a), all via log1p/expm1
        li = np.log(i)
        ratio_log = np.log1p(-np.log1p(1.0 / i) / np.log(i + 1.0))  # log(log i / log(i+1))
        gap = li ** (-a) * (-np.expm1(a * ratio_log))
        return 1.0 / gap

    return RateModel(
        kind=ModelKind.FROM_TAIL_MEANS, rate_rule=rule, tail_rule=tail,
        label=f"logpow(a={a:g})", params={"a": float(a)},
        known_conditions={"c1": True, "a1": True, "BoA": True, "cond1": True,
                          "cond2": True, "Rxr": False, "a11": False, "c2": False},
    )


def _polytail(c: float, beta: float) -> RateModel:
    # A_n = c * n^{1-beta}
    if not (c > 0.0 and beta > 1.0):
        raise ValueError(f"polytail needs c > 0 and beta > 1, got c={c}, beta={beta}")

    def tail(n: np.ndarray) -> np.ndarray:
        return c * n ** (1.0 - beta)

    def rule(i: np.ndarray) -> np.ndarray:
        # (i-1)^{1-beta} - i^{1-beta} = i^{1-beta} * expm1((1-beta) log1p(-1/i))
        gap = c * i ** (1.0 - beta) * np.expm1((1.0 - beta) * np.log1p(-1.0 / i))
        return 1.0 / gap

    return RateModel(
        kind=ModelKind.FROM_TAIL_MEANS, rate_rule=rule, tail_rule=tail,
        beta=float(beta), label=f"polytail(c={c:g}, beta={beta:g})",
        params={"c": float(c), "beta": float(beta)},
        known_conditions={"c1": True, "a1": True, "Rxr": True, "a11": False,
                          "BoA": True, "cond1": True, "cond1e": True, "cond2": True,
                          "c2": False},
    )


def _stretched(rho: float) -> RateModel:
    # A_n = exp(-n^rho), 0 < rho < 1
    if not 0.0 < rho < 1.0:
        raise ValueError(f"stretched needs 0 < rho < 1, got rho={rho}")

    def tail(n: np.ndarray) -> np.ndarray:
        return np.exp(-(n**rho))

    def rule(i: np.ndarray) -> np.ndarray:
        # A_{i-1} - A_i = A_i * expm1(i^rho - (i-1)^rho)
        inc = -(i**rho) * np.expm1(rho * np.log1p(-1.0 / i))  # i^rho - (i-1)^rho
        gap = np.exp(-(i**rho)) * np.expm1(inc)
        return 1.0 / gap

    known = {"c1": True, "a1": True, "a11": True, "Rxr": True, "BoA": True,
             "cond1e": True, "c2": False}
    # summability of (lambda_{i+1} A_i)^{-2} ~ i^{2 rho - 2} fails iff rho >= 1/2
    known["cond1"] = rho < 0.5
    return RateModel(
        kind=ModelKind.FROM_TAIL_MEANS, rate_rule=rule, tail_rule=tail,
        label=f"stretched(rho={rho:g})", params={"rho": float(rho)},
        known_conditions=known,
    )


def _loglog() -> RateModel:
    # A_n = exp(-n / log(n+1)); n/log(n+1) is strictly increasing on n >= 1
    def tail(n: np.ndarray) -> np.ndarray:
        return np.exp(-n / np.log(n + 1.0))

    def rule(i: np.ndarray) -> np.ndarray:
        l1 = np.log(i + 1.0)
        l0 = np.log(i)
        inc = (l1 - i * np.log1p(1.0 / i)) / (l0 * l1)  # g(i) - g(i-1), g(n) = n/log(n+1)
        gap = np.exp(-i / l1) * np.expm1(inc)
        return 1.0 / gap

    return RateModel(
        kind=ModelKind.FROM_TAIL_MEANS, rate_rule=rule, tail_rule=tail,
        label="loglog",
        known_conditions={"c1": True, "a1": True, "a11": True, "Rxr": True,
                          "cond1e": True, "cond1": False, "c2": False},
    )


def _geometric() -> RateModel:
    # A_n = exp(-n); lambda_n = e^n / (e - 1) exactly
    e1 = math.e - 1.0

    def tail(n: np.ndarray) -> np.ndarray:
        return np.exp(-n)

    def rule(i: np.ndarray) -> np.ndarray:
        return np.exp(i) / e1

    return RateModel(
        kind=ModelKind.FROM_TAIL_MEANS, rate_rule=rule, tail_rule=tail,
        alpha=math.exp(-1.0), label="geometric", params={"alpha": math.exp(-1.0)},
        known_conditions={"c1": True, "c2": True, "a1": False, "a11": True,
                          "Rxr": True, "BoA": False, "cond1": False,
                          "cond1e": True, "cond2": False},
    )


_PRESETS: dict[str, Callable[..., RateModel]] = {
    "kingman": lambda: kingman(),
    "triplemerge": lambda: triple_merge(),
    "logpow": _logpow,
    "polytail": _polytail,
    "stretched": _stretched,
    "loglog": lambda: _loglog(),
    "geometric": lambda: _geometric(),
}

PRESET_NAMES = tuple(sorted(_PRESETS))

_PRESET_PARAMS: dict[str, tuple[str, ...]] = {
    "kingman": (), "triplemerge": (), "logpow": ("a",),
    "polytail": ("c", "beta"), "stretched": ("rho",), "loglog": (), "geometric": (),
}


def preset(name: str, **params: float) -> RateModel:
    """Build a named preset model.

    Names: kingman, triplemerge, logpow(a), polytail(c, beta), stretched(rho),
    loglog, geometric.  Requesting polytail with beta = 2 through the
    ``triplemerge`` alias yields the exact binom(2n, 3) rates.
    """
    key = name.strip().lower().replace("-", "").replace("_", "")
    if key not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    wanted = _PRESET_PARAMS[key]
    extra = set(params) - set(wanted)
    if extra:
        raise ValueError(f"preset {name!r} does not take parameters {sorted(extra)}")
    missing = set(wanted) - set(params)
    if missing:
        raise ValueError(f"preset {name!r} needs parameters {sorted(missing)}")
    return _PRESETS[key](**params)
