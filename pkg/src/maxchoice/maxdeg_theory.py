"""Closed-form predictions for the maximal degree M(n)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import degree_dist
from .graph_engine import ModelParams, TreeState

CRITICAL_TOL = 1e-9
SERIES_TOL = 1e-16


def bisect(fn, lo: float, hi: float, max_iter: int = 200) -> float:
    """Root of ``fn`` on ``[lo, hi]`` given ``fn(lo) > 0 > fn(hi)``.

    Runs until the bracket stops shrinking in floating point.
    """
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo > 0 and f_hi == 0:
        # root closer to hi than double precision resolves
        return hi
    if not (f_lo > 0 > f_hi):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = fn(mid)
        if f_mid > 0:
            lo = mid
        elif f_mid < 0:
            hi = mid
        else:
            return mid
    return lo if abs(fn(lo)) <= abs(fn(hi)) else hi


def _check_domain(x: float, params: ModelParams):
    if not 0.0 <= x <= 2.0 + params.beta:
        raise ValueError(f"x={x} outside [0, 2 + beta]")


def f_eval(x: float, params: ModelParams) -> float:
    """Probability of feeding the leader when it holds weight share ``x / (2 + beta)``."""
    _check_domain(x, params)
    s = 1.0 - x / (2.0 + params.beta)
    return float(np.dot(params.d.probs, -np.expm1(params.d.values * np.log(s)))) if s > 0 else 1.0


def f_series(x: float, params: ModelParams) -> float:
    """Same function via its binomial-moment power series.

    Terms are summed until they fall below ``SERIES_TOL`` (or the moments
    vanish past the largest support value).
    """
    _check_domain(x, params)
    z = x / (2.0 + params.beta)
    if z == 0.0:
        return 0.0
    j_max = params.d.max_value
    m = degree_dist.binomial_moments(params.d, j_max)
    total = 0.0
    term_scale = 1.0
    for j in range(1, j_max + 1):
        term_scale *= -z
        term = -term_scale * m[j]
        total += term
        if abs(term) < SERIES_TOL and j > 1:
            break
    return total


def f_both(x: float, params: ModelParams) -> tuple[float, float]:
    return f_eval(x, params), f_series(x, params)


def g_eval(x: float, params: ModelParams) -> float:
    _check_domain(x, params)
    if x == 0.0:
        return degree_dist.mean(params.d) / (2.0 + params.beta)
    return f_eval(x, params) / x


def solve_x_star(params: ModelParams) -> float:
    """Unique root of f(x) = x in (0, 1); only exists when E d > 2 + beta."""
    if degree_dist.mean(params.d) - (2.0 + params.beta) <= CRITICAL_TOL:
        raise ValueError("no positive fixed point: E d <= 2 + beta")
    # g is decreasing with g(0) > 1 > g(1); its crossing avoids the trivial root at 0
    return bisect(lambda x: g_eval(x, params) - 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    mean_d: float
    threshold: float
    exponent: float | None = None
    x_star: float | None = None
    critical_constant: float | None = None
    note: str = ""

    CSV_HEADER = "regime,mean_d,threshold,exponent,x_star,critical_constant"

    def csv_row(self) -> str:
        cells = [self.regime, self.mean_d, self.threshold, self.exponent, self.x_star, self.critical_constant]
        return ",".join("" if c is None else (c if isinstance(c, str) else repr(float(c))) for c in cells)

    def text(self) -> str:
        rows = [("regime", self.regime), ("E d", self.mean_d), ("2 + beta", self.threshold)]
        if self.exponent is not None:
            rows.append(("M(n) ~ n^exponent", self.exponent))
        if self.x_star is not None:
            rows.append(("M(n)/n -> x*", self.x_star))
        if self.critical_constant is not None:
            rows.append(("M(n) ln n / n ->", self.critical_constant))
        if self.note:
            rows.append(("note", self.note))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v if isinstance(v, str) else f'{v:.10g}'}" for k, v in rows)


def classify_regime(params: ModelParams) -> RegimeReport:
    dist = params.d
    mean_d = degree_dist.mean(dist)
    threshold = 2.0 + params.beta
    c_bound = 1.0 + float(dist.pgf(2.0)) if dist.max_value < 1000 else math.inf
    if not (math.isfinite(c_bound) and degree_dist.growth_check(dist, c_bound, 50)):
        warnings.warn("binomial moments may grow faster than C**j; predictions are unsupported",
                      stacklevel=2)
    gap = mean_d - threshold
    if abs(gap) <= CRITICAL_TOL:
        m2 = degree_dist.binomial_moment(dist, 2)
        return RegimeReport("critical", mean_d, threshold, critical_constant=threshold**2 / m2)
    if gap < 0:
        return RegimeReport("subcritical", mean_d, threshold, exponent=mean_d / threshold)
    note = "" if params.beta == 0 else "fixed point uses the 1 - x/(2 + beta) normalisation"
    return RegimeReport("supercritical", mean_d, threshold, x_star=solve_x_star(params), note=note)


@dataclass(frozen=True)
class ScalingTrackers:
    c: float
    q_value: float
    u_value: float


def scaling_values(state: TreeState | tuple[int, int], c: float) -> ScalingTrackers:
    """``exp(c n / M) / n`` and its reciprocal ``n exp(-c n / M)``.

    ``state`` may be a :class:`TreeState` or a plain ``(n, M)`` pair.
    """
    n, m = (state.n, state.max_degree) if isinstance(state, TreeState) else state
    if m < 1 or c <= 0:
        raise ValueError("need M(n) >= 1 and c > 0")
    # log form keeps both finite far longer than exp() would
    log_q = c * n / m - math.log(n)
    return ScalingTrackers(c, math.exp(min(log_q, 700.0)), math.exp(max(-log_q, -700.0)))


def lower_bound_exponent(beta: float) -> float:
    """Power in the a-priori lower bound M(n) >= A n^gamma."""
    return 1.0 / (4.0 * (2.0 + beta))
