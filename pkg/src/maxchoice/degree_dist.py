"""Law of the number of choices ``d`` drawn at every growth step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass(frozen=True, eq=False)
class ChoiceDistribution:
    """Distribution of ``d`` on the positive integers.

    Build instances with :func:`point_mass`, :func:`table` or :func:`poisson`
    rather than calling the constructor directly.  ``values`` is strictly
    increasing, ``probs`` sums to one.
    """

    kind: str
    values: np.ndarray
    probs: np.ndarray
    lam: float | None = None
    truncation_mass: float | None = None
    cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ValueError("support values and probabilities must be equal-length 1-d sequences")
        if np.any(values < 1):
            raise ValueError("d takes values in the positive integers")
        if np.any(np.diff(values) <= 0):
            raise ValueError("support values must be strictly increasing")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ValueError("probabilities must lie in (0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        values.setflags(write=False)
        probs.setflags(write=False)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "cdf", cdf)

    @property
    def max_value(self) -> int:
        return int(self.values[-1])

    @property
    def support(self) -> list[tuple[int, float]]:
        return [(int(v), float(p)) for v, p in zip(self.values, self.probs)]

    def pgf(self, s):
        """E[s^d], vectorised over ``s``."""
        s = np.asarray(s, dtype=np.float64)
        return np.sum(self.probs * np.power.outer(s, self.values), axis=-1)

    def pgf_prime(self, s):
        """Derivative of the generating function, E[d s^(d-1)]."""
        s = np.asarray(s, dtype=np.float64)
        return np.sum(self.probs * self.values * np.power.outer(s, self.values - 1), axis=-1)

    def to_config(self) -> dict:
        if self.kind == "poisson":
            return {"kind": "poisson", "lambda": self.lam, "truncation": self.truncation_mass}
        return {"kind": "table", "support": [list(t) for t in self.support]}


def point_mass(value: int) -> ChoiceDistribution:
    return ChoiceDistribution("table", np.array([value]), np.array([1.0]))


def table(support) -> ChoiceDistribution:
    """Finite distribution from ``{value: prob}`` or ``[(value, prob), ...]``.

    Pairs are sorted by value; probabilities must already sum to one.
    """
    items = sorted(support.items() if isinstance(support, dict) else support)
    values = np.array([int(v) for v, _ in items], dtype=np.int64)
    probs = np.array([float(p) for _, p in items], dtype=np.float64)
    return ChoiceDistribution("table", values, probs)


def poisson(lam: float, truncation: float = 1e-12) -> ChoiceDistribution:
    """Poisson(lam) conditioned on ``d >= 1``.

    The support is cut at the first ``K`` whose conditional tail mass
    ``P(d > K | d >= 1)`` drops below ``truncation``; the kept masses are
    then renormalised.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 < truncation < 1:
        raise ValueError("truncation mass must lie in (0, 1)")
    p_pos = -math.expm1(-lam)
    k = max(1, int(math.ceil(lam)))
    while stats.poisson.sf(k, lam) / p_pos >= truncation:
        k += 1
    values = np.arange(1, k + 1, dtype=np.int64)
    probs = stats.poisson.pmf(values, lam)
    probs = probs / probs.sum()
    keep = probs > 0
    return ChoiceDistribution("poisson", values[keep], probs[keep] / probs[keep].sum(),
                              lam=float(lam), truncation_mass=float(truncation))


def from_config(spec) -> ChoiceDistribution:
    """Parse the ``d`` entry of a config file.

    Accepts a bare integer (point mass), ``{kind="table", support=[[v, p], ...]}``
    or ``{kind="poisson", lambda=..., truncation=...}``.
    """
    if isinstance(spec, int) and not isinstance(spec, bool):
        return point_mass(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"cannot interpret choice distribution {spec!r}")
    kind = spec["kind"]
    if kind == "table":
        return table([(v, p) for v, p in spec["support"]])
    if kind == "poisson":
        return poisson(float(spec["lambda"]), float(spec.get("truncation", 1e-12)))
    raise ValueError(f"unknown distribution kind {kind!r}")


def mean(dist: ChoiceDistribution) -> float:
    return float(np.dot(dist.values, dist.probs))


def binomial_moments(dist: ChoiceDistribution, j_max: int) -> np.ndarray:
    """Array ``m[0..j_max]`` with ``m[j] = E C(d, j)`` (so ``m[0] == 1``).

    Binomial coefficients come from the ratio recurrence
    ``C(i, j) = C(i, j-1) (i - j + 1) / j`` which never forms factorials.
    """
    if j_max < 0:
        raise ValueError("j_max must be non-negative")
    i = dist.values.astype(np.float64)
    coef = np.ones_like(i)
    out = np.empty(j_max + 1)
    out[0] = 1.0
    for j in range(1, j_max + 1):
        coef = coef * np.maximum(i - j + 1, 0.0) / j
        out[j] = float(np.dot(dist.probs, coef))
    return out


def binomial_moment(dist: ChoiceDistribution, j: int) -> float:
    if j < 1:
        raise ValueError("j must be a positive integer")
    return float(binomial_moments(dist, j)[j])


def growth_check(dist: ChoiceDistribution, C: float, j_max: int) -> bool:
    """True iff ``m_j < C**j`` for every ``1 <= j <= j_max``."""
    if C <= 0 or j_max < 1:
        raise ValueError("need C > 0 and j_max >= 1")
    m = binomial_moments(dist, j_max)[1:]
    j = np.arange(1, j_max + 1)
    with np.errstate(over="ignore"):
        bound = np.power(float(C), j)
    return bool(np.all(m < bound))


def sample_d(dist: ChoiceDistribution, rng: np.random.Generator, size=None):
    """Inverse-CDF draw(s) from the cumulative table."""
    u = rng.random(size)
    idx = np.searchsorted(dist.cdf, u, side="right")
    idx = np.minimum(idx, dist.values.size - 1)
    if size is None:
        return int(dist.values[idx])
    return dist.values[idx]
