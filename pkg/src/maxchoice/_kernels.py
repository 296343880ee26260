"""Compiled inner loops for tree growth.

Scalar tree state travels in a small int64 array ``scal`` so the kernels can
mutate it in place; the slot layout is given by the ``S_*`` constants.
"""

import numba as nb
import numpy as np

S_N = 0             # number of edges n
S_MAX = 1           # M(n)
S_LEADERS = 2       # L(n)
S_LEADER = 3        # current leader id
S_CHANGES = 4       # number of leader identity changes so far
S_LAST_CHANGE = 5   # step index n at which the last change happened
S_SIZE = 6


@nb.njit(nogil=True, cache=True)
def draw_d(rng, d_values, d_cdf):
    if d_values.size == 1:
        return d_values[0]
    return d_values[np.searchsorted(d_cdf, rng.random(), side="right")]


@nb.njit(nogil=True, cache=True)
def draw_vertex(rng, degrees, endpoints, n, beta):
    """One vertex with probability (deg + beta) / ((2 + beta) n + beta)."""
    two_n = 2 * n
    if beta >= 0.0:
        # mixture: endpoint array (mass 2n) + uniform vertex (mass beta (n + 1))
        u = rng.random() * ((2.0 + beta) * n + beta)
        if u < two_n:
            return endpoints[int(u)]
        v = int((u - two_n) / beta)
        return v if v <= n else n
    while True:
        v = endpoints[int(rng.random() * two_n)]
        deg = degrees[v]
        if rng.random() * deg < deg + beta:
            return v


@nb.njit(nogil=True, cache=True)
def choose(rng, degrees, endpoints, n, beta, d_values, d_cdf):
    """Sample d vertices and keep one of maximal degree, uniform among ties.

    Returns (vertex, its degree, d, number of draws attaining the max).
    """
    d = draw_d(rng, d_values, d_cdf)
    best = -1
    best_deg = -1
    ties = 0
    for _ in range(d):
        v = draw_vertex(rng, degrees, endpoints, n, beta)
        dv = degrees[v]
        if dv > best_deg:
            best = v
            best_deg = dv
            ties = 1
        elif dv == best_deg:
            ties += 1
            if rng.random() * ties < 1.0:
                best = v
    return best, best_deg, d, ties


@nb.njit(nogil=True, cache=True)
def apply(degrees, endpoints, counts, scal, y):
    n = scal[S_N]
    new = n + 1
    dy = degrees[y]
    degrees[y] = dy + 1
    degrees[new] = 1
    endpoints[2 * n] = y
    endpoints[2 * n + 1] = new
    counts[dy] -= 1
    counts[dy + 1] += 1
    counts[1] += 1
    n += 1
    scal[S_N] = n
    if dy + 1 > scal[S_MAX]:
        scal[S_MAX] = dy + 1
        scal[S_LEADERS] = 1
        if y != scal[S_LEADER]:
            scal[S_LEADER] = y
            scal[S_CHANGES] += 1
            scal[S_LAST_CHANGE] = n
    elif dy + 1 == scal[S_MAX]:
        scal[S_LEADERS] += 1


@nb.njit(nogil=True, cache=True)
def step_once(rng, degrees, endpoints, counts, scal, beta, d_values, d_cdf):
    y, dy, d, ties = choose(rng, degrees, endpoints, scal[S_N], beta, d_values, d_cdf)
    apply(degrees, endpoints, counts, scal, y)
    return y, dy, d, ties


@nb.njit(nogil=True, cache=True)
def grow(rng, degrees, endpoints, counts, scal, beta, d_values, d_cdf, target):
    while scal[S_N] < target:
        y, _, _, _ = choose(rng, degrees, endpoints, scal[S_N], beta, d_values, d_cdf)
        apply(degrees, endpoints, counts, scal, y)


@nb.njit(nogil=True, cache=True)
def sample_choices(rng, degrees, endpoints, n, beta, d_values, d_cdf, trials, out):
    """Histogram of ``trials`` independent choices from a frozen tree into ``out``."""
    for _ in range(trials):
        y, _, _, _ = choose(rng, degrees, endpoints, n, beta, d_values, d_cdf)
        out[y] += 1


@nb.njit(nogil=True, cache=True)
def sample_vertices(rng, degrees, endpoints, n, beta, trials, out):
    for _ in range(trials):
        out[draw_vertex(rng, degrees, endpoints, n, beta)] += 1
