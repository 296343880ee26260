"""The max-choice Mori tree: state, growth, and exact one-step laws."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .degree_dist import ChoiceDistribution

MAX_HORIZON = 10**8
ENUMERATION_MAX_VERTICES = 12
ENUMERATION_MAX_D = 6


@dataclass(frozen=True, eq=False)
class ModelParams:
    beta: float
    d: ChoiceDistribution

    def __post_init__(self):
        beta = float(self.beta)
        if not beta > -1.0:
            raise ValueError(f"beta must be > -1, got {beta}")
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class StepOutcome:
    chosen_vertex: int
    chosen_degree: int
    sampled_count: int
    tie_occurred: bool


class TreeState:
    """Degrees, endpoint array and running maxima of a growing tree.

    Vertex ``v_i`` has id ``i - 1``.  Storage is preallocated for
    ``capacity`` edges and grows by doubling when :func:`step` needs room.
    ``degree_counts[k]`` is ``N_k(n)`` for every ``k <= max_degree``.
    """

    def __init__(self, capacity: int = 16):
        capacity = max(int(capacity), 1)
        self.degrees = np.zeros(capacity + 2, dtype=np.int32)
        self.endpoints = np.zeros(2 * capacity + 2, dtype=np.int32)
        self.counts = np.zeros(capacity + 3, dtype=np.int64)
        self.scal = np.zeros(K.S_SIZE, dtype=np.int64)

    @property
    def capacity(self) -> int:
        return self.degrees.size - 2

    def reserve(self, n_edges: int):
        if n_edges <= self.capacity:
            return
        if n_edges > MAX_HORIZON:
            raise MemoryError(f"horizon {n_edges} exceeds the supported {MAX_HORIZON} edges")
        for name, extra in (("degrees", 2), ("counts", 3)):
            old = getattr(self, name)
            new = np.zeros(n_edges + extra, dtype=old.dtype)
            new[:old.size] = old
            setattr(self, name, new)
        old = self.endpoints
        self.endpoints = np.zeros(2 * n_edges + 2, dtype=old.dtype)
        self.endpoints[:old.size] = old

    @property
    def n(self) -> int:
        return int(self.scal[K.S_N])

    @property
    def vertex_count(self) -> int:
        return self.n + 1

    @property
    def max_degree(self) -> int:
        return int(self.scal[K.S_MAX])

    @property
    def leader_count(self) -> int:
        return int(self.scal[K.S_LEADERS])

    @property
    def leader(self) -> int:
        """Vertex holding the lead: the most recent vertex to exceed all others."""
        return int(self.scal[K.S_LEADER])

    @property
    def leader_changes(self) -> int:
        return int(self.scal[K.S_CHANGES])

    @property
    def last_leader_change(self) -> int:
        return int(self.scal[K.S_LAST_CHANGE])

    @property
    def leader_ids(self) -> set[int]:
        return set(np.flatnonzero(self.vertex_degrees() == self.max_degree).tolist())

    def vertex_degrees(self) -> np.ndarray:
        return self.degrees[:self.vertex_count]

    def endpoint_array(self) -> np.ndarray:
        return self.endpoints[:2 * self.n]

    @property
    def degree_counts(self) -> np.ndarray:
        """``N_k(n)`` indexed by ``k`` for ``0 <= k <= max_degree`` (entry 0 is 0)."""
        return self.counts[:self.max_degree + 1]

    def total_weight(self, beta: float) -> float:
        return (2.0 + beta) * self.n + beta

    def copy(self) -> "TreeState":
        other = TreeState.__new__(TreeState)
        other.degrees = self.degrees.copy()
        other.endpoints = self.endpoints.copy()
        other.counts = self.counts.copy()
        other.scal = self.scal.copy()
        return other

    def validate(self):
        """Full rescan of every stored invariant; raises AssertionError on mismatch."""
        n = self.n
        deg = self.vertex_degrees()
        assert np.all(deg >= 1), "vertex of degree zero"
        assert int(deg.sum()) == 2 * n, "handshake violated"
        ep = self.endpoint_array()
        assert ep.size == 2 * n
        assert np.array_equal(np.bincount(ep, minlength=n + 1), deg), "endpoint array out of sync"
        m = int(deg.max())
        assert m == self.max_degree, "stale max degree"
        assert int(np.count_nonzero(deg == m)) == self.leader_count, "stale leader count"
        assert deg[self.leader] == m, "leader is not a maximiser"
        ref = np.bincount(deg, minlength=m + 1)
        assert np.array_equal(self.counts[:m + 1], ref), "degree counts out of sync"
        assert not self.counts[m + 1:].any()
        assert int(self.counts[:m + 1].sum()) == n + 1

    def snapshot_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vertex_id", "degree"])
            for v, deg in enumerate(self.vertex_degrees().tolist()):
                w.writerow([v, deg])


def init_tree(params: ModelParams | None = None, capacity: int = 16) -> TreeState:
    """The one-edge tree P_1."""
    state = TreeState(capacity)
    state.degrees[:2] = 1
    state.endpoints[:2] = (0, 1)
    state.counts[1] = 2
    state.scal[:] = 0
    state.scal[K.S_N] = 1
    state.scal[K.S_MAX] = 1
    state.scal[K.S_LEADERS] = 2
    state.scal[K.S_LEADER] = 0
    return state


def tree_from_degrees(degrees) -> TreeState:
    """Frozen state with the given degree sequence.

    Any sequence of ``n + 1`` positive integers summing to ``2n`` is the degree
    sequence of some tree, and every observable here depends on degrees only.
    """
    deg = np.asarray(degrees, dtype=np.int64)
    if deg.ndim != 1 or deg.size < 2 or np.any(deg < 1):
        raise ValueError("need at least two positive degrees")
    n = deg.size - 1
    if int(deg.sum()) != 2 * n:
        raise ValueError(f"degrees sum to {int(deg.sum())}, a tree on {n + 1} vertices needs {2 * n}")
    state = TreeState(n)
    state.degrees[:n + 1] = deg
    state.endpoints[:2 * n] = np.repeat(np.arange(n + 1), deg)
    m = int(deg.max())
    state.counts[:m + 1] = np.bincount(deg, minlength=m + 1)
    state.scal[K.S_N] = n
    state.scal[K.S_MAX] = m
    state.scal[K.S_LEADERS] = int(np.count_nonzero(deg == m))
    state.scal[K.S_LEADER] = int(np.argmax(deg))
    return state


def sample_attachment_vertex(state: TreeState, params: ModelParams, rng: np.random.Generator) -> int:
    return int(K.draw_vertex(rng, state.degrees, state.endpoints, state.n, params.beta))


def step(state: TreeState, params: ModelParams, rng: np.random.Generator):
    """Advance the tree by one edge in place; returns ``(state, StepOutcome)``."""
    if state.n + 1 > state.capacity:
        state.reserve(2 * state.capacity)
    y, dy, d, ties = K.step_once(rng, state.degrees, state.endpoints, state.counts, state.scal,
                                 params.beta, params.d.values, params.d.cdf)
    return state, StepOutcome(int(y), int(dy), int(d), bool(ties > 1))


def grow(state: TreeState, params: ModelParams, rng: np.random.Generator, target_n: int) -> TreeState:
    """Advance in place until the tree has ``target_n`` edges."""
    state.reserve(target_n)
    K.grow(rng, state.degrees, state.endpoints, state.counts, state.scal,
           params.beta, params.d.values, params.d.cdf, int(target_n))
    return state


def _mix_powers(dist: ChoiceDistribution, x):
    """E[x^d] for each entry of ``x``."""
    return dist.pgf(np.clip(x, 0.0, 1.0))


def choice_degree_distribution(state: TreeState, params: ModelParams) -> np.ndarray:
    """Exact conditional law of ``deg Y_n`` as an array indexed by degree.

    Entry ``k`` is ``sum_m P(d=m) (alpha_k^m - alpha_{k-1}^m)`` where
    ``alpha_k`` is the attachment weight carried by vertices of degree <= k.
    """
    m = state.max_degree
    counts = state.counts[:m + 1]
    if counts.size < m + 1 or int(counts.sum()) != state.vertex_count:
        raise ValueError("degree counts are not tracked up to the maximal degree")
    k = np.arange(m + 1)
    weights = counts * (k + params.beta)
    alpha = np.cumsum(weights) / state.total_weight(params.beta)
    alpha[-1] = 1.0
    powers = _mix_powers(params.d, alpha)
    out = np.diff(powers, prepend=0.0)
    out[0] = 0.0
    return out


def max_increase_probability(state: TreeState, params: ModelParams) -> float:
    """Probability that M(n) grows at the next step."""
    share = (state.max_degree + params.beta) * state.leader_count / state.total_weight(params.beta)
    return float(np.dot(params.d.probs, 1.0 - np.power(1.0 - min(share, 1.0), params.d.values)))


def vertex_increase_probabilities(state: TreeState, params: ModelParams) -> np.ndarray:
    """Probability that each vertex receives the next edge.

    A vertex of degree ``m`` wins when no draw lands above ``m`` and at least
    one lands on degree ``m``; ties are split by weight, which for equal
    degrees means equally.
    """
    beta = params.beta
    deg = state.vertex_degrees().astype(np.int64)
    m = state.max_degree
    total = state.total_weight(beta)
    k = np.arange(m + 1)
    level = state.counts[:m + 1] * (k + beta)               # B(k, n)
    above = np.concatenate([np.cumsum(level[::-1])[::-1][1:], [0.0]])   # A(k, n)
    alpha_above = _mix_powers(params.d, 1.0 - above / total)
    alpha_upto = _mix_powers(params.d, 1.0 - (above + level) / total)
    a = alpha_above - alpha_upto
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(level > 0, a / level, 0.0)
    return share[deg] * (deg + beta)


def vertex_increase_probability(state: TreeState, params: ModelParams, vertex: int) -> float:
    if not 0 <= vertex < state.vertex_count:
        raise IndexError(f"vertex {vertex} not in tree")
    return float(vertex_increase_probabilities(state, params)[vertex])


def enumerate_onestep(state: TreeState, params: ModelParams, d_cap: int = ENUMERATION_MAX_D) -> np.ndarray:
    """Brute-force one-step attachment law.

    Sums over every ordered tuple of sampled vertices for every ``d`` in the
    support and splits each tuple's probability evenly over the positions that
    attain the tuple's maximal degree.
    """
    nv = state.vertex_count
    dist = params.d
    if nv > ENUMERATION_MAX_VERTICES or dist.max_value > min(d_cap, ENUMERATION_MAX_D):
        raise ValueError(f"enumeration budget exceeded: {nv} vertices, d up to {dist.max_value}")
    deg = state.vertex_degrees().astype(np.float64)
    w = (deg + params.beta) / state.total_weight(params.beta)
    out = np.zeros(nv)
    for d, pd in zip(dist.values.tolist(), dist.probs.tolist()):
        tuples = np.indices((nv,) * d).reshape(d, -1).T
        prob = pd * np.prod(w[tuples], axis=1)
        tdeg = deg[tuples]
        winner = tdeg == tdeg.max(axis=1, keepdims=True)
        share = prob / winner.sum(axis=1)
        out += np.bincount(tuples[winner], weights=np.broadcast_to(share[:, None], winner.shape)[winner],
                           minlength=nv)
    return out


def enumerate_choice_degrees(state: TreeState, params: ModelParams, d_cap: int = ENUMERATION_MAX_D) -> np.ndarray:
    """:func:`enumerate_onestep` grouped by the winner's degree."""
    law = enumerate_onestep(state, params, d_cap)
    deg = state.vertex_degrees()
    return np.bincount(deg, weights=law, minlength=state.max_degree + 1)
