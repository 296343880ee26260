"""Fixed point and Gaussian fluctuations of the degree fractions (N_1/n, ..., N_k/n).

Notation used throughout: ``w_j = (j + beta) / (2 + beta)`` is the attachment
weight of a degree-``j`` vertex per unit fraction, ``S_j = sum_{l<=j} x_l w_l``
the weight share of degrees ``<= j`` and ``Phi(s) = E[s^d]``.  A vertex of
degree ``j`` wins the next edge with probability ``h_j = Phi(S_j) - Phi(S_{j-1})``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_engine import ModelParams, TreeState
from .maxdeg_theory import bisect

DOMAIN_TOL = 1e-12
GAMMA_STAR = 1.0


def _weights(k: int, beta: float) -> np.ndarray:
    return (np.arange(1, k + 1) + beta) / (2.0 + beta)


def _shares(x, params: ModelParams) -> np.ndarray:
    """``S_0, S_1, ..., S_k`` for the prefix vector ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x) & (x >= 0)):
        raise ValueError("fractions must be finite and non-negative")
    s = np.concatenate([[0.0], np.cumsum(x * _weights(x.size, params.beta))])
    if s[-1] > 1.0 + DOMAIN_TOL:
        raise ValueError(f"weight share S_k = {s[-1]!r} exceeds 1")
    return np.minimum(s, 1.0)


def _h_all(x, params: ModelParams) -> np.ndarray:
    """``h_0, ..., h_k`` at ``x``."""
    phi = params.d.pgf(_shares(x, params))
    h = np.diff(phi)
    return np.concatenate([[1.0], h])


def h_eval(j: int, x, params: ModelParams) -> float:
    """Limiting probability that the chosen vertex has degree ``j``."""
    if j < 0:
        raise ValueError("j must be non-negative")
    if j == 0:
        return 1.0
    x = np.asarray(x, dtype=np.float64)
    if x.size < j:
        raise ValueError(f"need at least {j} fractions, got {x.size}")
    return float(_h_all(x[:j], params)[j])


def f_vec_eval(x, params: ModelParams) -> np.ndarray:
    """Expected one-step change of each count N_l, l = 1..k."""
    h = _h_all(x, params)
    return h[:-1] - h[1:]


def g_vec_eval(x, params: ModelParams) -> np.ndarray:
    return f_vec_eval(x, params) - np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class DegreeFixedPoint:
    k: int
    values: np.ndarray
    residuals: np.ndarray


def solve_rho_star(k: int, params: ModelParams) -> DegreeFixedPoint:
    """Limit of the degree fractions, solved one coordinate at a time.

    Given the first ``l - 1`` coordinates, component ``l`` of G decreases
    strictly in ``x_l``; it is positive at 0 and negative once ``S_l`` hits 1,
    so bisection on that bracket is safe.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.zeros(k)
    w = _weights(k, params.beta)
    s_prev = 0.0
    for l in range(k):
        hi = (1.0 - s_prev) / w[l]

        def comp(t, l=l):
            x[l] = t
            return g_vec_eval(x[:l + 1], params)[l]

        if comp(0.0) <= 0.0:
            # h_{l-1} underflowed: the true root is below the smallest double
            x[l] = 0.0
            continue
        x[l] = bisect(comp, 0.0, hi * (1.0 - 1e-15))
        s_prev += x[l] * w[l]
    values = x.copy()
    values.setflags(write=False)
    return DegreeFixedPoint(k, values, np.abs(g_vec_eval(values, params)))


def stationary_choice_law(rho, params: ModelParams) -> np.ndarray:
    """``q_j = h_j(rho)``: limiting law of the winner's degree, j = 1..k."""
    return _h_all(rho, params)[1:]


def jacobian_G(rho, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobian of G at ``rho`` and its eigenvalues (the diagonal)."""
    rho = np.asarray(rho, dtype=np.float64)
    k = rho.size
    w = _weights(k, params.beta)
    dphi = params.d.pgf_prime(_shares(rho, params))       # Phi'(S_0..S_k)
    # dh[i, j] = d h_i / d x_j for i = 0..k, j = 1..k (column j-1)
    dh = np.zeros((k + 1, k))
    for i in range(1, k + 1):
        dh[i, :i] = w[:i] * (dphi[i] - dphi[i - 1])
        dh[i, i - 1] = w[i - 1] * dphi[i]
    jac = dh[:-1] - dh[1:] - np.eye(k)
    return jac, np.diag(jac).copy()


def increment_moments(q) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and raw second moments of the count increments.

    ``q[j-1]`` is the probability that the winner has degree ``j``.  A winner of
    degree 1 moves one vertex from degree 1 to 2 (N_1 unchanged); a winner of
    degree ``j > 1`` adds a leaf to N_1 and moves one vertex from ``j`` to ``j + 1``.
    """
    q = np.asarray(q, dtype=np.float64)
    k = q.size
    q_ext = np.concatenate([[0.0], q])              # q_ext[j] = P(deg = j), q_ext[0] unused
    mu = np.empty(k)
    mu[0] = 1.0 - q[0]
    mu[1:] = q_ext[1:k] - q_ext[2:k + 1]
    second = np.zeros((k, k))
    second[0, 0] = 1.0 - q[0]
    if k >= 2:
        second[0, 1] = second[1, 0] = -q[1]
    for j in range(3, k + 1):
        second[0, j - 1] = second[j - 1, 0] = q_ext[j - 1] - q_ext[j]
    for i in range(2, k + 1):
        second[i - 1, i - 1] = q_ext[i - 1] + q_ext[i]
        if i < k:
            second[i - 1, i] = second[i, i - 1] = -q_ext[i]
    return mu, second


def noise_covariance(rho, params: ModelParams) -> np.ndarray:
    """Conditional covariance of the count increments when the fractions equal ``rho``.

    Entries are written in closed form rather than as ``E[XY] - E[X]E[Y]`` so
    that the tiny high-degree entries keep their relative precision.
    """
    q = stationary_choice_law(rho, params)
    mu, second = increment_moments(q)
    u = second - np.outer(mu, mu)
    k = q.size
    u[0, 0] = q[0] * (1.0 - q[0])
    u[0, 2:] = u[2:, 0] = q[0] * mu[2:]
    return u


def _stable_system(jacobian, gamma_star):
    jacobian = np.asarray(jacobian, dtype=np.float64)
    a = np.eye(jacobian.shape[0]) + 2.0 * gamma_star * jacobian
    if np.any(np.linalg.eigvals(a).real >= 0):
        raise np.linalg.LinAlgError("I + 2 gamma J is not stable; rho and params are inconsistent")
    return a


def limit_covariance(jacobian, noise, gamma_star: float = GAMMA_STAR) -> np.ndarray:
    """Solve ``V A^t + A V = -2 gamma U`` with ``A = I + 2 gamma J``.

    ``A`` is lower triangular, so entry ``(i, j)`` only depends on entries with
    smaller indices and the system unrolls into forward substitution.  This
    keeps relative precision in the tiny high-degree entries, which a dense
    solve of the k^2 system loses (see :func:`limit_covariance_dense`).
    """
    a = _stable_system(jacobian, gamma_star)
    if np.any(np.triu(a, 1)):
        return limit_covariance_dense(jacobian, noise, gamma_star)
    rhs = -2.0 * gamma_star * np.asarray(noise, dtype=np.float64)
    k = a.shape[0]
    v = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1):
            r = rhs[i, j] - a[i, :i] @ v[:i, j] - v[i, :j] @ a[j, :j]
            v[i, j] = v[j, i] = r / (a[i, i] + a[j, j])
    check_positive_definite(v)
    return v


def limit_covariance_dense(jacobian, noise, gamma_star: float = GAMMA_STAR) -> np.ndarray:
    """Same equation solved as one dense k^2 x k^2 linear system."""
    a = _stable_system(jacobian, gamma_star)
    k = a.shape[0]
    eye = np.eye(k)
    # row-major vec: vec(A V) = (A kron I) vec V, vec(V A^t) = (I kron A) vec V
    system = np.kron(a, eye) + np.kron(eye, a)
    v = np.linalg.solve(system, (-2.0 * gamma_star * np.asarray(noise)).ravel()).reshape(k, k)
    v = 0.5 * (v + v.T)
    check_positive_definite(v)
    return v


def check_positive_definite(m) -> None:
    """Cholesky of the diagonally rescaled matrix; raises LinAlgError if it fails.

    Rescaling makes the test insensitive to the many orders of magnitude
    separating the entries for high degrees.
    """
    diag = np.diag(m)
    if np.any(diag <= 0):
        raise np.linalg.LinAlgError("non-positive diagonal entry")
    scale = 1.0 / np.sqrt(diag)
    np.linalg.cholesky(m * np.outer(scale, scale))


def lyapunov_residual(v, jacobian, noise, gamma_star: float = GAMMA_STAR) -> float:
    k = v.shape[0]
    a = np.eye(k) + 2.0 * gamma_star * np.asarray(jacobian)
    return float(np.max(np.abs(v @ a.T + a @ v + 2.0 * gamma_star * np.asarray(noise))))


def partial_sums(rho, params: ModelParams) -> np.ndarray:
    """Weight shares ``S_1..S_k`` carried by degrees up to each level."""
    return _shares(rho, params)[1:]


@dataclass(frozen=True)
class CltReport:
    k: int
    rho: DegreeFixedPoint
    q: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    noise: np.ndarray
    limit: np.ndarray
    lyapunov_residual: float
    gamma_star: float = GAMMA_STAR

    def text(self) -> str:
        lines = [f"k = {self.k}, gamma* = {self.gamma_star:g}",
                 "eigenvalues of the Jacobian: " + ", ".join(f"{v:.10g}" for v in self.eigenvalues),
                 f"max eigenvalue: {self.eigenvalues.max():.10g}",
                 f"Lyapunov residual: {self.lyapunov_residual:.3e}",
                 f"max fixed-point residual: {self.rho.residuals.max():.3e}"]
        return "\n".join(lines)


def clt_report(k: int, params: ModelParams) -> CltReport:
    rho = solve_rho_star(k, params)
    jac, eig = jacobian_G(rho.values, params)
    noise = noise_covariance(rho.values, params)
    v = limit_covariance(jac, noise)
    return CltReport(k, rho, stationary_choice_law(rho.values, params), jac, eig, noise, v,
                     lyapunov_residual(v, jac, noise))


def empirical_fractions(state: TreeState, k: int, beta: float) -> np.ndarray:
    """``N_j(n) / (n + beta / (2 + beta))`` for j = 1..k, the argument of h in one-step laws."""
    counts = np.zeros(k)
    m = min(k, state.max_degree)
    counts[:m] = state.counts[1:m + 1]
    return counts / (state.n + beta / (2.0 + beta))
