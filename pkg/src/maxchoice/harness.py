"""Seeded runs, ensembles, trajectories and simulation-versus-theory checks."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from . import clt_theory, graph_engine, maxdeg_theory
from .graph_engine import ModelParams, TreeState

OPTIONAL_TRACKERS = frozenset({"scaling", "lemma22"})
FIVE_SIGMA = 5.0


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    """Generator for one replica.

    ``SeedSequence`` hashes the pair ``(master_seed, replica)`` into the
    PCG64 state, so replica streams depend only on that pair and never on
    scheduling.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(replica)])))


def checkpoint_schedule(horizon: int, base: int = 100, ratio: float = 1.2) -> np.ndarray:
    """Geometric grid ``base * ratio**i`` plus every power of ten and the horizon."""
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    if ratio <= 1.0:
        raise ValueError("checkpoint ratio must exceed 1")
    base = min(max(int(base), 2), horizon)
    count = int(math.ceil(math.log(horizon / base) / math.log(ratio))) + 1 if horizon > base else 1
    points = {int(round(base * ratio**i)) for i in range(count)}
    points.update(10**e for e in range(1, 19) if base <= 10**e <= horizon)
    points.add(horizon)
    return np.array(sorted(p for p in points if base <= p <= horizon), dtype=np.int64)


@dataclass
class RunConfig:
    params: ModelParams
    horizon: int
    checkpoint_base: int = 100
    checkpoint_ratio: float = 1.2
    master_seed: int = 0
    replicas: int = 1
    k_max: int = 10
    trackers: frozenset = frozenset()
    scaling_c: float | None = None
    workers: int | None = None

    def __post_init__(self):
        self.trackers = frozenset(self.trackers)
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if self.horizon > graph_engine.MAX_HORIZON:
            raise MemoryError(f"horizon {self.horizon} exceeds {graph_engine.MAX_HORIZON}")
        if self.replicas < 1 or self.k_max < 1:
            raise ValueError("need replicas >= 1 and k_max >= 1")
        unknown = self.trackers - OPTIONAL_TRACKERS
        if unknown:
            raise ValueError(f"unknown trackers {sorted(unknown)}")
        if "scaling" in self.trackers and not (self.scaling_c and self.scaling_c > 0):
            raise ValueError("the scaling tracker needs a positive scaling_c")

    def checkpoints(self) -> np.ndarray:
        return checkpoint_schedule(self.horizon, self.checkpoint_base, self.checkpoint_ratio)

    def columns(self) -> list[str]:
        cols = ["n", "M", "L", "leader", "M_over_n", "M_logn_over_n"]
        cols += [f"N_{k}" for k in range(1, self.k_max + 1)]
        if "scaling" in self.trackers:
            cols += ["Q_c", "U_c"]
        if "lemma22" in self.trackers:
            cols.append("lemma22_min")
        return cols


INT_COLUMNS = {"n", "M", "L", "leader"}


@dataclass
class Trajectory:
    """Observables recorded at each checkpoint of one run.

    ``leader_changes[i]`` is the cumulative number of leader changes up to
    checkpoint ``i``; it is kept in memory but not written to the CSV.
    """

    columns: dict
    leader_changes: np.ndarray
    total_leader_changes: int
    last_leader_change: int
    replica: int = 0

    @property
    def n(self) -> np.ndarray:
        return self.columns["n"]

    @property
    def M(self) -> np.ndarray:
        return self.columns["M"]

    def __len__(self):
        return len(self.n)

    @classmethod
    def from_arrays(cls, n, M, **extra) -> "Trajectory":
        cols = {"n": np.asarray(n, dtype=np.int64), "M": np.asarray(M, dtype=np.int64)}
        cols.update({k: np.asarray(v) for k, v in extra.items()})
        return cls(cols, np.zeros(len(cols["n"]), dtype=np.int64), 0, 0)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        w.writerow(names)
        for i in range(len(self)):
            w.writerow([_fmt(self.columns[c][i], c) for c in names])
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def _fmt(value, column: str) -> str:
    if column in INT_COLUMNS or column.startswith("N_"):
        return str(int(value))
    return repr(float(value))


def _record(state: TreeState, config: RunConfig, row: dict, running_min: list):
    n, m = state.n, state.max_degree
    row["n"].append(n)
    row["M"].append(m)
    row["L"].append(state.leader_count)
    row["leader"].append(state.leader)
    row["M_over_n"].append(m / n)
    row["M_logn_over_n"].append(m * math.log(n) / n)
    top = min(config.k_max, m)
    for k in range(1, config.k_max + 1):
        row[f"N_{k}"].append(int(state.counts[k]) if k <= top else 0)
    if "scaling" in config.trackers:
        sc = maxdeg_theory.scaling_values(state, config.scaling_c)
        row["Q_c"].append(sc.q_value)
        row["U_c"].append(sc.u_value)
    if "lemma22" in config.trackers:
        ratio = m / n ** maxdeg_theory.lower_bound_exponent(config.params.beta)
        running_min[0] = min(running_min[0], ratio)
        row["lemma22_min"].append(running_min[0])


def run_single(config: RunConfig, replica: int = 0, out=None, snapshot=None, check: bool = False) -> Trajectory:
    """Grow one tree to the horizon, recording every checkpoint.

    ``out`` receives the trajectory CSV and ``snapshot`` the final
    ``vertex_id,degree`` table; ``check`` rescans all invariants at every
    checkpoint.
    """
    params = config.params
    rng = replica_rng(config.master_seed, replica)
    state = graph_engine.init_tree(params, capacity=config.horizon)
    row = {c: [] for c in config.columns()}
    changes = []
    running_min = [math.inf]
    for cp in config.checkpoints().tolist():
        K.grow(rng, state.degrees, state.endpoints, state.counts, state.scal,
               params.beta, params.d.values, params.d.cdf, cp)
        if check:
            state.validate()
        _record(state, config, row, running_min)
        changes.append(state.leader_changes)
    cols = {c: np.asarray(v, dtype=np.int64 if c in INT_COLUMNS or c.startswith("N_") else np.float64)
            for c, v in row.items()}
    traj = Trajectory(cols, np.asarray(changes, dtype=np.int64), state.leader_changes,
                      state.last_leader_change, replica)
    if out is not None:
        traj.to_csv(out)
    if snapshot is not None:
        state.snapshot_csv(snapshot)
    return traj


def _map_replicas(fn, replicas: int, workers: int | None):
    workers = workers or os.cpu_count() or 1
    if workers == 1:
        return [fn(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(replicas)))


@dataclass
class EnsembleResult:
    trajectories: list
    aggregate: list = field(default_factory=list)

    AGGREGATE_HEADER = ["n", "observable", "mean", "variance", "replicas"]

    def aggregate_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.AGGREGATE_HEADER)
        for n, name, mean, var, reps in self.aggregate:
            w.writerow([n, name, repr(mean), repr(var), reps])
        return buf.getvalue()

    def summary_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replica", "leader_changes", "last_leader_change"])
        for t in self.trajectories:
            w.writerow([t.replica, t.total_leader_changes, t.last_leader_change])
        return buf.getvalue()


def aggregate(trajectories) -> list:
    """Per-checkpoint mean and sample variance of every numeric observable but the leader id."""
    first = trajectories[0]
    names = [c for c in first.columns if c not in ("n", "leader")]
    reps = len(trajectories)
    rows = []
    for i, n in enumerate(first.n.tolist()):
        for name in names:
            vals = np.array([float(t.columns[name][i]) for t in trajectories])
            var = float(vals.var(ddof=1)) if reps > 1 else 0.0
            rows.append((n, name, float(vals.mean()), var, reps))
    return rows


def run_ensemble(config: RunConfig, out_dir=None, workers: int | None = None) -> EnsembleResult:
    """Run ``config.replicas`` independent replicas and aggregate them.

    Replica ``r`` always uses ``replica_rng(master_seed, r)`` and results are
    collected in replica order, so the output does not depend on ``workers``.
    """
    workers = workers or config.workers
    trajs = _map_replicas(lambda r: run_single(config, r), config.replicas, workers)
    result = EnsembleResult(trajs, aggregate(trajs))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        width = max(4, len(str(config.replicas - 1)))
        for t in trajs:
            t.to_csv(os.path.join(out_dir, f"trajectory_{t.replica:0{width}d}.csv"))
        with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
            fh.write(result.aggregate_csv_text())
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
            fh.write(result.summary_csv_text())
    return result


def final_counts(params: ModelParams, n: int, k: int, master_seed: int, replicas: int,
                 workers: int | None = None) -> np.ndarray:
    """``N_1(n)..N_k(n)`` for each replica, shape ``(replicas, k)``."""

    def one(r):
        rng = replica_rng(master_seed, r)
        state = graph_engine.init_tree(params, capacity=n)
        K.grow(rng, state.degrees, state.endpoints, state.counts, state.scal,
               params.beta, params.d.values, params.d.cdf, n)
        out = np.zeros(k, dtype=np.int64)
        top = min(k, state.max_degree)
        out[:top] = state.counts[1:top + 1]
        return out

    return np.array(_map_replicas(one, replicas, workers))


class InsufficientDataError(ValueError):
    pass


def estimate_exponent(trajectory, window) -> float:
    """Least-squares slope of ln M(n) against ln n over checkpoints in ``window``."""
    lo, hi = window
    n = np.asarray(trajectory.n, dtype=np.float64)
    m = np.asarray(trajectory.M, dtype=np.float64)
    sel = (n >= lo) & (n <= hi) & (m > 0)
    if np.count_nonzero(sel) < 5:
        raise InsufficientDataError(f"only {np.count_nonzero(sel)} checkpoints in [{lo}, {hi}]; need 5")
    slope, _ = np.polyfit(np.log(n[sel]), np.log(m[sel]), 1)
    return float(slope)


@dataclass
class OneStepReport:
    trials: int
    exact_vertex: np.ndarray
    empirical_vertex: np.ndarray
    exact_degree: np.ndarray
    empirical_degree: np.ndarray
    max_abs_dev: float
    max_z: float
    chi2_pvalue: float
    enumeration_gap: float | None
    passed: bool

    def lines(self) -> list[str]:
        out = [f"trials: {self.trials}",
               f"max |empirical - exact|: {self.max_abs_dev:.3e}",
               f"max deviation in binomial sigmas: {self.max_z:.2f} (limit {FIVE_SIGMA:g})",
               f"chi-square p-value: {self.chi2_pvalue:.4f}"]
        if self.enumeration_gap is not None:
            out.append(f"formula vs enumeration: {self.enumeration_gap:.2e}")
        out.append("PASS" if self.passed else "FAIL")
        return out


def _z_scores(counts, probs, trials):
    freq = counts / trials
    sigma = np.sqrt(probs * (1.0 - probs) / trials)
    dev = np.abs(freq - probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, dev / sigma, np.where(dev > 0, np.inf, 0.0))
    return freq, dev, z


def verify_onestep(state, params: ModelParams, trials: int, seed: int = 0,
                   enumerate_check: bool = True) -> OneStepReport:
    """Draw ``trials`` independent choices from a frozen tree and compare with the exact law.

    ``state`` is a :class:`TreeState` or a degree sequence.  The exact
    per-vertex law is also compared with brute-force enumeration when the
    tree is small enough, which raises if it is not and ``enumerate_check``
    is set.
    """
    if not isinstance(state, TreeState):
        state = graph_engine.tree_from_degrees(state)
    if trials < 1:
        raise ValueError("trials must be positive")
    exact_v = graph_engine.vertex_increase_probabilities(state, params)
    exact_deg = graph_engine.choice_degree_distribution(state, params)
    gap = None
    if enumerate_check:
        gap = float(np.max(np.abs(graph_engine.enumerate_onestep(state, params) - exact_v)))
    rng = np.random.default_rng(seed)
    hist = np.zeros(state.vertex_count, dtype=np.int64)
    K.sample_choices(rng, state.degrees, state.endpoints, state.n, params.beta,
                     params.d.values, params.d.cdf, int(trials), hist)
    deg_hist = np.bincount(state.vertex_degrees(), weights=hist, minlength=exact_deg.size)
    freq_v, dev_v, z_v = _z_scores(hist, exact_v, trials)
    freq_d, dev_d, z_d = _z_scores(deg_hist, exact_deg, trials)
    live = exact_v > 0
    if np.count_nonzero(live) > 1:
        expected = exact_v[live] * trials
        chi2 = stats.chisquare(hist[live], expected * hist[live].sum() / expected.sum())
        pvalue = float(chi2.pvalue)
    else:
        pvalue = 1.0
    max_z = float(max(z_v.max(), z_d.max()))
    passed = max_z < FIVE_SIGMA and (gap is None or gap < 1e-12)
    return OneStepReport(int(trials), exact_v, freq_v, exact_deg, freq_d,
                         float(max(dev_v.max(), dev_d.max())), max_z, pvalue, gap, passed)


@dataclass
class CltCheck:
    k: int
    n: int
    replicas: int
    rho_star: np.ndarray
    limit: np.ndarray
    empirical_mean: np.ndarray
    mean_tolerance: np.ndarray
    empirical_cov: np.ndarray
    relative_var_error: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    mean_ok: bool
    cov_ok: bool
    rel_tol: float

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.cov_ok

    def lines(self) -> list[str]:
        out = [f"k={self.k} n={self.n} replicas={self.replicas}"]
        for i in range(self.k):
            out.append(f"N_{i + 1}/n: mean {self.empirical_mean[i]:.6f} vs {self.rho_star[i]:.6f} "
                       f"(tol {self.mean_tolerance[i]:.2e}); var {self.empirical_cov[i, i]:.5g} vs "
                       f"{self.limit[i, i]:.5g} (rel err {self.relative_var_error[i]:.3f}); "
                       f"skew {self.skewness[i]:+.3f} exkurt {self.excess_kurtosis[i]:+.3f}")
        out.append("PASS" if self.passed else "FAIL")
        return out


def verify_clt(params: ModelParams, k: int, n: int, replicas: int, seed: int = 0,
               workers: int | None = None, rel_tol: float = 0.15) -> CltCheck:
    """Compare the spread of ``sqrt(n + 1) (N_j(n)/n - x*_j)`` over replicas with V.

    Means must agree with the fixed point within ``5 sqrt(V_jj / ((n + 1) R)) + 5/n``
    (the last term allows for the O(1/n) bias); every covariance entry must
    agree with V within ``rel_tol * sqrt(V_ii V_jj)``.
    """
    report = clt_theory.clt_report(k, params)
    rho = np.asarray(report.rho.values)
    v = report.limit
    counts = final_counts(params, n, k, seed, replicas, workers)
    frac = counts / n
    scaled = math.sqrt(n + 1) * (frac - rho)
    emp_mean = frac.mean(axis=0)
    emp_cov = np.atleast_2d(np.cov(scaled, rowvar=False, ddof=1))
    diag_v = np.diag(v)
    mean_tol = FIVE_SIGMA * np.sqrt(diag_v / ((n + 1) * replicas)) + FIVE_SIGMA / n
    mean_ok = bool(np.all(np.abs(emp_mean - rho) <= mean_tol))
    scale = np.sqrt(np.outer(diag_v, diag_v))
    cov_ok = bool(np.all(np.abs(emp_cov - v) <= rel_tol * scale))
    rel = np.abs(np.diag(emp_cov) - diag_v) / diag_v
    return CltCheck(k, n, replicas, rho, v, emp_mean, mean_tol, emp_cov, rel,
                    stats.skew(scaled, axis=0), stats.kurtosis(scaled, axis=0), mean_ok, cov_ok, rel_tol)


@dataclass
class HubSummary:
    horizon: int
    changes: np.ndarray
    last_change: np.ndarray
    stable_fraction: float
    decades: list
    decade_changes: list

    @property
    def trend_ok(self) -> bool:
        """Aggregate change counts never increase from one decade to the next."""
        return all(b <= a for a, b in zip(self.decade_changes, self.decade_changes[1:]))

    def lines(self) -> list[str]:
        out = [f"replicas: {self.changes.size}, horizon: {self.horizon}",
               f"fraction with no leader change in ({self.horizon // 10}, {self.horizon}]: "
               f"{self.stable_fraction:.3f}"]
        for (a, b), c in zip(self.decades, self.decade_changes):
            out.append(f"leader changes in ({a}, {b}]: {c}")
        return out


def hub_report(trajectories) -> HubSummary:
    """Leader stability across an ensemble.

    A replica counts as stable when its last leader change happened no later
    than one tenth of the horizon.
    """
    horizon = int(trajectories[0].n[-1])
    changes = np.array([t.total_leader_changes for t in trajectories], dtype=np.int64)
    last = np.array([t.last_leader_change for t in trajectories], dtype=np.int64)
    stable = float(np.mean(last <= horizon // 10))
    ns = trajectories[0].n.tolist()
    marks = [i for i, n in enumerate(ns) if n >= 10 and 10 ** round(math.log10(n)) == n]
    decades, per_decade = [], []
    for a, b in zip(marks, marks[1:]):
        decades.append((ns[a], ns[b]))
        per_decade.append(int(sum(t.leader_changes[b] - t.leader_changes[a] for t in trajectories)))
    return HubSummary(horizon, changes, last, stable, decades, per_decade)
