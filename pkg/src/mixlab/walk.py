"""Transition kernels and everything that moves mass through them.

A kernel row for vertex x puts weight (multiplicity / out-degree) on each
distinct head, so parallel edges stay visible to the walk.  Propagation is
dense-vector times sparse-matrix, with mass drift watched at 1e-9 and every
renormalization counted rather than hidden.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix

from .core import DIST_TOL
from .errors import BadRange, BadValue, BudgetExceeded, ImpossibleStep
from .rng import RngStream
from .sampler import Digraph


class OperationBudget:
    """Caps scalar multiply-add work for a run; charge before doing the work."""

    DEFAULT_CAP = 5e10

    def __init__(self, cap: float = DEFAULT_CAP):
        if cap <= 0:
            raise BadValue("budget cap must be positive")
        self.cap = float(cap)
        self.used = 0.0
        self._lock = threading.Lock()

    def charge(self, ops: float) -> None:
        with self._lock:
            if self.used + ops > self.cap:
                raise BudgetExceeded(
                    f"operation budget exhausted: "
                    f"{self.used + ops:.3g} > {self.cap:.3g}"
                )
            self.used += ops


@dataclass
class MassMonitor:
    """Tally of propagation drift events; merge in a fixed order for determinism."""

    renormalizations: int = 0
    max_drift: float = 0.0

    def record(self, drift: float, renormalized: bool) -> None:
        if drift > self.max_drift:
            self.max_drift = drift
        if renormalized:
            self.renormalizations += 1

    def merge(self, other: "MassMonitor") -> None:
        self.renormalizations += other.renormalizations
        self.max_drift = max(self.max_drift, other.max_drift)


class TransitionKernel:
    """Row-stochastic sparse walk matrix over [0, n)."""

    def __init__(self, matrix: csr_matrix):
        self.matrix = matrix
        self.n = matrix.shape[0]
        self.nnz = matrix.nnz
        self._transpose = None

    @property
    def transpose(self) -> csr_matrix:
        # Cached because propagation multiplies by P^T every step.
        if self._transpose is None:
            self._transpose = self.matrix.T.tocsr()
        return self._transpose

    def row(self, x: int) -> np.ndarray:
        if not 0 <= x < self.n:
            raise BadRange(f"vertex {x} outside [0, {self.n})")
        return np.asarray(self.matrix.getrow(x).todense()).ravel()

    def entry(self, x: int, y: int) -> float:
        """P(x, y); zero when the edge is absent."""
        lo, hi = self.matrix.indptr[x], self.matrix.indptr[x + 1]
        cols = self.matrix.indices[lo:hi]
        k = np.searchsorted(cols, y)
        if k < len(cols) and cols[k] == y:
            return float(self.matrix.data[lo + k])
        return 0.0

    def entry_table(self) -> dict:
        """Dict {(x, y): P(x, y)} for batch lookups."""
        out = {}
        indptr, indices, data = (self.matrix.indptr, self.matrix.indices,
                                 self.matrix.data)
        for x in range(self.n):
            for k in range(indptr[x], indptr[x + 1]):
                out[(x, int(indices[k]))] = float(data[k])
        return out


def kernel_from_digraph(g: Digraph) -> TransitionKernel:
    """Collapse parallel edges into weights multiplicity/out-degree."""
    n = g.n
    tails = np.repeat(np.arange(n, dtype=np.int64), g.seq.out_degrees)
    weights = np.repeat(1.0 / g.seq.out_degrees.astype(np.float64),
                        g.seq.out_degrees)
    mat = csr_matrix((weights, (tails, g.heads)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return TransitionKernel(mat)


def _step(v: np.ndarray, kernel: TransitionKernel,
          monitor: Optional[MassMonitor]) -> np.ndarray:
    v = kernel.transpose @ v
    s = float(v.sum())
    drift = abs(s - 1.0)
    renorm = drift > DIST_TOL
    if renorm:
        v = v / s
    if monitor is not None:
        monitor.record(drift, renorm)
    return v


def propagate(dist, kernel: TransitionKernel, steps: int,
              monitor: Optional[MassMonitor] = None,
              budget: Optional[OperationBudget] = None) -> np.ndarray:
    """Push a distribution ``steps`` whole steps forward."""
    if steps < 0:
        raise BadRange("steps must be nonnegative")
    v = np.asarray(dist, dtype=np.float64)
    if v.shape != (kernel.n,):
        raise BadValue(f"distribution length {v.shape} != kernel size {kernel.n}")
    if budget is not None:
        budget.charge(float(steps) * kernel.nnz)
    v = v.copy()
    for _ in range(steps):
        v = _step(v, kernel, monitor)
    return v


def delta_at(x: int, n: int) -> np.ndarray:
    if not 0 <= x < n:
        raise BadRange(f"vertex {x} outside [0, {n})")
    v = np.zeros(n)
    v[x] = 1.0
    return v


def double_row(x: int, s: int, t: int, k_sigma: TransitionKernel,
               k_eta: TransitionKernel,
               monitor: Optional[MassMonitor] = None,
               budget: Optional[OperationBudget] = None) -> np.ndarray:
    """Law after s steps in one environment then t - s in another."""
    if k_sigma.n != k_eta.n:
        raise BadValue("kernels have different vertex counts")
    if not 0 <= s <= t:
        raise BadRange(f"need 0 <= s <= t, got s={s}, t={t}")
    v = propagate(delta_at(x, k_sigma.n), k_sigma, s, monitor, budget)
    return propagate(v, k_eta, t - s, monitor, budget)


def time_averaged_row(x: int, t: int, k_sigma: TransitionKernel,
                      k_eta: TransitionKernel,
                      checkpoint_stride: Optional[int] = None,
                      monitor: Optional[MassMonitor] = None,
                      budget: Optional[OperationBudget] = None) -> np.ndarray:
    """Average over switch times s = 1..t of the two-environment rows.

    Returns (1/t) * sum_s (delta_x P_sigma^{s-1} P_eta^{t-s}).  Both the
    running first-environment vector and the Horner-style accumulator
    advance forward in s together, so the whole thing costs 2t kernel
    applications and O(n) memory; ``checkpoint_stride`` is accepted for
    callers that tune memory but nothing here needs it.
    """
    if k_sigma.n != k_eta.n:
        raise BadValue("kernels have different vertex counts")
    if t < 1:
        raise BadRange("t must be >= 1")
    if checkpoint_stride is not None and checkpoint_stride < 1:
        raise BadValue("checkpoint_stride must be >= 1")
    if budget is not None:
        budget.charge(2.0 * t * max(k_sigma.nnz, k_eta.nnz))
    u = delta_at(x, k_sigma.n)        # delta_x P_sigma^{s-1} at switch time s
    acc = np.zeros(k_sigma.n)
    tmat = k_eta.transpose
    for s in range(1, t + 1):
        if s > 1:
            # raw product: the accumulator's mass is s-1, not 1, so the
            # per-step drift check does not apply to it
            acc = tmat @ acc
        acc += u
        if s < t:
            u = _step(u, k_sigma, monitor)
    out = acc / float(t)
    total = float(out.sum())
    drift = abs(total - 1.0)
    renorm = drift > DIST_TOL
    if renorm:
        out = out / total
    if monitor is not None:
        monitor.record(drift, renorm)
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A realized walk path; ``switch_time`` is the step count taken in the
    first environment (None means the whole path ran there)."""

    states: np.ndarray
    switch_time: Optional[int]

    @property
    def length(self) -> int:
        return len(self.states) - 1


def sample_trajectory(x: int, s: int, t: int, g_sigma: Digraph,
                      g_eta: Digraph, stream: RngStream) -> Trajectory:
    """Walk t steps from x: the first s through g_sigma, the rest through g_eta.

    Each step picks a uniform raw out-edge, so parallel edges carry their
    multiplicity and self-loops can be traversed.
    """
    if g_sigma.n != g_eta.n:
        raise BadValue("digraphs have different vertex counts")
    if not (0 <= s <= t):
        raise BadRange(f"need 0 <= s <= t, got s={s}, t={t}")
    if not 0 <= x < g_sigma.n:
        raise BadRange(f"start {x} outside [0, {g_sigma.n})")
    gen = stream.generator()
    states = np.empty(t + 1, dtype=np.int64)
    states[0] = x
    cur = x
    for step in range(1, t + 1):
        g = g_sigma if step <= s else g_eta
        edges = g.out_edges(cur)
        cur = int(edges[gen.integers(0, len(edges))])
        states[step] = cur
    return Trajectory(states=states, switch_time=s)


def path_log_weight(traj: Trajectory, k_sigma: TransitionKernel,
                    k_eta: TransitionKernel) -> float:
    """Log-probability of the exact path under the two quenched kernels."""
    s = traj.switch_time if traj.switch_time is not None else traj.length
    total = 0.0
    for j in range(traj.length):
        k = k_sigma if j < s else k_eta
        p = k.entry(int(traj.states[j]), int(traj.states[j + 1]))
        if p == 0.0:
            raise ImpossibleStep(
                f"step {j}: no edge {int(traj.states[j])} -> {int(traj.states[j + 1])}"
            )
        total += math.log(p)
    return total


def write_distribution_csv(path, dist) -> None:
    """Export a probability vector as (vertex, prob) rows, atomically."""
    dist = np.asarray(dist, dtype=np.float64)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vertex", "prob"])
            for i, p in enumerate(dist):
                writer.writerow([i, format(float(p), ".12g")])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
