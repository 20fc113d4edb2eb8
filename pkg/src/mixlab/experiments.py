"""Theorem-level mixing experiments over sampled environments.

Each experiment samples environments on deterministic stream indices,
reduces replicate results in a fixed order, and reports curve rows
(abscissa, estimate, std_err, theory, n_effective) plus JSON metadata.
The refresh intensity gamma_hat = alpha * entropic_time is always derived
and reported, never accepted as an input.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from .core import (DegreeSequence, entropic_scale, in_degree_distribution,
                   tv_distance)
from .errors import (AllReplicatesFailed, BadCurveName, BadRange, BadValue,
                     NotConverged)
from .report import ExperimentReport, ReportRow
from .rng import RngStream
from .sampler import sample_digraph
from .stationary import (DEFAULT_TOL, estimate_stationary_gap,
                         stationary_distribution)
from .walk import (MassMonitor, OperationBudget, TransitionKernel, delta_at,
                   kernel_from_digraph, path_log_weight, propagate,
                   sample_trajectory, time_averaged_row)

# Refresh-intensity thresholds: outside (GAMMA_LOW, GAMMA_HIGH) the run is
# reported against the corresponding limit-regime curve.
GAMMA_LOW = 0.2
GAMMA_HIGH = 5.0

# Grid points this close to a theory-curve discontinuity are flagged and
# left out of summary scoring; the curves jump there and finite-size runs
# can land on either branch.
FLAG_MARGIN = 0.1

EXHAUSTIVE_LIMIT = 2000
DEFAULT_START_SAMPLE = 32

# Disjoint stream lanes for nested sampling loops.
_LANE_ENV_A = 1
_LANE_ENV_B = 2
_LANE_STARTS = 3
_LANE_GAP = 4
_LANE_SCHED = 5
_LANE_TRAJ = 6

CURVE_NAMES = ("joint_gamma0", "joint_gammainf", "joint_general",
               "marginal_gamma0", "marginal_gammainf", "marginal_general",
               "static_profile")

EXPERIMENT_NAMES = ("static-cutoff", "double-cutoff", "joint", "marginal",
                    "marginal-crosscheck", "annealed", "weight-lln",
                    "diagnostics", "q-estimate")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    seq: DegreeSequence
    root_seed: int
    alpha: Optional[float] = None
    beta_grid: Sequence[float] = ()
    s_grid: Optional[Sequence[int]] = None
    env_samples: int = 10
    start_vertices: Union[str, int, Sequence[int]] = DEFAULT_START_SAMPLE
    tol: float = DEFAULT_TOL
    max_iters: Optional[int] = None

    def __post_init__(self):
        if self.alpha is not None and not (0.0 < self.alpha < 1.0):
            raise BadValue(f"alpha must be in (0, 1), got {self.alpha}")
        if self.env_samples < 1:
            raise BadValue("env_samples must be >= 1")
        for b in self.beta_grid:
            if b < 0:
                raise BadValue(f"beta {b} must be nonnegative")

    def require_alpha(self) -> float:
        if self.alpha is None:
            raise BadValue("this experiment needs alpha")
        return self.alpha


def _floor_time(x: float) -> int:
    # the tiny nudge keeps exact-integer products (e.g. beta/alpha = 2.0)
    # from flooring down through float dust
    return int(math.floor(x + 1e-12))


def _pair(i: int, j: int) -> int:
    if not (0 <= i < (1 << 16) and 0 <= j < (1 << 16)):
        raise BadValue("replicate/sample index exceeds the stream layout")
    return (i << 16) | j


def _parallel_map(fn, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def gamma_hat(cfg: ExperimentConfig) -> float:
    return cfg.require_alpha() * entropic_scale(cfg.seq).entropic_time


def pick_regime(gh: float) -> str:
    if gh < GAMMA_LOW:
        return "0"
    if gh > GAMMA_HIGH:
        return "inf"
    return "general"


def _phi(b: float, gap: float) -> float:
    # step profile with its jump at 1; equality resolves to the upper branch
    return 1.0 if b < 1.0 else gap


def theory_curve(name: str, beta: float, gamma: Optional[float] = None,
                 gap: Optional[float] = None) -> float:
    """Limit-curve value at beta for one of the named regimes."""
    if beta < 0:
        raise BadValue("beta must be nonnegative")
    decay = math.exp(-beta)
    if name == "joint_gamma0":
        return decay
    if name == "joint_gammainf":
        return (1.0 + beta) * decay
    if name == "joint_general":
        if gamma is None or gamma <= 0:
            raise BadValue("joint_general needs gamma > 0")
        return (1.0 + beta) * decay if beta < gamma else decay
    if name == "marginal_gamma0":
        if gap is None:
            raise BadValue("marginal_gamma0 needs the stationary gap")
        return gap * decay
    if name == "marginal_gammainf":
        return decay
    if name == "marginal_general":
        if gamma is None or gamma <= 0:
            raise BadValue("marginal_general needs gamma > 0")
        if gap is None:
            raise BadValue("marginal_general needs the stationary gap")
        return _phi(beta / gamma, gap) * decay
    if name == "static_profile":
        if gap is None:
            raise BadValue("static_profile needs the stationary gap")
        return _phi(beta, gap)
    raise BadCurveName(f"unknown curve {name!r}; expected one of {CURVE_NAMES}")


def resolve_max_starts(cfg: ExperimentConfig):
    """Start vertices for max/min-over-x experiments.

    Integer counts switch to exhaustive enumeration at small n so the
    worst case is exact there; the mode string lands in the metadata.
    """
    n = cfg.seq.n
    sv = cfg.start_vertices
    if isinstance(sv, str):
        if sv != "all":
            raise BadValue(f"start_vertices string must be 'all', got {sv!r}")
        return list(range(n)), "exhaustive"
    if isinstance(sv, (int, np.integer)):
        if sv < 1:
            raise BadValue("start_vertices count must be >= 1")
        if n <= EXHAUSTIVE_LIMIT or sv >= n:
            return list(range(n)), "exhaustive"
        gen = RngStream(cfg.root_seed).lane(_LANE_STARTS).generator()
        picks = np.sort(gen.choice(n, size=int(sv), replace=False))
        return [int(x) for x in picks], "sample"
    starts = [int(x) for x in sv]
    for x in starts:
        if not 0 <= x < n:
            raise BadRange(f"start vertex {x} outside [0, {n})")
    return starts, "explicit"


def resolve_replicate_starts(cfg: ExperimentConfig):
    """Start vertices when each start defines its own environment replicate."""
    n = cfg.seq.n
    sv = cfg.start_vertices
    if isinstance(sv, str):
        if sv != "all":
            raise BadValue(f"start_vertices string must be 'all', got {sv!r}")
        return list(range(n)), "exhaustive"
    if isinstance(sv, (int, np.integer)):
        if sv < 1:
            raise BadValue("start_vertices count must be >= 1")
        count = min(int(sv), n)
        gen = RngStream(cfg.root_seed).lane(_LANE_STARTS).generator()
        picks = np.sort(gen.choice(n, size=count, replace=False))
        return [int(x) for x in picks], "sample"
    starts = [int(x) for x in sv]
    for x in starts:
        if not 0 <= x < n:
            raise BadRange(f"start vertex {x} outside [0, {n})")
    return starts, "explicit"


def _mean_std(values: List[float]):
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    err = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, err


# ---------------------------------------------------------------------------
# static environment: cutoff profile
# ---------------------------------------------------------------------------

def static_cutoff_profile(cfg: ExperimentConfig,
                          budget: Optional[OperationBudget] = None,
                          threads: int = 1) -> ExperimentReport:
    """Worst-start distance to stationarity at times beta * entropic_time.

    One environment per replicate; the estimate column is the replicate
    mean of max-over-starts TV, against the step profile 1(beta < 1).
    """
    if not cfg.beta_grid:
        raise BadValue("beta_grid must be nonempty")
    seq = cfg.seq
    scale = entropic_scale(seq)
    mu = in_degree_distribution(seq)
    betas = list(cfg.beta_grid)
    ts = [_floor_time(b * scale.entropic_time) for b in betas]
    t_unique = sorted(set(ts))
    starts, mode = resolve_max_starts(cfg)
    if budget is not None:
        budget.charge(float(cfg.env_samples) * len(starts) * max(t_unique) * seq.m)
    base = RngStream(cfg.root_seed)

    def one(r: int):
        g = sample_digraph(seq, base.lane(_LANE_ENV_A, r))
        kernel = kernel_from_digraph(g)
        monitor = MassMonitor()
        try:
            pi = stationary_distribution(kernel, tol=cfg.tol,
                                         max_iters=cfg.max_iters,
                                         start=mu).distribution
        except NotConverged:
            return None, monitor
        worst = {t: 0.0 for t in t_unique}
        for x in starts:
            v = delta_at(x, seq.n)
            cur = 0
            for t in t_unique:
                v = propagate(v, kernel, t - cur, monitor)
                cur = t
                d = tv_distance(v, pi)
                if d > worst[t]:
                    worst[t] = d
        return worst, monitor

    results = _parallel_map(one, range(cfg.env_samples), threads)
    monitor = MassMonitor()
    per_rep = []
    failures = 0
    for worst, mon in results:
        monitor.merge(mon)
        if worst is None:
            failures += 1
        else:
            per_rep.append(worst)
    if not per_rep:
        raise AllReplicatesFailed("no stationary solve converged")

    rows = []
    for beta, t in zip(betas, ts):
        vals = [w[t] for w in per_rep]
        mean, err = _mean_std(vals)
        rows.append(ReportRow(
            abscissa=beta, estimate=mean, std_err=err,
            theory=1.0 if beta < 1.0 else 0.0,
            n_effective=len(per_rep),
            flagged=abs(beta - 1.0) < FLAG_MARGIN,
        ))
    meta = {
        "experiment": "static-cutoff",
        "n": seq.n, "model": seq.model.value, "root_seed": cfg.root_seed,
        "entropy": scale.entropy, "entropic_time": scale.entropic_time,
        "times": ts, "start_mode": mode, "start_count": len(starts),
        "replicates": len(per_rep), "solve_failures": failures,
        "renormalizations": monitor.renormalizations,
        "max_drift": monitor.max_drift,
        "per_beta_replicate_values": {str(b): [w[t] for w in per_rep]
                                      for b, t in zip(betas, ts)},
    }
    return ExperimentReport("static-cutoff", rows, meta)


# ---------------------------------------------------------------------------
# two environments: distance after s steps in one and t - s in the other
# ---------------------------------------------------------------------------

def double_cutoff_sweep(cfg: ExperimentConfig, beta: float,
                        budget: Optional[OperationBudget] = None,
                        threads: int = 1) -> ExperimentReport:
    """Sweep the switch time s at fixed total time t = floor(beta * t_ent).

    For beta < 1 the theorem-relevant statistic is the best case (min over
    starts, which should stay near 1); for beta > 1 it is the worst case
    (max over starts, which should fall to 0).  The estimate column holds
    the replicate mean of that statistic; both extremes for every
    replicate are recorded in the metadata.
    """
    if beta < 0:
        raise BadValue("beta must be nonnegative")
    if cfg.s_grid is None or len(cfg.s_grid) == 0:
        raise BadValue("double-cutoff needs s_grid")
    seq = cfg.seq
    scale = entropic_scale(seq)
    mu = in_degree_distribution(seq)
    t = _floor_time(beta * scale.entropic_time)
    s_grid = [int(s) for s in cfg.s_grid]
    for s in s_grid:
        if not 0 <= s <= t:
            raise BadRange(f"switch time {s} outside [0, {t}]")
    s_sorted = sorted(set(s_grid))
    starts, mode = resolve_max_starts(cfg)
    if budget is not None:
        per_start = t + sum(t - s for s in s_sorted)
        budget.charge(float(cfg.env_samples) * len(starts) * per_start * seq.m)
    base = RngStream(cfg.root_seed)

    def one(r: int):
        g_sigma = sample_digraph(seq, base.lane(_LANE_ENV_A, r))
        g_eta = sample_digraph(seq, base.lane(_LANE_ENV_B, r))
        k_sigma = kernel_from_digraph(g_sigma)
        k_eta = kernel_from_digraph(g_eta)
        monitor = MassMonitor()
        try:
            pi_eta = stationary_distribution(k_eta, tol=cfg.tol,
                                             max_iters=cfg.max_iters,
                                             start=mu).distribution
        except NotConverged:
            return None, monitor
        lo = {s: math.inf for s in s_sorted}
        hi = {s: 0.0 for s in s_sorted}
        for x in starts:
            v = delta_at(x, seq.n)
            cur = 0
            saved = {}
            for s in s_sorted:
                v = propagate(v, k_sigma, s - cur, monitor)
                cur = s
                saved[s] = v
            for s in s_sorted:
                w = propagate(saved[s], k_eta, t - s, monitor)
                d = tv_distance(w, pi_eta)
                lo[s] = min(lo[s], d)
                hi[s] = max(hi[s], d)
        return (lo, hi), monitor

    results = _parallel_map(one, range(cfg.env_samples), threads)
    monitor = MassMonitor()
    mins, maxes = [], []
    failures = 0
    for res, mon in results:
        monitor.merge(mon)
        if res is None:
            failures += 1
        else:
            mins.append(res[0])
            maxes.append(res[1])
    if not mins:
        raise AllReplicatesFailed("no stationary solve converged")

    use_min = beta < 1.0
    rows = []
    for s in s_sorted:
        vals = [(lo if use_min else hi)[s] for lo, hi in zip(mins, maxes)]
        mean, err = _mean_std(vals)
        rows.append(ReportRow(
            abscissa=float(s), estimate=mean, std_err=err,
            theory=1.0 if beta < 1.0 else 0.0,
            n_effective=len(mins),
        ))
    meta = {
        "experiment": "double-cutoff",
        "n": seq.n, "model": seq.model.value, "root_seed": cfg.root_seed,
        "beta": beta, "t": t,
        "entropy": scale.entropy, "entropic_time": scale.entropic_time,
        "statistic": "min_over_starts" if use_min else "max_over_starts",
        "start_mode": mode, "start_count": len(starts),
        "replicates": len(mins), "solve_failures": failures,
        "renormalizations": monitor.renormalizations,
        "max_drift": monitor.max_drift,
        "per_s_min": {str(s): [lo[s] for lo in mins] for s in s_sorted},
        "per_s_max": {str(s): [hi[s] for hi in maxes] for s in s_sorted},
    }
    return ExperimentReport("double-cutoff", rows, meta)


# ---------------------------------------------------------------------------
# regenerating joint chain: distance of (environment, position) to equilibrium
# ---------------------------------------------------------------------------

def _joint_coefficients(alpha: float, t: int):
    # survival and refresh-once weights of the regeneration count at time t;
    # their limits are exp(-beta) and beta * exp(-beta)
    survive = (1.0 - alpha) ** t
    refresh_once = alpha * t * (1.0 - alpha) ** (t - 1) if t >= 1 else 0.0
    return survive, refresh_once


def joint_relaxation_curve(cfg: ExperimentConfig,
                           budget: Optional[OperationBudget] = None,
                           threads: int = 1) -> ExperimentReport:
    """Joint-chain distance estimate on the refresh time scale t = beta / alpha.

    Per replicate (one environment and one start), the estimate combines
    the no-refresh survival mass with the averaged single-refresh rows
    against fresh-environment stationary laws:

        0.5 * [ survive + mean_eta sum_y | refresh_once * row(eta, y)
                                          - (survive + refresh_once) * pi_eta(y) | ]

    where ``row`` is the switch-time-averaged two-environment row.  Finite
    refresh-count coefficients are used instead of their Poisson limits,
    which removes an O(alpha) bias at the alphas a desk run can afford.
    """
    alpha = cfg.require_alpha()
    if not cfg.beta_grid:
        raise BadValue("beta_grid must be nonempty")
    seq = cfg.seq
    scale = entropic_scale(seq)
    mu = in_degree_distribution(seq)
    gh = alpha * scale.entropic_time
    regime = pick_regime(gh)
    curve = {"0": "joint_gamma0", "inf": "joint_gammainf",
             "general": "joint_general"}[regime]
    betas = list(cfg.beta_grid)
    ts = [_floor_time(b / alpha) for b in betas]
    starts, mode = resolve_replicate_starts(cfg)
    if budget is not None:
        budget.charge(float(len(starts)) * cfg.env_samples
                      * sum(2 * t for t in ts) * seq.m)
    base = RngStream(cfg.root_seed)

    def one(args):
        i, x = args
        g_sigma = sample_digraph(seq, base.lane(_LANE_ENV_A, i))
        k_sigma = kernel_from_digraph(g_sigma)
        monitor = MassMonitor()
        sums = {b: 0.0 for b in betas}
        used = 0
        skipped = 0
        for j in range(cfg.env_samples):
            g_eta = sample_digraph(seq, base.lane(_LANE_ENV_B, _pair(i, j)))
            k_eta = kernel_from_digraph(g_eta)
            try:
                pi_eta = stationary_distribution(k_eta, tol=cfg.tol,
                                                 max_iters=cfg.max_iters,
                                                 start=mu).distribution
            except NotConverged:
                skipped += 1
                continue
            used += 1
            for beta, t in zip(betas, ts):
                survive, refresh_once = _joint_coefficients(alpha, t)
                stay_weight = survive + refresh_once
                if t == 0:
                    l1 = stay_weight  # row term vanishes; all mass vs pi
                else:
                    row = time_averaged_row(x, t, k_sigma, k_eta,
                                            monitor=monitor)
                    l1 = float(np.abs(refresh_once * row
                                      - stay_weight * pi_eta).sum())
                sums[beta] += 0.5 * (survive + l1)
        if used == 0:
            return None, skipped, monitor
        return {b: sums[b] / used for b in betas}, skipped, monitor

    results = _parallel_map(one, list(enumerate(starts)), threads)
    monitor = MassMonitor()
    per_rep = []
    skipped_total = 0
    for est, skipped, mon in results:
        monitor.merge(mon)
        skipped_total += skipped
        if est is not None:
            per_rep.append(est)
    if not per_rep:
        raise AllReplicatesFailed("every replicate lost all its environments")

    rows = []
    for beta in betas:
        vals = [est[beta] for est in per_rep]
        mean, err = _mean_std(vals)
        rows.append(ReportRow(
            abscissa=beta, estimate=min(mean, 1.0), std_err=err,
            theory=theory_curve(curve, beta, gamma=gh),
            n_effective=len(per_rep) * cfg.env_samples,
            flagged=(curve == "joint_general" and abs(beta - gh) < FLAG_MARGIN),
        ))
    meta = {
        "experiment": "joint",
        "n": seq.n, "model": seq.model.value, "root_seed": cfg.root_seed,
        "alpha": alpha, "gamma_hat": gh, "regime": regime, "curve": curve,
        "entropy": scale.entropy, "entropic_time": scale.entropic_time,
        "times": ts, "start_mode": mode, "starts": starts,
        "replicates": len(per_rep), "env_samples": cfg.env_samples,
        "env_skipped": skipped_total,
        "renormalizations": monitor.renormalizations,
        "max_drift": monitor.max_drift,
        "per_beta_replicate_values": {str(b): [est[b] for est in per_rep]
                                      for b in betas},
    }
    return ExperimentReport("joint", rows, meta)


# ---------------------------------------------------------------------------
# marginal position law under regeneration
# ---------------------------------------------------------------------------

def marginal_relaxation_curve(cfg: ExperimentConfig,
                              time_scale: str = "regeneration",
                              gap_replicates: int = 20,
                              budget: Optional[OperationBudget] = None,
                              threads: int = 1) -> ExperimentReport:
    """Position-law distance (1 - alpha)^t * TV(P_sigma^t(x, .), mu_in).

    ``time_scale`` picks the grid: "regeneration" runs t = floor(beta/alpha)
    against the regime curve; "entropic" runs t = floor(beta * t_ent), the
    small-gamma secondary grid, against the static step profile.

    The surviving-environment factor is exact, so the only randomness is
    over environments and starts; each start carries its own environment.
    """
    alpha = cfg.require_alpha()
    if time_scale not in ("regeneration", "entropic"):
        raise BadValue(f"time_scale must be 'regeneration' or 'entropic', "
                       f"got {time_scale!r}")
    if not cfg.beta_grid:
        raise BadValue("beta_grid must be nonempty")
    seq = cfg.seq
    scale = entropic_scale(seq)
    mu = in_degree_distribution(seq)
    gh = alpha * scale.entropic_time
    regime = pick_regime(gh)
    betas = list(cfg.beta_grid)
    if time_scale == "regeneration":
        ts = [_floor_time(b / alpha) for b in betas]
    else:
        ts = [_floor_time(b * scale.entropic_time) for b in betas]

    # stationary gap between the in-law and the true stationary law:
    # exactly zero for Eulerian matchings, estimated otherwise
    gap_err = 0.0
    gap_meta: dict = {}
    if time_scale == "entropic":
        need_gap = True
        curve = "static_profile"
    else:
        curve = {"0": "marginal_gamma0", "inf": "marginal_gammainf",
                 "general": "marginal_general"}[regime]
        need_gap = curve in ("marginal_gamma0", "marginal_general")
    if need_gap:
        if seq.is_eulerian:
            gap = 0.0
            gap_meta = {"q_hat": 0.0, "q_std_err": 0.0, "q_exact": True}
        else:
            gr = estimate_stationary_gap(seq, gap_replicates,
                                         RngStream(cfg.root_seed).lane(_LANE_GAP),
                                         tol=cfg.tol, max_iters=cfg.max_iters,
                                         budget=budget)
            gap = gr.gap
            gap_err = gr.std_err
            gap_meta = {"q_hat": gr.gap, "q_std_err": gr.std_err,
                        "q_exact": False,
                        "q_replicates": gr.replicates_used,
                        "q_failures": gr.failures}
    else:
        gap = None

    starts, mode = resolve_replicate_starts(cfg)
    if budget is not None:
        budget.charge(float(len(starts)) * max(ts) * seq.m)
    base = RngStream(cfg.root_seed)
    t_sorted = sorted(set(ts))

    def one(args):
        i, x = args
        g = sample_digraph(seq, base.lane(_LANE_ENV_A, i))
        kernel = kernel_from_digraph(g)
        monitor = MassMonitor()
        v = delta_at(x, seq.n)
        cur = 0
        out = {}
        for t in t_sorted:
            v = propagate(v, kernel, t - cur, monitor)
            cur = t
            out[t] = (1.0 - alpha) ** t * tv_distance(v, mu)
        return out, monitor

    results = _parallel_map(one, list(enumerate(starts)), threads)
    monitor = MassMonitor()
    per_rep = [res for res, _ in results]
    for _, mon in results:
        monitor.merge(mon)

    def row_flag(beta: float) -> bool:
        if curve == "marginal_general":
            return abs(beta - gh) < FLAG_MARGIN
        if curve == "static_profile":
            return abs(beta - 1.0) < FLAG_MARGIN
        return False

    rows = []
    for beta, t in zip(betas, ts):
        vals = [out[t] for out in per_rep]
        mean, err = _mean_std(vals)
        if curve == "static_profile":
            th = theory_curve(curve, beta, gap=gap)
        else:
            th = theory_curve(curve, beta, gamma=gh, gap=gap)
        rows.append(ReportRow(
            abscissa=beta, estimate=mean,
            std_err=float(math.hypot(err, gap_err * math.exp(-beta))),
            theory=th, n_effective=len(per_rep), flagged=row_flag(beta),
        ))
    meta = {
        "experiment": "marginal",
        "n": seq.n, "model": seq.model.value, "root_seed": cfg.root_seed,
        "alpha": alpha, "gamma_hat": gh, "regime": regime, "curve": curve,
        "time_scale": time_scale,
        "entropy": scale.entropy, "entropic_time": scale.entropic_time,
        "times": ts, "start_mode": mode, "starts": starts,
        "replicates": len(per_rep),
        "renormalizations": monitor.renormalizations,
        "max_drift": monitor.max_drift,
        "per_beta_replicate_values": {str(b): [out[t] for out in per_rep]
                                      for b, t in zip(betas, ts)},
        **gap_meta,
    }
    return ExperimentReport("marginal", rows, meta)


@dataclass(frozen=True)
class CrosscheckResult:
    """Monte-Carlo marginal law vs. its exact counterpart at one time."""
    t: int
    exact: float
    sampled: float
    std_err: float
    schedules: int
    mean_refreshes: float


def marginal_mc_crosscheck(cfg: ExperimentConfig, t: int,
                           schedule_samples: int,
                           batches: int = 10,
                           budget: Optional[OperationBudget] = None) -> CrosscheckResult:
    """Drive the regenerating chain by sampled refresh schedules.

    Each schedule draws its refresh times, freezes the walk on refresh
    steps, and pushes the exact conditional law through the piecewise
    static kernels; averaging over schedules must reproduce the
    deterministic marginal estimate at the same t.  The jackknife over
    schedule batches gives the std_err.
    """
    alpha = cfg.require_alpha()
    if t < 0:
        raise BadValue("t must be nonnegative")
    if schedule_samples < batches:
        raise BadValue("need at least one schedule per batch")
    seq = cfg.seq
    mu = in_degree_distribution(seq)
    starts, _ = resolve_replicate_starts(cfg)
    x = starts[0]
    base = RngStream(cfg.root_seed)
    g_sigma = sample_digraph(seq, base.lane(_LANE_ENV_A, 0))
    k_sigma = kernel_from_digraph(g_sigma)
    monitor = MassMonitor()
    if budget is not None:
        budget.charge(float(schedule_samples + 1) * t * seq.m)

    # deterministic side: no refresh happens with weight (1-alpha)^t and
    # conditional law P_sigma^t(x, .); sampling marginalizes the rest
    v = delta_at(x, seq.n)
    v = propagate(v, k_sigma, t, monitor)
    exact = (1.0 - alpha) ** t * tv_distance(v, mu)

    total = np.zeros(seq.n)
    batch_sums = np.zeros((batches, seq.n))
    batch_counts = np.zeros(batches, dtype=np.int64)
    refreshes = 0
    for m in range(schedule_samples):
        sched_gen = base.lane(_LANE_SCHED, _pair(m, 0)).generator()
        flips = sched_gen.random(t) < alpha
        w = delta_at(x, seq.n)
        kernel = k_sigma
        env_used = 0
        for step in range(t):
            if flips[step]:
                env_used += 1
                g = sample_digraph(seq, base.lane(_LANE_SCHED, _pair(m, env_used)))
                kernel = kernel_from_digraph(g)
                # refresh step: the environment changes, the walker holds
            else:
                w = propagate(w, kernel, 1, monitor)
        refreshes += env_used
        total += w
        b = m % batches
        batch_sums[b] += w
        batch_counts[b] += 1

    mean_law = total / schedule_samples
    sampled = tv_distance(mean_law, mu)
    loo = []
    for b in range(batches):
        rest = (total - batch_sums[b]) / (schedule_samples - batch_counts[b])
        loo.append(tv_distance(rest, mu))
    loo_arr = np.asarray(loo)
    std_err = float(math.sqrt((batches - 1) / batches
                              * float(((loo_arr - loo_arr.mean()) ** 2).sum())))
    return CrosscheckResult(t=t, exact=exact, sampled=sampled,
                            std_err=std_err, schedules=schedule_samples,
                            mean_refreshes=refreshes / schedule_samples)


# ---------------------------------------------------------------------------
# annealed law: averaging the environment before walking kills the cutoff
# ---------------------------------------------------------------------------

def annealed_check(cfg: ExperimentConfig, t_grid: Sequence[int],
                   budget: Optional[OperationBudget] = None,
                   threads: int = 1) -> ExperimentReport:
    """TV between the environment-averaged t-step law and the in-law.

    The averaged law mixes essentially immediately, so the theory column
    is 0 at every t >= 1.  std_err is the analytic Monte-Carlo bound
    0.5 * sum_y sqrt(var_hat(y) / samples), which dominates the bias of
    plugging the sample mean into TV.
    """
    ts = sorted(set(int(t) for t in t_grid))
    if not ts or ts[0] < 0:
        raise BadValue("t_grid must hold nonnegative integers")
    seq = cfg.seq
    mu = in_degree_distribution(seq)
    starts, mode = resolve_max_starts(cfg)
    samples = cfg.env_samples
    if budget is not None:
        budget.charge(float(samples) * len(starts) * max(ts) * seq.m)
    base = RngStream(cfg.root_seed)
    shape = (len(ts), len(starts), seq.n)
    mean_acc = np.zeros(shape)
    sq_acc = np.zeros(shape)
    monitor = MassMonitor()

    def walk_one_env(j: int):
        g = sample_digraph(seq, base.lane(_LANE_ENV_A, j))
        kernel = kernel_from_digraph(g)
        mon = MassMonitor()
        laws = np.empty((len(ts), len(starts), seq.n))
        for xi, x in enumerate(starts):
            v = delta_at(x, seq.n)
            cur = 0
            for ti, t in enumerate(ts):
                v = propagate(v, kernel, t - cur, mon)
                cur = t
                laws[ti, xi] = v
        return laws, mon

    for laws, mon in _parallel_map(walk_one_env, range(samples), threads):
        monitor.merge(mon)
        mean_acc += laws
        sq_acc += laws * laws

    mean_acc /= samples
    rows = []
    for ti, t in enumerate(ts):
        dists = np.abs(mean_acc[ti] - mu[None, :]).sum(axis=1) * 0.5
        worst = int(np.argmax(dists))
        if samples > 1:
            var = (sq_acc[ti, worst] - samples * mean_acc[ti, worst] ** 2)
            var = np.maximum(var / (samples - 1), 0.0)
            err = 0.5 * float(np.sqrt(var / samples).sum())
        else:
            err = 0.0
        rows.append(ReportRow(
            abscissa=float(t), estimate=float(dists[worst]), std_err=err,
            theory=0.0, n_effective=samples,
        ))
    meta = {
        "experiment": "annealed",
        "n": seq.n, "model": seq.model.value, "root_seed": cfg.root_seed,
        "times": ts, "env_samples": samples,
        "start_mode": mode, "start_count": len(starts),
        "renormalizations": monitor.renormalizations,
        "max_drift": monitor.max_drift,
        "worst_start": {str(t): int(np.argmax(
            np.abs(mean_acc[ti] - mu[None, :]).sum(axis=1)))
            for ti, t in enumerate(ts)},
    }
    return ExperimentReport("annealed", rows, meta)


# ---------------------------------------------------------------------------
# path weights: trajectory log-weights concentrate at the entropy rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathWeightResult:
    """Concentration summary for sampled two-environment trajectories."""
    samples: int
    t: int
    switch_time: int
    entropy: float
    mean_rate: float
    frac_in_window: float
    epsilon: float


def path_weight_lln(cfg: ExperimentConfig, s: int, t: int,
                    traj_samples: int, epsilon: float = 0.1,
                    budget: Optional[OperationBudget] = None) -> PathWeightResult:
    """Sample trajectories across an environment switch and weigh them.

    Draws starts from the in-law, walks s steps in the first environment
    and t - s in the second, and checks that -log(weight)/t concentrates
    at the degree entropy: the fraction with -log w in
    [(1-eps) H t, (1+eps) H t] is returned along with the mean rate.
    """
    if not 0 <= s <= t or t < 1:
        raise BadRange(f"need 0 <= s <= t with t >= 1, got s={s}, t={t}")
    if traj_samples < 1:
        raise BadValue("traj_samples must be >= 1")
    if not 0 < epsilon < 1:
        raise BadValue("epsilon must be in (0, 1)")
    seq = cfg.seq
    scale = entropic_scale(seq)
    mu = in_degree_distribution(seq)
    base = RngStream(cfg.root_seed)
    g_sigma = sample_digraph(seq, base.lane(_LANE_ENV_A, 0))
    g_eta = sample_digraph(seq, base.lane(_LANE_ENV_B, 0))
    k_sigma = kernel_from_digraph(g_sigma)
    k_eta = kernel_from_digraph(g_eta)
    if budget is not None:
        budget.charge(float(traj_samples) * t * seq.delta)

    start_gen = base.lane(_LANE_STARTS).generator()
    xs = start_gen.choice(seq.n, size=traj_samples, replace=True, p=mu)
    log_weights = np.empty(traj_samples)
    for m in range(traj_samples):
        traj = sample_trajectory(int(xs[m]), s, t, g_sigma, g_eta,
                                 base.lane(_LANE_TRAJ, m))
        log_weights[m] = path_log_weight(traj, k_sigma, k_eta)

    rates = -log_weights / t
    target = scale.entropy
    in_window = (np.abs(-log_weights / (target * t) - 1.0) <= epsilon)
    return PathWeightResult(
        samples=traj_samples, t=t, switch_time=s, entropy=target,
        mean_rate=float(rates.mean()),
        frac_in_window=float(in_window.mean()),
        epsilon=epsilon,
    )


def path_weight_report(cfg: ExperimentConfig, s: int, t: int,
                       traj_samples: int, epsilon: float = 0.1,
                       budget: Optional[OperationBudget] = None) -> ExperimentReport:
    """Curve-shaped wrapper: one row per quantity, theory = (1, H)."""
    res = path_weight_lln(cfg, s, t, traj_samples, epsilon, budget)
    rows = [
        ReportRow(abscissa=0.0, estimate=res.frac_in_window,
                  std_err=float(math.sqrt(res.frac_in_window
                                          * (1 - res.frac_in_window)
                                          / res.samples)),
                  theory=1.0, n_effective=res.samples),
    ]
    meta = {
        "experiment": "weight-lln",
        "n": cfg.seq.n, "model": cfg.seq.model.value,
        "root_seed": cfg.root_seed,
        "t": res.t, "switch_time": res.switch_time,
        "entropy": res.entropy, "mean_rate": res.mean_rate,
        "rate_abs_error": abs(res.mean_rate - res.entropy),
        "epsilon": res.epsilon, "samples": res.samples,
        "row_meaning": "fraction of trajectories in the entropy window",
    }
    return ExperimentReport("weight-lln", rows, meta)


# ---------------------------------------------------------------------------
# stationary diagnostics as experiments
# ---------------------------------------------------------------------------

def stationary_diagnostics(cfg: ExperimentConfig,
                           budget: Optional[OperationBudget] = None):
    """Per-replicate stationary solves; returns (rows, failures).

    Thin wrapper so the command-line driver and library callers share one
    stream layout with the other experiments.
    """
    from .stationary import solve_replicates
    return solve_replicates(cfg.seq, cfg.env_samples,
                            RngStream(cfg.root_seed).lane(_LANE_GAP),
                            tol=cfg.tol, max_iters=cfg.max_iters,
                            budget=budget)


def stationary_gap_report(cfg: ExperimentConfig,
                          replicates: Optional[int] = None,
                          budget: Optional[OperationBudget] = None) -> ExperimentReport:
    """Mean distance between stationary law and in-law, as a one-row curve."""
    gr = estimate_stationary_gap(cfg.seq,
                                 cfg.env_samples if replicates is None
                                 else int(replicates),
                                 RngStream(cfg.root_seed).lane(_LANE_GAP),
                                 tol=cfg.tol, max_iters=cfg.max_iters,
                                 budget=budget)
    theory = 0.0 if cfg.seq.is_eulerian else math.nan
    rows = [ReportRow(abscissa=0.0, estimate=gr.gap, std_err=gr.std_err,
                      theory=theory, n_effective=gr.replicates_used)]
    meta = {
        "experiment": "q-estimate",
        "n": cfg.seq.n, "model": cfg.seq.model.value,
        "root_seed": cfg.root_seed,
        "replicates": gr.replicates_used, "solve_failures": gr.failures,
        "eulerian": cfg.seq.is_eulerian,
    }
    return ExperimentReport("q-estimate", rows, meta)
