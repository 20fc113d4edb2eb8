"""Command-line driver: one experiment per invocation, CSV + JSON out.

Flag values win over config-file values, which win over defaults.  Output
files are written atomically and are byte-identical across rerun and
thread counts for a fixed root seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .core import ModelKind, validate_degrees
from .errors import (AllReplicatesFailed, BadGeneratorSyntax, BadValue,
                     MissingRequired, MixingLabError, NotConverged,
                     UnknownFlag)
from .experiments import (EXPERIMENT_NAMES, ExperimentConfig, CrosscheckResult,
                          annealed_check, double_cutoff_sweep,
                          joint_relaxation_curve, marginal_mc_crosscheck,
                          marginal_relaxation_curve, path_weight_report,
                          static_cutoff_profile, stationary_diagnostics,
                          stationary_gap_report)
from .report import (ExperimentReport, ReportRow, atomic_write_text,
                     diagnostics_csv_text)
from .rng import RngStream
from .stationary import DEFAULT_TOL
from .walk import OperationBudget

# stream lane reserved for degree-multiset shuffles; experiments use 1..6
DEGREE_LANE = 7

_DEFAULTS = {
    "model": "dcm",
    "env_samples": 10,
    "start_vertices": "32",
    "root_seed": 0,
    "out_dir": ".",
    "time_scale": "regeneration",
    "epsilon": 0.1,
    "schedule_samples": 200,
    "traj_samples": 1000,
    "gap_replicates": 20,
    "budget": 5e10,
    "tol": DEFAULT_TOL,
    "threads": None,  # resolved from MIXLAB_THREADS, else 1
}


@dataclass(frozen=True)
class RunSpec:
    experiment: str
    model: str = "dcm"
    generator: Optional[str] = None
    degrees: Optional[str] = None
    degrees_file: Optional[str] = None
    n: Optional[int] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    beta_grid: Optional[Sequence[float]] = None
    s_grid: Optional[Sequence[int]] = None
    t: Optional[int] = None
    t_grid: Optional[Sequence[int]] = None
    switch_time: Optional[int] = None
    traj_samples: int = 1000
    epsilon: float = 0.1
    schedule_samples: int = 200
    env_samples: int = 10
    start_vertices: str = "32"
    time_scale: str = "regeneration"
    gap_replicates: int = 20
    root_seed: int = 0
    out_dir: str = "."
    threads: Optional[int] = None
    budget: float = 5e10
    tol: float = DEFAULT_TOL
    max_iters: Optional[int] = None


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit on bad input; surface a typed error instead
    def error(self, message):
        raise BadValue(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="mixlab", add_help=True,
                description="random-walk mixing experiments on random digraphs")
    p.add_argument("experiment", choices=EXPERIMENT_NAMES)
    p.add_argument("--config", help="JSON file of defaults (snake_case keys)")
    p.add_argument("--model", choices=["dcm", "ocm"])
    p.add_argument("--generator",
                   help="regular:D (with --n), mix:D1xK1,D2xK2,..., "
                        "eulerian:D1xK1,...")
    p.add_argument("--degrees", help="inline JSON degree object")
    p.add_argument("--degrees-file", help="path to a JSON degree object")
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-grid", help="comma-separated floats")
    p.add_argument("--s-grid", help="comma-separated switch times")
    p.add_argument("--t", type=int)
    p.add_argument("--t-grid", help="comma-separated times")
    p.add_argument("--switch-time", type=int)
    p.add_argument("--traj-samples", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--schedule-samples", type=int)
    p.add_argument("--env-samples", type=int)
    p.add_argument("--start-vertices",
                   help="'all', a count, or comma-separated vertices "
                        "(a trailing comma forces a one-vertex list)")
    p.add_argument("--time-scale", choices=["regeneration", "entropic"])
    p.add_argument("--gap-replicates", type=int)
    p.add_argument("--root-seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--budget", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    return p


def _float_list(text: str):
    try:
        return tuple(float(tok) for tok in str(text).split(",") if tok != "")
    except ValueError as exc:
        raise BadValue(f"bad numeric list {text!r}") from exc


def _int_list(text: str):
    try:
        return tuple(int(tok) for tok in str(text).split(",") if tok != "")
    except ValueError as exc:
        raise BadValue(f"bad integer list {text!r}") from exc


def parse_run_spec(argv: Sequence[str]) -> RunSpec:
    """Turn CLI words into a RunSpec; unknown flags are typed errors."""
    parser = _build_parser()
    ns, extras = parser.parse_known_args(list(argv))
    if extras:
        raise UnknownFlag(f"unrecognized arguments: {' '.join(extras)}")

    file_values = {}
    if ns.config:
        with open(ns.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise BadValue("config file must hold a JSON object")
        file_values = dict(raw)

    merged = dict(_DEFAULTS)
    known = {f.name for f in fields(RunSpec)}
    for key, value in file_values.items():
        if key not in known:
            raise UnknownFlag(f"unknown config key {key!r}")
        merged[key] = value
    for key in known:
        flag_val = getattr(ns, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    merged["experiment"] = ns.experiment

    for key in ("beta_grid",):
        if isinstance(merged.get(key), str):
            merged[key] = _float_list(merged[key])
        elif merged.get(key) is not None:
            merged[key] = tuple(float(b) for b in merged[key])
    for key in ("s_grid", "t_grid"):
        if isinstance(merged.get(key), str):
            merged[key] = _int_list(merged[key])
        elif merged.get(key) is not None:
            merged[key] = tuple(int(s) for s in merged[key])
    sv = merged["start_vertices"]
    if isinstance(sv, (list, tuple)):
        merged["start_vertices"] = ",".join(str(int(v)) for v in sv)
    else:
        merged["start_vertices"] = str(sv)

    spec = RunSpec(**{k: merged.get(k) for k in known})
    if spec.alpha is not None and not (0.0 < spec.alpha < 1.0):
        raise BadValue(f"alpha must be in (0, 1), got {spec.alpha}")
    return spec


def _parse_blocks(body: str):
    blocks = []
    for piece in body.split(","):
        if "x" not in piece:
            raise BadGeneratorSyntax(f"expected DxCOUNT, got {piece!r}")
        d_txt, _, k_txt = piece.partition("x")
        try:
            d, k = int(d_txt), int(k_txt)
        except ValueError as exc:
            raise BadGeneratorSyntax(f"bad block {piece!r}") from exc
        if d < 2 or k < 1:
            raise BadGeneratorSyntax(f"bad block {piece!r}: need degree >= 2 "
                                     "and count >= 1")
        blocks.append((d, k))
    if not blocks:
        raise BadGeneratorSyntax("empty generator body")
    return blocks


def degrees_from_generator(token: str, model: ModelKind, root_seed: int,
                           n: Optional[int] = None):
    """Degree sequences from compact ensemble descriptions.

    ``regular:D`` needs an explicit size; ``mix:...`` pairs the block
    out-degrees with an independently shuffled copy of the same multiset,
    so the matching is almost surely not Eulerian; ``eulerian:...`` sets
    in-degree equal to out-degree vertex by vertex.
    """
    kind, sep, body = token.partition(":")
    if not sep:
        raise BadGeneratorSyntax(f"generator {token!r} needs a ':'")
    if kind == "regular":
        try:
            d = int(body)
        except ValueError as exc:
            raise BadGeneratorSyntax(f"bad degree {body!r}") from exc
        if n is None:
            raise MissingRequired("regular:D needs --n")
        out = np.full(n, d, dtype=np.int64)
        in_deg = out.copy() if model is ModelKind.DCM else None
        return validate_degrees(model, out, in_deg)
    if kind in ("mix", "eulerian"):
        blocks = _parse_blocks(body)
        out = np.concatenate([np.full(k, d, dtype=np.int64)
                              for d, k in blocks])
        if model is ModelKind.OCM:
            return validate_degrees(model, out, None)
        if kind == "eulerian":
            return validate_degrees(model, out, out.copy())
        gen = RngStream(root_seed).lane(DEGREE_LANE).generator()
        return validate_degrees(model, out, gen.permutation(out))
    raise BadGeneratorSyntax(f"unknown generator kind {kind!r}")


def _degrees_from_mapping(obj: dict, model: ModelKind):
    if "out_degrees" not in obj:
        raise MissingRequired("degree object needs 'out_degrees'")
    this_model = ModelKind(obj.get("model", model.value))
    return validate_degrees(this_model, obj["out_degrees"],
                            obj.get("in_degrees"))


def build_degree_sequence(spec: RunSpec):
    model = ModelKind(spec.model)
    sources = [s for s in (spec.generator, spec.degrees, spec.degrees_file)
               if s is not None]
    if len(sources) != 1:
        raise MissingRequired("give exactly one of --generator, --degrees, "
                              "--degrees-file")
    if spec.generator is not None:
        return degrees_from_generator(spec.generator, model, spec.root_seed,
                                      spec.n)
    if spec.degrees is not None:
        return _degrees_from_mapping(json.loads(spec.degrees), model)
    with open(spec.degrees_file, "r", encoding="utf-8") as fh:
        return _degrees_from_mapping(json.load(fh), model)


def _start_vertices_value(text: str):
    if text == "all":
        return "all"
    if "," in text:
        return [int(tok) for tok in text.split(",") if tok != ""]
    try:
        return int(text)
    except ValueError as exc:
        raise BadValue(f"bad start-vertices {text!r}") from exc


def _resolve_threads(spec: RunSpec) -> int:
    if spec.threads is not None:
        return max(1, spec.threads)
    env = os.environ.get("MIXLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise BadValue(f"bad MIXLAB_THREADS {env!r}") from exc
    return 1


def _out_base(spec: RunSpec, n: int) -> str:
    alpha_txt = "na" if spec.alpha is None else f"{spec.alpha:g}"
    return os.path.join(spec.out_dir,
                        f"{spec.experiment}_n{n}_a{alpha_txt}"
                        f"_seed{spec.root_seed}")


def _require(spec: RunSpec, **named):
    missing = [flag for flag, value in named.items() if value is None]
    if missing:
        raise MissingRequired(f"{spec.experiment} needs "
                              + ", ".join(f"--{m.replace('_', '-')}"
                                          for m in missing))


def _crosscheck_report(result: CrosscheckResult, spec: RunSpec,
                       seq) -> ExperimentReport:
    # theory column carries the deterministic estimate the sampler must hit
    row = ReportRow(abscissa=float(result.t), estimate=result.sampled,
                    std_err=result.std_err, theory=result.exact,
                    n_effective=result.schedules)
    meta = {
        "experiment": "marginal-crosscheck",
        "n": seq.n, "model": seq.model.value, "root_seed": spec.root_seed,
        "alpha": spec.alpha, "t": result.t,
        "schedules": result.schedules,
        "mean_refreshes": result.mean_refreshes,
        "deterministic_estimate": result.exact,
        "sampled_estimate": result.sampled,
        "abs_gap": abs(result.sampled - result.exact),
    }
    return ExperimentReport("marginal-crosscheck", [row], meta)


def run(spec: RunSpec) -> int:
    """Execute one experiment; writes CSV + metadata and prints a summary."""
    seq = build_degree_sequence(spec)
    threads = _resolve_threads(spec)
    budget = OperationBudget(cap=spec.budget)
    cfg = ExperimentConfig(
        seq=seq,
        root_seed=spec.root_seed,
        alpha=spec.alpha,
        beta_grid=spec.beta_grid or (),
        s_grid=spec.s_grid,
        env_samples=spec.env_samples,
        start_vertices=_start_vertices_value(spec.start_vertices),
        tol=spec.tol,
        max_iters=spec.max_iters,
    )
    os.makedirs(spec.out_dir, exist_ok=True)
    base = _out_base(spec, seq.n)
    exp = spec.experiment

    if exp == "diagnostics":
        rows, failures = stationary_diagnostics(cfg, budget=budget)
        csv_path = base + ".csv"
        atomic_write_text(csv_path, diagnostics_csv_text(rows))
        meta = {
            "experiment": "diagnostics", "n": seq.n,
            "model": seq.model.value, "root_seed": spec.root_seed,
            "replicates": len(rows), "solve_failures": failures,
            "threads": threads,
        }
        atomic_write_text(base + ".json",
                          json.dumps(meta, indent=2, sort_keys=True) + "\n")
        print(f"diagnostics: {len(rows)} converged, {failures} failed "
              f"-> {csv_path}")
        if rows:
            return 0
        return 2

    if exp == "static-cutoff":
        _require(spec, beta_grid=spec.beta_grid)
        report = static_cutoff_profile(cfg, budget=budget, threads=threads)
    elif exp == "double-cutoff":
        _require(spec, beta=spec.beta, s_grid=spec.s_grid)
        report = double_cutoff_sweep(cfg, spec.beta, budget=budget,
                                     threads=threads)
    elif exp == "joint":
        _require(spec, alpha=spec.alpha, beta_grid=spec.beta_grid)
        report = joint_relaxation_curve(cfg, budget=budget, threads=threads)
    elif exp == "marginal":
        _require(spec, alpha=spec.alpha, beta_grid=spec.beta_grid)
        report = marginal_relaxation_curve(cfg, time_scale=spec.time_scale,
                                           gap_replicates=spec.gap_replicates,
                                           budget=budget, threads=threads)
    elif exp == "marginal-crosscheck":
        _require(spec, alpha=spec.alpha, t=spec.t)
        result = marginal_mc_crosscheck(cfg, spec.t, spec.schedule_samples,
                                        budget=budget)
        report = _crosscheck_report(result, spec, seq)
    elif exp == "annealed":
        _require(spec, t_grid=spec.t_grid)
        report = annealed_check(cfg, spec.t_grid, budget=budget,
                                threads=threads)
    elif exp == "weight-lln":
        _require(spec, t=spec.t, switch_time=spec.switch_time)
        report = path_weight_report(cfg, spec.switch_time, spec.t,
                                    spec.traj_samples, spec.epsilon,
                                    budget=budget)
    elif exp == "q-estimate":
        report = stationary_gap_report(cfg, replicates=spec.gap_replicates,
                                       budget=budget)
    else:
        raise BadValue(f"unknown experiment {exp!r}")

    report.metadata.setdefault("threads", threads)
    report.metadata.setdefault("operations_charged", budget.used)
    csv_path = base + ".csv"
    report.write(csv_path, base + ".json")
    print(report.summary_line())
    print(f"wrote {csv_path}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        spec = parse_run_spec(args)
        return run(spec)
    except (AllReplicatesFailed, NotConverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MixingLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
