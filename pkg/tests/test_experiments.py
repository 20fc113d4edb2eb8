"""Experiment drivers: exact identities at small scale, wiring, metadata."""

import math

import numpy as np
import pytest

from mixlab import (ExperimentConfig, RngStream, annealed_check,
                    double_cutoff_sweep, entropic_scale, gamma_hat,
                    in_degree_distribution, joint_relaxation_curve,
                    kernel_from_digraph, marginal_mc_crosscheck,
                    marginal_relaxation_curve, path_weight_lln,
                    path_weight_report, sample_digraph,
                    static_cutoff_profile, stationary_distribution,
                    stationary_gap_report, tv_distance, validate_degrees)
from mixlab.errors import BadRange, BadValue, BudgetExceeded
from mixlab.experiments import (resolve_max_starts, resolve_replicate_starts,
                                _floor_time)
from mixlab.walk import OperationBudget, delta_at, propagate


REG3_120 = validate_degrees("dcm", [3] * 120, [3] * 120)


def cfg_for(seq, **kw):
    base = dict(seq=seq, root_seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(BadValue):
        cfg_for(REG3_120, alpha=1.5)
    with pytest.raises(BadValue):
        cfg_for(REG3_120, alpha=0.0)
    with pytest.raises(BadValue):
        cfg_for(REG3_120, env_samples=0)
    with pytest.raises(BadValue):
        cfg_for(REG3_120, beta_grid=(0.5, -1.0))
    with pytest.raises(BadValue):
        gamma_hat(cfg_for(REG3_120))  # alpha unset


def test_floor_time_survives_float_dust():
    assert _floor_time(1.2 / 0.4) == 3  # raw floor would give 2
    assert _floor_time(2.0) == 2
    assert _floor_time(4.999999) == 4


def test_gamma_hat_is_derived_from_alpha_and_scale():
    cfg = cfg_for(REG3_120, alpha=0.25)
    want = 0.25 * entropic_scale(REG3_120).entropic_time
    assert gamma_hat(cfg) == pytest.approx(want, abs=1e-12)


def test_start_resolution_modes():
    small = cfg_for(REG3_120, start_vertices=8)
    starts, mode = resolve_max_starts(small)
    assert mode == "exhaustive" and len(starts) == 120

    big_seq = validate_degrees("ocm", [2] * 2500)
    sampled, mode = resolve_max_starts(cfg_for(big_seq, start_vertices=8))
    assert mode == "sample"
    assert len(sampled) == 8 == len(set(sampled))
    assert sampled == sorted(sampled)
    again, _ = resolve_max_starts(cfg_for(big_seq, start_vertices=8))
    assert again == sampled  # deterministic in the root seed

    explicit, mode = resolve_max_starts(cfg_for(REG3_120,
                                                start_vertices=[4, 9]))
    assert mode == "explicit" and explicit == [4, 9]
    with pytest.raises(BadRange):
        resolve_max_starts(cfg_for(REG3_120, start_vertices=[500]))
    with pytest.raises(BadValue):
        resolve_max_starts(cfg_for(REG3_120, start_vertices="some"))

    reps, mode = resolve_replicate_starts(cfg_for(REG3_120, start_vertices=6))
    assert mode == "sample" and len(reps) == 6


def test_static_profile_rows_and_metadata():
    cfg = cfg_for(REG3_120, beta_grid=(0.5, 1.05, 2.0), env_samples=3,
                  start_vertices=5)
    report = static_cutoff_profile(cfg)
    assert [row.abscissa for row in report.rows] == [0.5, 1.05, 2.0]
    assert report.rows[0].theory == 1.0 and report.rows[2].theory == 0.0
    assert report.rows[1].flagged  # within the margin of the jump
    assert report.metadata["flagged_abscissae"] == [1.05]
    assert report.rows[0].estimate > report.rows[2].estimate
    for row in report.rows:
        assert 0.0 <= row.estimate <= 1.0
        assert row.n_effective == 3
    assert report.metadata["start_mode"] == "exhaustive"
    assert report.metadata["start_count"] == 120


def test_joint_time_zero_distance_is_one():
    # beta/alpha below 1 floors to t=0: nothing has moved or refreshed
    cfg = cfg_for(REG3_120, alpha=0.9, beta_grid=(0.05,), env_samples=2,
                  start_vertices=2)
    report = joint_relaxation_curve(cfg)
    assert report.rows[0].estimate == pytest.approx(1.0, abs=1e-12)


def test_joint_single_step_identity():
    # with t=1 the averaged row is the start point itself, and the whole
    # estimate collapses to 1 - pi_eta(x); check the wiring reproduces it
    seq = REG3_120
    cfg = cfg_for(seq, alpha=0.5, beta_grid=(0.5,), env_samples=1,
                  start_vertices=[17])
    report = joint_relaxation_curve(cfg)
    eta = sample_digraph(seq, RngStream(5).lane(2, 0))  # replicate 0, env 0
    pi = stationary_distribution(kernel_from_digraph(eta),
                                 start=in_degree_distribution(seq)).distribution
    assert report.rows[0].estimate == pytest.approx(1.0 - pi[17], abs=1e-12)
    assert report.metadata["gamma_hat"] == pytest.approx(
        0.5 * entropic_scale(seq).entropic_time)


def test_marginal_matches_direct_propagation():
    seq = REG3_120
    cfg = cfg_for(seq, alpha=0.3, beta_grid=(0.6, 1.2), start_vertices=[9])
    report = marginal_relaxation_curve(cfg)
    kernel = kernel_from_digraph(sample_digraph(seq, RngStream(5).lane(1, 0)))
    mu = in_degree_distribution(seq)
    for row in report.rows:
        t = _floor_time(row.abscissa / 0.3)
        v = propagate(delta_at(9, seq.n), kernel, t)
        want = (1.0 - 0.3) ** t * tv_distance(v, mu)
        assert row.estimate == pytest.approx(want, abs=1e-12)


def test_marginal_entropic_scale_uses_step_profile():
    cfg = cfg_for(REG3_120, alpha=0.02, beta_grid=(0.5, 2.0),
                  start_vertices=[3])
    report = marginal_relaxation_curve(cfg, time_scale="entropic")
    assert report.metadata["curve"] == "static_profile"
    assert report.metadata["q_exact"] is True
    assert report.rows[0].theory == 1.0
    assert report.rows[1].theory == 0.0  # Eulerian: exact zero floor
    ts = report.metadata["times"]
    scale = entropic_scale(REG3_120).entropic_time
    assert ts == [_floor_time(0.5 * scale), _floor_time(2.0 * scale)]
    with pytest.raises(BadValue):
        marginal_relaxation_curve(cfg, time_scale="bogus")


def test_marginal_regime_labels():
    fast = cfg_for(REG3_120, alpha=0.02, beta_grid=(0.5,), start_vertices=[0])
    assert marginal_relaxation_curve(fast).metadata["regime"] == "0"
    # entropy log 2 makes the entropic time long enough for gamma_hat > 5
    slow_mix = validate_degrees("dcm", [2] * 120, [2] * 120)
    frozen = cfg_for(slow_mix, alpha=0.9, beta_grid=(0.5,),
                     start_vertices=[0])
    report = marginal_relaxation_curve(frozen)
    assert report.metadata["gamma_hat"] > 5.0
    assert report.metadata["regime"] == "inf"
    assert report.metadata["curve"] == "marginal_gammainf"


def test_crosscheck_rarely_refreshing_schedules_agree_with_exact():
    seq = validate_degrees("dcm", [3] * 60, [3] * 60)
    cfg = cfg_for(seq, alpha=0.01, start_vertices=[2])
    res = marginal_mc_crosscheck(cfg, t=4, schedule_samples=100)
    assert res.mean_refreshes < 0.2
    assert abs(res.sampled - res.exact) < 0.05
    assert res.std_err >= 0.0
    assert res.schedules == 100


def test_crosscheck_high_refresh_rate_freezes_the_walk():
    # nearly every step refreshes the environment and holds the walker, so
    # the sampled law stays near the start while the no-refresh weight dies
    seq = validate_degrees("dcm", [3] * 60, [3] * 60)
    cfg = cfg_for(seq, alpha=0.97, start_vertices=[2])
    res = marginal_mc_crosscheck(cfg, t=3, schedule_samples=60)
    assert res.exact < 0.01
    assert res.sampled > 0.8
    assert res.mean_refreshes > 2.0


def test_annealed_single_step_is_noise_level():
    # averaged over environments the one-step law from any vertex is the
    # in-law exactly, so the estimate must sit at Monte-Carlo noise level
    seq = validate_degrees("dcm", [3] * 60, [3] * 60)
    cfg = cfg_for(seq, env_samples=400, start_vertices=[0, 1])
    report = annealed_check(cfg, t_grid=(1,))
    assert report.rows[0].estimate <= report.rows[0].std_err
    assert report.rows[0].theory == 0.0
    with pytest.raises(BadValue):
        annealed_check(cfg, t_grid=())


def test_path_weights_exact_for_uniform_out_maps():
    # distinct targets mean every step has weight exactly 1/3, so the rate
    # is the entropy log 3 for every single trajectory
    seq = validate_degrees("ocm", [3] * 30)
    cfg = cfg_for(seq)
    res = path_weight_lln(cfg, s=2, t=6, traj_samples=50)
    assert res.entropy == pytest.approx(math.log(3), abs=1e-12)
    assert res.mean_rate == pytest.approx(math.log(3), abs=1e-12)
    assert res.frac_in_window == 1.0
    with pytest.raises(BadRange):
        path_weight_lln(cfg, s=5, t=3, traj_samples=10)


def test_path_weight_report_row():
    seq = validate_degrees("ocm", [3] * 30)
    report = path_weight_report(cfg_for(seq), s=1, t=4, traj_samples=40)
    assert report.rows[0].estimate == 1.0
    assert report.rows[0].theory == 1.0
    assert report.metadata["rate_abs_error"] < 1e-12


def test_double_cutoff_validates_switch_grid():
    cfg = cfg_for(REG3_120, s_grid=(0, 50), env_samples=2, start_vertices=3)
    with pytest.raises(BadRange):
        double_cutoff_sweep(cfg, 0.5)  # t is small, 50 is out of range


def test_double_cutoff_statistic_depends_on_beta():
    cfg = cfg_for(REG3_120, s_grid=(0, 1, 2), env_samples=2, start_vertices=4)
    below = double_cutoff_sweep(cfg, 0.5)
    assert below.metadata["statistic"] == "min_over_starts"
    above = double_cutoff_sweep(cfg, 1.8)
    assert above.metadata["statistic"] == "max_over_starts"
    assert set(above.metadata["per_s_min"]) == {"0", "1", "2"}
    assert all(len(v) == 2 for v in above.metadata["per_s_max"].values())


def test_budget_cap_stops_heavy_runs_upfront():
    cfg = cfg_for(REG3_120, alpha=0.01, beta_grid=(2.0,), env_samples=5,
                  start_vertices=4)
    with pytest.raises(BudgetExceeded):
        joint_relaxation_curve(cfg, budget=OperationBudget(cap=100.0))


def test_gap_report_theory_column():
    eul = cfg_for(REG3_120, env_samples=3)
    report = stationary_gap_report(eul)
    assert report.rows[0].theory == 0.0
    assert report.rows[0].estimate < 1e-9
    ocm = cfg_for(validate_degrees("ocm", [2] * 40), env_samples=3)
    report2 = stationary_gap_report(ocm)
    assert math.isnan(report2.rows[0].theory)
    assert report2.rows[0].estimate > 0.0
