import numpy as np
import pytest

import conewidth as cw
from conewidth.errors import InvalidParameterError


TABLE1_U = {1: 9.458, 2: 16.828, 3: 23.4544, 10: 61.244, 20: 104.1814}


def test_closed_form_matches_published_l1_values():
    for s, ref in TABLE1_U.items():
        val, _ = cw.u_delta_l1_closed_form(1000, s)
        assert val == pytest.approx(ref, rel=5e-4)


def test_closed_form_vs_monte_carlo_l1():
    sig = cw.gen_simple_ground_truth("sparse", 100, 5, seed=1)
    m = cw.build_model("l1", sig)
    rep = cw.estimate_U_delta(m, samples=20000, seed=2)
    closed, _ = cw.u_delta_l1_closed_form(100, 5)
    assert rep.value == pytest.approx(closed, rel=0.01)


def test_closed_form_vs_monte_carlo_l12():
    sig = cw.gen_simple_ground_truth("block_sparse", (30, 4), 3, seed=3)
    m = cw.build_model("l12", sig)
    rep = cw.estimate_U_delta(m, samples=12000, seed=4)
    closed, _ = cw.u_delta_l12_closed_form(30, 4, 3)
    assert rep.value == pytest.approx(closed, rel=0.015)


def test_delta_of_full_support_sign_vector():
    n = 60
    sig = cw.gen_simple_ground_truth("sparse", n, n, seed=5)
    m = cw.build_model("l1", sig)
    rep = cw.estimate_delta(m, samples=4000, seed=6)
    assert rep.value <= n
    assert rep.value >= n - 1 - 3 * rep.std_error


def test_estimates_deterministic_given_seed():
    om = cw.make_finite_difference(50)
    sig = cw.gen_cosparse(om, 3, seed=7)
    m = cw.build_model("analysis_l1", sig, om)
    a = cw.estimate_delta(m, samples=500, seed=8)
    b = cw.estimate_delta(m, samples=500, seed=8)
    assert a.value == b.value and a.std_error == b.std_error


def test_error_true_nonnegative_and_paired():
    sig = cw.gen_simple_ground_truth("sparse", 80, 4, seed=9)
    m = cw.build_model("l1", sig)
    rep = cw.error_true(m, samples=3000, seed=10)
    assert rep.value >= -3 * rep.std_error
    again = cw.error_true(m, samples=3000, seed=10)
    assert rep.value == again.value


def test_foygel_gap_within_theorem_window():
    sig = cw.gen_simple_ground_truth("sparse", 200, 5, seed=11)
    m = cw.build_model("l1", sig)
    rep = cw.foygel_gap(m, samples=3000, seed=12)
    b = cw.beta(m)
    assert rep.value >= -3 * rep.std_error
    assert rep.value <= 1.6 + 4 * b + 3 * rep.std_error


def test_width_sandwich_small_instance():
    sig = cw.gen_simple_ground_truth("sparse", 100, 5, seed=13)
    m = cw.build_model("l1", sig)
    est = cw.paired_estimates(m, samples=6000, seed=14)
    w, d = est["omega"], est["delta"]
    slack = 3 * (2 * w.value * w.std_error + d.std_error)
    assert w.value ** 2 <= d.value + slack
    assert d.value <= w.value ** 2 + 1 + slack


def test_primal_width_agrees_with_dual_path():
    sig = cw.gen_simple_ground_truth("sparse", 8, 2, seed=15)
    m = cw.build_model("l1", sig)
    dual = cw.estimate_width(m, samples=400, seed=16)
    primal = cw.estimate_width_primal(m, sig, samples=400, seed=16)
    assert primal.value == pytest.approx(dual.value, abs=5e-2)


def test_error_prior_closed_forms():
    sig = cw.gen_simple_ground_truth("sparse", 1000, 1, seed=17)
    sig.payload[sig.support] = 5.0  # single spike: sign vector scale-free
    m = cw.build_model("l1", sig)
    assert cw.error_prior(m, sig) == pytest.approx(2 * np.sqrt(1000), rel=1e-12)

    sig = cw.gen_simple_ground_truth("block_sparse", (16, 3), 4, seed=18)
    m = cw.build_model("l12", sig)
    # equal block norms make the bound exactly 2 sqrt(q) / sqrt(s)
    for b in sig.active_blocks():
        blk = sig.block_partition[b]
        sig.payload[blk] /= np.linalg.norm(sig.payload[blk])
    m = cw.build_model("l12", sig)
    assert cw.error_prior(m, sig) == pytest.approx(2 * np.sqrt(16) / 2, rel=1e-9)

    X = np.zeros((7, 5))
    X[:2, :2] = np.eye(2) * 3.0
    sig = cw.StructuredSignal(X, "low_rank", rank=2)
    m = cw.build_model("nuclear", sig)
    assert cw.error_prior(m, sig) >= 2 * np.sqrt(5) / np.sqrt(2) - 1e-9


def test_error_prior_infinite_for_kernel_signal():
    om = cw.make_finite_difference(20)
    sig = cw.gen_cosparse(om, 2, seed=19)
    m = cw.build_model("analysis_l1", sig, om)
    assert cw.error_prior(m, np.ones(20)) == np.inf


def test_beta_identity_operator():
    om = cw.make_identity(12)
    sig = cw.gen_cosparse(om, 4, seed=20)
    m = cw.build_model("analysis_l1", sig, om)
    assert cw.beta(m) == pytest.approx(1.0, abs=1e-12)


def test_measurement_bounds_formula_and_guards():
    hi, lo = cw.measurement_bounds(60.84, 1000, 0.05)
    width = np.sqrt(8 * np.log(4 / 0.05) * 1000)
    assert hi == pytest.approx(60.84 + width)
    assert lo == pytest.approx(60.84 - width)
    assert cw.measurement_bounds(0.0, 100, 0.5)[1] == 0.0
    with pytest.raises(InvalidParameterError):
        cw.measurement_bounds(10.0, 100, 4.0)
    with pytest.raises(InvalidParameterError):
        cw.measurement_bounds(10.0, 100, 0.0)


def test_new_bound_hand_evaluation():
    gamma = np.sqrt(72 * np.log(3 / (1 - 4 * np.e ** -4.5 - 2 * np.e ** -4.5)))
    omega = np.sqrt(60)
    by_hand = (12 + gamma) * omega + gamma * (3 + 6) + 36
    assert cw.estimators.new_bound_value(omega, 1.0, 3.0, 3.0) == pytest.approx(
        by_hand, rel=1e-12)


def test_new_bound_infeasible_point_excluded():
    assert cw.estimators.gamma_constant(0.2, 3.0) == np.inf
    assert cw.estimators.new_bound_value(1.0, 1.0, 0.2, 3.0) == np.inf


def test_error_new_report_consistency():
    sig = cw.gen_simple_ground_truth("sparse", 120, 4, seed=21)
    m = cw.build_model("l1", sig)
    w = cw.estimate_width(m, samples=800, seed=22)
    rep = cw.error_new(m, w)
    assert rep.verify()
    assert rep.beta == 1.0
    feas = 1 - 4 * np.exp(-rep.lambda_star ** 2 / 2) - 2 * np.exp(-rep.zeta_star ** 2 / 2)
    assert feas > 0
    # optimizer does no worse than a hand-picked feasible point
    assert rep.e_n <= cw.estimators.new_bound_value(w.value, 1.0, 2.5, 3.0) + 1e-9


def test_optimize_new_bound_refinement_monotone():
    val_coarse = min(cw.estimators.new_bound_value(5.0, 1.0, lam, zeta)
                     for lam in np.exp(np.linspace(np.log(0.5), np.log(20), 60))
                     for zeta in np.exp(np.linspace(np.log(0.5), np.log(20), 60)))
    val_opt, _, _ = cw.optimize_new_bound(5.0, 1.0)
    assert val_opt <= val_coarse + 1e-12


def test_scale_invariance_of_delta_for_cosparse_signals():
    om = cw.make_finite_difference(80)
    sig = cw.gen_cosparse(om, 5, seed=23)
    m1 = cw.build_model("analysis_l1", sig, om)
    scaled = cw.StructuredSignal(7.3 * sig.payload, "analysis_sparse",
                                 support=sig.support, seed=sig.seed)
    m2 = cw.build_model("analysis_l1", scaled, om)
    a = cw.estimate_delta(m1, samples=2500, seed=24)
    b = cw.estimate_delta(m2, samples=2500, seed=24)
    assert abs(a.value - b.value) <= 3 * (a.std_error + b.std_error) + 1e-9


def test_report_reliability_flag():
    rep = cw.EstimateReport("delta", 1.0, 0.1, 1000, 0, per_sample_solver_failures=0)
    assert rep.reliable
    rep = cw.EstimateReport("delta", 1.0, 0.1, 1000, 0, per_sample_solver_failures=5)
    assert not rep.reliable


def test_report_csv_row_roundtrip():
    rep = cw.EstimateReport("omega", 1.25, 0.01, 100, 7, 0)
    row = rep.csv_row("inst")
    assert row[0] == "omega" and float(row[1]) == 1.25 and row[-1] == "inst"
