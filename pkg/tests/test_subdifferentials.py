import itertools

import numpy as np
import pytest

import conewidth as cw
from conewidth.errors import NotGeneralPositionError


def _models_for_invariants():
    out = []
    sig = cw.gen_simple_ground_truth("sparse", 40, 5, seed=1)
    out.append(cw.build_model("l1", sig))
    sig = cw.gen_simple_ground_truth("block_sparse", (10, 4), 3, seed=2)
    out.append(cw.build_model("l12", sig))
    sig = cw.gen_simple_ground_truth("low_rank", (8, 6), 2, seed=3)
    out.append(cw.build_model("nuclear", sig))
    om = cw.make_finite_difference(40)
    sig = cw.gen_cosparse(om, 4, seed=4)
    out.append(cw.build_model("analysis_l1", sig, om))
    om = cw.make_random1(30, 40, 30, seed=5)
    sig = cw.gen_cosparse(om, 5, seed=5)
    out.append(cw.build_model("analysis_l1", sig, om))
    return out


def test_l1_model_matches_sign_vector():
    sig = cw.StructuredSignal(np.array([3.0, 0.0, -2.0]), "sparse",
                              support=np.array([0, 2]))
    m = cw.build_model("l1", sig)
    assert np.array_equal(m.center, [1, 0, -1])
    assert np.array_equal(m.z0, m.center)
    assert np.array_equal(m.z1, m.center)


def test_analysis_identity_reduces_to_l1():
    sig = cw.StructuredSignal(np.array([3.0, 0.0, -2.0, 1.0]), "analysis_sparse",
                              support=np.array([0, 2, 3]))
    m = cw.build_model("analysis_l1", sig, cw.make_identity(4))
    assert np.allclose(m.z0, [1, 0, -1, 1])
    assert np.allclose(m.z1, [1, 0, -1, 1], atol=1e-7)


def test_nuclear_diagonal_case():
    sig = cw.StructuredSignal(np.diag([5.0, 0.0]), "low_rank", rank=1)
    m = cw.build_model("nuclear", sig)
    assert np.allclose(m.z0, np.diag([1.0, 0.0]))
    assert np.allclose(m.z1, np.diag([1.0, 0.0]))


def test_z0_analysis_orthogonality_identities():
    om = cw.make_finite_difference(30)
    x = np.concatenate([np.zeros(12), np.ones(18)])  # one jump up
    sig = cw.StructuredSignal(x, "analysis_sparse", support=np.array([11]))
    z0 = cw.z0_analysis(om, sig, np.array([11]))
    mask = np.ones(om.p, dtype=bool)
    mask[11] = False
    sgn = np.sign(om.entries @ x)
    assert np.abs(om.entries[mask] @ z0).max() <= 1e-10
    lhs = (om.entries.T @ sgn) @ z0
    assert abs(lhs - z0 @ z0) <= 1e-8 * max(z0 @ z0, 1.0)


def test_orthogonality_certificate_all_families():
    for m in _models_for_invariants():
        z0 = m.z0.ravel()
        nz0 = z0 @ z0
        for k in range(100):
            z = cw.sample_member(m, seed=1000 + k).ravel()
            assert abs((z - z0) @ z0) <= 1e-8 * max(nz0, 1e-12)


def test_minimality_certificate_all_families():
    for m in _models_for_invariants():
        z1n = np.linalg.norm(m.z1)
        for k in range(100):
            z = cw.sample_member(m, seed=2000 + k)
            assert z1n <= np.linalg.norm(z) + 1e-6


def test_members_satisfy_subgradient_inequality():
    rng = cw.philox_rng(77)
    for m in _models_for_invariants():
        x = m.signal.payload
        fx = m.f(x)
        for k in range(25):
            z = cw.sample_member(m, seed=3000 + k)
            y = rng.standard_normal(x.shape)
            gap = m.f(y) - fx - np.vdot(z, y - x)
            assert gap >= -1e-8 * max(abs(fx), 1.0)


def test_sup_norm_extent_closed_forms():
    sig = cw.gen_simple_ground_truth("sparse", 1000, 7, seed=6)
    lo, hi = cw.sup_norm_extent(cw.build_model("l1", sig))
    assert lo == hi == pytest.approx(2 * np.sqrt(1000))
    sig = cw.gen_simple_ground_truth("block_sparse", (25, 4), 2, seed=7)
    lo, hi = cw.sup_norm_extent(cw.build_model("l12", sig))
    assert lo == hi == pytest.approx(2 * np.sqrt(25))
    sig = cw.gen_simple_ground_truth("low_rank", (9, 6), 2, seed=8)
    lo, hi = cw.sup_norm_extent(cw.build_model("nuclear", sig))
    assert lo == hi == pytest.approx(2 * np.sqrt(6))


def test_sup_norm_extent_full_support_analysis():
    om = cw.make_identity(6)
    x = np.arange(1.0, 7.0)
    sig = cw.StructuredSignal(x, "analysis_sparse", support=np.arange(6))
    m = cw.build_model("analysis_l1", sig, om)
    lo, hi = cw.sup_norm_extent(m)
    assert lo == hi == pytest.approx(2 * np.linalg.norm(m.center))


def test_sup_norm_extent_vertex_enumeration_certifies_lower():
    om = cw.make_random2(4, 3, 1.0, seed=9)
    sig = cw.gen_cosparse(om, 2, seed=9)
    m = cw.build_model("analysis_l1", sig, om)
    lo, hi = cw.sup_norm_extent(m, restarts=20)
    B = np.asarray(m.B)
    best = max(np.linalg.norm(m.center + B @ np.array(v))
               for v in itertools.product([-1.0, 1.0], repeat=m.cosupport.size))
    assert lo == pytest.approx(2 * best, rel=1e-12)
    assert lo <= hi + 1e-12


def test_sup_norm_extent_monotone_in_restarts():
    om = cw.make_random2(30, 20, 1.0, seed=10)
    sig = cw.gen_cosparse(om, 4, seed=10)
    m = cw.build_model("analysis_l1", sig, om)
    prev = 0.0
    for r in (1, 5, 10, 20):
        lo, _ = cw.sup_norm_extent(m, restarts=r)
        assert lo >= prev - 1e-12
        prev = lo


def test_weak_decomposability_counterexample():
    om = cw.AnalysisOperator(np.array([[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]]))
    x = cw.StructuredSignal(np.array([-0.4472, 0.8944]), "analysis_sparse",
                            support=np.array([0, 2]))
    holds, v0, sup = cw.weak_decomposability_check(om, x, np.array([0, 2]))
    assert not holds
    assert abs(v0[0] + 1.4) <= 1e-9
    assert sup == pytest.approx(1.4)


def test_weak_decomposability_identity_holds():
    om = cw.make_identity(5)
    sig = cw.gen_cosparse(om, 2, seed=11)
    holds, v0, sup = cw.weak_decomposability_check(om, sig, sig.support)
    assert holds and sup <= 1e-14


def test_weak_decomposability_orthogonal_rows():
    om = cw.make_random1(6, 12, 6, seed=12)
    sig = cw.gen_cosparse(om, 2, seed=12)
    holds, v0, sup = cw.weak_decomposability_check(om, sig, sig.support)
    assert holds and sup <= 1e-10


def test_weak_decomposability_general_position_error():
    om = cw.AnalysisOperator(np.array([[1.0, 1.0], [2.0, 2.0], [1.0, 2.0]]))
    x = cw.StructuredSignal(np.array([2.0, -1.0]), "analysis_sparse",
                            support=np.array([2]))
    with pytest.raises(NotGeneralPositionError):
        cw.weak_decomposability_check(om, x, np.array([2]))


def test_beta_upper_bound_certificate():
    for seed in range(5):
        om = cw.make_random2(25, 30, 1.0, seed=seed)
        sig = cw.gen_cosparse(om, 5, seed=seed)
        m = cw.build_model("analysis_l1", sig, om)
        bound = np.linalg.norm(m.center) / np.linalg.norm(m.z0)
        assert cw.beta(m) <= bound + 1e-8


def test_l1_member_support_values_exact():
    sig = cw.gen_simple_ground_truth("sparse", 20, 4, seed=13)
    m = cw.build_model("l1", sig)
    z = cw.sample_member(m, seed=14)
    assert np.array_equal(z[m.support], np.sign(sig.payload[m.support]))
