import numpy as np
import pytest

import conewidth as cw
from conewidth.errors import InfeasibleDataError, InvalidParameterError


def test_square_system_unique_point():
    rng = cw.philox_rng(1)
    A = rng.standard_normal((20, 20))
    x = rng.standard_normal(20)
    z, info = cw.solve_Pf(A, A @ x, "l1")
    assert info.converged
    assert np.linalg.norm(z - x) <= 1e-5 * np.linalg.norm(x)


def test_zero_measurements_recover_zero():
    rng = cw.philox_rng(2)
    z, info = cw.solve_Pf(rng.standard_normal((8, 24)), np.zeros(8), "l1")
    assert np.linalg.norm(z) <= 1e-10


def test_l1_recovery_success_rate():
    sig = cw.gen_simple_ground_truth("sparse", 64, 2, seed=3)
    wins = 0
    for t in range(40):
        A = cw.philox_rng(4, stream=t).standard_normal((40, 64))
        z, info = cw.solve_Pf(A, A @ sig.payload, "l1")
        wins += int(info.converged and
                    np.linalg.norm(z - sig.payload) <= 1e-4 * np.linalg.norm(sig.payload))
    assert wins >= 38


def test_recovery_success_tolerance_logic():
    x = np.ones(10)
    assert cw.recovery_success(x, x)
    bad = x.copy()
    bad[0] += 0.01 * np.linalg.norm(x)
    assert not cw.recovery_success(bad, x)
    assert cw.recovery_success(1.0005 * x, x)
    with pytest.raises(InvalidParameterError):
        cw.recovery_success(np.ones(3), np.ones(4))


def test_feasibility_and_objective_invariants():
    om = cw.make_finite_difference(48)
    sig = cw.gen_cosparse(om, 3, seed=5)
    A = cw.philox_rng(6).standard_normal((30, 48))
    y = A @ sig.payload
    z, info = cw.solve_Pf(A, y, "analysis_l1", omega=om)
    assert info.converged
    assert np.linalg.norm(A @ z - y) <= 1e-6 * np.linalg.norm(y)
    f_true = np.abs(om.entries @ sig.payload).sum()
    f_hat = np.abs(om.entries @ z).sum()
    assert f_hat <= f_true * (1 + 1e-6)


def test_inconsistent_data_rejected():
    A = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(InfeasibleDataError):
        cw.solve_Pf(A, np.array([0.0, 1.0]), "l1")


def test_block_family_recovery():
    sig = cw.gen_simple_ground_truth("block_sparse", (12, 4), 1, seed=7)
    m = cw.build_model("l12", sig)
    A = cw.philox_rng(8).standard_normal((24, 48))
    z, info = cw.solve_Pf(A, A @ sig.payload, "l12",
                          block_partition=m.block_partition)
    assert info.converged
    assert np.linalg.norm(z - sig.payload) <= 1e-4 * np.linalg.norm(sig.payload)


def test_nuclear_family_recovery():
    sig = cw.gen_simple_ground_truth("low_rank", (8, 8), 1, seed=9)
    x = sig.payload.ravel()
    A = cw.philox_rng(10).standard_normal((48, 64))
    z, info = cw.solve_Pf(A, A @ x, "nuclear", mat_shape=(8, 8))
    assert info.converged
    assert np.linalg.norm(z - x) <= 1e-3 * np.linalg.norm(x)


def test_phase_sweep_monotone_and_banded():
    sig = cw.gen_simple_ground_truth("sparse", 48, 3, seed=11)
    m = cw.build_model("l1", sig)
    res = cw.phase_sweep(m, sig, m_grid=range(6, 43, 6), trials_per_m=12,
                         seed=12, delta_samples=1200)
    assert res.m50_in_range
    lo, hi = res.theorem1_band
    assert lo <= res.m50 <= hi
    # isotonic within binomial noise
    smooth = np.maximum.accumulate(res.success_rate)
    sd = np.sqrt(0.25 / res.trials_per_m)
    assert np.all(smooth - res.success_rate <= 2 * sd + 1e-12)


def test_phase_sweep_flags_uninformative_grid():
    sig = cw.gen_simple_ground_truth("sparse", 32, 2, seed=13)
    m = cw.build_model("l1", sig)
    res = cw.phase_sweep(m, sig, m_grid=[28, 30, 32], trials_per_m=10,
                         seed=14, delta_samples=800)
    assert not res.m50_in_range  # succeeds everywhere on this grid


def test_phase_sweep_requires_enough_trials():
    sig = cw.gen_simple_ground_truth("sparse", 16, 2, seed=15)
    m = cw.build_model("l1", sig)
    with pytest.raises(InvalidParameterError):
        cw.phase_sweep(m, sig, m_grid=[4, 8], trials_per_m=5, seed=16)
