"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import xlbeam


def desk_scenario():
    sc = xlbeam.ScenarioConfig()
    sc.M = 16
    sc.K = 2
    sc.N_RF = 2
    sc.L = 2
    sc.snr_db = 10.0
    sc.seed = 21
    sc.validate()
    return sc


def test_rayleigh_distance_anchor():
    assert abs(xlbeam.rayleigh_distance(128, 100e9) - 24.19) < 0.01


def test_array_response_unit_norm():
    b = xlbeam.array_response(32, 0.4, 9.0)
    assert b.shape == (32, 1)
    assert abs(np.linalg.norm(b) - 1.0) < 1e-12
    assert np.allclose(np.abs(b), 1.0 / math.sqrt(32.0))


def test_kkt_power_activation_and_concentration_identity():
    sc = desk_scenario()
    (h,) = xlbeam.generate_channels(sc, 1, seed=3)
    f_rf = xlbeam.random_cm_precoder(sc.M, sc.N_RF, seed=4)
    sigma2 = sc.noise_variance()
    f_bb, beta = xlbeam.kkt_digital(h, f_rf, 1.0, sigma2)
    power = np.linalg.norm(f_rf @ f_bb, "fro") ** 2
    assert abs(power - 1.0) < 1e-9
    full = xlbeam.sum_mse(h, f_rf, f_bb, beta, sigma2)
    conc = xlbeam.concentrated_mse(h, f_rf, 1.0, sigma2)
    assert abs(full - conc) < 1e-9 * conc


def test_network_forward_is_constant_modulus_and_deterministic():
    net = xlbeam.Network.create(m=16, k=2, n_rf=2, n=3, hidden=[16, 8], seed=5)
    sc = desk_scenario()
    (h,) = xlbeam.generate_channels(sc, 1, seed=6)
    f1 = net.forward(h, mode="indirect")
    f2 = net.forward(h, mode="indirect")
    assert np.array_equal(f1, f2)
    assert np.allclose(np.abs(f1), 1.0 / math.sqrt(16.0), atol=1e-9)


def test_noiseless_direct_collapses_to_indirect():
    sc = desk_scenario()
    net = xlbeam.Network.create(m=16, k=2, n_rf=2, n=3, hidden=[16, 8], seed=7)
    (h,) = xlbeam.generate_channels(sc, 1, seed=8)
    indirect = xlbeam.run_indirect(h, net, sc)
    direct = xlbeam.run_direct(
        h, net, sc, repetitions=2, damping=0.0, seed=9, ul_sigma2_override=0.0
    )
    assert direct["sum_rate"] == pytest.approx(indirect["sum_rate"], rel=1e-9)
    assert direct["pilot_overhead"] == net.sensing_slots + 2


def test_checkpoint_roundtrip(tmp_path):
    net = xlbeam.Network.create(m=16, k=2, n_rf=2, n=3, hidden=[16, 8], seed=10)
    path = str(tmp_path / "ckpt.bin")
    net.save(path)
    loaded = xlbeam.Network.load(path)
    sc = desk_scenario()
    (h,) = xlbeam.generate_channels(sc, 1, seed=11)
    assert np.array_equal(net.forward(h), loaded.forward(h))


def test_fully_digital_dominates_hybrid_mse():
    sc = desk_scenario()
    sigma2 = sc.noise_variance()
    channels = xlbeam.generate_channels(sc, 20, seed=12)
    for i, h in enumerate(channels):
        f_rf = xlbeam.random_cm_precoder(sc.M, sc.N_RF, seed=100 + i)
        f_bb, beta = xlbeam.kkt_digital(h, f_rf, 1.0, sigma2)
        hybrid = xlbeam.sum_mse(h, f_rf, f_bb, beta, sigma2)
        f, fd_beta = xlbeam.fully_digital_mmse(h, 1.0, sigma2)
        digital = xlbeam.sum_mse(h, np.eye(sc.M, dtype=complex), f, fd_beta, sigma2)
        assert digital <= hybrid * (1 + 1e-9)


def test_contract_errors_surface_as_value_errors():
    with pytest.raises(ValueError):
        xlbeam.array_response(8, 1.5, 1.0)  # |theta| > 1


def test_gradcheck_binding():
    err, ok = xlbeam.gradcheck_network(seed=2)
    assert ok
    assert err < 1e-5
