import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csifeedback.channel_model import (
    ChannelSample, CorrelationSpec, KroneckerChannel, Ula, Upa, UpaGeometry,
    estimate_covariance, kronecker_covariance, one_ring_correlation, psd_sqrt,
    stack_users, tx_correlation, ula_correlation, upa_correlation, upa_geometry_angles,
)
from oracles import trapezoid_correlation


class TestOneRing:
    def test_diagonal_is_one(self):
        r = one_ring_correlation(6, 0.7, 0.4, -1.1)
        np.testing.assert_array_equal(np.diag(r), np.ones(6))

    def test_zero_spacing_is_all_ones(self):
        r = one_ring_correlation(5, 0.0, 0.3, 0.2)
        np.testing.assert_allclose(r, np.ones((5, 5)), atol=1e-14)

    def test_narrow_spread_broadside(self):
        r = one_ring_correlation(3, 0.5, 1e-8, 0.0)
        assert abs(r[1, 0] - 1.0) < 1e-12

    def test_point_mass_limit(self):
        r0 = one_ring_correlation(4, 0.5, 0.0, 0.7)
        expected = np.exp(-1j * np.pi * np.sin(0.7))
        assert r0[1, 0] == pytest.approx(expected, abs=1e-14)

    def test_against_trapezoid(self):
        got = one_ring_correlation(4, 0.1, 0.2, 0.3)
        want = trapezoid_correlation(4, 0.1, 0.2, 0.3)
        np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-12)

    def test_wide_spacing_against_trapezoid(self):
        # many oscillations across the interval
        got = one_ring_correlation(3, 10.0, 0.29, -2.0)
        want = trapezoid_correlation(3, 10.0, 0.29, -2.0, points=2_000_001)
        np.testing.assert_allclose(got, want, rtol=1e-7, atol=1e-9)

    def test_hermitian_psd(self):
        r = one_ring_correlation(16, 0.5, 0.3, 1.0)
        np.testing.assert_allclose(r, r.conj().T, atol=1e-15)
        assert np.linalg.eigvalsh(r).min() > -1e-10

    def test_rejects_negative_spread(self):
        with pytest.raises(ValueError):
            one_ring_correlation(3, 0.1, -0.1, 0.0)


class TestUpaGeometry:
    def test_default_angles(self):
        ang = upa_geometry_angles(UpaGeometry(60, 30, 100))
        assert ang["delta_h"] == pytest.approx(0.291457, abs=1e-6)
        assert ang["delta_v"] == pytest.approx(0.5 * (np.arctan(130 / 60) - np.arctan(70 / 60)), rel=1e-12)
        # direct evaluation gives 0.138109
        assert ang["delta_v"] == pytest.approx(0.138109, abs=1e-6)

    def test_zero_ring(self):
        ang = upa_geometry_angles(UpaGeometry(60, 0, 100))
        assert ang["delta_v"] == 0 and ang["delta_h"] == 0
        assert ang["phi_v"] == pytest.approx(np.arctan(100 / 60))

    def test_invalid(self):
        with pytest.raises(ValueError):
            UpaGeometry(60, 120, 100)


def test_upa_single_element():
    spec = CorrelationSpec(Upa(1, 1), 0.1, upa_geometry=UpaGeometry())
    np.testing.assert_allclose(upa_correlation(spec, 0.4), [[1.0]])


def test_upa_two_by_two_explicit_kron():
    spec = CorrelationSpec(Upa(2, 2), 0.1, upa_geometry=UpaGeometry(60, 30, 100))
    dv = 0.5 * (np.arctan(130 / 60) - np.arctan(70 / 60))
    pv = 0.5 * (np.arctan(130 / 60) + np.arctan(70 / 60))
    r_v = trapezoid_correlation(2, 0.1, dv, pv)
    r_h = trapezoid_correlation(2, 0.1, np.arctan(0.3), 0.0)
    want = np.empty((4, 4), dtype=complex)
    for v1 in range(2):
        for h1 in range(2):
            for v2 in range(2):
                for h2 in range(2):
                    want[2 * v1 + h1, 2 * v2 + h2] = r_v[v1, v2] * r_h[h1, h2]
    np.testing.assert_allclose(upa_correlation(spec, 0.0), want, rtol=1e-8, atol=1e-12)


def test_tx_correlation_dispatch():
    ula = CorrelationSpec(Ula(8), 0.5, angular_spread=0.2)
    np.testing.assert_array_equal(tx_correlation(ula, 0.1), ula_correlation(ula, 0.1))
    with pytest.raises(ValueError):
        CorrelationSpec(Ula(8), 0.5)


def test_psd_sqrt():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    r = a @ a.conj().T
    s = psd_sqrt(r)
    np.testing.assert_allclose(s @ s, r, atol=1e-10)
    with pytest.raises(ValueError):
        psd_sqrt(np.diag([1.0, -1.0]))


class TestKronecker:
    def test_white_channel_energy(self):
        ch = KroneckerChannel(np.eye(16))
        h = ch.draw_matrices(np.random.default_rng(0), 10_000)
        energy = np.mean(np.sum(np.abs(h) ** 2, axis=(1, 2)))
        assert energy == pytest.approx(16, rel=0.05)

    def test_rank_one(self):
        ch = KroneckerChannel(np.ones((6, 6)))
        h = ch.draw_matrices(np.random.default_rng(1), 20)[:, 0, :]
        ratios = h / h[:, :1]
        np.testing.assert_allclose(ratios, np.ones_like(ratios), atol=1e-10)

    def test_covariance_single_antenna(self):
        spec = CorrelationSpec(Ula(8), 0.3, angular_spread=0.3)
        r = ula_correlation(spec, 0.5)
        ch = KroneckerChannel(r)
        h = ch.draw_vectors(np.random.default_rng(2), 100_000)
        sample = h.T @ h.conj() / h.shape[0]
        want = kronecker_covariance(r)
        assert np.linalg.norm(sample - want) / np.linalg.norm(want) < 0.05

    def test_covariance_vec_convention(self):
        # two receive antennas with a non-trivial receive correlation
        rng = np.random.default_rng(4)
        r_tx = one_ring_correlation(3, 0.3, 0.4, 0.2)
        r_rx = np.array([[1.0, 0.6j], [-0.6j, 1.0]])
        ch = KroneckerChannel(r_tx, r_rx)
        hm = ch.draw_matrices(rng, 200_000)
        vec = np.transpose(hm, (0, 2, 1)).reshape(hm.shape[0], -1)
        sample = vec.T @ vec.conj() / vec.shape[0]
        want = np.kron(r_tx.T, r_rx) / 2.0
        np.testing.assert_allclose(ch.draw_vectors(np.random.default_rng(9), 1).shape, (1, 6))
        assert np.linalg.norm(sample - want) / np.linalg.norm(want) < 0.02
        np.testing.assert_allclose(ch.covariance(), want)


def test_channel_sample_views():
    m = np.arange(2 * 2 * 3).reshape(2, 2, 3).astype(complex)
    cs = ChannelSample(m)
    np.testing.assert_array_equal(cs.vectorized[0], m[0].T.ravel())
    assert cs.stacked.shape == (4, 3)
    assert stack_users([cs, cs]).matrices.shape == (4, 2, 3)


class TestEstimateCovariance:
    def test_unit_vector(self):
        est = estimate_covariance(np.array([1.0, 0, 0]))
        want = np.zeros((3, 3))
        want[0, 0] = 1
        np.testing.assert_array_equal(est.matrix, want)
        assert est.sample_count == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_covariance(np.zeros((0, 4)))

    def test_thousand_draws(self):
        spec = CorrelationSpec(Ula(64), 0.1, angular_spread=np.arctan(0.3))
        ch = KroneckerChannel(ula_correlation(spec, 1.0))
        est = estimate_covariance(ch.draw_vectors(np.random.default_rng(5), 1000))
        truth = ch.covariance()
        assert np.linalg.norm(est.matrix - truth) / np.linalg.norm(truth) < 0.1

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_matches_outer_product_sum(self, n, t, seed):
        rng = np.random.default_rng(seed)
        h = rng.standard_normal((t, n)) + 1j * rng.standard_normal((t, n))
        want = sum(np.outer(v, v.conj()) for v in h) / t
        est = estimate_covariance(h)
        np.testing.assert_allclose(est.matrix, want, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(est.matrix, est.matrix.conj().T)
