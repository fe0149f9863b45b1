"""Tests for the PBO schedule, pre-filter, cascade analysis and harmonic-transfer coefficients."""

import math

import numpy as np
import pytest

from core import FrameClip, InvalidInput, Signal
from pbo import (
    PboParams,
    TiltClass,
    avg_squared_gain,
    cascade_gain,
    constant_input_response,
    cutoff_3db,
    cutoff_cosine,
    endpoint_gains,
    fixed_lambda_sequence,
    harmonic_coefficients,
    init_params,
    lambda_schedule,
    lambda_sequence,
    omega_from_raw,
    prefilter_apply,
    prefilter_gain,
    tilt_classify,
)

SIGMA_RAW_T10 = math.log((2.0 / 9.0) / (7.0 / 9.0))


class TestSchedule:
    def test_amplitude_zero_is_constant(self):
        p = PboParams(mu_raw=0.3, sigma_raw=-1.0, A=0.0)
        np.testing.assert_allclose(lambda_sequence(p, 20), p.mu)

    def test_starts_at_mu(self):
        assert lambda_schedule(PboParams(sigma_raw=2.0), 0) == pytest.approx(0.5)

    def test_worked_value(self):
        p = PboParams(mu_raw=0.0, sigma_raw=SIGMA_RAW_T10, A=0.1)
        assert lambda_schedule(p, 2) == pytest.approx(0.598481, abs=1e-6)

    def test_sequence_matches_schedule(self):
        p = PboParams(mu_raw=-0.4, sigma_raw=0.7, A=0.2, phi=0.3)
        np.testing.assert_allclose(lambda_sequence(p, 12),
                                   [lambda_schedule(p, t) for t in range(12)], atol=1e-12)

    def test_not_clamped(self):
        p = PboParams(mu_raw=30.0, A=0.1, sigma_raw=0.0)
        assert np.max(lambda_sequence(p, 8)) > 1.0

    def test_time_average_over_ten_periods(self):
        p = init_params(10)
        assert abs(np.mean(lambda_sequence(p, 10 * 9)) - p.mu) < 1e-3


class TestLogisticMaps:
    def test_midpoint(self):
        p, omega = omega_from_raw(0.0)
        assert p == 0.5
        assert omega == pytest.approx(math.pi / 2)

    def test_saturation(self):
        assert abs(omega_from_raw(40.0)[1] - math.pi) < 1e-12

    def test_inverse_target(self):
        assert SIGMA_RAW_T10 == pytest.approx(-1.252763, abs=1e-6)
        assert omega_from_raw(SIGMA_RAW_T10)[1] == pytest.approx(2 * math.pi / 9)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInput):
            omega_from_raw(float("inf"))


class TestInitParams:
    def test_ten_frames(self):
        p = init_params(10)
        assert p.mu == pytest.approx(0.5)
        assert p.omega == pytest.approx(2 * math.pi / 9)
        assert (p.A, p.phi) == (0.1, 0.0)

    def test_five_frames_is_logistic_fixed_point(self):
        p = init_params(5)
        assert p.sigma_raw == pytest.approx(0.0, abs=1e-15)
        assert p.omega == pytest.approx(math.pi / 2)

    @pytest.mark.parametrize("T", [0, 2, 3])
    def test_short_clips_rejected(self, T):
        with pytest.raises(InvalidInput):
            init_params(T)

    def test_initial_mean_weight(self):
        p = init_params(10, mu=0.96)
        assert p.mu == pytest.approx(0.96)
        assert p.omega == pytest.approx(2 * math.pi / 9)

    @pytest.mark.parametrize("mu", [0.0, 1.0, 1.5])
    def test_initial_mean_weight_range(self, mu):
        with pytest.raises(InvalidInput):
            init_params(10, mu=mu)

    def test_json_dict_carries_derived_values(self):
        record = init_params(10).to_json_dict()
        assert set(record) == {"mu_raw", "sigma_raw", "A", "phi", "mu", "omega"}
        assert PboParams.from_json_dict(record) == init_params(10)


class TestPrefilterApply:
    def test_identity_at_zero(self, rng):
        x = rng.standard_normal((6, 1, 2, 2))
        np.testing.assert_array_equal(prefilter_apply(x, np.zeros(6)), x)

    def test_frame_difference_replicate_boundary(self):
        out = prefilter_apply(Signal(samples=[3.0, 5.0, 4.0]), fixed_lambda_sequence(1.0, 3))
        assert isinstance(out, Signal)
        np.testing.assert_array_equal(out.samples, [0.0, 2.0, -1.0])

    def test_zero_boundary(self):
        out = prefilter_apply([3.0, 5.0, 4.0], np.ones(3), boundary="zero")
        np.testing.assert_array_equal(out, [3.0, 2.0, -1.0])

    def test_keeps_clip_container(self, rng):
        clip = FrameClip(data=rng.standard_normal((4, 1, 2, 2)))
        assert isinstance(prefilter_apply(clip, np.full(4, 0.3)), FrameClip)

    def test_constant_input_closed_form(self):
        p = init_params(10)
        y = prefilter_apply(np.full(50, 2.5), lambda_sequence(p, 50))
        np.testing.assert_allclose(y, constant_input_response(p, 2.5, 50), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            prefilter_apply(np.zeros(5), np.zeros(4))

    def test_unknown_boundary(self):
        with pytest.raises(InvalidInput):
            prefilter_apply(np.zeros(3), np.zeros(3), boundary="wrap")


class TestCascadeGain:
    def test_prefilter_gain_values(self):
        np.testing.assert_allclose(prefilter_gain(0.0, np.linspace(0, np.pi, 5)), 1.0)
        assert prefilter_gain(1.0, 0.0) == pytest.approx(0.0)
        assert prefilter_gain(0.5, math.pi / 2) == pytest.approx(1.25)

    def test_flat_line(self):
        omega = np.linspace(0.0, np.pi, 1001)
        for alpha in (0.2, 0.5, 0.8):
            assert np.max(np.abs(cascade_gain(alpha, alpha, omega) - (1 - alpha) ** 2)) < 1e-12

    def test_worked_value_at_nyquist(self):
        assert cascade_gain(0.5, 0.3, math.pi) == pytest.approx(0.652367, abs=1e-6)

    def test_endpoint_gains(self):
        for lam, alpha in ((0.0, 0.3), (0.6, 0.3), (1.0, 0.9)):
            at_dc, at_pi = endpoint_gains(lam, alpha)
            assert at_dc == pytest.approx(cascade_gain(lam, alpha, 0.0))
            assert at_pi == pytest.approx(cascade_gain(lam, alpha, math.pi))

    def test_maximum_sits_at_an_endpoint(self):
        omega = np.linspace(0.0, np.pi, 501)
        for lam in np.linspace(0.0, 1.0, 12):
            for alpha in np.linspace(0.05, 0.95, 12):
                if tilt_classify(lam, alpha) == TiltClass.FLAT:
                    continue
                assert np.argmax(cascade_gain(lam, alpha, omega)) in (0, omega.size - 1)


class TestTiltAndCutoff:
    def test_trichotomy(self):
        assert tilt_classify(0.1, 0.7) == TiltClass.LOW_PASS
        assert tilt_classify(0.3, 0.3) == TiltClass.FLAT
        assert tilt_classify(0.8, 0.3) == TiltClass.HIGH_PASS
        assert tilt_classify(0.3 + 1e-13, 0.3) == TiltClass.FLAT

    def test_high_pass_cutoff(self):
        assert cutoff_cosine(0.8, 0.3) == pytest.approx(0.580720, abs=1e-6)
        assert cutoff_3db(0.8, 0.3) == pytest.approx(0.951, abs=1e-3)

    def test_low_pass_cutoff(self):
        assert cutoff_cosine(0.1, 0.7) == pytest.approx(0.933607, abs=1e-6)
        assert cutoff_3db(0.1, 0.7) == pytest.approx(0.366, abs=1e-3)

    @pytest.mark.parametrize("lam,alpha", [(0.8, 0.3), (0.1, 0.7), (0.5, 0.2), (0.0, 0.6)])
    def test_root_satisfies_half_power(self, lam, alpha):
        omega_c = cutoff_3db(lam, alpha)
        at_dc, at_pi = endpoint_gains(lam, alpha)
        reference = at_dc if lam < alpha else at_pi
        assert abs(cascade_gain(lam, alpha, omega_c) / reference - 0.5) < 1e-10

    def test_root_matches_grid_scan(self):
        scan = np.linspace(0.0, np.pi, 200001)
        ratio = cascade_gain(0.8, 0.3, scan) / endpoint_gains(0.8, 0.3)[1]
        crossing = scan[np.flatnonzero(np.diff(np.sign(ratio - 0.5)))[0]]
        assert abs(crossing - cutoff_3db(0.8, 0.3)) <= scan[1]

    def test_no_cutoff_when_half_power_unreached(self):
        assert cutoff_3db(0.31, 0.3) is None

    def test_flat_has_no_cutoff(self):
        with pytest.raises(InvalidInput):
            cutoff_3db(0.4, 0.4)


class TestHarmonicCoefficients:
    def test_sideband_weight(self):
        coeffs = harmonic_coefficients(init_params(10))
        omega = np.linspace(0.0, np.pi, 17)
        np.testing.assert_allclose(np.abs(coeffs.w_plus(omega)) ** 2, 0.0025, rtol=1e-12)
        np.testing.assert_allclose(np.abs(coeffs.w_minus(omega)) ** 2, 0.0025, rtol=1e-12)

    def test_zero_amplitude(self):
        coeffs = harmonic_coefficients(PboParams(A=0.0))
        np.testing.assert_array_equal(coeffs.w_plus(np.array([0.0, 1.0])), 0.0)

    def test_baseline_dc_null(self):
        coeffs = harmonic_coefficients(PboParams(mu_raw=50.0))
        assert abs(coeffs.w0(0.0)) ** 2 < 1e-20

    def test_higher_orders_vanish(self):
        coeffs = harmonic_coefficients(init_params(10))
        np.testing.assert_array_equal(coeffs.w(2, np.array([0.3])), 0.0)

    def test_sign_convention(self):
        p = PboParams(mu_raw=0.0, sigma_raw=0.0, A=0.2, phi=0.5)
        coeffs = harmonic_coefficients(p)
        plus = 0.2 * np.exp(0.5j) / 2j
        assert coeffs.lambda_fourier[1] == pytest.approx(plus)
        assert coeffs.lambda_fourier[-1] == pytest.approx(np.conj(plus))
        omega = np.array([0.3, 1.7])
        np.testing.assert_allclose(coeffs.w_plus(omega), -plus * np.exp(-1j * (omega - p.omega)))

    def test_fourier_series_rebuilds_schedule(self):
        p = PboParams(mu_raw=0.2, sigma_raw=-0.5, A=0.15, phi=0.9)
        coeffs = harmonic_coefficients(p).lambda_fourier
        assert abs(coeffs[1]) == pytest.approx(p.A / 2)
        assert coeffs[0] == pytest.approx(p.mu)
        t = np.arange(25)
        rebuilt = sum(c * np.exp(1j * m * p.omega * t) for m, c in coeffs.items())
        np.testing.assert_allclose(rebuilt.real, lambda_sequence(p, 25), atol=1e-12)
        np.testing.assert_allclose(rebuilt.imag, 0.0, atol=1e-12)

    def test_transfer_reproduces_filter_on_finite_input(self, rng):
        """Y(w) = sum_m W_m(w) X(w - m w0) holds exactly for a zero-padded input."""
        from core import dtft_matrix

        p = PboParams(mu_raw=0.3, sigma_raw=-0.8, A=0.2, phi=0.4)
        x = np.append(rng.standard_normal(39), 0.0)
        y = prefilter_apply(x, lambda_sequence(p, 40), boundary="zero")
        coeffs = harmonic_coefficients(p)
        omega = np.linspace(0.0, np.pi, 9)
        predicted = sum(coeffs.w(m, omega) * dtft_matrix(x, omega - m * p.omega) for m in (-1, 0, 1))
        np.testing.assert_allclose(predicted, dtft_matrix(y, omega), atol=1e-10)


class TestAverageSquaredGain:
    def test_zero_amplitude_is_constant_filter(self):
        omega = np.linspace(0.0, np.pi, 9)
        np.testing.assert_allclose(avg_squared_gain(0.4, 0.0, omega), prefilter_gain(0.4, omega))

    def test_worked_value(self):
        assert avg_squared_gain(0.5, 0.1, 0.0) == pytest.approx(0.255)

    def test_minimum_stays_at_dc(self):
        omega = np.linspace(0.0, np.pi, 400)
        for mu in (0.1, 0.5, 0.9):
            assert np.argmin(avg_squared_gain(mu, 0.3, omega)) == 0
