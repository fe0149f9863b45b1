"""Tests for the endpoint consistency loss, its gradient and the intensity equilibrium."""

import numpy as np
import pytest

from consistency import (
    EndpointPair,
    consistency_gradient,
    consistency_loss,
    endpoint_pair,
    equilibrium_closed_form,
    intensity_objective,
    minimize_intensity,
    minimum_intensity,
    sobel_gradients,
    spatial_demean,
    total_loss,
)
from core import FrameClip, InvalidInput
from pbo import fixed_lambda_sequence, init_params, lambda_sequence, prefilter_apply


def random_pair(rng, dims=(5, 2, 4, 4), lambdas=None):
    clip = FrameClip(data=rng.standard_normal(dims))
    lambdas = np.full(dims[0], 0.4) if lambdas is None else lambdas
    return endpoint_pair(clip, prefilter_apply(clip, lambdas)), lambdas


class TestBuildingBlocks:
    def test_demeaned_frames_have_zero_mean(self, rng):
        out = spatial_demean(rng.standard_normal((3, 2, 4, 5)))
        np.testing.assert_allclose(out.mean(axis=(-2, -1)), 0.0, atol=1e-15)

    def test_demean_two_pixel_channel(self):
        np.testing.assert_allclose(spatial_demean(np.array([[[1.0, 3.0]]])), [[[-1.0, 1.0]]])

    def test_sobel_on_constant_frame(self):
        gx, gy = sobel_gradients(np.full((1, 4, 4), 2.5))
        np.testing.assert_array_equal(gx, 0.0)
        np.testing.assert_array_equal(gy, 0.0)

    def test_sobel_on_unit_ramp(self):
        ramp = np.tile(np.arange(5.0), (4, 1))
        gx, gy = sobel_gradients(ramp)
        np.testing.assert_allclose(gx[:, 1:-1], 8.0)
        np.testing.assert_allclose(gx[:, [0, -1]], 4.0)
        np.testing.assert_allclose(gy, 0.0, atol=1e-15)

    def test_endpoint_pair_uses_frame_difference(self, rng):
        clip = FrameClip(data=rng.standard_normal((4, 1, 3, 3)))
        pair = endpoint_pair(clip, clip)
        expected = prefilter_apply(clip, fixed_lambda_sequence(1.0, 4))
        np.testing.assert_array_equal(pair.y1.data, expected.data)
        np.testing.assert_array_equal(pair.y0.data, clip.data)

    def test_pair_dims_must_agree(self):
        clip = FrameClip(data=np.zeros((4, 1, 3, 3)))
        with pytest.raises(ValueError):
            EndpointPair(y0=clip, y1=clip, ym=FrameClip(data=np.zeros((4, 1, 3, 2))))


class TestConsistencyLoss:
    def test_identity_endpoint_has_no_intensity_cost(self, rng):
        pair, _ = random_pair(rng, lambdas=np.zeros(5))
        breakdown = consistency_loss(pair, np.zeros(5))
        assert breakdown.intensity == pytest.approx(0.0, abs=1e-24)

    def test_difference_endpoint_has_no_intensity_cost(self, rng):
        pair, _ = random_pair(rng, lambdas=np.ones(5))
        assert consistency_loss(pair, np.ones(5)).intensity == pytest.approx(0.0, abs=1e-24)

    def test_spatially_flat_clip_has_no_gradient_cost(self, rng):
        flat = rng.standard_normal((6, 1, 1, 1)) * np.ones((6, 1, 3, 3))
        clip = FrameClip(data=flat)
        lambdas = lambda_sequence(init_params(6), 6)
        breakdown = consistency_loss(endpoint_pair(clip, prefilter_apply(clip, lambdas)), lambdas)
        assert breakdown.gradient == pytest.approx(0.0, abs=1e-12)
        assert breakdown.intensity == pytest.approx(0.0, abs=1e-12)

    def test_identity_endpoint_with_dominant_edges_costs_nothing(self):
        falling = np.broadcast_to(4.0 - np.arange(5.0), (3, 1, 4, 5)).copy()
        y0 = FrameClip(data=falling)
        pair = EndpointPair(y0=y0, y1=FrameClip(data=np.zeros_like(falling)), ym=y0)
        breakdown = consistency_loss(pair, np.zeros(3))
        assert breakdown.gradient == 0.0
        assert breakdown.total == 0.0

    def test_edge_sign_does_not_matter(self, rng):
        pair, lambdas = random_pair(rng)
        flipped = pair.model_copy(update={
            "y0": FrameClip(data=-pair.y0.data),
            "y1": FrameClip(data=-pair.y1.data),
            "ym": FrameClip(data=-pair.ym.data),
        })
        assert consistency_loss(flipped, lambdas, use_intensity=False).gradient == pytest.approx(
            consistency_loss(pair, lambdas, use_intensity=False).gradient)

    def test_breakdown_is_consistent(self, rng):
        pair, lambdas = random_pair(rng)
        breakdown = consistency_loss(pair, lambdas)
        assert breakdown.total == pytest.approx(breakdown.intensity + breakdown.gradient)
        assert [row[0] for row in breakdown.per_step] == list(range(5))
        raw = sum(i + g for _, i, g in breakdown.per_step)
        assert breakdown.total == pytest.approx(raw / pair.ym.data.size)

    def test_component_switches(self, rng):
        pair, lambdas = random_pair(rng)
        only_grad = consistency_loss(pair, lambdas, use_intensity=False)
        only_int = consistency_loss(pair, lambdas, use_gradient=False)
        full = consistency_loss(pair, lambdas)
        assert only_grad.intensity == 0.0
        assert only_int.gradient == 0.0
        assert full.total == pytest.approx(only_grad.total + only_int.total)

    def test_weight_length_checked(self, rng):
        pair, _ = random_pair(rng)
        with pytest.raises(InvalidInput):
            consistency_loss(pair, np.zeros(4))

    def test_total_loss_weighting(self):
        assert total_loss(2.0, 3.0) == pytest.approx(2.03)
        assert total_loss(2.0, 3.0, alpha_weight=0.5) == pytest.approx(3.5)
        assert total_loss(1.0, 2.0, alpha_weight=0.01) == pytest.approx(1.02)


class TestConsistencyGradient:
    def test_intensity_gradient_closed_form(self, rng):
        pair, lambdas = random_pair(rng)
        grad = consistency_gradient(pair, lambdas, use_gradient=False)
        w = lambdas.reshape(-1, 1, 1, 1)
        ym_d = spatial_demean(pair.ym.data)
        expected = 2.0 * (w ** 2 * (ym_d - spatial_demean(pair.y1.data))
                          + (1 - w) ** 2 * (ym_d - spatial_demean(pair.y0.data))) / pair.ym.data.size
        np.testing.assert_allclose(grad, expected, atol=1e-15)

    def test_full_gradient_against_differences(self, rng):
        pair, lambdas = random_pair(rng, dims=(3, 1, 3, 3))
        grad = consistency_gradient(pair, lambdas)
        h = 1e-6
        numeric = np.zeros_like(grad)
        for index in np.ndindex(grad.shape):
            up, down = pair.ym.data.copy(), pair.ym.data.copy()
            up[index] += h
            down[index] -= h
            f_up = consistency_loss(pair.model_copy(update={"ym": FrameClip(data=up)}), lambdas).total
            f_down = consistency_loss(pair.model_copy(update={"ym": FrameClip(data=down)}), lambdas).total
            numeric[index] = (f_up - f_down) / (2 * h)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)


class TestEquilibrium:
    def test_endpoints_are_recovered(self, rng):
        y0d, y1d = rng.standard_normal((2, 4, 4))
        np.testing.assert_array_equal(equilibrium_closed_form(y0d, y1d, 0.0), y0d)
        np.testing.assert_array_equal(equilibrium_closed_form(y0d, y1d, 1.0), y1d)

    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.85])
    def test_numerical_minimizer_agrees(self, rng, lam):
        y0d, y1d = rng.standard_normal((2, 2, 4, 4))
        closed = equilibrium_closed_form(y0d, y1d, lam)
        np.testing.assert_allclose(minimize_intensity(y0d, y1d, lam), closed, atol=1e-6)

    def test_minimum_value(self, rng):
        y0d, y1d = rng.standard_normal((2, 3, 3))
        lam = 0.3
        closed = equilibrium_closed_form(y0d, y1d, lam)
        assert minimum_intensity(y0d, y1d, lam) == pytest.approx(intensity_objective(closed, y0d, y1d, lam))

    def test_perturbations_never_beat_closed_form(self, rng):
        y0d, y1d = rng.standard_normal((2, 3, 3))
        best = minimum_intensity(y0d, y1d, 0.6)
        closed = equilibrium_closed_form(y0d, y1d, 0.6)
        for _ in range(50):
            candidate = closed + 1e-3 * rng.standard_normal(closed.shape)
            assert intensity_objective(candidate, y0d, y1d, 0.6) >= best

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            equilibrium_closed_form(np.zeros((2, 2)), np.zeros((2, 3)), 0.5)
