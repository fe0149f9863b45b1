"""
Consistency Regularizer

Ties the pre-filtered clip Y^(m) to the two endpoints of the pre-filter:
the identity Y^(0) = X and the frame difference Y^(1)[t] = X[t] - X[t-1].

    L_int_t  = lambda[t]^2 ||Ym~ - Y1~||^2 + (1 - lambda[t])^2 ||Ym~ - Y0~||^2
    L_grad_t = sum over d in {x, y} of || |grad_d Ym| - max(|grad_d Y0|, |grad_d Y1|) ||_1
    L        = sum_t (L_int_t + L_grad_t) / (T C H W)

where ~ marks per-step, per-channel spatial demeaning and grad_d are 3x3 Sobel
responses with replicate borders. The intensity term is computed on demeaned
tensors, the gradient term on raw ones.

The term functions are written against the `tape` primitives, so they accept
plain arrays (and return plain arrays) or tape variables (and record
gradients).
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize

import tape as ops
from core import FrameClip, InvalidInput, as_array
from pbo import fixed_lambda_sequence, prefilter_apply

logger = logging.getLogger(__name__)

DEFAULT_CONSISTENCY_WEIGHT = 1e-2

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


class EndpointPair(BaseModel):
    """Identity endpoint y0, difference endpoint y1 and filtered output ym."""

    model_config = ConfigDict(frozen=True)

    y0: FrameClip
    y1: FrameClip
    ym: FrameClip

    @model_validator(mode="after")
    def _check_dims(self):
        if not self.y0.dims == self.y1.dims == self.ym.dims:
            raise ValueError(
                f"endpoint dims differ: {self.y0.dims}, {self.y1.dims}, {self.ym.dims}"
            )
        return self


class LossBreakdown(BaseModel):
    """
    Normalized loss parts (total = intensity + gradient) and the raw per-step
    table of (t, L_int_t, L_grad_t).
    """

    total: float = Field(ge=0.0)
    intensity: float = Field(ge=0.0)
    gradient: float = Field(ge=0.0)
    per_step: List[Tuple[int, float, float]] = Field(default_factory=list)


def endpoint_pair(clip: FrameClip, ym: FrameClip, boundary: str = "replicate") -> EndpointPair:
    """Build the endpoints of `clip` around an already filtered output `ym`."""
    y1 = prefilter_apply(clip, fixed_lambda_sequence(1.0, clip.T), boundary=boundary)
    return EndpointPair(y0=clip, y1=y1, ym=ym)


# ============================================================================
# BUILDING BLOCKS
# ============================================================================

def spatial_demean(frame):
    """Subtract the mean over the last two (H, W) axes, per leading index."""
    return frame - ops.mean(frame, axis=(-2, -1), keepdims=True)


def sobel_gradients(frame):
    """
    Horizontal and vertical Sobel responses over the last two axes.

    Replicate borders: a constant frame has zero gradient everywhere, and a
    unit ramp along x gives gx = 8 inside and 4 on the left/right columns.
    """
    return ops.correlate_replicate(frame, SOBEL_X), ops.correlate_replicate(frame, SOBEL_Y)


def _gradient_targets(y0: np.ndarray, y1: np.ndarray):
    gx0, gy0 = sobel_gradients(y0)
    gx1, gy1 = sobel_gradients(y1)
    return np.maximum(np.abs(gx0), np.abs(gx1)), np.maximum(np.abs(gy0), np.abs(gy1))


def consistency_terms(ym, y0: np.ndarray, y1: np.ndarray, lambdas,
                      use_intensity: bool = True, use_gradient: bool = True):
    """
    Per-step intensity and gradient terms.

    Args:
        ym: filtered output, array or tape variable of shape (..., T, C, H, W)
        y0, y1: endpoint arrays of the same shape
        lambdas: per-step weights of length T (array or tape variable)
        use_intensity, use_gradient: component switches

    Returns:
        tuple: (intensity, gradient), each of shape (..., T); a disabled
            component is returned as zeros
    """
    y0 = np.asarray(y0, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    step_shape = y0.shape[:-3]
    weights = ops.reshape(lambdas, (-1, 1, 1, 1))
    axes = (-3, -2, -1)

    intensity = np.zeros(step_shape)
    if use_intensity:
        ym_d = spatial_demean(ym)
        to_high = ops.sum(ops.square(weights * (ym_d - spatial_demean(y1))), axis=axes)
        to_low = ops.sum(ops.square((1.0 - weights) * (ym_d - spatial_demean(y0))), axis=axes)
        intensity = to_high + to_low

    gradient = np.zeros(step_shape)
    if use_gradient:
        target_x, target_y = _gradient_targets(y0, y1)
        gx, gy = sobel_gradients(ym)
        gradient = (ops.sum(ops.absolute(ops.absolute(gx) - target_x), axis=axes)
                    + ops.sum(ops.absolute(ops.absolute(gy) - target_y), axis=axes))
    return intensity, gradient


def consistency_value(ym, y0, y1, lambdas, use_intensity: bool = True,
                      use_gradient: bool = True):
    """Scalar consistency loss, averaged over every element of `y0`."""
    intensity, gradient = consistency_terms(ym, y0, y1, lambdas, use_intensity, use_gradient)
    return ops.sum(intensity + gradient) * (1.0 / np.size(y0))


# ============================================================================
# PUBLIC OPERATIONS
# ============================================================================

def _check_lambdas(pair: EndpointPair, lambdas) -> np.ndarray:
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 1 or lambdas.shape[0] != pair.ym.T:
        raise InvalidInput(f"need {pair.ym.T} per-step weights, got shape {lambdas.shape}")
    return lambdas


def consistency_loss(pair: EndpointPair, lambdas, use_intensity: bool = True,
                     use_gradient: bool = True) -> LossBreakdown:
    """Evaluate the consistency loss with its per-step breakdown."""
    lambdas = _check_lambdas(pair, lambdas)
    intensity, gradient = consistency_terms(
        pair.ym.data, pair.y0.data, pair.y1.data, lambdas, use_intensity, use_gradient
    )
    scale = 1.0 / pair.ym.data.size
    per_step = [(t, float(i), float(g)) for t, (i, g) in enumerate(zip(intensity, gradient))]
    breakdown = LossBreakdown(
        total=float(np.sum(intensity) + np.sum(gradient)) * scale,
        intensity=float(np.sum(intensity)) * scale,
        gradient=float(np.sum(gradient)) * scale,
        per_step=per_step,
    )
    logger.debug("Consistency loss %.6g (intensity %.6g, gradient %.6g)",
                 breakdown.total, breakdown.intensity, breakdown.gradient)
    return breakdown


def consistency_gradient(pair: EndpointPair, lambdas, use_intensity: bool = True,
                         use_gradient: bool = True) -> np.ndarray:
    """dL_consist / dY^(m), shaped like the clip."""
    lambdas = _check_lambdas(pair, lambdas)
    tape = ops.Tape()
    ym = tape.var(pair.ym.data)
    loss = consistency_value(ym, pair.y0.data, pair.y1.data, lambdas, use_intensity, use_gradient)
    (grad,) = tape.gradient(loss, [ym])
    return grad


def equilibrium_closed_form(y0d, y1d, lam: float) -> np.ndarray:
    """
    Per-pixel minimizer of lam^2 ||Y - Y1~||^2 + (1 - lam)^2 ||Y - Y0~||^2:
    (lam^2 Y1~ + (1 - lam)^2 Y0~) / (lam^2 + (1 - lam)^2).
    """
    y0d = as_array(y0d)
    y1d = as_array(y1d)
    if y0d.shape != y1d.shape:
        raise InvalidInput(f"shape mismatch {y0d.shape} vs {y1d.shape}")
    high, low = lam ** 2, (1.0 - lam) ** 2
    return (high * y1d + low * y0d) / (high + low)


def intensity_objective(y, y0d, y1d, lam: float) -> float:
    """Intensity term of one step for a candidate demeaned output `y`."""
    y = np.asarray(y, dtype=np.float64)
    return float(lam ** 2 * np.sum((y - y1d) ** 2) + (1.0 - lam) ** 2 * np.sum((y - y0d) ** 2))


def minimum_intensity(y0d, y1d, lam: float) -> float:
    """Value at the equilibrium: lam^2 (1-lam)^2 / (lam^2 + (1-lam)^2) ||Y1~ - Y0~||^2."""
    high, low = lam ** 2, (1.0 - lam) ** 2
    return float(high * low / (high + low) * np.sum((np.asarray(y1d) - np.asarray(y0d)) ** 2))


def minimize_intensity(y0d, y1d, lam: float, start: Optional[np.ndarray] = None,
                       tol: float = 1e-12) -> np.ndarray:
    """Numerical minimizer of the intensity term (independent of the closed form)."""
    y0d = np.asarray(y0d, dtype=np.float64)
    y1d = np.asarray(y1d, dtype=np.float64)
    high, low = lam ** 2, (1.0 - lam) ** 2

    def objective(flat):
        y = flat.reshape(y0d.shape)
        value = intensity_objective(y, y0d, y1d, lam)
        grad = 2.0 * high * (y - y1d) + 2.0 * low * (y - y0d)
        return value, grad.ravel()

    x0 = np.zeros(y0d.size) if start is None else np.asarray(start, dtype=np.float64).ravel()
    result = minimize(objective, x0, jac=True, method="L-BFGS-B",
                      options={"gtol": tol, "ftol": 1e-15, "maxiter": 1000})
    if not result.success:
        logger.warning("Intensity minimizer stopped early: %s", result.message)
    return result.x.reshape(y0d.shape)


def total_loss(ce: float, consist: float, alpha_weight: float = DEFAULT_CONSISTENCY_WEIGHT):
    """L = L_ce + alpha * L_consist."""
    return ce + alpha_weight * consist
