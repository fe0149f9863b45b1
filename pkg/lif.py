"""
Discrete-time LIF Neuron

Leaky integrate-and-fire dynamics in the charge / fire / reset form:

    U[t] = V[t-1] + tau * (X[t] - (V[t-1] - V_reset))
    S[t] = Heaviside(U[t] - V_th)          (Heaviside(0) = 1)
    V[t] = U[t] * (1 - S[t]) + V_reset * S[t]

Below threshold the recentred potential follows v[t] = alpha v[t-1] + (1 - alpha) x[t]
with alpha = 1 - tau, a first-order low-pass with unity DC gain. Setting
v_th = +inf (see `LifParams.subthreshold`) disables firing so that linear
analysis can be checked against simulation exactly.

Floating point note: with v_th = 1 and constant input 1 the exact recursion
approaches 1 from below and never fires, but the float64 trace rounds to 1.0
after about 30 steps and fires there. The comparison is kept exact.
"""

import logging
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import expit

from core import InvalidInput, Signal, as_array, build_record

logger = logging.getLogger(__name__)

DEFAULT_SURROGATE_SHARPNESS = 4.0


class LifParams(BaseModel):
    """Leak rate tau in (0, 1), threshold v_th and reset v_reset."""

    model_config = ConfigDict(frozen=True)

    tau: float = 0.7
    v_th: float = 1.0
    v_reset: float = 0.0

    @field_validator("tau")
    @classmethod
    def _check_tau(cls, value):
        if not 0.0 < value < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {value}")
        return value

    @model_validator(mode="after")
    def _check_threshold(self):
        if not np.isfinite(self.v_reset):
            raise ValueError("v_reset must be finite")
        if not self.v_th > self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")
        return self

    @property
    def alpha(self) -> float:
        return 1.0 - self.tau

    @classmethod
    def from_alpha(cls, alpha: float, **kwargs) -> "LifParams":
        return build_record(cls, tau=1.0 - alpha, **kwargs)

    def subthreshold(self) -> "LifParams":
        """Copy with firing disabled (v_th = +inf)."""
        return self.model_copy(update={"v_th": float("inf")})


class LifState(BaseModel):
    model_config = ConfigDict(frozen=True)

    v: float = 0.0

    @field_validator("v")
    @classmethod
    def _check_v(cls, value):
        if not np.isfinite(value):
            raise ValueError("membrane potential must be finite")
        return value


# ============================================================================
# SIMULATION
# ============================================================================

def lif_step(state: LifState, x: float, p: LifParams) -> Tuple[LifState, int, float]:
    """
    Advance one neuron by one step.

    Returns:
        tuple: (new state, spike in {0, 1}, pre-reset potential u)
    """
    u = state.v + p.tau * (x - (state.v - p.v_reset))
    spike = 1 if u >= p.v_th else 0
    v = u * (1 - spike) + p.v_reset * spike
    return LifState(v=v), spike, u


def lif_run_array(x: np.ndarray, p: LifParams, v0=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run independent LIF neurons over time (axis 0 of `x`).

    Args:
        x (np.ndarray): input currents, shape (T, ...)
        p (LifParams): shared neuron parameters
        v0: initial potential, scalar or array of shape x.shape[1:]; defaults to v_reset

    Returns:
        tuple: (spikes, post-reset potentials), both shaped like `x`
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 1:
        raise InvalidInput("lif_run needs at least one step")
    v = np.broadcast_to(p.v_reset if v0 is None else v0, x.shape[1:]).astype(np.float64)
    spikes = np.empty_like(x)
    potentials = np.empty_like(x)
    for t in range(x.shape[0]):
        u = v + p.tau * (x[t] - (v - p.v_reset))
        s = (u >= p.v_th).astype(np.float64)
        v = u * (1.0 - s) + p.v_reset * s
        spikes[t] = s
        potentials[t] = v
    logger.debug("LIF run over %d steps, firing ratio %.4f", x.shape[0], float(spikes.mean()))
    return spikes, potentials


def lif_run(signal: Union[Signal, np.ndarray], p: LifParams,
            initial: LifState = None) -> Tuple[Signal, Signal]:
    """Run one neuron over a signal; returns (spike train, post-reset potentials)."""
    samples = as_array(signal)
    if samples.ndim != 1 or samples.size < 1:
        raise InvalidInput("lif_run expects a non-empty 1-D signal")
    v0 = None if initial is None else initial.v
    spikes, potentials = lif_run_array(samples, p, v0)
    return Signal(samples=spikes), Signal(samples=potentials)


# ============================================================================
# SUBTHRESHOLD ANALYSIS
# ============================================================================

def check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")


def lif_subthreshold_gain(alpha: float, omega):
    """
    LIF subthreshold frequency response H = (1 - alpha) / (1 - alpha e^{-jw}).

    Args:
        alpha (float): retention factor 1 - tau, in (0, 1)
        omega: angular frequency or array of frequencies

    Returns:
        tuple: (complex gain H, squared magnitude |H|^2)
    """
    check_alpha(alpha)
    omega = np.asarray(omega, dtype=np.float64)
    gain = (1.0 - alpha) / (1.0 - alpha * np.exp(-1j * omega))
    power = (1.0 - alpha) ** 2 / (1.0 + alpha ** 2 - 2.0 * alpha * np.cos(omega))
    if gain.ndim == 0:
        return complex(gain), float(power)
    return gain, power


def lif_power_gain(alpha: float, omega):
    """|H_LIF(e^{jw})|^2 only."""
    return lif_subthreshold_gain(alpha, omega)[1]


def motion_attenuation_bound(alpha: float, omega0: float) -> float:
    """
    Largest LIF power gain over the motion band [omega0, pi].

    |H|^2 decreases monotonically on (0, pi), so the maximum sits at omega0.
    """
    check_alpha(alpha)
    if not 0.0 < omega0 <= np.pi:
        raise InvalidInput(f"omega0 must lie in (0, pi], got {omega0}")
    return float(lif_power_gain(alpha, omega0))


# ============================================================================
# SURROGATE SPIKE
# ============================================================================

def surrogate_derivative(u, v_th: float, k: float = DEFAULT_SURROGATE_SHARPNESS):
    """Sigmoid pseudo-derivative k * s * (1 - s) with s = sigmoid(k (u - v_th))."""
    s = expit(k * (np.asarray(u, dtype=np.float64) - v_th))
    return k * s * (1.0 - s)


def surrogate_spike(u, v_th: float, k: float = DEFAULT_SURROGATE_SHARPNESS):
    """
    Heaviside spike with a sigmoid pseudo-derivative for backpropagation.

    Returns:
        tuple: (spike = Heaviside(u - v_th), pseudo-derivative)
    """
    if not k > 0.0:
        raise InvalidInput(f"surrogate sharpness k must be positive, got {k}")
    u = np.asarray(u, dtype=np.float64)
    spike = (u >= v_th).astype(np.float64)
    derivative = surrogate_derivative(u, v_th, k)
    if spike.ndim == 0:
        return int(spike), float(derivative)
    return spike, derivative
