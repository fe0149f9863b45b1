"""
Pass-Band Optimizer (PBO) Pre-filter

Two-tap time-varying pre-filter placed in front of a LIF layer:

    Y[t] = X[t] - lambda[t] * X[t-1],   lambda[t] = mu + A sin(omega t + phi)

mu and omega are the only learnable quantities. They are stored unconstrained
(mu_raw, sigma_raw) and mapped through the logistic function:
mu = sigmoid(mu_raw), omega = pi * sigmoid(sigma_raw). lambda[t] itself is
never clamped.

This module also covers the constant-lambda analysis of the pre-filter
cascaded with the LIF low-pass: power gains, endpoint gains, tilt
classification, -3 dB cutoffs, the harmonic-transfer coefficients of the
periodic schedule and its time-averaged squared gain.
"""

import logging
import math
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

from core import InvalidInput, as_array, build_record, rewrap
from lif import check_alpha

logger = logging.getLogger(__name__)

DEFAULT_AMPLITUDE = 0.1
DEFAULT_PHASE = 0.0
FLAT_TOLERANCE = 1e-12
BOUNDARY_MODES = ("replicate", "zero")


# ============================================================================
# PARAMETERS AND SCHEDULE
# ============================================================================

class PboParams(BaseModel):
    """Learnable raw scalars (mu_raw, sigma_raw) and fixed amplitude/phase."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    mu_raw: float = 0.0
    sigma_raw: float = 0.0
    A: float = Field(default=DEFAULT_AMPLITUDE, ge=0.0)
    phi: float = DEFAULT_PHASE

    @property
    def mu(self) -> float:
        return float(expit(self.mu_raw))

    @property
    def omega(self) -> float:
        return omega_from_raw(self.sigma_raw)[1]

    def to_json_dict(self) -> Dict[str, float]:
        """Raw fields plus the derived mu and omega (read-only on load)."""
        record = self.model_dump()
        record.update({"mu": self.mu, "omega": self.omega})
        return record

    @classmethod
    def from_json_dict(cls, record: Dict[str, float]) -> "PboParams":
        fields = {key: record[key] for key in ("mu_raw", "sigma_raw", "A", "phi") if key in record}
        return build_record(cls, **fields)


def omega_from_raw(sigma_raw: float) -> Tuple[float, float]:
    """Logistic map sigma_raw -> (p, omega = pi * p)."""
    if not np.isfinite(sigma_raw):
        raise InvalidInput(f"sigma_raw must be finite, got {sigma_raw}")
    p = float(expit(sigma_raw))
    return p, math.pi * p


def init_params(T: int, A: float = DEFAULT_AMPLITUDE, phi: float = DEFAULT_PHASE,
                mu: float = 0.5) -> PboParams:
    """
    Initial parameters targeting one modulation period over a clip of T frames.

    mu starts at 0.5 unless given and omega at 2 pi / (T - 1).

    Raises:
        InvalidInput: if 2 / (T - 1) >= 1, i.e. T <= 3, where the logistic has no inverse,
            or if mu lies outside (0, 1)
    """
    if T <= 3:
        raise InvalidInput(f"init_params needs 2 / (T - 1) < 1, got T={T}")
    if not 0.0 < mu < 1.0:
        raise InvalidInput(f"initial mu must lie in (0, 1), got {mu}")
    p = 2.0 / (T - 1)
    sigma_raw = math.log(p / (1.0 - p))
    mu_raw = math.log(mu / (1.0 - mu))
    return build_record(PboParams, mu_raw=mu_raw, sigma_raw=sigma_raw, A=A, phi=phi)


def lambda_schedule(p: PboParams, t: int) -> float:
    """lambda[t] = mu + A sin(omega t + phi)."""
    return p.mu + p.A * math.sin(p.omega * t + p.phi)


def lambda_sequence(p: PboParams, T: int) -> np.ndarray:
    """lambda[0..T-1] as an array."""
    t = np.arange(T, dtype=np.float64)
    return p.mu + p.A * np.sin(p.omega * t + p.phi)


def fixed_lambda_sequence(value: float, T: int) -> np.ndarray:
    """Constant schedule, e.g. 0 for the identity and 1 for frame differencing."""
    return np.full(T, float(value))


# ============================================================================
# PRE-FILTER
# ============================================================================

def prefilter_apply(x, lambdas, boundary: str = "replicate"):
    """
    Apply Y[t] = X[t] - lambda[t] X[t-1] along axis 0.

    Args:
        x: Signal, FrameClip or array with time on axis 0
        lambdas: per-step coefficients, length T
        boundary (str): "replicate" sets X[-1] = X[0]; "zero" sets X[-1] = 0

    Returns:
        Same container type as `x`.
    """
    array = as_array(x)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 1 or lambdas.shape[0] != array.shape[0]:
        raise InvalidInput(
            f"lambdas length {lambdas.shape} does not match T={array.shape[0]}"
        )
    if boundary not in BOUNDARY_MODES:
        raise InvalidInput(f"unknown boundary mode '{boundary}'")

    first = array[:1] if boundary == "replicate" else np.zeros_like(array[:1])
    previous = np.concatenate([first, array[:-1]], axis=0)
    scale = lambdas.reshape((-1,) + (1,) * (array.ndim - 1))
    return rewrap(x, array - scale * previous)


def constant_input_response(p: PboParams, B: float, T: int) -> np.ndarray:
    """Exact pre-filter output on X[t] = B: B (1 - mu) - A B sin(omega t + phi)."""
    t = np.arange(T, dtype=np.float64)
    return B * (1.0 - p.mu) - p.A * B * np.sin(p.omega * t + p.phi)


# ============================================================================
# CONSTANT-LAMBDA CASCADE ANALYSIS
# ============================================================================

class TiltClass(str, Enum):
    LOW_PASS = "LowPassTilt"
    FLAT = "Flat"
    HIGH_PASS = "HighPassTilt"


def prefilter_gain(lam: float, omega):
    """|W(e^{jw})|^2 = 1 + lambda^2 - 2 lambda cos w."""
    return 1.0 + lam ** 2 - 2.0 * lam * np.cos(omega)


def cascade_gain(lam: float, alpha: float, omega):
    """Pre-filter followed by LIF: |G|^2 = |W|^2 (1 - a)^2 / (1 + a^2 - 2 a cos w)."""
    check_alpha(alpha)
    return prefilter_gain(lam, omega) * (1.0 - alpha) ** 2 / (
        1.0 + alpha ** 2 - 2.0 * alpha * np.cos(omega)
    )


def endpoint_gains(lam: float, alpha: float) -> Tuple[float, float]:
    """Cascade gains at w = 0 and w = pi in closed form."""
    check_alpha(alpha)
    at_dc = (1.0 - lam) ** 2
    at_nyquist = (1.0 + lam) ** 2 * (1.0 - alpha) ** 2 / (1.0 + alpha) ** 2
    return at_dc, at_nyquist


def tilt_classify(lam: float, alpha: float) -> TiltClass:
    """Slope direction of the cascade gain, decided by sign(alpha - lambda)."""
    check_alpha(alpha)
    if abs(lam - alpha) <= FLAT_TOLERANCE:
        return TiltClass.FLAT
    return TiltClass.LOW_PASS if lam < alpha else TiltClass.HIGH_PASS


def cutoff_cosine(lam: float, alpha: float) -> float:
    """
    cos(w_c) of the half-power point relative to the passband endpoint.

    The endpoint is w = 0 for a low-pass tilt and w = pi for a high-pass tilt.
    The half-power condition is linear in cos(w), so
    u = (r (1 + a^2) - (1 + l^2)) / (2 (r a - l)) with r the endpoint gain
    divided by 2 (1 - a)^2.

    Raises:
        InvalidInput: for a flat cascade
    """
    tilt = tilt_classify(lam, alpha)
    if tilt == TiltClass.FLAT:
        raise InvalidInput("a flat cascade has no -3 dB cutoff")
    if tilt == TiltClass.LOW_PASS:
        r = 0.5 * (1.0 - lam) ** 2 / (1.0 - alpha) ** 2
    else:
        r = 0.5 * (1.0 + lam) ** 2 / (1.0 + alpha) ** 2
    denominator = 2.0 * (r * alpha - lam)
    if denominator == 0.0:
        return math.nan
    return (r * (1.0 + alpha ** 2) - (1.0 + lam ** 2)) / denominator


def cutoff_3db(lam: float, alpha: float) -> Optional[float]:
    """
    -3 dB cutoff w_c in radians, or None when the half-power level is not
    reached inside [0, pi].
    """
    u = cutoff_cosine(lam, alpha)
    if not -1.0 <= u <= 1.0:
        logger.debug("No -3 dB cutoff for lambda=%g alpha=%g (u=%g)", lam, alpha, u)
        return None
    return math.acos(u)


# ============================================================================
# HARMONIC TRANSFER OF THE PERIODIC SCHEDULE
# ============================================================================

class HarmonicCoefficients(BaseModel):
    """
    Harmonic-transfer representation Y(w) = sum_m W_m(w) X(w - m w0).

    For lambda[t] = mu + A sin(w0 t + phi) only m in {-1, 0, 1} is nonzero:
    lambda_0 = mu, lambda_{+1} = A e^{j phi} / (2j), lambda_{-1} = conj(lambda_{+1}),
    W_0(w) = 1 - mu e^{-jw} and W_m(w) = -lambda_m e^{-j(w - m w0)}.

    The signs are deliberate. The 1 / (2j) comes from
    sin x = (e^{jx} - e^{-jx}) / (2j) and the leading minus from the subtracted
    tap y[t] = x[t] - lambda[t] x[t-1]. The `sidebands` and `full-psd`
    verification suites pin them against direct simulation.
    """

    model_config = ConfigDict(frozen=True)

    mu: float
    A: float
    phi: float
    omega0: float

    @property
    def lambda_fourier(self) -> Dict[int, complex]:
        plus = self.A * complex(math.cos(self.phi), math.sin(self.phi)) / 2j
        return {-1: plus.conjugate(), 0: complex(self.mu), 1: plus}

    def w(self, m: int, omega):
        """W_m(e^{jw}); zero for |m| > 1."""
        omega = np.asarray(omega, dtype=np.float64)
        if m == 0:
            return 1.0 - self.mu * np.exp(-1j * omega)
        if abs(m) > 1:
            return np.zeros_like(omega, dtype=np.complex128)
        return -self.lambda_fourier[m] * np.exp(-1j * (omega - m * self.omega0))

    def w0(self, omega):
        return self.w(0, omega)

    def w_plus(self, omega):
        return self.w(1, omega)

    def w_minus(self, omega):
        return self.w(-1, omega)


def harmonic_coefficients(p: PboParams) -> HarmonicCoefficients:
    return HarmonicCoefficients(mu=p.mu, A=p.A, phi=p.phi, omega0=p.omega)


def avg_squared_gain(mu: float, A: float, omega):
    """
    Time-averaged squared gain of the periodic pre-filter:
    (1 + mu^2 - 2 mu cos w) + A^2 / 2.
    """
    return prefilter_gain(mu, omega) + 0.5 * A ** 2
