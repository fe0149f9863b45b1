"""
Core Signal Types and Spectral Primitives

This module provides the value types and low-level numerics shared by every
other module of the toolkit:
- Signal / FrameClip / Spectrum records (immutable, validated)
- direct DTFT evaluation and the periodogram PSD estimate
- synthetic signal and clip generation from a DC + tones + noise decomposition
- the PBT1 binary tensor format and the spectrum CSV format

All internal math runs in float64; tensors are stored on disk as float32.
"""

from __future__ import annotations

import logging
import os
from enum import Enum
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b"PBT1"
DEFAULT_GRID_POINTS = 512


# ============================================================================
# ERRORS
# ============================================================================

class InvalidInput(ValueError):
    """Raised when an operation receives arguments outside its domain."""


class FormatError(ValueError):
    """Raised when a tensor or spectrum file does not match its format."""


class DivergedError(RuntimeError):
    """Raised when training produces a non-finite loss."""


# ============================================================================
# VALUE TYPES
# ============================================================================

def _frozen_array(values, ndim=None, name="array"):
    array = np.array(values, dtype=np.float64)
    if ndim is not None and array.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got {array.ndim}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains NaN or Inf")
    array.setflags(write=False)
    return array


class Signal(BaseModel):
    """A finite real discrete-time sequence x[0..T-1]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray

    @field_validator("samples", mode="before")
    @classmethod
    def _check_samples(cls, value):
        array = _frozen_array(value, ndim=1, name="samples")
        if array.size < 1:
            raise ValueError("a signal needs at least one sample")
        return array

    @property
    def T(self) -> int:
        return int(self.samples.size)


class FrameClip(BaseModel):
    """A T x C x H x W real tensor of video frames."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value):
        array = _frozen_array(value, ndim=4, name="clip data")
        if min(array.shape) < 1:
            raise ValueError(f"clip dims must be strictly positive, got {array.shape}")
        return array

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def T(self) -> int:
        return int(self.data.shape[0])


class SpectrumKind(str, Enum):
    COMPLEX_GAIN = "ComplexGain"
    POWER = "Power"


class Spectrum(BaseModel):
    """
    Values sampled on an increasing grid of angular frequencies in [0, pi].

    For power spectra, `lines` optionally lists discrete spectral lines as
    (omega, power) pairs. Lines are already rendered into `values` at the
    nearest grid point; the list keeps their exact positions and weights.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: np.ndarray
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.POWER
    lines: List[Tuple[float, float]] = Field(default_factory=list)

    @field_validator("grid", mode="before")
    @classmethod
    def _check_grid(cls, value):
        grid = _frozen_array(value, ndim=1, name="grid")
        if grid.size and (grid[0] < 0.0 or grid[-1] > np.pi):
            raise ValueError("grid must lie within [0, pi]")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        return grid

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value):
        return np.asarray(value)

    @model_validator(mode="after")
    def _check_values(self):
        values = np.array(self.values)
        if values.shape != self.grid.shape:
            raise ValueError("values and grid must have the same length")
        if self.kind == SpectrumKind.POWER:
            if np.iscomplexobj(values) or np.any(values < 0.0):
                raise ValueError("power values must be real and nonnegative")
            values = values.astype(np.float64)
        else:
            values = values.astype(np.complex128)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        return self

    def to_frame(self) -> pd.DataFrame:
        """Tabular form used by the CSV writer."""
        if self.kind == SpectrumKind.POWER:
            return pd.DataFrame({"omega": self.grid, "power": self.values})
        return pd.DataFrame(
            {"omega": self.grid, "re": self.values.real, "im": self.values.imag}
        )

    def value_at(self, omega: float):
        """Value at the grid point nearest to `omega`."""
        return self.values[int(np.argmin(np.abs(self.grid - omega)))]


class Tone(BaseModel):
    """A sinusoidal component amplitude * sin(omega * t + phase)."""

    model_config = ConfigDict(frozen=True)

    omega: float = Field(gt=0.0, le=np.pi)
    amplitude: float
    phase: float = 0.0


class SignalDecompositionSpec(BaseModel):
    """x[t] = B + sum_k a_k sin(w_k t + phi_k) + n[t]."""

    model_config = ConfigDict(frozen=True)

    dc_level: float = 0.0
    tones: List[Tone] = Field(default_factory=list)
    noise_std: float = Field(default=0.0, ge=0.0)
    T: int = Field(ge=1)


class ClipSynthSpec(BaseModel):
    """
    Recipe for a corpus of synthetic clips.

    Each pixel carries a shared spatial background (dc_level plus a seeded
    spatial pattern of std dc_spread), one seeded spatial pattern per tone
    modulated by that tone, and white Gaussian noise.
    """

    model_config = ConfigDict(frozen=True)

    T: int = Field(default=64, ge=1)
    C: int = Field(default=1, ge=1)
    H: int = Field(default=8, ge=1)
    W: int = Field(default=8, ge=1)
    dc_level: float = 1.0
    dc_spread: float = Field(default=0.0, ge=0.0)
    tones: List[Tone] = Field(default_factory=list)
    noise_std: float = Field(default=0.0, ge=0.0)
    n_clips: int = Field(default=4, ge=1)


# ============================================================================
# DTFT AND PSD
# ============================================================================

def frequency_grid(n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid of `n_points` angular frequencies covering [0, pi]."""
    if n_points < 2:
        raise InvalidInput("a frequency grid needs at least two points")
    return np.linspace(0.0, np.pi, n_points)


def _as_samples(signal) -> np.ndarray:
    if isinstance(signal, Signal):
        return signal.samples
    samples = np.asarray(signal, dtype=np.float64)
    if samples.shape[0] < 1:
        raise InvalidInput("signal is empty")
    return samples


def dtft_matrix(samples: np.ndarray, grid) -> np.ndarray:
    """
    Direct DTFT of `samples` along axis 0 at every grid frequency.

    Args:
        samples (np.ndarray): array with time on axis 0, any trailing shape
        grid (array_like): angular frequencies (any real values)

    Returns:
        np.ndarray: complex array of shape (len(grid),) + samples.shape[1:]
    """
    samples = np.asarray(samples)
    if samples.shape[0] < 1:
        raise InvalidInput("signal is empty")
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    t = np.arange(samples.shape[0], dtype=np.float64)
    kernel = np.exp(-1j * np.outer(grid, t))
    flat = samples.reshape(samples.shape[0], -1)
    return (kernel @ flat).reshape((grid.size,) + samples.shape[1:])


def dtft(signal: Union[Signal, Sequence[float]], omega: float) -> complex:
    """
    Evaluate X(e^{jw}) = sum_t x[t] e^{-jwt} at a single frequency.

    Raises:
        InvalidInput: if the signal is empty or omega is not finite
    """
    samples = _as_samples(signal)
    if not np.isfinite(omega):
        raise InvalidInput(f"omega must be finite, got {omega}")
    return complex(dtft_matrix(samples, [omega])[0])


def _check_grid(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if np.any(grid < 0.0) or np.any(grid > np.pi):
        raise InvalidInput("grid points must lie within [0, pi]")
    return grid


def periodogram(samples: np.ndarray, grid) -> np.ndarray:
    """|DTFT|^2 / T along axis 0, for every trailing index."""
    samples = np.asarray(samples, dtype=np.float64)
    spectrum = dtft_matrix(samples, grid)
    return (spectrum.real ** 2 + spectrum.imag ** 2) / samples.shape[0]


def empirical_psd(signal: Union[Signal, Sequence[float]], grid) -> Spectrum:
    """
    Periodogram PSD estimate |X(e^{jw})|^2 / T on a grid within [0, pi].

    Raises:
        InvalidInput: if the signal has fewer than two samples or the grid
            leaves [0, pi]
    """
    samples = _as_samples(signal)
    if samples.size < 2:
        raise InvalidInput("empirical_psd needs at least two samples")
    grid = _check_grid(grid)
    return Spectrum(grid=grid, values=periodogram(samples, grid), kind=SpectrumKind.POWER)


def ideal_lowpass(omega, omega_c: float) -> np.ndarray:
    """Ideal low-pass magnitude 1{|w| <= w_c}."""
    return (np.abs(np.asarray(omega)) <= omega_c).astype(np.float64)


def ideal_highpass(omega, omega_c: float) -> np.ndarray:
    """Ideal high-pass magnitude 1{|w| >= w_c}."""
    return (np.abs(np.asarray(omega)) >= omega_c).astype(np.float64)


def ideal_bandpass(omega, omega_1: float, omega_2: float) -> np.ndarray:
    """Cascade of ideal high-pass (w_1) and low-pass (w_2) magnitudes."""
    if not 0.0 < omega_1 < omega_2 <= np.pi:
        raise InvalidInput("band edges must satisfy 0 < w1 < w2 <= pi")
    return ideal_highpass(omega, omega_1) * ideal_lowpass(omega, omega_2)


# ============================================================================
# SYNTHETIC SIGNALS
# ============================================================================

def make_rng(seed: int) -> np.random.Generator:
    """
    Portable generator for every random draw in the toolkit.

    PCG64 bit generator seeded with the 64-bit seed; Gaussian draws use
    numpy's `standard_normal` (ziggurat) on top of it.
    """
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def synth_signal(spec: SignalDecompositionSpec, seed: int) -> Signal:
    """
    Generate x[t] = B + sum_k a_k sin(w_k t + phi_k) + n[t].

    Args:
        spec (SignalDecompositionSpec): DC level, tones, noise level, length
        seed (int): seed of the noise generator

    Returns:
        Signal: the generated sequence; bit-identical for identical inputs
    """
    t = np.arange(spec.T, dtype=np.float64)
    x = np.full(spec.T, float(spec.dc_level))
    for tone in spec.tones:
        x = x + tone.amplitude * np.sin(tone.omega * t + tone.phase)
    if spec.noise_std > 0.0:
        x = x + spec.noise_std * make_rng(seed).standard_normal(spec.T)
    return Signal(samples=x)


def synth_clips(spec: ClipSynthSpec, seed: int) -> List[FrameClip]:
    """
    Generate `spec.n_clips` clips that share one spatial background.

    Tone phases and noise are drawn per clip; the spatial patterns are drawn
    once per corpus.
    """
    rng = make_rng(seed)
    shape = (spec.C, spec.H, spec.W)
    background = spec.dc_level + spec.dc_spread * rng.standard_normal(shape)
    patterns = [rng.standard_normal(shape) for _ in spec.tones]
    t = np.arange(spec.T, dtype=np.float64)[:, None, None, None]

    clips = []
    for _ in range(spec.n_clips):
        data = np.broadcast_to(background, (spec.T,) + shape).copy()
        for tone, pattern in zip(spec.tones, patterns):
            phase = tone.phase + rng.uniform(0.0, 2.0 * np.pi)
            data += tone.amplitude * np.sin(tone.omega * t + phase) * pattern
        if spec.noise_std > 0.0:
            data += spec.noise_std * rng.standard_normal(data.shape)
        clips.append(FrameClip(data=data))
    logger.debug("Synthesised %d clips of shape %s", len(clips), (spec.T,) + shape)
    return clips


# ============================================================================
# PBT1 TENSOR FILES
# ============================================================================

def write_tensor(path, array: np.ndarray) -> None:
    """
    Write an array as PBT1: magic, u32 LE rank, rank x u32 LE dims,
    row-major float32 LE payload.
    """
    array = np.asarray(array)
    header = np.array((array.ndim,) + array.shape, dtype="<u4")
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as file:
        file.write(TENSOR_MAGIC)
        file.write(header.tobytes())
        file.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    """
    Read a PBT1 file into a float64 array.

    Raises:
        InvalidInput: if the file cannot be opened
        FormatError: wrong magic, truncated header or payload size mismatch
    """
    try:
        with open(path, "rb") as file:
            blob = file.read()
    except OSError as error:
        raise InvalidInput(f"cannot read tensor {path}: {error}") from error
    if blob[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    rank = int(np.frombuffer(blob, dtype="<u4", count=1, offset=4)[0])
    payload_offset = 8 + 4 * rank
    if len(blob) < payload_offset:
        raise FormatError(f"{path}: truncated dims for rank {rank}")
    dims = tuple(int(d) for d in np.frombuffer(blob, dtype="<u4", count=rank, offset=8))
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(blob) - payload_offset != expected:
        raise FormatError(
            f"{path}: payload holds {len(blob) - payload_offset} bytes, dims {dims} need {expected}"
        )
    payload = np.frombuffer(blob, dtype="<f4", offset=payload_offset)
    return payload.astype(np.float64).reshape(dims)


def write_clip(path, clip: FrameClip) -> None:
    write_tensor(path, clip.data)


def read_clip(path) -> FrameClip:
    data = read_tensor(path)
    if data.ndim != 4:
        raise FormatError(f"{path}: a clip needs rank 4, got rank {data.ndim}")
    try:
        return FrameClip(data=data)
    except ValueError as error:
        raise FormatError(f"{path}: {error}") from error


def tensor_io_roundtrip(clip: FrameClip, path) -> FrameClip:
    """Write `clip` to `path` and read it back."""
    write_clip(path, clip)
    return read_clip(path)


# ============================================================================
# SPECTRUM CSV
# ============================================================================

def write_spectrum_csv(spectrum: Spectrum, path) -> None:
    """Write 'omega,power' (or 'omega,re,im') rows with 12 significant digits."""
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    spectrum.to_frame().to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def read_spectrum_csv(path) -> Spectrum:
    frame = pd.read_csv(path)
    columns = list(frame.columns)
    if columns == ["omega", "power"]:
        return Spectrum(grid=frame["omega"].to_numpy(), values=frame["power"].to_numpy())
    if columns == ["omega", "re", "im"]:
        values = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        return Spectrum(grid=frame["omega"].to_numpy(), values=values,
                        kind=SpectrumKind.COMPLEX_GAIN)
    raise FormatError(f"{path}: unexpected spectrum header {columns}")


def as_array(x: Union[Signal, FrameClip, np.ndarray, Sequence[float]]) -> np.ndarray:
    """Underlying float64 array of a Signal, FrameClip or array-like."""
    if isinstance(x, Signal):
        return x.samples
    if isinstance(x, FrameClip):
        return x.data
    return np.asarray(x, dtype=np.float64)


def rewrap(template, array: np.ndarray):
    """Wrap `array` in the same container type as `template`."""
    if isinstance(template, Signal):
        return Signal(samples=array)
    if isinstance(template, FrameClip):
        return FrameClip(data=array)
    return array


def check_finite(name: str, value: float) -> float:
    """Return `value` if finite, else raise InvalidInput."""
    if not np.isfinite(value):
        raise InvalidInput(f"{name} must be finite, got {value}")
    return value


def build_record(model_cls, **fields):
    """Construct a pydantic record, reporting validation failures as InvalidInput."""
    try:
        return model_cls(**fields)
    except ValidationError as error:
        raise InvalidInput(str(error)) from error
