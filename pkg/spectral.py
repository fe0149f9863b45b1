"""
Output Power Spectra of the LIF and PBO -> LIF Chains

Analytic predictions of the output PSD for:
- the LIF alone: |H|^2 S_in
- the periodic pre-filter followed by the LIF, in the decorrelated form
  |H|^2 (|W_0|^2 S_in(w) + A^2/4 (S_in(w - w0) + S_in(w + w0)))
- the same chain with every cross-spectral term kept:
  |H|^2 sum_{m,n} W_m W_n* S_X(w - m w0, w - n w0)

Input spectra use periodogram units (|X|^2 / T). DC and tones are discrete
lines carrying their power; the noise floor is a flat density. S_in is
extended evenly to negative frequencies and is zero outside [-pi, pi].

The chain spectra report runs clips through the three processing chains
(identity, frame difference, PBO) in front of a non-firing LIF and averages
the per-pixel temporal periodograms.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core import (
    FrameClip,
    InvalidInput,
    Spectrum,
    as_array,
    dtft_matrix,
    make_rng,
    periodogram,
)
from lif import LifParams, lif_power_gain, lif_run_array
from pbo import (
    PboParams,
    fixed_lambda_sequence,
    harmonic_coefficients,
    lambda_sequence,
    prefilter_apply,
)

logger = logging.getLogger(__name__)

LINE_TOLERANCE = 1e-9
DIAGONAL_TOLERANCE = 1e-12
IMAG_TOLERANCE = 1e-10
NEGATIVE_TOLERANCE = 1e-12


class InputPsdModel(BaseModel):
    """DC line power s_b, tone lines [(omega_k, power_k)] and flat noise floor s_n."""

    model_config = ConfigDict(frozen=True)

    s_b: float = Field(default=0.0, ge=0.0)
    tones: List[Tuple[float, float]] = Field(default_factory=list)
    s_n: float = Field(default=0.0, ge=0.0)

    @field_validator("tones")
    @classmethod
    def _check_tones(cls, tones):
        for omega, power in tones:
            if not 0.0 < omega <= np.pi:
                raise ValueError(f"tone frequency {omega} outside (0, pi]")
            if power < 0.0:
                raise ValueError(f"tone power {power} is negative")
        return tones

    def lines(self) -> List[Tuple[float, float]]:
        """All input lines including DC."""
        lines = [(0.0, self.s_b)] if self.s_b > 0.0 else []
        return lines + [tuple(tone) for tone in self.tones]

    def density(self, omega):
        """Continuous part of S_in with even extension, zero outside [-pi, pi]."""
        omega = np.asarray(omega, dtype=np.float64)
        return np.where(np.abs(omega) <= np.pi + LINE_TOLERANCE, self.s_n, 0.0)


# ============================================================================
# CROSS-SPECTRA
# ============================================================================

class CrossSpectrum(BaseModel):
    """
    Generalized cross-spectrum S_X(a, b) = E[X(e^{ja}) X*(e^{jb})].

    `evaluator` takes two broadcastable arrays of frequencies and returns the
    complex values.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    evaluator: Callable

    def __call__(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.float64),
                                   np.asarray(b, dtype=np.float64))
        return np.asarray(self.evaluator(a, b), dtype=np.complex128)

    def __add__(self, other: "CrossSpectrum") -> "CrossSpectrum":
        return CrossSpectrum(evaluator=lambda a, b: self(a, b) + other(a, b))

    def scaled(self, factor: float) -> "CrossSpectrum":
        return CrossSpectrum(evaluator=lambda a, b: factor * self(a, b))

    @classmethod
    def diagonal(cls, model: InputPsdModel) -> "CrossSpectrum":
        """Decorrelated input: S_X(a, b) = S_in(a) if a == b else 0."""
        lines = model.lines()

        def evaluate(a, b):
            values = model.density(a)
            for nu, power in lines:
                values = values + np.where(np.abs(np.abs(a) - nu) <= LINE_TOLERANCE, power, 0.0)
            return np.where(np.abs(a - b) < DIAGONAL_TOLERANCE, values, 0.0)

        return cls(evaluator=evaluate)

    @classmethod
    def from_signal(cls, x) -> "CrossSpectrum":
        """Rank-one cross-spectrum of a deterministic sequence: X(a) X*(b) / T."""
        samples = as_array(x)
        if samples.ndim != 1 or samples.size < 1:
            raise InvalidInput("from_signal expects a non-empty 1-D sequence")

        def evaluate(a, b):
            xa = dtft_matrix(samples, a.ravel()).reshape(a.shape)
            xb = dtft_matrix(samples, b.ravel()).reshape(b.shape)
            return xa * np.conj(xb) / samples.size

        return cls(evaluator=evaluate)

    @classmethod
    def random_hermitian(cls, seed: int, rank: int = 3, length: int = 16,
                         scale: float = 1.0) -> "CrossSpectrum":
        """
        Random positive semidefinite cross-spectrum: a scaled sum of `rank`
        rank-one spectra of seeded Gaussian sequences.
        """
        rng = make_rng(seed)
        parts = [cls.from_signal(rng.standard_normal(length)) for _ in range(rank)]

        def evaluate(a, b):
            return scale * sum(part(a, b) for part in parts)

        return cls(evaluator=evaluate)


# ============================================================================
# ANALYTIC PREDICTIONS
# ============================================================================

def _grid(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if np.any(grid < 0.0) or np.any(grid > np.pi):
        raise InvalidInput("grid points must lie within [0, pi]")
    return grid


def _render(grid, values, lines) -> Spectrum:
    """Add line powers at their nearest grid points and build the spectrum."""
    values = np.array(values, dtype=np.float64)
    kept = []
    for omega, power in lines:
        if power <= 0.0:
            continue
        values[int(np.argmin(np.abs(grid - omega)))] += power
        kept.append((float(omega), float(power)))
    return Spectrum(grid=grid, values=np.clip(values, 0.0, None), lines=sorted(kept))


def lif_output_psd(model: InputPsdModel, alpha: float, grid) -> Spectrum:
    """S_out = |H_LIF|^2 S_in; the DC line passes with unit gain."""
    grid = _grid(grid)
    density = lif_power_gain(alpha, grid) * model.density(grid)
    lines = [(nu, power * float(lif_power_gain(alpha, nu))) for nu, power in model.lines()]
    return _render(grid, density, lines)


def _sideband_positions(nu: float, omega0: float) -> List[float]:
    """Output frequencies in [0, pi] where S_in(w - w0) or S_in(w + w0) sees the line at nu."""
    from_lower = {omega0 + nu, omega0 - nu}
    from_upper = {nu - omega0, -nu - omega0}
    positions = [w for w in from_lower if 0.0 <= w <= np.pi]
    positions += [w for w in from_upper if 0.0 <= w <= np.pi]
    return positions


def psd_out_approx(model: InputPsdModel, p: PboParams, alpha: float, grid) -> Spectrum:
    """
    Decorrelated output PSD of the PBO -> LIF chain.

    A DC input line of power c yields a line (1 - mu)^2 c at 0 and a line
    (A^2 / 4) c |H(w0)|^2 at w0.
    """
    grid = _grid(grid)
    coeffs = harmonic_coefficients(p)
    omega0 = p.omega
    side_weight = 0.25 * p.A ** 2
    h2 = lif_power_gain(alpha, grid)

    baseline = np.abs(coeffs.w0(grid)) ** 2 * model.density(grid)
    sidebands = side_weight * (model.density(grid - omega0) + model.density(grid + omega0))
    density = h2 * (baseline + sidebands)

    lines = []
    for nu, power in model.lines():
        gain = abs(complex(coeffs.w0(nu))) ** 2 * float(lif_power_gain(alpha, nu))
        lines.append((nu, gain * power))
        for omega in _sideband_positions(nu, omega0):
            lines.append((omega, side_weight * power * float(lif_power_gain(alpha, omega))))
    return _render(grid, density, lines)


def _check_hermitian(terms: Dict[Tuple[int, int], np.ndarray]) -> None:
    scale = max(1.0, max(float(np.max(np.abs(v))) for v in terms.values()))
    for (m, n), values in terms.items():
        mismatch = np.max(np.abs(values - np.conj(terms[(n, m)])))
        if mismatch > 1e-9 * scale:
            raise InvalidInput(
                f"cross-spectrum is not Hermitian: |S({m},{n}) - conj S({n},{m})| = {mismatch:.3g}"
            )


def psd_out_full(cross: CrossSpectrum, p: PboParams, alpha: float, grid,
                 breakdown: bool = False):
    """
    Output PSD of the PBO -> LIF chain with every cross-spectral term.

    Args:
        cross (CrossSpectrum): input cross-spectrum S_X(a, b)
        p (PboParams): single-tone schedule
        alpha (float): LIF retention factor
        grid: output frequencies in [0, pi]
        breakdown (bool): also return the diagonal baseline (m = n = 0),
            diagonal sideband (m = n = +-1) and cross (m != n) parts

    Returns:
        Spectrum, or (Spectrum, dict of arrays) when `breakdown` is set

    Raises:
        InvalidInput: if the cross-spectrum is not Hermitian or the result
            has a non-negligible imaginary part
    """
    grid = _grid(grid)
    coeffs = harmonic_coefficients(p)
    orders = (-1, 0, 1)
    shifted = {m: grid - m * p.omega for m in orders}
    transfers = {m: coeffs.w(m, grid) for m in orders}
    samples = {(m, n): cross(shifted[m], shifted[n]) for m in orders for n in orders}
    _check_hermitian(samples)

    h2 = lif_power_gain(alpha, grid)
    parts = {"baseline": np.zeros(grid.shape, dtype=np.complex128),
             "sideband": np.zeros(grid.shape, dtype=np.complex128),
             "cross": np.zeros(grid.shape, dtype=np.complex128)}
    for (m, n), values in samples.items():
        term = h2 * transfers[m] * np.conj(transfers[n]) * values
        key = "cross" if m != n else ("baseline" if m == 0 else "sideband")
        parts[key] = parts[key] + term

    total = parts["baseline"] + parts["sideband"] + parts["cross"]
    scale = max(1.0, float(np.max(np.abs(total.real))))
    residue = float(np.max(np.abs(total.imag)))
    if residue >= IMAG_TOLERANCE * scale:
        raise InvalidInput(f"full PSD has imaginary residue {residue:.3g}")
    values = total.real
    if np.min(values) < -NEGATIVE_TOLERANCE * scale:
        logger.warning("Full PSD dips to %.3g before clipping", float(np.min(values)))
    spectrum = Spectrum(grid=grid, values=np.clip(values, 0.0, None))
    if breakdown:
        return spectrum, {key: part.real for key, part in parts.items()}
    return spectrum


# ============================================================================
# THREE-CHAIN SPECTRA REPORT
# ============================================================================

PANELS = ("lif_only", "difference", "pbo")


class ChainSpectraReport(BaseModel):
    """Mean per-pixel output spectra of the three chains plus their totals."""

    model_config = ConfigDict(frozen=True)

    panels: Dict[str, Spectrum]
    normalization: Dict[str, float]
    n_clips: int
    n_pixels: int


def chain_lambdas(panel: str, p: PboParams, T: int) -> np.ndarray:
    if panel == "lif_only":
        return fixed_lambda_sequence(0.0, T)
    if panel == "difference":
        return fixed_lambda_sequence(1.0, T)
    if panel == "pbo":
        return lambda_sequence(p, T)
    raise InvalidInput(f"unknown panel '{panel}'")


def chain_output(clip: FrameClip, lif: LifParams, lambdas) -> np.ndarray:
    """Recentred subthreshold LIF potential after the pre-filter, shape (T, C*H*W)."""
    filtered = prefilter_apply(clip.data, lambdas).reshape(clip.T, -1)
    _, potentials = lif_run_array(filtered, lif.subthreshold())
    return potentials - lif.v_reset


def chain_spectra_report(clips: Sequence[FrameClip], lif: LifParams, p: PboParams, grid) -> ChainSpectraReport:
    """
    Mean per-pixel temporal PSDs for the identity, frame-difference and PBO
    chains in front of a non-firing LIF.

    Pixel periodograms are averaged arithmetically in clip order; each panel's
    total power is recorded as its normalization constant.
    """
    if not clips:
        raise InvalidInput("chain_spectra_report needs at least one clip")
    grid = _grid(grid)
    sums = {panel: np.zeros(grid.shape) for panel in PANELS}
    n_pixels = 0
    for clip in clips:
        for panel in PANELS:
            output = chain_output(clip, lif, chain_lambdas(panel, p, clip.T))
            sums[panel] += periodogram(output, grid).sum(axis=1)
        n_pixels += int(np.prod(clip.dims[1:]))

    panels = {panel: Spectrum(grid=grid, values=sums[panel] / n_pixels) for panel in PANELS}
    normalization = {panel: float(np.sum(spectrum.values)) for panel, spectrum in panels.items()}
    logger.info("Chain spectra report over %d clips (%d pixels)", len(clips), n_pixels)
    return ChainSpectraReport(panels=panels, normalization=normalization,
                         n_clips=len(clips), n_pixels=n_pixels)


def band_balance(spectrum: Spectrum, band: Tuple[float, float],
                 tones: Optional[Sequence[float]] = None) -> float:
    """
    Minimum power over the motion band divided by the power at DC.

    Without `tones` the minimum runs over every grid point in the band. With
    `tones` it runs over the grid values nearest to the tones inside the band,
    so a line spectrum is read at its lines rather than at its noise floor.

    Raises:
        InvalidInput: if no grid point (or no tone) falls inside the band
    """
    low, high = band
    if tones is None:
        mask = (spectrum.grid >= low) & (spectrum.grid <= high)
        if not np.any(mask):
            raise InvalidInput(f"no grid points inside band {band}")
        band_min = float(np.min(spectrum.values[mask]))
    else:
        inside = [tone for tone in tones if low <= tone <= high]
        if not inside:
            raise InvalidInput(f"no tones inside band {band}")
        band_min = min(float(spectrum.value_at(tone)) for tone in inside)
    dc = float(spectrum.value_at(0.0))
    if dc <= 0.0:
        return float("inf")
    return band_min / dc
