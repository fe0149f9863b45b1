"""
Analytic-vs-Simulation Verification Suites

Each suite compares closed-form predictions against brute-force time-domain
simulation or numerical oracles and returns a SuiteReport listing every
check with its error, tolerance and margin.

Suites:
- lif-gain:     LIF |H|^2 against tone gains of the non-firing LIF
- dc-pass:      unit DC gain and the motion-attenuation bound
- cascade:      flat line, endpoint gains, endpoint maxima, -3 dB roots,
                pre-filter -> LIF composition
- sidebands:    exact constant-input response and its spectral lines
- full-psd:     full cross-spectral formula (reduction, coherent input,
                sideband persistence)
- ltv-average:  Monte-Carlo average squared gain on white noise
- equilibrium:  intensity-term closed form against perturbations and a minimizer
- gradients:    tape gradients against central finite differences
- energy:       worked example and structural properties of the energy model
"""

import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from consistency import (
    equilibrium_closed_form,
    intensity_objective,
    minimize_intensity,
    spatial_demean,
)
from core import InvalidInput, dtft, make_rng, periodogram
from energy import (
    LayerProfile,
    energy_total,
    pbo_overhead,
    tiny_model_profiles,
)
from lif import LifParams, lif_power_gain, lif_run_array, motion_attenuation_bound
from pbo import (
    PboParams,
    TiltClass,
    avg_squared_gain,
    cascade_gain,
    constant_input_response,
    cutoff_3db,
    endpoint_gains,
    fixed_lambda_sequence,
    init_params,
    lambda_sequence,
    prefilter_apply,
    tilt_classify,
)
from spectral import CrossSpectrum, InputPsdModel, psd_out_approx, psd_out_full
from trainer import SyntheticTaskSpec, TrainConfig, evaluate, gen_dataset, init_model, loss_and_grads

logger = logging.getLogger(__name__)

CHECK_FREQUENCIES = (math.pi / 8, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi)
ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.9)
GAIN_WINDOW = 1024


class CheckResult(BaseModel):
    name: str
    error: float
    tolerance: float
    passed: bool
    margin: float
    value: Optional[float] = None
    reference: Optional[float] = None


class SuiteReport(BaseModel):
    suite: str
    passed: bool
    checks: List[CheckResult] = Field(default_factory=list)


class _Checks:
    """Collects checks of one suite."""

    def __init__(self, suite: str):
        self.suite = suite
        self.items: List[CheckResult] = []

    def close(self, name, value, reference, tolerance, relative=True):
        value, reference = float(value), float(reference)
        error = abs(value - reference)
        if relative:
            error /= max(abs(reference), 1e-300)
        self._add(name, error, tolerance, value, reference)

    def bound(self, name, error, tolerance):
        """Pass when error <= tolerance."""
        self._add(name, float(error), tolerance)

    def truth(self, name, condition):
        self._add(name, 0.0 if condition else 1.0, 0.0)

    def _add(self, name, error, tolerance, value=None, reference=None):
        passed = bool(error <= tolerance)
        self.items.append(CheckResult(name=name, error=error, tolerance=tolerance,
                                      passed=passed, margin=tolerance - error,
                                      value=value, reference=reference))
        if not passed:
            logger.warning("[%s] %s failed: error %.3g > %.3g", self.suite, name, error, tolerance)

    def report(self) -> SuiteReport:
        return SuiteReport(suite=self.suite, passed=all(c.passed for c in self.items),
                           checks=self.items)


def _steady_gain(alpha: float, omega: float, lambdas_value: Optional[float] = None) -> float:
    """Empirical power gain of a cosine through (optional pre-filter) and the non-firing LIF."""
    trim = int(math.ceil(10.0 / (1.0 - alpha)))
    t = np.arange(trim + GAIN_WINDOW, dtype=np.float64)
    x = np.cos(omega * t)
    drive = x
    if lambdas_value is not None:
        drive = prefilter_apply(x, fixed_lambda_sequence(lambdas_value, t.size))
    _, v = lif_run_array(drive, LifParams.from_alpha(alpha).subthreshold())
    return abs(dtft(v[trim:], omega)) ** 2 / abs(dtft(x[trim:], omega)) ** 2


# ============================================================================
# SUITES
# ============================================================================

def suite_lif_gain(seed: int) -> SuiteReport:
    checks = _Checks("lif-gain")
    for alpha in ALPHAS:
        for omega in CHECK_FREQUENCIES:
            empirical = math.sqrt(_steady_gain(alpha, omega))
            analytic = math.sqrt(lif_power_gain(alpha, omega))
            checks.close(f"|H| alpha={alpha} omega={omega:.4f}", empirical, analytic, 0.01)
    return checks.report()


def suite_dc_pass(seed: int) -> SuiteReport:
    checks = _Checks("dc-pass")
    for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
        c = 1.7
        _, v = lif_run_array(np.full(400, c), LifParams.from_alpha(alpha).subthreshold())
        checks.close(f"dc gain alpha={alpha}", v[-1] / c, 1.0, 1e-9)
    for alpha in (0.3, 0.7):
        for omega0 in (math.pi / 4, math.pi / 2, math.pi):
            epsilon = motion_attenuation_bound(alpha, omega0)
            scan = lif_power_gain(alpha, np.linspace(omega0, math.pi, 10_000))
            checks.close(f"epsilon = |H(w0)|^2 alpha={alpha} w0={omega0:.4f}",
                         epsilon, float(lif_power_gain(alpha, omega0)), 1e-15)
            checks.bound(f"epsilon bounds scan alpha={alpha} w0={omega0:.4f}",
                         max(0.0, float(np.max(scan)) - epsilon), 1e-15)
    return checks.report()


def suite_cascade(seed: int) -> SuiteReport:
    checks = _Checks("cascade")
    omegas = np.linspace(0.0, math.pi, 2001)

    for alpha in (0.1, 0.3, 0.7):
        flat = np.max(np.abs(cascade_gain(alpha, alpha, omegas) - (1.0 - alpha) ** 2))
        checks.bound(f"flat line alpha={alpha}", flat, 1e-12)
        for lam in (0.0, 0.4, 1.0):
            at_dc, at_pi = endpoint_gains(lam, alpha)
            checks.bound(f"endpoint 0 lambda={lam} alpha={alpha}",
                         abs(cascade_gain(lam, alpha, 0.0) - at_dc), 1e-12)
            checks.bound(f"endpoint pi lambda={lam} alpha={alpha}",
                         abs(cascade_gain(lam, alpha, math.pi) - at_pi), 1e-12)

    interior = 0
    for lam in np.linspace(0.0, 1.0, 50):
        for alpha in np.linspace(0.01, 0.99, 50):
            if tilt_classify(lam, alpha) == TiltClass.FLAT:
                continue
            peak = int(np.argmax(cascade_gain(lam, alpha, omegas)))
            interior += peak not in (0, omegas.size - 1)
    checks.bound("no interior maxima on the 50x50 grid", interior, 0)

    scan = np.linspace(0.0, math.pi, 1_000_001)
    step = scan[1] - scan[0]
    for lam, alpha in ((0.8, 0.3), (0.1, 0.7), (0.5, 0.2), (0.2, 0.6), (0.31, 0.3)):
        at_dc, at_pi = endpoint_gains(lam, alpha)
        reference = at_dc if tilt_classify(lam, alpha) == TiltClass.LOW_PASS else at_pi
        ratio = cascade_gain(lam, alpha, scan) / reference
        crossings = np.flatnonzero(np.diff(np.sign(ratio - 0.5)) != 0)
        omega_c = cutoff_3db(lam, alpha)
        if omega_c is None:
            checks.truth(f"no half-power crossing lambda={lam} alpha={alpha}", crossings.size == 0)
            continue
        residual = cascade_gain(lam, alpha, omega_c) / reference - 0.5
        checks.bound(f"cutoff residual lambda={lam} alpha={alpha}", abs(residual), 1e-10)
        located = scan[crossings[0]] if crossings.size else math.inf
        checks.bound(f"cutoff vs scan lambda={lam} alpha={alpha}",
                     abs(located - omega_c), step)

    for lam, alpha in ((0.3, 0.3), (0.8, 0.3), (0.1, 0.7)):
        for omega in CHECK_FREQUENCIES[:-1]:
            checks.close(f"composition lambda={lam} alpha={alpha} omega={omega:.4f}",
                         _steady_gain(alpha, omega, lam), cascade_gain(lam, alpha, omega), 0.01)
    return checks.report()


def suite_sidebands(seed: int) -> SuiteReport:
    checks = _Checks("sidebands")
    p = init_params(10)
    B, transient, window = 1.3, 18, 576
    T = transient + window
    alpha = 0.3
    lif = LifParams.from_alpha(alpha).subthreshold()

    y = prefilter_apply(np.full(T, B), lambda_sequence(p, T))
    checks.bound("constant-input closed form",
                 float(np.max(np.abs(y - constant_input_response(p, B, T)))), 1e-12)

    _, v = lif_run_array(y, lif)
    omega0 = p.omega
    tail = v[transient:]
    model = InputPsdModel(s_b=B ** 2 * window)
    predicted = dict(psd_out_approx(model, p, alpha, [0.0, omega0]).lines)
    line_at_w0 = float(periodogram(tail, [omega0])[0])
    line_at_dc = float(periodogram(tail, [0.0])[0])
    expected_side = 0.25 * p.A ** 2 * B ** 2 * window * float(lif_power_gain(alpha, omega0))
    checks.close("sideband line at w0", line_at_w0, predicted[omega0], 0.01)
    checks.close("sideband weight A^2/4 |H(w0)|^2", predicted[omega0], expected_side, 1e-12)
    checks.close("dc line", line_at_dc, predicted[0.0], 0.01)
    checks.close("line power bookkeeping", line_at_w0 + line_at_dc,
                 predicted[omega0] + predicted[0.0], 0.01)
    return checks.report()


def _coherent_burst(T: int = 512, burst: int = 256) -> np.ndarray:
    start = (T - burst) // 4
    t = np.arange(burst, dtype=np.float64)
    x = np.zeros(T)
    x[start:start + burst] = np.hanning(burst) * (0.8 + np.cos(0.35 * t) + 0.5 * np.cos(1.9 * t))
    return x


def suite_full_psd(seed: int) -> SuiteReport:
    checks = _Checks("full-psd")
    p = init_params(10)
    alpha = 0.3
    grid = np.linspace(0.0, math.pi, 361)

    model = InputPsdModel(s_b=1.0, tones=[(math.pi / 2, 0.3)], s_n=0.1)
    full = psd_out_full(CrossSpectrum.diagonal(model), p, alpha, grid)
    approx = psd_out_approx(model, p, alpha, grid)
    checks.bound("diagonal reduction", float(np.max(np.abs(full.values - approx.values))), 1e-12)

    x = _coherent_burst()
    predicted = psd_out_full(CrossSpectrum.from_signal(x), p, alpha, grid).values
    lif = LifParams.from_alpha(alpha).subthreshold()
    _, v = lif_run_array(prefilter_apply(x, lambda_sequence(p, x.size)), lif)
    simulated = periodogram(v, grid)
    mask = simulated > 1e-3 * np.max(simulated)
    worst = float(np.max(np.abs(predicted[mask] - simulated[mask]) / simulated[mask]))
    checks.bound("coherent input vs simulation", worst, 0.02)

    base_spectrum, base = psd_out_full(CrossSpectrum.diagonal(model), p, alpha, grid, breakdown=True)
    checks.truth("sideband floor present", float(np.max(base["sideband"])) > 0.0)
    for k in range(16):
        perturbation = CrossSpectrum.random_hermitian(seed + k).scaled(0.5)
        _, parts = psd_out_full(CrossSpectrum.diagonal(model) + perturbation, p, alpha, grid,
                                breakdown=True)
        deficit = float(np.max(base["sideband"] - parts["sideband"]))
        checks.bound(f"sideband floor persists under perturbation {k}", max(deficit, 0.0), 1e-12)
    return checks.report()


def suite_ltv_average(seed: int, T: int = 4096, n_seeds: int = 32, n_bands: int = 4) -> SuiteReport:
    checks = _Checks("ltv-average")
    p = init_params(10)
    lambdas = lambda_sequence(p, T)
    bins = np.fft.rfftfreq(T) * 2.0 * math.pi
    accumulated = np.zeros(bins.size)
    for k in range(n_seeds):
        noise = make_rng(seed + k).standard_normal(T)
        y = prefilter_apply(noise, lambdas)
        accumulated += np.abs(np.fft.rfft(y)) ** 2 / T
    empirical = accumulated / n_seeds
    analytic = avg_squared_gain(p.mu, p.A, bins)
    for band in np.array_split(np.arange(1, bins.size - 1), n_bands):
        checks.close(f"band [{bins[band[0]]:.3f}, {bins[band[-1]]:.3f}]",
                     float(np.mean(empirical[band])), float(np.mean(analytic[band])), 0.03)

    periods = 10
    t_len = int(round(periods * 2 * math.pi / p.omega))
    checks.bound("time average of lambda over 10 periods",
                 abs(float(np.mean(lambda_sequence(p, t_len))) - p.mu), 1e-3)
    return checks.report()


def suite_equilibrium(seed: int, n_fixtures: int = 20) -> SuiteReport:
    checks = _Checks("equilibrium")
    rng = make_rng(seed)
    worst_minimizer, worst_perturbation = 0.0, 0.0
    for _ in range(n_fixtures):
        y0d = spatial_demean(rng.standard_normal((2, 4, 4)))
        y1d = spatial_demean(rng.standard_normal((2, 4, 4)))
        for lam in np.round(np.arange(0.1, 1.0, 0.1), 1):
            closed = equilibrium_closed_form(y0d, y1d, lam)
            best = intensity_objective(closed, y0d, y1d, lam)
            perturbed = [intensity_objective(closed + 0.1 * rng.standard_normal(closed.shape),
                                             y0d, y1d, lam) for _ in range(1000)]
            worst_perturbation = max(worst_perturbation, best - min(perturbed))
            numerical = minimize_intensity(y0d, y1d, lam)
            worst_minimizer = max(worst_minimizer, float(np.max(np.abs(numerical - closed))))
        checks.bound("lambda=0 endpoint",
                     float(np.max(np.abs(equilibrium_closed_form(y0d, y1d, 0.0) - y0d))), 0.0)
        checks.bound("lambda=1 endpoint",
                     float(np.max(np.abs(equilibrium_closed_form(y0d, y1d, 1.0) - y1d))), 0.0)
    checks.bound("closed form beats random perturbations", max(worst_perturbation, 0.0), 0.0)
    checks.bound("closed form vs numerical minimizer", worst_minimizer, 1e-6)
    return checks.report()


def gradient_fixture(seed: int):
    """Small smooth-forward model, batch and config for finite-difference checks."""
    spec = SyntheticTaskSpec(T=6, H=2, W=2, clips_per_class=3, seed=seed,
                             class_tones=[math.pi / 2, 3 * math.pi / 4])
    cfg = TrainConfig(seed=seed, hidden=4, smooth=True, alpha_weight=0.5, projection_gain=3.0)
    rng = make_rng(seed + 7)
    model = init_model(spec, cfg)
    model = model.model_copy(update={
        "pbo": PboParams(mu_raw=rng.normal(0.0, 0.5), sigma_raw=rng.normal(-1.0, 0.5)),
        "readout_w": rng.standard_normal(model.readout_w.shape),
        "readout_b": rng.standard_normal(model.readout_b.shape),
    })
    data = gen_dataset(spec)
    return model, (data.train_x[:3], data.train_y[:3]), cfg


def finite_difference(model, batch, cfg, name: str, index=(), step: float = 1e-4) -> float:
    """Central finite difference of the loss along one parameter entry."""
    def loss_at(delta):
        if name in ("mu_raw", "sigma_raw"):
            pbo = model.pbo.model_copy(update={name: getattr(model.pbo, name) + delta})
            shifted = model.model_copy(update={"pbo": pbo})
        else:
            array = getattr(model, name).copy()
            array[index] += delta
            shifted = model.model_copy(update={name: array})
        return evaluate(shifted, batch[0], batch[1], cfg)[0]

    return (loss_at(step) - loss_at(-step)) / (2.0 * step)


def suite_gradients(seed: int, n_fixtures: int = 20) -> SuiteReport:
    checks = _Checks("gradients")
    worst = {"mu_raw": 0.0, "sigma_raw": 0.0, "readout_w": 0.0, "readout_b": 0.0}
    for k in range(n_fixtures):
        model, batch, cfg = gradient_fixture(seed + k)
        _, grads = loss_and_grads(model, batch, cfg)
        entries = [("mu_raw", ()), ("sigma_raw", ()), ("readout_w", (1, 0)), ("readout_b", (1,))]
        for name, index in entries:
            analytic = float(np.asarray(grads[name])[index])
            numeric = finite_difference(model, batch, cfg, name, index)
            excess = abs(analytic - numeric) - (1e-3 * max(abs(analytic), abs(numeric)) + 1e-6)
            worst[name] = max(worst[name], excess)
    for name, excess in worst.items():
        checks.bound(f"{name} analytic vs finite difference", max(excess, 0.0), 0.0)
    return checks.report()


def suite_energy(seed: int) -> SuiteReport:
    checks = _Checks("energy")
    first = LayerProfile(name="first", flops=1000, is_first=True)
    spiking = LayerProfile(name="spiking", flops=1000, spike_rate=0.2)
    checks.close("first layer only", energy_total([first], 4).total_pj, 4600.0, 1e-12)
    checks.close("worked example", energy_total([first, spiking], 4).total_pj, 5320.0, 1e-12)

    base = energy_total([first, spiking], 4).total_pj
    for c in (0.5, 3.0):
        scaled = [first.model_copy(update={"flops": int(1000 * c)}),
                  spiking.model_copy(update={"flops": int(1000 * c)})]
        checks.close(f"linear scaling by {c}", energy_total(scaled, 4).total_pj, c * base, 1e-12)

    rates, steps = np.linspace(0.0, 1.0, 11), (1, 2, 4, 8)
    table = np.array([[energy_total([first, spiking.model_copy(update={"spike_rate": float(r)})],
                                    T).total_pj for T in steps] for r in rates])
    checks.truth("monotone in rate",
                 bool(np.all(np.diff(table, axis=0) >= 0.0)))
    checks.truth("monotone in T", bool(np.all(np.diff(table, axis=1) >= 0.0)))

    checks.truth("overhead 1x1x1x1", pbo_overhead(1, 1, 1, 1) == (1, 1))
    checks.truth("overhead 10x64x64x3", pbo_overhead(10, 64, 64, 3) == (122880, 122880))
    spec, cfg = SyntheticTaskSpec(), TrainConfig()
    profiles = tiny_model_profiles(spec.C, spec.H, spec.W, cfg.hidden, spec.n_classes, spec.T, [0.1])
    mults, adds = pbo_overhead(spec.T, spec.H, spec.W, spec.C)
    checks.bound("overhead ratio to first layer", (mults + adds) / profiles[0].flops, 0.05)
    return checks.report()


SUITES: Dict[str, Callable[[int], SuiteReport]] = {
    "lif-gain": suite_lif_gain,
    "dc-pass": suite_dc_pass,
    "cascade": suite_cascade,
    "sidebands": suite_sidebands,
    "full-psd": suite_full_psd,
    "ltv-average": suite_ltv_average,
    "equilibrium": suite_equilibrium,
    "gradients": suite_gradients,
    "energy": suite_energy,
}


def run_suite(name: str, seed: int) -> SuiteReport:
    """
    Run one named suite.

    Raises:
        InvalidInput: for an unknown suite name
    """
    if name not in SUITES:
        raise InvalidInput(f"unknown suite '{name}'; choose from {sorted(SUITES)}")
    report = SUITES[name](seed)
    logger.info("Suite %s: %s (%d checks)", name, "PASS" if report.passed else "FAIL",
                len(report.checks))
    return report
