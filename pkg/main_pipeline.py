"""
Main Pass-band Toolkit Pipeline

This script exposes the toolkit as subcommands:
1. spectra - mean per-pixel output spectra of the identity, frame-difference
             and PBO chains in front of a non-firing LIF (one CSV per chain)
2. filter  - applies the pre-filter to a PBT1 tensor and reports the cascade's
             tilt class, endpoint gains and -3 dB cutoff
3. train   - trains the two PBO scalars and the readout on the synthetic task
             (metrics JSONL, spike-ratio CSV, learned parameters JSON)
4. verify  - runs an analytic-vs-simulation suite and writes its report
5. energy  - SOP / energy report for a list of layer profiles

Every run writes manifest.json next to its outputs with the resolved config,
the seed and the input/output paths. Precedence: command-line flags >
--config file > defaults in pbo_config.py.

Exit codes: 0 success, 2 usage or config error, 3 training diverged,
4 verification failure.

Usage:
    python main_pipeline.py spectra --synth presets/default.json --out runs/spectra
    python main_pipeline.py filter --input clip.pbt --lambda 0.8 --alpha 0.3 --out runs/filter
    python main_pipeline.py train --config presets/mechanism.json --ablate A=0 --out runs/a0
    python main_pipeline.py verify sidebands --out runs/verify
    python main_pipeline.py energy --profile presets/energy_profile.json --out runs/energy
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

import pbo_config as config_lib
from core import (
    ClipSynthSpec,
    DivergedError,
    FormatError,
    InvalidInput,
    build_record,
    frequency_grid,
    read_clip,
    read_tensor,
    synth_clips,
    write_spectrum_csv,
    write_tensor,
)
from energy import LayerProfile, energy_report, rates_from_spike_csv, tiny_model_profiles
from lif import LifParams
from pbo import (
    PboParams,
    TiltClass,
    avg_squared_gain,
    cutoff_3db,
    endpoint_gains,
    fixed_lambda_sequence,
    init_params,
    lambda_sequence,
    prefilter_apply,
    tilt_classify,
)
from spectral import chain_spectra_report
from trainer import SyntheticTaskSpec, TrainConfig, mechanism_check, train, write_spike_csv
from verify import run_suite

logger = logging.getLogger("main_pipeline")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_VERIFY_FAILED = 4


# ============================================================================
# ARTIFACT HELPERS
# ============================================================================

def write_json(path, payload):
    """Write JSON with sorted keys so identical runs give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)


def write_manifest(out_dir, subcommand, config, seed, inputs, outputs, extra=None):
    """
    Write manifest.json for one run.

    Args:
        out_dir (Path): Output directory of the run
        subcommand (str): Name of the subcommand
        config (dict): Resolved configuration
        seed (int): Seed used by the run
        inputs (list): Input paths
        outputs (list): Output paths written by the run
        extra (dict): Subcommand-specific fields
    """
    manifest = {
        "subcommand": subcommand,
        "version": config_lib.TOOLKIT_VERSION,
        "seed": seed,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    manifest.update(extra or {})
    write_json(Path(out_dir) / "manifest.json", manifest)


def lif_from_config(config):
    return build_record(LifParams, **config_lib.get_section("lif", config))


def pbo_from_config(config, T):
    """PBO parameters from the 'pbo' section; missing raw values use init_params(T)."""
    section = config_lib.get_section("pbo", config)
    missing = [name for name in ("mu_raw", "sigma_raw") if section.get(name) is None]
    if missing:
        initial = init_params(T, A=section["A"], phi=section["phi"])
        for name in missing:
            section[name] = getattr(initial, name)
    return build_record(PboParams, mu_raw=section["mu_raw"], sigma_raw=section["sigma_raw"],
                        A=section["A"], phi=section["phi"])


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_spectra(config, seed, out_dir, clip_paths=()):
    """
    Three-chain output spectra of a synthetic corpus or of PBT1 clips.

    Returns:
        tuple: (output paths, manifest extras)
    """
    if clip_paths:
        clips = [read_clip(path) for path in clip_paths]
    else:
        corpus = build_record(ClipSynthSpec, **config_lib.get_section("corpus", config))
        clips = synth_clips(corpus, seed)

    lif = lif_from_config(config)
    p = pbo_from_config(config, clips[0].T)
    grid = frequency_grid(config_lib.get_section("grid", config)["n_points"])
    report = chain_spectra_report(clips, lif, p, grid)

    outputs, panel_files = [], {}
    for panel, spectrum in report.panels.items():
        path = Path(out_dir) / f"{panel}.csv"
        write_spectrum_csv(spectrum, path)
        panel_files[panel] = path.name
        outputs.append(path)
        logger.info("Wrote %s", path)

    extra = {"report": {
        "panels": panel_files,
        "normalization": report.normalization,
        "pbo": p.to_json_dict(),
        "lif": lif.model_dump(),
        "n_clips": report.n_clips,
        "n_pixels": report.n_pixels,
    }}
    return outputs, extra


def cmd_filter(config, seed, out_dir):
    """
    Pre-filter a PBT1 tensor (time on axis 0) and report the cascade.

    A constant 'lambda' in the filter section selects the time-invariant
    filter; otherwise the PBO schedule of the 'pbo' section is applied and
    the report describes the cascade at the mean mu.
    """
    section = config_lib.get_section("filter", config)
    if not section.get("input"):
        raise InvalidInput("filter needs an input tensor (--input)")
    source = Path(section["input"])
    if not source.exists():
        raise InvalidInput(f"input tensor not found: {source}")
    array = read_tensor(source).astype(np.float64)
    T = array.shape[0]
    alpha = float(section["alpha"])
    boundary = config_lib.get_section("pbo", config).get("boundary", "replicate")

    report = {"alpha": alpha, "T": T, "shape": list(array.shape), "boundary": boundary}
    if section.get("lambda") is not None:
        lam = float(section["lambda"])
        lambdas = fixed_lambda_sequence(lam, T)
        report.update({"mode": "constant", "lambda": lam})
    else:
        p = pbo_from_config(config, T)
        lambdas = lambda_sequence(p, T)
        lam = p.mu
        gains = avg_squared_gain(p.mu, p.A, np.array([0.0, np.pi]))
        report.update({"mode": "schedule", "pbo": p.to_json_dict(),
                       "lambdas": lambdas.tolist(),
                       "avg_squared_gain": {"omega_0": float(gains[0]), "omega_pi": float(gains[1])}})

    tilt = tilt_classify(lam, alpha)
    at_dc, at_pi = endpoint_gains(lam, alpha)
    report.update({"tilt": tilt.value,
                   "endpoint_gains": {"omega_0": at_dc, "omega_pi": at_pi}})
    if tilt != TiltClass.FLAT:
        cutoff = cutoff_3db(lam, alpha)
        if cutoff is not None:
            report["cutoff"] = cutoff

    filtered = prefilter_apply(array, lambdas, boundary=boundary)
    tensor_path = Path(out_dir) / "filtered.pbt"
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(tensor_path, filtered)
    report_path = Path(out_dir) / "filter_report.json"
    write_json(report_path, report)
    logger.info("Filtered %s (%s, tilt %s)", source, report["mode"], tilt.value)
    return [tensor_path, report_path], {}, [source]


def cmd_train(config, seed, out_dir, mechanism_seeds=0):
    """
    Train on the synthetic task and write metrics.jsonl, spikes.csv and
    learned_params.json (plus mechanism.json with --mechanism N).

    Raises:
        DivergedError: if the loss becomes non-finite
    """
    spec = build_record(SyntheticTaskSpec, **{**config_lib.get_section("task", config), "seed": seed})
    cfg = build_record(TrainConfig, **{**config_lib.get_section("train", config), "seed": seed})
    report = train(cfg, spec)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"
    lines = [json.dumps(record.model_dump(), sort_keys=True) for record in report.history]
    metrics_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    spikes_path = out_dir / "spikes.csv"
    write_spike_csv(report.final_stats, spikes_path)
    params_path = out_dir / "learned_params.json"
    write_json(params_path, {
        "pbo": report.final_params,
        "final_val_acc": report.final_val_acc,
        "lambda_trajectory": report.lambda_trajectory,
        "mode": cfg.mode,
    })
    outputs = [metrics_path, spikes_path, params_path]

    if mechanism_seeds > 0:
        summary = mechanism_check(cfg, spec, [seed + k for k in range(mechanism_seeds)])
        mechanism_path = out_dir / "mechanism.json"
        write_json(mechanism_path, summary)
        outputs.append(mechanism_path)
    logger.info("Training finished: val_acc %.3f mu %.4f omega %.4f",
                report.final_val_acc, report.final_params["mu"], report.final_params["omega"])
    return outputs, {}


def cmd_verify(suites, seed, out_dir):
    """
    Run verification suites.

    Returns:
        tuple: (output paths, manifest extras, all suites passed)
    """
    outputs, results = [], {}
    for name in suites:
        report = run_suite(name, seed)
        path = Path(out_dir) / f"verify_{name}.json"
        write_json(path, report.model_dump())
        outputs.append(path)
        results[name] = report.passed
        worst = min((check.margin for check in report.checks), default=0.0)
        print(f"{name}: {'PASS' if report.passed else 'FAIL'} "
              f"({len(report.checks)} checks, smallest margin {worst:.3g})")
    return outputs, {"results": results}, all(results.values())


def cmd_energy(config, seed, out_dir, rates_path=None):
    """
    Energy report for the 'energy' section's layers, or for the task model
    when no layers are listed. Measured rates from a spikes.csv replace the
    spike rates of the non-first layers.
    """
    section = config_lib.get_section("energy", config)
    if rates_path and not Path(rates_path).exists():
        raise InvalidInput(f"spike CSV not found: {rates_path}")
    rates = rates_from_spike_csv(rates_path) if rates_path else None
    if section.get("layers"):
        profiles = [build_record(LayerProfile, **layer) for layer in section["layers"]]
        if rates is not None:
            spiking = [i for i, profile in enumerate(profiles) if not profile.is_first]
            if len(spiking) != len(rates):
                raise InvalidInput(
                    f"{rates_path} has {len(rates)} layer rates for {len(spiking)} spiking layers"
                )
            for i, rate in zip(spiking, rates):
                profiles[i] = profiles[i].model_copy(update={"spike_rate": rate})
        T, H, W, C = section["T"], section["H"], section["W"], section["C"]
    else:
        task = config_lib.get_section("task", config)
        hidden = config_lib.get_section("train", config)["hidden"]
        T, H, W, C = task["T"], task["H"], task["W"], task["C"]
        profiles = tiny_model_profiles(C, H, W, hidden, task["n_classes"], T,
                                       rates if rates is not None else [0.0])
    report = energy_report(profiles, T, H, W, C)
    path = Path(out_dir) / "energy_report.json"
    write_json(path, report)
    print(f"Total energy: {report['totals']['total_pj']:.6g} pJ")
    return [path], {}, [Path(rates_path)] if rates_path else []


# ============================================================================
# COMMAND LINE
# ============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"Seed (default {config_lib.DEFAULT_SEED})")
    common.add_argument("--out", default="results", help="Output directory")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Pass-band toolkit for spiking video front-ends")
    sub = parser.add_subparsers(dest="command", required=True)

    spectra = sub.add_parser("spectra", parents=[common], help="Three-chain output spectra")
    spectra.add_argument("--synth", default=None, help="JSON corpus spec or config with a corpus section")
    spectra.add_argument("--clips", nargs="+", default=(), help="PBT1 clip files (T x C x H x W)")
    spectra.add_argument("--grid-points", type=int, default=None)

    filt = sub.add_parser("filter", parents=[common], help="Pre-filter a PBT1 tensor")
    filt.add_argument("--input", default=None, help="PBT1 tensor with time on axis 0")
    filt.add_argument("--lambda", dest="lam", type=float, default=None,
                      help="Constant lambda (default: the PBO schedule)")
    filt.add_argument("--alpha", type=float, default=None, help="LIF retention factor")
    filt.add_argument("--boundary", choices=["replicate", "zero"], default=None)

    tr = sub.add_parser("train", parents=[common], help="Train on the synthetic task")
    tr.add_argument("--epochs", type=int, default=None)
    tr.add_argument("--ablate", choices=["A=0"], default=None,
                    help="A=0 trains the time-invariant pre-filter")
    tr.add_argument("--baseline", choices=["lif-only", "highpass"], default=None,
                    help="Fixed lambda = 0 (lif-only) or lambda = 1 (highpass)")
    tr.add_argument("--mechanism", type=int, default=0, metavar="N",
                    help="Also compare pbo / lif-only / A=0 over N seeds")

    ver = sub.add_parser("verify", parents=[common], help="Analytic-vs-simulation suites")
    ver.add_argument("suite", help=f"One of {config_lib.VERIFY_SUITES} or 'all'")

    en = sub.add_parser("energy", parents=[common], help="SOP / energy report")
    en.add_argument("--profile", default=None, help="JSON with T, H, W, C and layers")
    en.add_argument("--rates-from", default=None, help="spikes.csv written by train")
    return parser


def resolve_config(args):
    """Defaults, then --config, then --synth / --profile files, then flags."""
    config = config_lib.default_config()
    if args.config:
        config = config_lib.merge_config(config, config_lib.load_config(args.config))

    overrides = {}
    if args.command == "spectra":
        if args.synth:
            raw = _read_json(args.synth)
            if "corpus" in raw:
                config = config_lib.merge_config(config, config_lib.load_config(args.synth))
            else:
                overrides["corpus"] = {k: v for k, v in raw.items()
                                       if k != "description" and not k.startswith("_")}
        if args.grid_points is not None:
            overrides["grid"] = {"n_points": args.grid_points}
    elif args.command == "filter":
        flags = {"input": args.input, "lambda": args.lam, "alpha": args.alpha}
        overrides["filter"] = {k: v for k, v in flags.items() if v is not None}
        if args.boundary:
            overrides["pbo"] = {"boundary": args.boundary}
    elif args.command == "train":
        train_flags = {}
        if args.epochs is not None:
            train_flags["epochs"] = args.epochs
        if args.ablate == "A=0":
            train_flags["A"] = 0.0
        if args.baseline:
            train_flags["mode"] = args.baseline
        overrides["train"] = train_flags
    elif args.command == "energy" and args.profile:
        raw = _read_json(args.profile)
        section = raw.get("energy", raw)
        overrides["energy"] = {k: v for k, v in section.items()
                               if k != "description" and not k.startswith("_")}

    config = config_lib.merge_config(config, overrides)
    config["seed"] = config_lib.resolve_seed(args.seed, config)
    return config


def _read_json(path):
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise InvalidInput(f"{path}: invalid JSON ({error})") from error
    if not isinstance(raw, dict):
        raise InvalidInput(f"{path}: top level must be a JSON object")
    return raw


def main(argv=None):
    """
    Parse arguments, run one subcommand and return its exit code.

    argparse usage errors exit with code 2 through SystemExit.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        level=logging.DEBUG if args.verbose else logging.INFO)
    out_dir = Path(args.out)

    try:
        config = resolve_config(args)
        seed = config["seed"]
        inputs = []
        if args.command == "spectra":
            inputs = list(args.clips)
            outputs, extra = cmd_spectra(config, seed, out_dir, args.clips)
        elif args.command == "filter":
            outputs, extra, inputs = cmd_filter(config, seed, out_dir)
        elif args.command == "train":
            outputs, extra = cmd_train(config, seed, out_dir, args.mechanism)
        elif args.command == "verify":
            suites = config_lib.VERIFY_SUITES if args.suite == "all" else [args.suite]
            outputs, extra, passed = cmd_verify(suites, seed, out_dir)
            write_manifest(out_dir, "verify", config, seed, inputs, outputs, extra)
            return EXIT_OK if passed else EXIT_VERIFY_FAILED
        else:
            outputs, extra, inputs = cmd_energy(config, seed, out_dir, args.rates_from)
        write_manifest(out_dir, args.command, config, seed, inputs, outputs, extra)
        return EXIT_OK
    except (InvalidInput, FormatError) as error:
        logger.error("%s", error)
        return EXIT_USAGE
    except DivergedError as error:
        logger.error("Training diverged: %s", error)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
