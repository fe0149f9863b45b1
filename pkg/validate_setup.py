"""
Setup Validation Script

Run this script to verify that your environment is correctly configured
for the pass-band toolkit: interpreter, numeric stack, presets, and one
fast analytic-vs-simulation suite.

Usage:
    python validate_setup.py
"""

import sys
from importlib import import_module
from pathlib import Path

ROOT = Path(__file__).resolve().parent

PRESETS = ['default.json', 'dc_only.json', 'mechanism.json', 'energy_profile.json']

# (import name, minimum major.minor) as pinned in requirements.txt
REQUIRED_PACKAGES = [
    ('numpy', (1, 24)),
    ('scipy', (1, 10)),
    ('pandas', (2, 0)),
    ('pydantic', (2, 0)),
    ('pytest', (7, 0)),
]

OUTPUT_DIRS = ['results', 'runs']


def print_header(text):
    """Print a formatted header."""
    print("\n" + "="*60)
    print(f"  {text}")
    print("="*60)


def print_status(check_name, passed, message=""):
    """Print a check status."""
    status = "✓" if passed else "✗"
    color = "\033[92m" if passed else "\033[91m"
    reset = "\033[0m"

    print(f"{color}{status}{reset} {check_name}")
    if message:
        print(f"  {message}")


def _version_tuple(text):
    parts = []
    for piece in str(text).split('.')[:2]:
        digits = ''.join(ch for ch in piece if ch.isdigit())
        parts.append(int(digits) if digits else 0)
    return tuple(parts)


def check_python_version():
    """Python 3.9 or newer."""
    version = sys.version_info
    message = f"Python {version.major}.{version.minor}.{version.micro}"
    passed = (version.major, version.minor) >= (3, 9)
    return [("Python version", passed, message if passed else message + " (need 3.9+)")]


def check_dependencies(packages=REQUIRED_PACKAGES):
    """Each package imports and meets its minimum version."""
    results = []
    for package, minimum in packages:
        try:
            module = import_module(package)
        except ImportError:
            results.append((package, False, "Not installed"))
            continue
        version = getattr(module, '__version__', '0')
        passed = _version_tuple(version) >= minimum
        need = '.'.join(str(part) for part in minimum)
        results.append((package, passed, f"{version}" + ("" if passed else f" (need >= {need})")))
    return results


def check_presets(root=ROOT):
    """Every preset loads through the config layer and merges over the defaults."""
    import pbo_config as config_lib

    results = []
    for name in PRESETS:
        path = Path(root) / 'presets' / name
        try:
            sections = config_lib.load_config(path)
            config_lib.merge_config(config_lib.default_config(), sections)
            results.append((name, True, f"sections: {', '.join(sorted(sections))}"))
        except Exception as error:
            results.append((name, False, str(error)))
    return results


def check_toolkit():
    """The command-line module imports and the energy suite passes."""
    try:
        import_module('main_pipeline')
        from verify import run_suite
        report = run_suite('energy', 0)
    except Exception as error:
        return [("toolkit", False, f"{type(error).__name__}: {error}")]
    return [
        ("main_pipeline import", True, ""),
        ("verify energy", report.passed, f"{len(report.checks)} checks"),
    ]


def check_directories(root=ROOT):
    """Whether the output directories exist yet; informational only."""
    results = []
    for name in OUTPUT_DIRS:
        path = Path(root) / name
        results.append((name, True, "Exists" if path.exists() else "Created on first run"))
    return results


CHECKS = [
    ("Python Version", check_python_version, True),
    ("Python Dependencies", check_dependencies, True),
    ("Preset Configurations", check_presets, True),
    ("Toolkit", check_toolkit, True),
    ("Output Directories", check_directories, False),
]


def run_checks(checks=CHECKS):
    """
    Run every check group and print its results.

    Returns:
        tuple: (passed count, counted total)
    """
    passed_checks = total_checks = 0
    for title, check, counted in checks:
        print_header(title)
        for name, passed, message in check():
            print_status(name, passed, message)
            if counted:
                total_checks += 1
                passed_checks += int(passed)
    return passed_checks, total_checks


def main():
    """Run all validation checks."""
    print_header("Pass-band Toolkit - Setup Validation")
    passed_checks, total_checks = run_checks()

    print_header("Validation Summary")
    print(f"\nPassed: {passed_checks}/{total_checks}")
    if passed_checks == total_checks:
        print("\nAll checks passed. Next: python main_pipeline.py verify all --out results/verify")
    else:
        print("\nSome checks failed. Install the requirements with: pip install -r requirements.txt")
    print()
    return passed_checks == total_checks


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
