"""
Configuration for the Pass-band Toolkit

This module holds every default used by the command-line pipeline.
Centralizing them here keeps runs reproducible and easy to customize.

A run configuration is a JSON object with the sections below. Sections
given in a config file are merged over these defaults; command-line flags
override both. The resolved merge is written to each run's manifest.

You can modify these defaults to:
- Change the neuron time constant or threshold
- Adjust the pre-filter amplitude, phase or initialization
- Generate different synthetic corpora and tasks
- Tune training length, learning rates and loss weights
"""

import copy
import json
import math
from pathlib import Path

from core import DEFAULT_GRID_POINTS, InvalidInput


# ============================================================================
# SIGNAL CHAIN DEFAULTS
# ============================================================================

# LIF neuron (tau = 1 - alpha)
DEFAULT_LIF = {
    'tau': 0.7,
    'v_th': 1.0,
    'v_reset': 0.0,
}

# PBO pre-filter; mu_raw / sigma_raw of None means "initialize for the clip length"
DEFAULT_PBO = {
    'A': 0.1,
    'phi': 0.0,
    'mu_raw': None,
    'sigma_raw': None,
    'boundary': 'replicate',
}

# Synthetic corpus for the spectra command
DEFAULT_CORPUS = {
    'T': 64,
    'C': 1,
    'H': 8,
    'W': 8,
    'dc_level': 1.0,
    'dc_spread': 0.1,
    'tones': [
        {'omega': math.pi / 4, 'amplitude': 0.2, 'phase': 0.0},
        {'omega': math.pi / 2, 'amplitude': 0.2, 'phase': 0.0},
    ],
    'noise_std': 0.05,
    'n_clips': 4,
}

# Frequency grid on [0, pi]
DEFAULT_GRID = {
    'n_points': DEFAULT_GRID_POINTS,
}

# Filter command: constant lambda, or the PBO schedule when lambda is None
DEFAULT_FILTER = {
    'input': None,
    'lambda': None,
    'alpha': 0.3,
}


# ============================================================================
# TRAINING DEFAULTS
# ============================================================================

DEFAULT_SEED = 20260118
TOOLKIT_VERSION = '0.1.0'

# DC-dominated motion classification task
DEFAULT_TASK = {
    'n_classes': 2,
    'T': 16,
    'C': 1,
    'H': 4,
    'W': 4,
    'class_tones': [math.pi / 2, 3 * math.pi / 4],
    'dc_background_power': 1.0,
    'tone_power': 0.05,
    'noise_std': 0.05,
    'scene_std': 0.0,
    'clips_per_class': 20,
    'stride': 1,
}

# Optimizer, model and loss settings
DEFAULT_TRAIN = {
    'epochs': 30,
    'batch_size': 8,
    'learning_rate': 0.05,
    'readout_learning_rate': 0.01,
    'momentum': 0.9,
    'alpha_weight': 1e-2,
    'surrogate_k': 4.0,
    'hidden': 32,
    'projection_gain': 4.0,
    'tau': 0.7,
    'v_th': 1.0,
    'A': 0.1,
    'phi': 0.0,
    'mu_init': 0.5,
    'mode': 'pbo',
    'learn_pbo': True,
    'use_intensity': True,
    'use_gradient': True,
    'smooth': False,
}

# Layer profiles for the energy command; empty means "derive from the task model"
DEFAULT_ENERGY = {
    'T': 16,
    'H': 4,
    'W': 4,
    'C': 1,
    'layers': [],
}


# ============================================================================
# VERIFICATION SUITES
# ============================================================================

VERIFY_SUITES = [
    'lif-gain',
    'dc-pass',
    'cascade',
    'sidebands',
    'full-psd',
    'ltv-average',
    'equilibrium',
    'gradients',
    'energy',
]

SECTIONS = {
    'lif': DEFAULT_LIF,
    'pbo': DEFAULT_PBO,
    'corpus': DEFAULT_CORPUS,
    'grid': DEFAULT_GRID,
    'filter': DEFAULT_FILTER,
    'task': DEFAULT_TASK,
    'train': DEFAULT_TRAIN,
    'energy': DEFAULT_ENERGY,
}


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

def default_config():
    """
    Full default configuration.

    Returns:
        dict: a deep copy of every section plus the default seed
    """
    config = {name: copy.deepcopy(section) for name, section in SECTIONS.items()}
    config['seed'] = DEFAULT_SEED
    return config


def load_config(path):
    """
    Read a JSON config file.

    Keys named 'description' or starting with '_' are documentation and are
    dropped, as in config.template.json.

    Args:
        path (str): Path to the JSON file

    Returns:
        dict: the parsed sections

    Raises:
        InvalidInput: If the file is missing, unparsable or has unknown sections
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as error:
        raise InvalidInput(f"{path}: invalid JSON ({error})") from error
    if not isinstance(raw, dict):
        raise InvalidInput(f"{path}: top level must be a JSON object")

    config = {}
    for name, value in raw.items():
        if name.startswith('_') or name == 'description':
            continue
        if name != 'seed' and name not in SECTIONS:
            raise InvalidInput(f"{path}: unknown section '{name}'. Available: {list(SECTIONS)}")
        if isinstance(value, dict):
            value = {k: v for k, v in value.items() if k != 'description' and not k.startswith('_')}
        config[name] = value
    return config


def merge_config(base, overrides):
    """
    Merge `overrides` over `base` section by section.

    Args:
        base (dict): Configuration to start from (left unchanged)
        overrides (dict): Sections or values taking precedence

    Returns:
        dict: the merged configuration
    """
    merged = copy.deepcopy(base)
    for name, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(name), dict):
            merged[name].update(copy.deepcopy(value))
        else:
            merged[name] = copy.deepcopy(value)
    return merged


def get_section(name, config=None):
    """
    Get one configuration section.

    Args:
        name (str): Section name ('lif', 'pbo', 'corpus', 'grid', 'filter',
                    'task', 'train' or 'energy')
        config (dict): Resolved configuration; defaults when omitted

    Returns:
        dict: a copy of the section

    Raises:
        ValueError: If the section is unknown
    """
    if name not in SECTIONS:
        raise ValueError(f"Section '{name}' not found. Available sections: {list(SECTIONS)}")
    config = config or default_config()
    return copy.deepcopy(config.get(name, SECTIONS[name]))


def resolve_seed(seed=None, config=None):
    """
    Seed precedence: explicit value > config 'seed' > DEFAULT_SEED.

    Returns:
        int: the seed to use
    """
    if seed is not None:
        return int(seed)
    if config and config.get('seed') is not None:
        return int(config['seed'])
    return DEFAULT_SEED
