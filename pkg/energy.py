"""
Theoretical Energy Accounting

Synaptic-operation (SOP) counts and 45 nm energy estimates:

    SOP_l = R_l * T * FLOP_l
    E     = E_MAC * FLOP_1 + E_AC * sum_{l >= 2} SOP_l

The first layer receives real-valued frames and is costed as MACs; every
later layer is driven by spikes and costed as accumulates. The PBO pre-filter
overhead (one multiply and one add per input element) is reported next to
the totals and never folded into the SOP count.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from core import FormatError, InvalidInput

logger = logging.getLogger(__name__)

# 45 nm CMOS, 32-bit float (pJ)
E_MAC_PJ = 4.6
E_AC_PJ = 0.9


class LayerProfile(BaseModel):
    """One layer: dense-equivalent FLOPs, mean spike rate and MAC costing flag."""

    model_config = ConfigDict(frozen=True)

    name: str
    flops: int = Field(ge=0)
    spike_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    is_first: bool = False


class EnergyModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    e_mac: float = Field(default=E_MAC_PJ, gt=0.0)
    e_ac: float = Field(default=E_AC_PJ, gt=0.0)


class LayerEnergy(BaseModel):
    name: str
    flops: int
    rate: float
    sops: float
    energy_pj: float


class EnergyBreakdown(BaseModel):
    """Per-layer contributions and the total in pJ."""

    layers: List[LayerEnergy]
    mac_energy_pj: float
    ac_energy_pj: float
    total_pj: float


def sop_count(profile: LayerProfile, T: int) -> float:
    """SOP = R * T * FLOP, kept as a real number."""
    if T < 1:
        raise InvalidInput(f"T must be >= 1, got {T}")
    return profile.spike_rate * T * profile.flops


def energy_total(profiles: Sequence[LayerProfile], T: int,
                 model: EnergyModel = EnergyModel()) -> EnergyBreakdown:
    """
    Total energy with the first layer costed as MACs.

    Raises:
        InvalidInput: unless exactly one profile is marked first and it leads the list
    """
    firsts = [i for i, profile in enumerate(profiles) if profile.is_first]
    if firsts != [0]:
        raise InvalidInput(
            f"exactly one first layer is required at position 0, found positions {firsts}"
        )
    if T < 1:
        raise InvalidInput(f"T must be >= 1, got {T}")

    first = profiles[0]
    layers = [LayerEnergy(name=first.name, flops=first.flops, rate=first.spike_rate,
                          sops=0.0, energy_pj=model.e_mac * first.flops)]
    for profile in profiles[1:]:
        sops = sop_count(profile, T)
        layers.append(LayerEnergy(name=profile.name, flops=profile.flops,
                                  rate=profile.spike_rate, sops=sops,
                                  energy_pj=model.e_ac * sops))

    mac = layers[0].energy_pj
    ac = float(np.sum([layer.energy_pj for layer in layers[1:]]))
    return EnergyBreakdown(layers=layers, mac_energy_pj=mac, ac_energy_pj=ac, total_pj=mac + ac)


def pbo_overhead(T: int, H: int, W: int, C: int):
    """(multiplications, additions) of the pre-filter: one of each per element."""
    if min(T, H, W, C) < 1:
        raise InvalidInput(f"dims must be positive, got T={T} H={H} W={W} C={C}")
    count = T * H * W * C
    return count, count


# ============================================================================
# TINY MODEL PROFILES AND REPORTS
# ============================================================================

def projection_flops(chw: int, D: int) -> int:
    """Dense-equivalent FLOPs of a CHW -> D projection: 2 D CHW (mul + add)."""
    return 2 * D * chw


def tiny_model_profiles(C: int, H: int, W: int, D: int, n_classes: int,
                        T: int, layer_rates: Sequence[float]) -> List[LayerProfile]:
    """
    Layer profiles of the trainer's model.

    The frozen projection runs on real-valued frames for every step (first
    layer, T * 2 D CHW FLOPs). The readout consumes the LIF spikes; its rate
    is the LIF firing ratio.
    """
    if len(layer_rates) != 1:
        raise InvalidInput(f"the model has one spiking layer, got {len(layer_rates)} rates")
    rate = float(layer_rates[0])
    if not 0.0 <= rate <= 1.0:
        raise InvalidInput(f"spike rate {rate} outside [0, 1]")
    return [
        LayerProfile(name="projection", flops=T * projection_flops(C * H * W, D), is_first=True),
        LayerProfile(name="readout", flops=2 * D * n_classes, spike_rate=rate),
    ]


def energy_report(profiles: Sequence[LayerProfile], T: int, H: int, W: int, C: int,
                  model: EnergyModel = EnergyModel()) -> Dict:
    """JSON-ready report: per-layer rows, totals and the PBO overhead block."""
    breakdown = energy_total(profiles, T, model)
    mults, adds = pbo_overhead(T, H, W, C)
    first_flops = profiles[0].flops
    report = {
        "layers": [layer.model_dump() for layer in breakdown.layers],
        "totals": {
            "mac_energy_pj": breakdown.mac_energy_pj,
            "ac_energy_pj": breakdown.ac_energy_pj,
            "total_pj": breakdown.total_pj,
        },
        "pbo_overhead": {
            "mults": mults,
            "adds": adds,
            "ratio_to_first_layer": ((mults + adds) / first_flops) if first_flops else None,
        },
        "constants": model.model_dump(),
    }
    logger.info("Energy total %.6g pJ (PBO overhead %d mult + %d add)",
                breakdown.total_pj, mults, adds)
    return report


def rates_from_spike_csv(path) -> List[float]:
    """
    Mean firing ratio per layer from a layer x step CSV written by the trainer.

    Raises:
        InvalidInput: if the file cannot be opened
        FormatError: if any ratio lies outside [0, 1]
    """
    try:
        frame = pd.read_csv(path, index_col=0)
    except OSError as error:
        raise InvalidInput(f"cannot read spike CSV {path}: {error}") from error
    values = frame.to_numpy(dtype=np.float64)
    if values.size == 0 or np.any(values < 0.0) or np.any(values > 1.0):
        raise FormatError(f"{path}: spike ratios must lie within [0, 1]")
    return [float(v) for v in values.mean(axis=1)]
