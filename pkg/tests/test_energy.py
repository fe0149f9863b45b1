"""Tests for SOP counting, energy totals, the PBO overhead and the energy report."""

import numpy as np
import pandas as pd
import pytest

from core import FormatError, InvalidInput
from energy import (
    E_AC_PJ,
    E_MAC_PJ,
    EnergyModel,
    LayerProfile,
    energy_report,
    energy_total,
    pbo_overhead,
    projection_flops,
    rates_from_spike_csv,
    sop_count,
    tiny_model_profiles,
)

FIRST = LayerProfile(name="first", flops=1000, is_first=True)
SPIKING = LayerProfile(name="spiking", flops=1000, spike_rate=0.2)


class TestSopCount:
    def test_worked_value(self):
        assert sop_count(SPIKING, 4) == pytest.approx(800.0)

    def test_fractional_counts_are_kept(self):
        assert sop_count(LayerProfile(name="l", flops=3, spike_rate=0.1), 1) == pytest.approx(0.3)

    def test_needs_a_step(self):
        with pytest.raises(InvalidInput):
            sop_count(SPIKING, 0)

    def test_rate_range(self):
        with pytest.raises(ValueError):
            LayerProfile(name="l", flops=1, spike_rate=1.5)


class TestEnergyTotal:
    def test_worked_example(self):
        breakdown = energy_total([FIRST, SPIKING], 4)
        assert breakdown.total_pj == pytest.approx(5320.0)
        assert breakdown.mac_energy_pj == pytest.approx(4600.0)
        assert breakdown.ac_energy_pj == pytest.approx(720.0)
        assert [layer.name for layer in breakdown.layers] == ["first", "spiking"]

    def test_first_layer_only(self):
        assert energy_total([FIRST], 4).total_pj == pytest.approx(4600.0)

    def test_constants(self):
        assert (E_MAC_PJ, E_AC_PJ) == (4.6, 0.9)
        doubled = EnergyModel(e_mac=9.2, e_ac=1.8)
        assert energy_total([FIRST, SPIKING], 4, doubled).total_pj == pytest.approx(10640.0)

    def test_linear_in_spiking_rate(self):
        totals = [energy_total([FIRST, SPIKING.model_copy(update={"spike_rate": r})], 4).total_pj
                  for r in (0.0, 0.25, 0.5)]
        assert totals[2] - totals[1] == pytest.approx(totals[1] - totals[0])

    def test_monotone_in_rate_flops_and_steps(self):
        rates = np.linspace(0.0, 1.0, 6)
        steps = (1, 2, 4, 8)
        flops = (0, 500, 1000, 4000)
        for flop in flops:
            table = np.array([
                [energy_total([FIRST, LayerProfile(name="l", flops=flop, spike_rate=r)], T).total_pj
                 for T in steps]
                for r in rates
            ])
            assert np.all(np.diff(table, axis=0) >= 0.0)
            assert np.all(np.diff(table, axis=1) >= 0.0)
        by_flops = [energy_total([FIRST, LayerProfile(name="l", flops=f, spike_rate=0.2)], 4).total_pj
                    for f in flops]
        assert np.all(np.diff(by_flops) >= 0.0)

    @pytest.mark.parametrize("profiles", [[SPIKING], [SPIKING, FIRST], [FIRST, FIRST]])
    def test_first_layer_must_lead(self, profiles):
        with pytest.raises(InvalidInput):
            energy_total(profiles, 4)


class TestPboOverhead:
    def test_one_multiply_and_add_per_element(self):
        assert pbo_overhead(10, 64, 64, 3) == (122880, 122880)

    def test_dims_must_be_positive(self):
        with pytest.raises(InvalidInput):
            pbo_overhead(10, 0, 64, 3)

    def test_negligible_next_to_projection(self):
        profiles = tiny_model_profiles(C=1, H=4, W=4, D=32, n_classes=2, T=16, layer_rates=[0.1])
        mults, adds = pbo_overhead(16, 4, 4, 1)
        assert (mults + adds) / profiles[0].flops <= 0.05


class TestTinyModelProfiles:
    def test_layout(self):
        profiles = tiny_model_profiles(C=2, H=3, W=3, D=8, n_classes=4, T=5, layer_rates=[0.3])
        assert profiles[0].is_first and not profiles[1].is_first
        assert profiles[0].flops == 5 * projection_flops(18, 8) == 5 * 2 * 8 * 18
        assert profiles[1].flops == 2 * 8 * 4
        assert profiles[1].spike_rate == pytest.approx(0.3)

    def test_one_rate_per_spiking_layer(self):
        with pytest.raises(InvalidInput):
            tiny_model_profiles(C=1, H=2, W=2, D=4, n_classes=2, T=4, layer_rates=[0.1, 0.2])

    def test_rate_range(self):
        with pytest.raises(InvalidInput):
            tiny_model_profiles(C=1, H=2, W=2, D=4, n_classes=2, T=4, layer_rates=[1.2])


class TestEnergyReport:
    def test_report_blocks(self):
        report = energy_report([FIRST, SPIKING], T=4, H=4, W=4, C=1)
        assert set(report) == {"layers", "totals", "pbo_overhead", "constants"}
        assert report["totals"]["total_pj"] == pytest.approx(5320.0)
        assert report["pbo_overhead"]["mults"] == 64
        assert report["pbo_overhead"]["ratio_to_first_layer"] == pytest.approx(128 / 1000)
        assert report["layers"][1]["sops"] == pytest.approx(800.0)

    def test_overhead_is_not_folded_into_sops(self):
        report = energy_report([FIRST, SPIKING], T=4, H=64, W=64, C=3)
        assert report["totals"]["total_pj"] == pytest.approx(5320.0)


class TestRatesFromSpikeCsv:
    def test_mean_per_layer(self, tmp_path):
        path = tmp_path / "spikes.csv"
        pd.DataFrame([[0.1, 0.3], [0.0, 1.0]], index=["lif", "other"], columns=["t0", "t1"]).to_csv(path)
        assert rates_from_spike_csv(path) == pytest.approx([0.2, 0.5])

    def test_ratio_range(self, tmp_path):
        path = tmp_path / "bad.csv"
        pd.DataFrame([[0.1, 1.3]], index=["lif"], columns=["t0", "t1"]).to_csv(path)
        with pytest.raises(FormatError):
            rates_from_spike_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInput):
            rates_from_spike_csv(tmp_path / "absent.csv")
