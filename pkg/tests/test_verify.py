"""Tests for the verification suites and their report records."""

import pytest

from core import InvalidInput
from pbo_config import VERIFY_SUITES
from verify import SUITES, CheckResult, SuiteReport, _Checks, run_suite

SEED = 20260118


class TestChecks:
    def test_relative_close(self):
        checks = _Checks("demo")
        checks.close("within", 101.0, 100.0, 0.02)
        checks.close("outside", 110.0, 100.0, 0.02)
        first, second = checks.items
        assert first.passed and first.error == pytest.approx(0.01)
        assert not second.passed and second.margin == pytest.approx(-0.08)
        assert (first.value, first.reference) == (101.0, 100.0)

    def test_absolute_close(self):
        checks = _Checks("demo")
        checks.close("abs", 1e-3, 0.0, 1e-2, relative=False)
        assert checks.items[0].passed

    def test_bound_and_truth(self):
        checks = _Checks("demo")
        checks.bound("zero tolerance", 0.0, 0.0)
        checks.truth("holds", True)
        assert checks.report().passed
        checks.truth("fails", False)
        report = checks.report()
        assert isinstance(report, SuiteReport)
        assert not report.passed
        assert all(isinstance(c, CheckResult) for c in report.checks)

    def test_report_serializes(self):
        checks = _Checks("demo")
        checks.bound("b", 0.5, 1.0)
        record = checks.report().model_dump()
        assert record["suite"] == "demo"
        assert record["checks"][0]["margin"] == pytest.approx(0.5)


class TestRegistry:
    def test_names_match_configuration(self):
        assert set(SUITES) == set(VERIFY_SUITES)

    def test_unknown_suite(self):
        with pytest.raises(InvalidInput):
            run_suite("bogus", SEED)


class TestFastSuites:
    @pytest.mark.parametrize("name", ["energy", "dc-pass", "lif-gain", "sidebands", "ltv-average"])
    def test_suite_passes(self, name):
        report = run_suite(name, SEED)
        failed = [c.name for c in report.checks if not c.passed]
        assert report.passed, failed
        assert report.suite == name
        assert report.checks


@pytest.mark.slow
class TestSlowSuites:
    @pytest.mark.parametrize("name", ["cascade", "full-psd", "equilibrium", "gradients"])
    def test_suite_passes(self, name):
        report = run_suite(name, SEED)
        failed = [c.name for c in report.checks if not c.passed]
        assert report.passed, failed
