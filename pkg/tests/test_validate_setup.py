"""Smoke tests for the setup validation script."""

import validate_setup


class TestChecks:
    def test_python_version(self):
        [(name, passed, message)] = validate_setup.check_python_version()
        assert passed
        assert message.startswith("Python 3.")

    def test_installed_stack_meets_minimums(self):
        results = validate_setup.check_dependencies()
        assert [name for name, _, _ in results] == [name for name, _ in validate_setup.REQUIRED_PACKAGES]
        assert all(passed for _, passed, _ in results)

    def test_missing_and_outdated_packages_fail(self):
        results = validate_setup.check_dependencies([("no_such_package_xyz", (1, 0)), ("numpy", (999, 0))])
        assert [passed for _, passed, _ in results] == [False, False]
        assert results[0][2] == "Not installed"

    def test_shipped_presets_load(self):
        results = validate_setup.check_presets()
        assert len(results) == len(validate_setup.PRESETS)
        assert all(passed for _, passed, _ in results)

    def test_missing_preset_fails(self, tmp_path):
        results = validate_setup.check_presets(tmp_path)
        assert not any(passed for _, passed, _ in results)

    def test_toolkit_imports_and_energy_suite_passes(self):
        assert all(passed for _, passed, _ in validate_setup.check_toolkit())

    def test_directories_are_informational(self, tmp_path):
        (tmp_path / "results").mkdir()
        results = dict((name, message) for name, _, message in validate_setup.check_directories(tmp_path))
        assert results == {"results": "Exists", "runs": "Created on first run"}


class TestSummary:
    def test_counts_only_counted_groups(self, capsys):
        checks = [
            ("ok", lambda: [("a", True, ""), ("b", False, "broken")], True),
            ("info", lambda: [("c", False, "")], False),
        ]
        assert validate_setup.run_checks(checks) == (1, 2)
        assert "broken" in capsys.readouterr().out

    def test_main_reports_success(self, capsys):
        assert validate_setup.main()
        assert "All checks passed" in capsys.readouterr().out
