import json

import pytest

from polaron_lab.errors import SchemaError
from polaron_lab import runner
from polaron_lab.cli import main as cli_main


class TestValidation:
    def test_missing_scenario_named(self):
        with pytest.raises(SchemaError) as err:
            runner.validate_config({})
        assert "scenario" in err.value.keys

    def test_unknown_scenario(self):
        with pytest.raises(SchemaError):
            runner.validate_config({"scenario": "nope"})

    def test_unknown_keys_listed(self):
        with pytest.raises(SchemaError) as err:
            runner.validate_config(
                {"scenario": "pekar", "params": {"grid": 16, "bogus": 1, "worse": 2}}
            )
        assert set(err.value.keys) == {"bogus", "worse"}

    def test_type_coercion_and_defaults(self):
        cfg = runner.validate_config({"scenario": "pekar", "params": {"grid": "32"}})
        assert cfg.params["grid"] == 32
        assert cfg.params["box"] == 16.0

    def test_choice_enforcement(self):
        with pytest.raises(SchemaError) as err:
            runner.validate_config({"scenario": "fock", "params": {"experiment": "bogus"}})
        assert "experiment" in err.value.keys


class TestRun:
    def test_pekar_scenario_writes_manifest_and_tables(self, tmp_path):
        cfg = runner.validate_config(
            {
                "scenario": "pekar",
                "params": {"grid": 16, "box": 16.0, "tol": 1e-5},
                "out": str(tmp_path / "run"),
                "seed": 5,
            }
        )
        record = runner.run(cfg)
        out = tmp_path / "run"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "done"
        assert manifest["seed"] == 5
        assert (out / "energy_history.csv").exists()
        assert (out / "summary.json").exists()
        assert record.summary["E_P"] < 0

    def test_crash_leaves_aborted_manifest(self, tmp_path, monkeypatch):
        cfg = runner.validate_config(
            {"scenario": "pekar", "params": {"grid": 16}, "out": str(tmp_path / "boom")}
        )

        def explode(config, record):
            raise RuntimeError("injected")

        monkeypatch.setitem(runner._DISPATCH, "pekar", explode)
        with pytest.raises(RuntimeError):
            runner.run(cfg)
        manifest = json.loads((tmp_path / "boom" / "manifest.json").read_text())
        assert manifest["status"] == "aborted"

    def test_seeded_runs_are_byte_identical(self, tmp_path):
        outs = []
        for label in ("one", "two"):
            cfg = runner.validate_config(
                {
                    "scenario": "fock",
                    "params": {
                        "sites": 8,
                        "box": 2.0,
                        "modes": 2,
                        "nmax": 3,
                        "v0": 3e-3,
                        "alpha_grid": "1,2",
                        "T": 0.5,
                        "samples": 4,
                        "experiment": "theorem1",
                    },
                    "out": str(tmp_path / label),
                    "seed": 9,
                }
            )
            runner.run(cfg)
            outs.append(tmp_path / label)
        a = (outs[0] / "errors.csv").read_bytes()
        b = (outs[1] / "errors.csv").read_bytes()
        assert a == b

    def test_summary_recomputable_from_table(self, tmp_path):
        cfg = runner.validate_config(
            {
                "scenario": "fock",
                "params": {
                    "sites": 8,
                    "box": 2.0,
                    "modes": 2,
                    "nmax": 3,
                    "v0": 3e-3,
                    "alpha_grid": "1,2",
                    "T": 0.5,
                    "samples": 4,
                    "experiment": "theorem1",
                },
                "out": str(tmp_path / "r"),
            }
        )
        record = runner.run(cfg)
        import csv as csvmod

        from polaron_lab.fock_sim import fit_loglog

        with open(tmp_path / "r" / "errors.csv") as fh:
            rows = [
                {k: float(v) for k, v in row.items()} for row in csvmod.DictReader(fh)
            ]
        alphas = sorted({r["alpha"] for r in rows})
        sups = [max(r["err"] for r in rows if r["alpha"] == a) for a in alphas]
        slope, intercept, _ = fit_loglog(alphas, sups)
        assert slope == pytest.approx(record.summary["slope"], rel=1e-12)

    def test_seventeen_digit_serialization(self, tmp_path):
        path = runner.write_csv(
            tmp_path / "vals.csv", [{"x": 1.0 / 3.0}], ["x"]
        )
        text = path.read_text().splitlines()[1]
        assert text == format(1.0 / 3.0, ".17g")
        assert float(text) == 1.0 / 3.0


class TestWorkerPool:
    def test_thread_cap_does_not_change_results(self, tmp_path, monkeypatch):
        params = {
            "sites": 8,
            "box": 2.0,
            "modes": 2,
            "nmax": 3,
            "v0": 3e-3,
            "alpha_grid": "1,2",
            "T": 0.5,
            "samples": 4,
            "experiment": "theorem1",
        }
        results = []
        for threads, label in (("1", "serial"), ("4", "pooled")):
            monkeypatch.setenv("POLARON_LAB_THREADS", threads)
            cfg = runner.validate_config(
                {"scenario": "fock", "params": params, "out": str(tmp_path / label), "seed": 2}
            )
            results.append(runner.run(cfg))
        a = (tmp_path / "serial" / "errors.csv").read_bytes()
        b = (tmp_path / "pooled" / "errors.csv").read_bytes()
        assert a == b
        assert results[0].summary["slope"] == results[1].summary["slope"]

    def test_theorem2_scenario_summary_keys(self, tmp_path):
        cfg = runner.validate_config(
            {
                "scenario": "fock",
                "params": {
                    "sites": 8,
                    "box": 2.0,
                    "modes": 2,
                    "nmax": 4,
                    "v0": 3e-3,
                    "alpha_grid": "1,2",
                    "T": 0.5,
                    "dt": 5e-3,
                    "samples": 3,
                    "experiment": "theorem2",
                },
                "out": str(tmp_path / "t2"),
            }
        )
        record = runner.run(cfg)
        for key in ("slope", "intercept", "r_squared", "leakage_max", "residuals"):
            assert key in record.summary


class TestPlotData:
    def _record(self):
        cfg = runner.validate_config(
            {
                "scenario": "fock",
                "params": {
                    "sites": 8,
                    "box": 2.0,
                    "modes": 2,
                    "nmax": 3,
                    "v0": 3e-3,
                    "alpha_grid": "1,2",
                    "T": 0.5,
                    "samples": 4,
                    "experiment": "theorem1",
                },
            }
        )
        return runner.run(cfg)

    def test_curves_and_fit_sidecar(self, tmp_path):
        record = self._record()
        files = runner.emit_plotdata(record, tmp_path)
        names = {f.name for f in files}
        assert "err_vs_t_alpha1.dat" in names
        assert "err_vs_t_alpha2.dat" in names
        assert "fit.json" in names
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert fit["slope"] == pytest.approx(record.summary["slope"])

    def test_empty_table_warns(self, tmp_path):
        record = runner.RunRecord(manifest={}, tables={"errors": ([], ["t", "alpha", "err"])})
        with pytest.warns(UserWarning):
            files = runner.emit_plotdata(record, tmp_path)
        assert files[0].read_text() == ""

    def test_malformed_record_raises(self, tmp_path):
        record = runner.RunRecord(manifest={})
        with pytest.raises(SchemaError):
            runner.emit_plotdata(record, tmp_path)


class TestCli:
    def test_schema_error_exit_code(self, capsys):
        assert cli_main(["fock", "--modes", "3", "--out", "/tmp/x"]) == 2

    def test_projectors_verb(self, tmp_path):
        code = cli_main(
            [
                "fock",
                "--sites", "8", "--box", "4.0", "--modes", "2", "--nmax", "2",
                "--v0", "0.05", "--alpha-grid", "1", "--experiment", "projectors",
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["idempotency"] < 1e-12

    def test_lemma_suite_verb(self, tmp_path):
        code = cli_main(
            [
                "lemma-suite",
                "--sites", "8", "--box", "8.0", "--modes", "4", "--nmax", "2",
                "--alpha-grid", "1,2", "--out", str(tmp_path),
            ]
        )
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["annihilator_bounds_hold"] is True

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            json.dumps({"scenario": "pekar", "params": {"grid": 16, "g": 1.0, "tol": 1e-4}})
        )
        out = tmp_path / "out"
        code = cli_main(
            ["pekar", "--config", str(cfg_path), "--g", "2.0", "--out", str(out)]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["params"]["g"] == 2.0  # flag beats config file
        assert manifest["params"]["grid"] == 16
