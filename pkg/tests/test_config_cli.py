"""Tests for JSON configuration parsing and the command-line harness."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dlglab import cli
from dlglab.classifier import load_classifier
from dlglab.config import ConfigError, ExperimentConfig, load_config
from dlglab.harness import SCHEMA_COLUMNS
from dlglab.mixture import GaussianMixture, save_mixture


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


MIXING_PAYLOAD = {
    "sampler": {
        "eta": 2.0,
        "n_skip": 1,
        "n_den": 9,
        "n_chains": 2,
        "samples_per_chain": 30,
        "init": {"style": "at_mode", "mode_index": 0},
    },
    "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 32},
    "baseline": {"algo": "langevin", "eta": 1e-4, "n_steps": 300},
}


class TestConfigParsing:
    def test_empty_config_is_valid_and_roundtrips(self):
        cfg = ExperimentConfig.from_dict({})
        resolved = cfg.to_dict()
        again = ExperimentConfig.from_dict(resolved)
        assert again.to_dict() == resolved

    def test_mixing_payload_roundtrips(self):
        cfg = ExperimentConfig.from_dict(MIXING_PAYLOAD)
        resolved = cfg.to_dict()
        assert ExperimentConfig.from_dict(resolved).to_dict() == resolved
        assert resolved["sampler"]["eta"] == 2.0
        assert resolved["schedule"]["n_levels"] == 32

    def test_unknown_keys_are_named(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"sampler": {"etaa": 1.0}, "bogus": {}})
        msg = str(exc.value)
        assert "etaa" in msg
        assert "bogus" in msg

    def test_all_type_problems_reported_together(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict(
                {
                    "sampler": {"n_skip": "three"},
                    "schedule": {"sigma_min": "tiny"},
                }
            )
        msg = str(exc.value)
        assert "n_skip" in msg
        assert "sigma_min" in msg

    def test_eta_kappa_exclusive(self):
        cfg = ExperimentConfig.from_dict({"sampler": {"eta": 1.0, "kappa": 0.1}})
        with pytest.raises(ConfigError) as exc:
            cfg.validate(require_output=False)
        assert "either eta or kappa" in str(exc.value)
        solo = ExperimentConfig.from_dict({"sampler": {"kappa": 0.05}})
        solo.validate(require_output=False)
        assert solo.sampler.eta is None and solo.sampler.kappa == 0.05

    def test_semantic_validation_collects_problems(self):
        cfg = ExperimentConfig.from_dict(
            {"sampler": {"n_chains": 0, "samples_per_chain": 0}}
        )
        with pytest.raises(ConfigError) as exc:
            cfg.validate(require_output=False)
        msg = str(exc.value)
        assert "n_chains" in msg
        assert "samples_per_chain" in msg

    def test_output_requirements(self):
        cfg = ExperimentConfig.from_dict({})
        with pytest.raises(ConfigError) as exc:
            cfg.validate()
        msg = str(exc.value)
        assert "out_dir" in msg
        assert "master_seed" in msg
        assert cfg.validate(require_output=False) is cfg

    def test_with_overrides(self):
        cfg = ExperimentConfig.from_dict({})
        cfg2 = cfg.with_overrides(out_dir="/tmp/x", master_seed=7)
        assert cfg2.out_dir == "/tmp/x"
        assert cfg2.master_seed == 7
        assert cfg.out_dir is None  # original untouched

    def test_mixture_file_and_preset_exclusive(self, tmp_path):
        mix_path = tmp_path / "mix.json"
        save_mixture(
            GaussianMixture(
                means=np.zeros((2, 3)),
                base_variances=np.zeros(2),
                weights=np.array([0.5, 0.5]),
            ),
            mix_path,
        )
        both = ExperimentConfig.from_dict(
            {"mixture": {"file": str(mix_path), "preset": {"n_modes": 3}}}
        )
        with pytest.raises(ConfigError):
            both.validate(require_output=False)
        cfg = ExperimentConfig.from_dict({"mixture": {"file": str(mix_path)}})
        mix = cfg.mixture.build()
        assert mix.n_modes == 2
        assert mix.dim == 3

    def test_empty_integrator_list_rejected(self):
        cfg = ExperimentConfig.from_dict({"benchmark": {"integrators": []}})
        with pytest.raises(ConfigError) as exc:
            cfg.validate(require_output=False)
        assert "integrators" in str(exc.value)

    def test_unknown_integrator_name_rejected(self):
        cfg = ExperimentConfig.from_dict(
            {"benchmark": {"integrators": [{"name": "leapfrog"}]}}
        )
        with pytest.raises(ConfigError) as exc:
            cfg.validate(require_output=False)
        assert "leapfrog" in str(exc.value)

    def test_ablation_bounds(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"ablation": {"nden_fracs": [0.0]}}).validate(
                require_output=False
            )
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"ablation": {"budgets": [1]}}).validate(
                require_output=False
            )

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)


class TestValidateConfigCommand:
    def test_valid_config_prints_resolved_json(self, tmp_path, capsys):
        path = write_config(tmp_path, MIXING_PAYLOAD)
        code = cli.main(["validate-config", "--config", str(path)])
        captured = capsys.readouterr()
        assert code == 0
        resolved = json.loads(captured.out)
        assert resolved["sampler"]["n_chains"] == 2

    def test_invalid_config_exits_two(self, tmp_path, capsys):
        path = write_config(tmp_path, {"sampler": {"n_chains": 0}})
        code = cli.main(["validate-config", "--config", str(path)])
        captured = capsys.readouterr()
        assert code == 2
        assert "n_chains" in captured.err

    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit):
            cli.main(["mixup", "--config", "x.json"])

    def test_bad_threads_rejected(self, tmp_path, capsys):
        path = write_config(tmp_path, MIXING_PAYLOAD)
        out = tmp_path / "out"
        code = cli.main(
            [
                "mixing",
                "--config",
                str(path),
                "--seed",
                "3",
                "--out",
                str(out),
                "--threads",
                "0",
            ]
        )
        assert code == 2
        assert not out.exists()


class TestMixingCommand:
    def _run(self, tmp_path, out_name="run1", seed="5", payload=None):
        path = write_config(tmp_path, payload or MIXING_PAYLOAD)
        out = tmp_path / out_name
        code = cli.main(
            ["mixing", "--config", str(path), "--seed", seed, "--out", str(out)]
        )
        return code, out

    def test_writes_expected_files(self, tmp_path, capsys):
        code, out = self._run(tmp_path)
        assert code == 0
        stdout = capsys.readouterr().out
        assert "wrote" in stdout
        names = {p.name for p in out.iterdir()}
        assert {
            "manifest.json",
            "coverage_dlg.csv",
            "classes_dlg.csv",
            "autocorr_dlg.csv",
            "coverage_baseline.csv",
            "classes_baseline.csv",
            "autocorr_baseline.csv",
        } <= names
        # 16-dimensional run: no scatter render
        assert not any(n.endswith(".png") for n in names)

    def test_csv_schemas_and_content(self, tmp_path):
        _, out = self._run(tmp_path)
        header, rows = read_csv(out / "coverage_dlg.csv")
        assert tuple(header) == SCHEMA_COLUMNS["coverage"]
        assert rows[0][0] == "1"  # emission steps are 1-based
        covered = [int(r[1]) for r in rows]
        assert covered == sorted(covered)
        assert len(rows) == 30

        header, rows = read_csv(out / "classes_dlg.csv")
        assert tuple(header) == SCHEMA_COLUMNS["classes"]
        assert sum(int(r[1]) for r in rows) == 2 * 30

        header, rows = read_csv(out / "autocorr_dlg.csv")
        assert tuple(header) == SCHEMA_COLUMNS["autocorr"]
        assert rows[0][0] == "0"  # lags are 0-based
        assert float(rows[0][1]) == pytest.approx(1.0)

    def test_manifest_contents(self, tmp_path):
        _, out = self._run(tmp_path)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "mixing"
        assert manifest["config"]["sampler"]["eta"] == 2.0
        assert manifest["config"]["master_seed"] == 5
        assert "SeedSequence" in manifest["seed_derivation"]
        assert manifest["schema_versions"]["coverage"] == 1
        assert manifest["nfe"]["dlg"]["total_nfe"] > 0
        assert manifest["nfe"]["dlg"]["samples_emitted"] == 60
        assert manifest["diagnostics"]["dlg"]["coverage_final"] >= 1
        assert "wall_clock_seconds" in manifest
        outputs = {o["file"] for o in manifest["outputs"]}
        assert "coverage_dlg.csv" in outputs

    def test_deterministic_across_runs(self, tmp_path):
        _, out1 = self._run(tmp_path, out_name="run1")
        _, out2 = self._run(tmp_path, out_name="run2")
        for name in ("coverage_dlg.csv", "classes_dlg.csv", "autocorr_dlg.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_changes_outputs(self, tmp_path):
        _, out1 = self._run(tmp_path, out_name="run1", seed="5")
        _, out2 = self._run(tmp_path, out_name="run2", seed="6")
        assert (out1 / "classes_dlg.csv").read_bytes() != (
            out2 / "classes_dlg.csv"
        ).read_bytes()

    def test_validation_failure_creates_no_files(self, tmp_path, capsys):
        payload = json.loads(json.dumps(MIXING_PAYLOAD))
        payload["sampler"]["n_chains"] = 0
        path = write_config(tmp_path, payload)
        out = tmp_path / "should_not_exist"
        code = cli.main(
            ["mixing", "--config", str(path), "--seed", "1", "--out", str(out)]
        )
        captured = capsys.readouterr()
        assert code == 2
        assert "n_chains" in captured.err
        assert not out.exists()

    def test_two_dimensional_run_renders_scatter(self, tmp_path):
        payload = {
            "mixture": {
                "preset": {
                    "n_modes": 4,
                    "dim": 2,
                    "mode_scale": 2.0,
                    "min_separation": 1.0,
                    "seed": 3,
                }
            },
            "sampler": {
                "eta": 0.5,
                "n_chains": 1,
                "samples_per_chain": 20,
                "init": {"style": "at_mode", "mode_index": 0},
            },
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 16},
            "baseline": {"algo": "none"},
        }
        code, out = self._run(tmp_path, payload=payload)
        assert code == 0
        assert any(p.suffix == ".png" for p in out.iterdir())
        names = {p.name for p in out.iterdir()}
        assert "coverage_baseline.csv" not in names


class TestBenchmarkCommand:
    def test_gaussian_table_and_orders(self, tmp_path, capsys):
        payload = {
            "schedule": {"sigma_min": 0.01, "sigma_max": 50.0, "n_levels": 1000},
            "benchmark": {
                "integrators": [{"name": "prob_flow_euler"}, {"name": "karras_det"}],
                "sigma_starts": [0.5, 50.0],
                "budgets": [8, 16, 32],
                "run_mixture": False,
            },
        }
        path = write_config(tmp_path, payload)
        out = tmp_path / "bench"
        code = cli.main(
            ["benchmark-integrators", "--config", str(path), "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        header, rows = read_csv(out / "bench_gaussian.csv")
        assert tuple(header) == SCHEMA_COLUMNS["bench"] + ("error",)
        assert len(rows) == 2 * 2 * 3
        manifest = json.loads((out / "manifest.json").read_text())
        orders = manifest["diagnostics"]["orders"]
        assert "prob_flow_euler@sigma_start=0.5" in orders
        assert "bench_mixture.csv" not in {p.name for p in out.iterdir()}

    def test_mixture_table(self, tmp_path):
        payload = {
            "mixture": {"preset": {"n_modes": 10, "dim": 8, "mode_scale": 1.5, "min_separation": 1.0}},
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 32},
            "benchmark": {
                "integrators": [{"name": "karras_det"}],
                "sigma_starts": [0.5],
                "budgets": [8],
                "run_mixture": True,
                "mixture_budgets": [8, 16],
                "mixture_samples": 50,
            },
        }
        path = write_config(tmp_path, payload)
        out = tmp_path / "bench"
        code = cli.main(
            ["benchmark-integrators", "--config", str(path), "--seed", "2", "--out", str(out)]
        )
        assert code == 0
        header, rows = read_csv(out / "bench_mixture.csv")
        assert tuple(header) == SCHEMA_COLUMNS["bench"] + ("fgd",)
        assert len(rows) == 2


class TestAblationCommand:
    BASE = {
        "sampler": {
            "eta": 2.0,
            "init": {"style": "at_mode", "mode_index": 0},
        },
        "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 32},
        "ablation": {
            "etas": [1.0, 2.0],
            "nden_fracs": [0.25, 0.5, 0.75],
            "budgets": [10, 20],
            "n_chains": 2,
            "samples_per_chain": 10,
        },
    }

    def test_cell_count_is_product_of_cardinalities(self, tmp_path):
        path = write_config(tmp_path, self.BASE)
        out = tmp_path / "abl"
        code = cli.main(
            ["ablation", "--config", str(path), "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        header, rows = read_csv(out / "ablation.csv")
        assert tuple(header) == SCHEMA_COLUMNS["ablation"]
        assert len(rows) == 2 * 3 * 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["nfe"]["cells"] == 12
        assert "optima" in manifest["diagnostics"]

    def test_budget_splits_follow_fraction(self, tmp_path):
        path = write_config(tmp_path, self.BASE)
        out = tmp_path / "abl"
        cli.main(["ablation", "--config", str(path), "--seed", "3", "--out", str(out)])
        _, rows = read_csv(out / "ablation.csv")
        for eta, frac, nfe, _ in rows:
            nfe = int(nfe)
            n_den = max(1, min(nfe - 1, round(float(frac) * nfe)))
            assert 1 <= n_den <= nfe - 1

    def test_singleton_grid_matches_direct_sampler_run(self, tmp_path):
        # A one-cell sweep must coincide with a mixing run configured
        # identically: same chain streams, same truth draw, same
        # distance — common random numbers end to end.
        budget, frac = 10, 0.5
        n_den = max(1, min(budget - 1, round(frac * budget)))
        n_skip = budget - n_den
        ablation_payload = {
            "sampler": {"eta": 2.0, "init": {"style": "at_mode", "mode_index": 0}},
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 32},
            "ablation": {
                "etas": [2.0],
                "nden_fracs": [frac],
                "budgets": [budget],
                "n_chains": 2,
                "samples_per_chain": 25,
            },
        }
        mixing_payload = {
            "sampler": {
                "eta": 2.0,
                "n_skip": n_skip,
                "n_den": n_den,
                "n_chains": 2,
                "samples_per_chain": 25,
                "init": {"style": "at_mode", "mode_index": 0},
            },
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 32},
            "baseline": {"algo": "none"},
        }
        apath = write_config(tmp_path, ablation_payload, name="abl.json")
        mpath = write_config(tmp_path, mixing_payload, name="mix.json")
        aout, mout = tmp_path / "abl", tmp_path / "mix"
        assert cli.main(["ablation", "--config", str(apath), "--seed", "9", "--out", str(aout)]) == 0
        assert cli.main(["mixing", "--config", str(mpath), "--seed", "9", "--out", str(mout)]) == 0
        _, rows = read_csv(aout / "ablation.csv")
        assert len(rows) == 1
        cell_fgd = float(rows[0][3])
        manifest = json.loads((mout / "manifest.json").read_text())
        assert cell_fgd == manifest["diagnostics"]["dlg"]["fgd"]


class TestTrainCommand:
    def test_classifier_artifact_roundtrip(self, tmp_path):
        payload = {
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 16},
            "train": {
                "n_per_level": 40,
                "epochs": 12,
                "lr": 1.0,
                "batch_size": 128,
                "codebook_size": 64,
            },
        }
        path = write_config(tmp_path, payload)
        out = tmp_path / "train"
        code = cli.main(
            ["train-classifier", "--config", str(path), "--seed", "4", "--out", str(out)]
        )
        assert code == 0
        clf = load_classifier(out / "classifier.json")
        assert clf.grid.n_levels == 16
        header, rows = read_csv(out / "losses.csv")
        assert tuple(header) == SCHEMA_COLUMNS["losses"]
        assert len(rows) == 12
        assert rows[0][0] == "1"
        manifest = json.loads((out / "manifest.json").read_text())
        diag = manifest["diagnostics"]
        assert 0.0 <= diag["within_k_accuracy"] <= 1.0
        assert diag["feature_version"] == "codebook-logdist-v1"

    def test_trained_classifier_drives_mixing(self, tmp_path):
        train_payload = {
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 32},
            "train": {"n_per_level": 100, "epochs": 40, "lr": 2.0, "codebook_size": 256},
        }
        tpath = write_config(tmp_path, train_payload, name="train.json")
        tout = tmp_path / "train"
        assert cli.main(["train-classifier", "--config", str(tpath), "--seed", "7", "--out", str(tout)]) == 0

        mixing_payload = json.loads(json.dumps(MIXING_PAYLOAD))
        mixing_payload["sampler"]["classifier"] = str(tout / "classifier.json")
        mixing_payload["baseline"] = {"algo": "none"}
        mpath = write_config(tmp_path, mixing_payload, name="mix.json")
        mout = tmp_path / "mix"
        assert cli.main(["mixing", "--config", str(mpath), "--seed", "8", "--out", str(mout)]) == 0
        manifest = json.loads((mout / "manifest.json").read_text())
        assert manifest["diagnostics"]["dlg"]["coverage_final"] >= 1

    def test_grid_mismatch_between_classifier_and_run(self, tmp_path, capsys):
        train_payload = {
            "schedule": {"sigma_min": 0.01, "sigma_max": 2.0, "n_levels": 16},
            "train": {"n_per_level": 20, "epochs": 2, "lr": 1.0, "codebook_size": 32},
        }
        tpath = write_config(tmp_path, train_payload, name="train.json")
        tout = tmp_path / "train"
        assert cli.main(["train-classifier", "--config", str(tpath), "--seed", "7", "--out", str(tout)]) == 0

        mixing_payload = json.loads(json.dumps(MIXING_PAYLOAD))  # 32-level schedule
        mixing_payload["sampler"]["classifier"] = str(tout / "classifier.json")
        mpath = write_config(tmp_path, mixing_payload, name="mix.json")
        code = cli.main(
            ["mixing", "--config", str(mpath), "--seed", "8", "--out", str(tmp_path / "mix")]
        )
        captured = capsys.readouterr()
        assert code == 2
        assert "grid" in captured.err.lower()
