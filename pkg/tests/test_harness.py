"""Harness and CLI tests: config parsing, bundle layout, determinism, exit codes.

The determinism contract is the load-bearing one: a bundle rerun with the
same master seed must be byte-identical outside the manifest timestamp, at
any worker count.  Everything else (validation, atomicity, report text) is
checked against small, fast configurations.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from stochacc import acceptance, cli, harness
from stochacc.errors import ParseError, SimulationError, ValidationError
from stochacc.harness import ResultBundle, RunConfig, emit_report, parse_config, run
from stochacc.xi_chain import gamma_from_dim


def _payload(path):
    """Bundle contents keyed by file name, manifest excluded (timestamped)."""
    return {
        p.name: p.read_bytes()
        for p in sorted(Path(path).iterdir())
        if p.name != "manifest.json"
    }


class TestParseConfig:
    def test_empty_object_gives_stock_xi_chain(self):
        cfg = parse_config("{}")
        assert cfg.experiment == "xi_chain"
        assert cfg.master_seed == 0
        assert cfg.workers == 1
        assert cfg.output_dir == "runs/latest"
        assert cfg.params["gamma"] == gamma_from_dim(8)
        assert cfg.params["below"] == "Reflect"
        assert cfg.params["steps"] == 10_000

    def test_inline_text_and_file_agree(self, tmp_path):
        text = json.dumps(
            {"experiment": "bessel", "params": {"n_paths": 7}, "master_seed": 3}
        )
        path = tmp_path / "cfg.json"
        path.write_text(text)
        assert parse_config(text) == parse_config(str(path))

    def test_defaults_overlay_user_params(self):
        cfg = parse_config('{"experiment": "bessel", "params": {"gamma": 2.0}}')
        assert cfg.params["gamma"] == 2.0
        assert cfg.params["dt"] == 1e-4  # untouched default

    def test_subcommand_fills_experiment(self):
        cfg = parse_config("{}", experiment="moments")
        assert cfg.experiment == "moments"
        assert cfg.params["speeds"] == [30.0, 50.0, 80.0, 130.0, 210.0]

    def test_subcommand_conflict_rejected(self):
        with pytest.raises(ValidationError, match="requests 'bessel'"):
            parse_config('{"experiment": "xi_chain"}', experiment="bessel")

    def test_missing_file(self):
        with pytest.raises(ParseError, match="not found"):
            parse_config("/no/such/config.json")

    def test_malformed_json_reports_position(self):
        with pytest.raises(ParseError, match=r"line 1, column \d+"):
            parse_config('{"experiment": }')

    def test_non_object_root(self):
        with pytest.raises(ParseError, match="<root>"):
            parse_config("[1, 2]")

    def test_unknown_top_level_field(self):
        with pytest.raises(ParseError, match="'outdir'"):
            parse_config('{"outdir": "x"}')

    def test_unknown_experiment(self):
        with pytest.raises(ParseError, match="'warp'"):
            parse_config('{"experiment": "warp"}')

    def test_unknown_param_names_field(self):
        with pytest.raises(ParseError, match="params.r1"):
            parse_config('{"experiment": "bessel", "params": {"r1": 2.0}}')

    def test_every_violation_listed(self):
        bad = json.dumps(
            {
                "experiment": "bessel",
                "params": {"gamma": 0.3, "dt": -1, "n_paths": 0},
                "workers": 0,
                "master_seed": -5,
            }
        )
        with pytest.raises(ValidationError) as err:
            parse_config(bad)
        text = "\n".join(err.value.violations)
        for needle in ("gamma", "dt", "n_paths", "workers", "master_seed"):
            assert needle in text
        assert len(err.value.violations) == 5

    def test_seed_bounds(self):
        with pytest.raises(ValidationError, match="master_seed"):
            parse_config(json.dumps({"master_seed": 2**64}))
        cfg = parse_config(json.dumps({"master_seed": 2**64 - 1}))
        assert cfg.master_seed == 2**64 - 1

    def test_bool_is_not_a_number(self):
        with pytest.raises(ValidationError, match="steps"):
            parse_config('{"experiment": "xi_chain", "params": {"steps": true}}')

    def test_non_integral_count_rejected(self):
        with pytest.raises(ValidationError, match="steps"):
            parse_config('{"experiment": "xi_chain", "params": {"steps": 10.5}}')

    def test_integral_float_accepted(self):
        cfg = parse_config('{"experiment": "xi_chain", "params": {"steps": 100.0}}')
        assert cfg.params["steps"] == 100

    def test_noise_and_below_enums(self):
        with pytest.raises(ValidationError, match="noise"):
            parse_config('{"experiment": "xi_chain", "params": {"noise": "Gauss"}}')
        with pytest.raises(ValidationError, match="below"):
            parse_config('{"experiment": "xi_chain", "params": {"below": "Clamp"}}')

    def test_cross_field_spec_constraint(self):
        bad = '{"experiment": "xi_chain", "params": {"gamma": 5.0, "xi_plus": 1.0}}'
        with pytest.raises(ValidationError):
            parse_config(bad)

    def test_exit_prob_hypothesis_region(self):
        bad = '{"experiment": "exit_prob", "params": {"xi0": 1.5}}'
        with pytest.raises(ValidationError, match="xi0"):
            parse_config(bad)

    def test_aux_start_level_floor(self):
        bad = '{"experiment": "aux", "params": {"eta0": 2}}'
        with pytest.raises(ValidationError, match="eta0"):
            parse_config(bad)

    def test_verify_gamma_gate(self):
        with pytest.raises(ValidationError, match="gamma"):
            parse_config('{"experiment": "verify", "params": {"gamma": 0.4}}')

    def test_verify_criteria_normalized(self):
        cfg = parse_config('{"experiment": "verify", "params": {"criteria": [4, 4, 2]}}')
        assert cfg.params["criteria"] == [2, 4]
        with pytest.raises(ValidationError, match="criteria"):
            parse_config('{"experiment": "verify", "params": {"criteria": [0]}}')

    def test_omega_must_be_numbers(self):
        bad = '{"experiment": "moments", "params": {"omega": [4.0, "x"]}}'
        with pytest.raises(ValidationError, match="omega"):
            parse_config(bad)


_XI = {
    "experiment": "xi_chain",
    "params": {"n_traces": 6, "steps": 1500},
    "master_seed": 42,
}


class TestRun:
    def test_bundle_layout_and_manifest(self, tmp_path):
        cfg = parse_config(json.dumps({**_XI, "output_dir": str(tmp_path / "out")}))
        bundle = run(cfg)
        names = sorted(p.name for p in bundle.path.iterdir())
        assert names == ["errors.csv", "manifest.json", "paths.csv", "summary.json"]
        manifest = json.loads((bundle.path / "manifest.json").read_text())
        assert manifest["experiment"] == "xi_chain"
        assert manifest["master_seed"] == 42
        assert manifest["params"]["steps"] == 1500
        assert "created" in manifest and "version" in manifest

    def test_rerun_and_worker_count_byte_identical(self, tmp_path):
        payloads = []
        for tag, workers in (("a", 1), ("b", 8), ("c", 1)):
            cfg = parse_config(
                json.dumps(
                    {**_XI, "workers": workers, "output_dir": str(tmp_path / tag)}
                )
            )
            payloads.append(_payload(run(cfg).path))
        assert payloads[0] == payloads[1] == payloads[2]

    def test_bessel_worker_count_byte_identical(self, tmp_path):
        payloads = []
        for tag, workers in (("a", 1), ("b", 8)):
            cfg = parse_config(
                json.dumps(
                    {
                        "experiment": "bessel",
                        "params": {"n_paths": 150, "horizon": 0.02},
                        "master_seed": 9,
                        "workers": workers,
                        "output_dir": str(tmp_path / tag),
                    }
                )
            )
            payloads.append(_payload(run(cfg).path))
        assert payloads[0] == payloads[1]

    def test_different_seeds_differ(self, tmp_path):
        outs = []
        for seed, tag in ((1, "a"), (2, "b")):
            cfg = parse_config(
                json.dumps({**_XI, "master_seed": seed, "output_dir": str(tmp_path / tag)})
            )
            outs.append(_payload(run(cfg).path))
        assert outs[0]["paths.csv"] != outs[1]["paths.csv"]

    def test_existing_output_fully_replaced(self, tmp_path):
        target = tmp_path / "out"
        target.mkdir()
        (target / "stale.csv").write_text("junk")
        cfg = parse_config(json.dumps({**_XI, "output_dir": str(target)}))
        run(cfg)
        assert not (target / "stale.csv").exists()
        assert (target / "paths.csv").exists()

    def test_nested_output_dir_created(self, tmp_path):
        target = tmp_path / "a" / "b" / "out"
        cfg = parse_config(json.dumps({**_XI, "output_dir": str(target)}))
        assert run(cfg).path == target
        assert (target / "summary.json").exists()

    def test_failed_run_leaves_nothing(self, tmp_path, monkeypatch):
        target = tmp_path / "out"

        def boom(cfg, tmp):
            raise SimulationError("synthetic failure")

        monkeypatch.setitem(harness._RUNNERS, "xi_chain", boom)
        cfg = parse_config(json.dumps({**_XI, "output_dir": str(target)}))
        with pytest.raises(SimulationError, match="synthetic"):
            run(cfg)
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_per_trace_errors_recorded_not_fatal(self, tmp_path):
        # Forbid with a weak drift near the floor: at this seed 9 of the 16
        # traces leave the domain and the other 7 must still land.
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "xi_chain",
                    "params": {
                        "gamma": 0.2,
                        "xi0": 1.2,
                        "steps": 10,
                        "n_traces": 16,
                        "below": "Forbid",
                    },
                    "master_seed": 11,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        lines = (bundle.path / "errors.csv").read_text().splitlines()
        n_err = len(lines) - 1
        assert 0 < n_err < 16
        assert bundle.summary["n_errors"] == n_err
        assert "BelowDomain" in lines[1]
        traced = {
            int(row.split(",")[0])
            for row in (bundle.path / "paths.csv").read_text().splitlines()[1:]
        }
        failed = {int(row.split(",")[0]) for row in lines[1:]}
        assert traced.isdisjoint(failed)
        assert traced | failed == set(range(16))

    def test_paths_csv_round_trips_floats(self, tmp_path):
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "xi_chain",
                    "params": {"n_traces": 1, "steps": 40},
                    "master_seed": 7,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        import stochacc.xi_chain as xc

        values = np.empty(41)
        assert xc._xi_kernel(7, 0, 50.0, 1.0, True, 0.5, False, 40, values) == -1
        rows = (bundle.path / "paths.csv").read_text().splitlines()[1:]
        got = np.array([float(r.split(",")[2]) for r in rows])
        assert got.tolist() == values.tolist()

    def test_full_chain_bundle(self, tmp_path):
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "full_chain",
                    "params": {"n_traces": 2, "max_collisions": 40},
                    "master_seed": 5,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        rows = (bundle.path / "traces.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 41
        assert bundle.summary["n_trapped"] == 0
        assert bundle.summary["mean_final_speed"] == pytest.approx(30.0, rel=0.01)

    def test_bessel_bundle(self, tmp_path):
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "bessel",
                    "params": {"n_paths": 64, "horizon": 0.02},
                    "master_seed": 3,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        rows = (bundle.path / "msq.csv").read_text().splitlines()
        assert len(rows) == 1 + 201
        assert bundle.summary["target_slope"] == 3.0

    def test_moments_bundle(self, tmp_path):
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "moments",
                    "params": {"n_samples": 400, "speeds": [30.0, 80.0, 210.0]},
                    "master_seed": 2,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        rows = (bundle.path / "moments.csv").read_text().splitlines()
        assert len(rows) == 4
        assert bundle.summary["D2_hat"] > 0

    def test_aux_bundle(self, tmp_path):
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "aux",
                    "params": {"eta0": 6, "n_traces": 8, "max_steps": 200_000},
                    "master_seed": 4,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        rows = (bundle.path / "transitions.csv").read_text().splitlines()
        assert len(rows) > 1
        assert set(bundle.summary) >= {"p_hat_up", "dwell_median", "n_absorbed"}

    def test_exit_prob_bundle(self, tmp_path):
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "exit_prob",
                    "params": {"n_paths": 300, "xi0": 50.0},
                    "master_seed": 8,
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        assert bundle.summary["weak_limit"] == pytest.approx(2 / 3, abs=1e-12)
        assert 0.4 < bundle.summary["p_hat"] < 0.9

    def test_verify_dispatch(self, tmp_path, monkeypatch):
        stub = [
            acceptance.CriterionResult(4, "elastic_limit", 1e-9, "<= 1e-5", True, "ok", 0.1),
            acceptance.CriterionResult(6, "bessel_mean_square", 0.9, "<= 0.05", False, "off", 0.2),
        ]
        monkeypatch.setattr(acceptance, "run_criteria", lambda ids, workers=1: stub)
        cfg = parse_config(
            json.dumps(
                {
                    "experiment": "verify",
                    "params": {"criteria": [4, 6]},
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        bundle = run(cfg)
        rows = (bundle.path / "criteria.csv").read_text().splitlines()
        assert len(rows) == 3
        assert bundle.summary["all_passed"] is False
        text, code = emit_report(bundle)
        assert code == 1
        assert "1 of 2 criteria passed" in text
        assert "FAIL" in text


class TestEmitReport:
    def test_data_bundle_exits_zero(self, tmp_path):
        cfg = parse_config(json.dumps({**_XI, "output_dir": str(tmp_path / "out")}))
        text, code = emit_report(run(cfg))
        assert code == 0
        assert "xi_chain" in text and "paths.csv" in text

    def test_all_passing_checks_exit_zero(self):
        bundle = ResultBundle(
            manifest={"experiment": "verify"},
            data_files=("criteria.csv",),
            summary={},
            checks=((4, "elastic_limit", 1e-9, "<= 1e-5", True, 0.1),),
        )
        text, code = emit_report(bundle)
        assert code == 0
        assert "1 of 1 criteria passed" in text

    def test_empty_bundle_exits_two(self):
        bundle = ResultBundle(manifest={}, data_files=(), summary={}, checks=())
        text, code = emit_report(bundle)
        assert code == 2
        assert "empty" in text


class TestCli:
    def test_subcommand_runs_defaults(self, tmp_path, capsys):
        code = cli.main(
            ["xi_chain", "--config", '{"params": {"steps": 500}}',
             "--out", str(tmp_path / "o"), "--seed", "3"]
        )
        assert code == 0
        assert (tmp_path / "o" / "paths.csv").exists()
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["master_seed"] == 3
        assert "xi_chain" in capsys.readouterr().out

    def test_config_file_argument(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({**_XI, "output_dir": str(tmp_path / "o")}))
        assert cli.main(["xi_chain", "--config", str(path)]) == 0

    def test_bad_config_exits_two(self, tmp_path, capsys):
        code = cli.main(
            ["bessel", "--config", '{"params": {"gamma": 0.1}}', "--out", str(tmp_path / "o")]
        )
        assert code == 2
        assert "gamma" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_experiment_mismatch_exits_two(self, tmp_path, capsys):
        code = cli.main(
            ["bessel", "--config", '{"experiment": "xi_chain"}', "--out", str(tmp_path / "o")]
        )
        assert code == 2
        assert "requests" in capsys.readouterr().err

    def test_flag_overrides_beat_config(self, tmp_path):
        cfgtext = json.dumps({**_XI, "workers": 8, "output_dir": "ignored"})
        code = cli.main(
            ["xi_chain", "--config", cfgtext, "--out", str(tmp_path / "o"), "--workers", "1"]
        )
        assert code == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["workers"] == 1

    def test_bad_flag_values_exit_two(self, tmp_path, capsys):
        assert cli.main(["xi_chain", "--workers", "0", "--out", str(tmp_path / "o")]) == 2
        assert cli.main(["xi_chain", "--seed", "-1", "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "--seed" in err

    def test_runtime_error_exits_one(self, tmp_path, capsys, monkeypatch):
        def boom(config):
            raise SimulationError("kernel exploded")

        monkeypatch.setattr(harness, "run", boom)
        code = cli.main(["xi_chain", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "exploded" in capsys.readouterr().err

    def test_verify_exit_code_tracks_verdicts(self, tmp_path, monkeypatch):
        good = [acceptance.CriterionResult(4, "elastic_limit", 0.0, "x", True, "", 0.0)]
        bad = good + [acceptance.CriterionResult(6, "bessel_mean_square", 1.0, "x", False, "", 0.0)]
        monkeypatch.setattr(acceptance, "run_criteria", lambda ids, workers=1: good)
        assert cli.main(
            ["verify", "--config", '{"params": {"criteria": [4]}}', "--out", str(tmp_path / "a")]
        ) == 0
        monkeypatch.setattr(acceptance, "run_criteria", lambda ids, workers=1: bad)
        assert cli.main(
            ["verify", "--config", '{"params": {"criteria": [4, 6]}}', "--out", str(tmp_path / "b")]
        ) == 1
