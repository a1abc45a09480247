"""Config parsing, rendering, dispatch and artifact behavior."""

import dataclasses
import json
import math
import os

import numpy as np
import pytest

from lilstep.cli import (
    ConfigProblems,
    RunConfig,
    build_ensemble_config,
    config_digest,
    dispatch,
    main,
    parse_config,
    render_config,
)
from lilstep.errors import ConfigurationError

MINIMAL = """
seed = 42
[model]
kind = ou
a = 1
sigma = 1
[grid]
kind = harmonic
n_steps = 1000
[mc]
paths = 1
"""


def problems_of(text, **kw):
    with pytest.raises(ConfigProblems) as exc:
        parse_config(text, **kw)
    return exc.value.problems


class TestParseConfig:
    def test_minimal_config_fills_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.seed == 42
        assert cfg.grid.kind == "harmonic"
        assert cfg.grid.n_steps == 1000
        assert cfg.grid.scale == 1.0 and cfg.grid.theta == 1.0
        assert cfg.model.kind == "ou"
        assert cfg.scheme.kind == "bem"
        assert cfg.f.kind == "coordinate"
        assert cfg.stats.batch_block == "auto"
        assert cfg.mc.paths == 1 and cfg.mc.workers == 1
        assert cfg.output.dir == "out"
        assert cfg.verify.context == "thm3_1"
        assert not cfg.verify_explicit

    def test_empty_config_with_seed_override(self):
        cfg = parse_config("", seed_override=7)
        assert cfg.seed == 7

    def test_seed_required(self):
        probs = problems_of("[grid]\nn_steps = 10\n")
        assert any("seed" in p and "missing" in p for p in probs)

    def test_invalid_seed_not_double_reported(self):
        probs = problems_of("seed = -3\n")
        assert len(probs) == 1
        assert ">= 0" in probs[0]

    def test_theta_range_message_names_interval(self):
        probs = problems_of("seed = 1\n[grid]\nkind = power\ntheta = 1.5\n")
        assert any("(0, 1]" in p and "theta" in p for p in probs)

    def test_unknown_key_suggests_neighbor(self):
        probs = problems_of("seed = 1\n[grid]\nthetta = 0.5\n")
        assert any("grid.thetta" in p and "grid.theta" in p for p in probs)

    def test_unknown_section_suggests_neighbor(self):
        probs = problems_of("seed = 1\n[grdi]\nkind = harmonic\n")
        assert any("[grdi]" in p and "grid" in p for p in probs)

    def test_all_violations_reported_together(self):
        text = """
        seed = 1
        [grid]
        kind = nosuch
        theta = 2
        n_steps = 0
        [mc]
        paths = -4
        """
        probs = problems_of(text)
        assert len(probs) == 4

    def test_comments_and_inline_comments(self):
        text = "# header\nseed = 5  # inline\n[grid]\n# note\nn_steps = 20\n"
        cfg = parse_config(text)
        assert cfg.seed == 5 and cfg.grid.n_steps == 20

    def test_run_section_form_accepted(self):
        cfg = parse_config("[run]\nseed = 9\n")
        assert cfg.seed == 9

    def test_spde_requires_exp_euler(self):
        probs = problems_of("seed = 1\n[model]\nkind = spde\n")
        assert any("exp_euler" in p for p in probs)

    def test_exp_euler_requires_spde(self):
        probs = problems_of("seed = 1\n[scheme]\nkind = exp_euler\n")
        assert any("spde" in p for p in probs)

    def test_qv_blocks_needs_linear_bem(self):
        probs = problems_of(
            "seed = 1\n[model]\nkind = sode\n[stats]\nqv_blocks = 4\n"
        )
        assert any("qv_blocks" in p for p in probs)

    def test_window_pair_enforced(self):
        probs = problems_of("seed = 1\n[stats]\nwindow_hi = 5\n")
        assert any("together" in p for p in probs)
        probs = problems_of(
            "seed = 1\n[stats]\nwindow_lo = 5\nwindow_hi = 5\n"
        )
        assert any("below" in p for p in probs)

    def test_empty_value_rejected(self):
        probs = problems_of("seed = 1\n[grid]\ntheta =\n")
        assert any("no value" in p for p in probs)

    def test_verify_section_marks_explicit(self):
        cfg = parse_config("seed = 1\n[verify]\ncontext = prop2_2\n")
        assert cfg.verify_explicit
        assert cfg.verify.context == "prop2_2"

    def test_spde_keys_parse(self):
        text = """
        seed = 1
        [model]
        kind = spde
        [scheme]
        kind = exp_euler
        [spde]
        modes = 16
        beta1 = 0.5
        q_law = power:1.5
        f = linear:3.0
        """
        cfg = parse_config(text)
        assert cfg.spde.modes == 16
        assert cfg.spde.q_law == ("power", 1.5)
        assert cfg.spde.F == ("linear", 3.0)

    def test_q_law_white(self):
        cfg = parse_config("seed=1\n[model]\nkind=spde\n[scheme]\nkind=exp_euler\n[spde]\nq_law = white\n")
        assert cfg.spde.q_law == ("white",)

    def test_batch_block_forms(self):
        assert parse_config("seed=1\n[stats]\nbatch_block = none\n").stats.batch_block is None
        assert parse_config("seed=1\n[stats]\nbatch_block = 3.5\n").stats.batch_block == 3.5
        probs = problems_of("seed=1\n[stats]\nbatch_block = -2\n")
        assert any("batch_block" in p for p in probs)

    def test_syntax_error_reports_line(self):
        probs = problems_of("seed = 1\n[grid]\njust a dangling line\n")
        assert any("syntax" in p and "line 3" in p for p in probs)

    def test_duplicate_section_reported(self):
        probs = problems_of("seed = 1\n[grid]\nn_steps = 5\n[grid]\nscale = 2\n")
        assert any("already exists" in p for p in probs)


class TestRenderRoundTrip:
    def test_round_trip_identity(self):
        cfg = parse_config(MINIMAL)
        assert parse_config(render_config(cfg)) == cfg

    def test_round_trip_with_every_section_touched(self):
        text = """
        seed = 17
        [grid]
        kind = power
        theta = 0.75
        scale = 2.0
        cap = 0.5
        n_steps = 5000
        [model]
        kind = sode
        sigma = 0.8
        c3 = 0.25
        [scheme]
        newton_tol = 1e-10
        newton_max_iter = 30
        [f]
        kind = tanh
        p = 3
        gamma = 0.5
        mu_exact = 0.125
        [stats]
        checkpoint_ratio = 1.5
        batch_block = 2.75
        window_lo = 10
        window_hi = 30
        [mc]
        paths = 12
        workers = 3
        fail_fast = true
        [output]
        dir = /tmp/somewhere
        [verify]
        context = prop4_3
        r = 50
        rho_rate = power:2
        horizon = 4000
        [decompose]
        k_last = 5
        """
        cfg = parse_config(text)
        again = parse_config(render_config(cfg))
        assert again == cfg

    def test_digest_ignores_execution_policy(self):
        cfg = parse_config(MINIMAL)
        tweaked = dataclasses.replace(
            cfg,
            mc=dataclasses.replace(cfg.mc, workers=8, fail_fast=True),
            output=dataclasses.replace(cfg.output, dir="elsewhere"),
        )
        assert config_digest(tweaked) == config_digest(cfg)

    def test_digest_tracks_semantics(self):
        cfg = parse_config(MINIMAL)
        bumped = dataclasses.replace(
            cfg, grid=dataclasses.replace(cfg.grid, n_steps=1001)
        )
        assert config_digest(bumped) != config_digest(cfg)
        repaths = dataclasses.replace(
            cfg, mc=dataclasses.replace(cfg.mc, paths=2)
        )
        assert config_digest(repaths) != config_digest(cfg)


class TestBuildEnsembleConfig:
    def test_batch_auto_resolves_to_sqrt_horizon(self):
        from lilstep.grid import StepSpec, build_grid

        cfg = parse_config(MINIMAL)
        ecfg = build_ensemble_config(cfg)
        grid = build_grid(StepSpec(kind="harmonic"), 1000)
        assert ecfg.batch_block == pytest.approx(math.sqrt(float(grid.times[-1])))

    def test_batch_none_passes_through(self):
        cfg = parse_config(MINIMAL + "[stats]\nbatch_block = none\n")
        assert build_ensemble_config(cfg).batch_block is None

    def test_mu_exact_becomes_mu_f(self):
        cfg = parse_config(MINIMAL + "[f]\nmu_exact = 0.25\n")
        assert build_ensemble_config(cfg).mu_f == 0.25

    def test_qv_blocks_zero_means_off(self):
        cfg = parse_config(MINIMAL)
        assert build_ensemble_config(cfg).qv_blocks is None


def write_config(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestDispatchExitCodes:
    def test_verify_defaults_pass(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        rc = main(["verify", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "overall: pass" in out
        doc = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert doc["passed"] is True
        assert {r["verdict"] for r in doc["conditions"]} == {"pass"}
        assert {"condition", "verdict", "witness", "detail"} <= set(doc["conditions"][0])

    def test_verify_failing_conditions_exit_1(self, tmp_path, capsys):
        text = MINIMAL + "[verify]\nr = 2\n"  # p=2 leaves no slack for the rest
        cfg = write_config(tmp_path, text)
        rc = main(["verify", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1
        doc = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert doc["passed"] is False

    def test_config_problem_exits_1(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "seed = 1\n[grid]\ntheta = 1.5\nkind = power\n")
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "(0, 1]" in capsys.readouterr().err

    def test_unreachable_horizon_exits_1(self, tmp_path, capsys):
        text = "seed = 1\n[grid]\nn_steps = 1000\n[stats]\nqv_blocks = 50\n"
        cfg = write_config(tmp_path, text)
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1
        err = capsys.readouterr().err
        assert "integer clock" in err and "extend the grid" in err

    def test_fail_fast_solver_error_exits_2(self, tmp_path, capsys):
        text = """
        seed = 3
        [model]
        kind = sode
        [grid]
        kind = constant
        cap = 1.0
        n_steps = 200
        [scheme]
        newton_tol = 1e-30
        newton_max_iter = 1
        [mc]
        paths = 2
        """
        cfg = write_config(tmp_path, text)
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"),
                   "--fail-fast"])
        assert rc == 2
        assert "failed at step" in capsys.readouterr().err

    def test_without_fail_fast_errors_recorded_exit_0(self, tmp_path, capsys):
        text = """
        seed = 3
        [model]
        kind = sode
        [grid]
        kind = constant
        cap = 1.0
        n_steps = 200
        [scheme]
        newton_tol = 1e-30
        newton_max_iter = 1
        [mc]
        paths = 2
        """
        cfg = write_config(tmp_path, text)
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 0
        doc = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert doc["ensemble"]["n_errors"] == 2
        assert doc["ensemble"]["errors"][0]["message"]

    def test_missing_config_file_exits_1(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(tmp_path / "absent.ini")])
        assert rc == 1
        assert "cannot read config" in capsys.readouterr().err

    def test_explicit_verify_gates_simulation(self, tmp_path, capsys):
        # constraints that fail must stop simulate before any path runs
        text = MINIMAL + "[verify]\nr = 2\n"
        cfg = write_config(tmp_path, text)
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "before simulation" in capsys.readouterr().err
        assert not (tmp_path / "o" / "paths.csv").exists()

    def test_dispatch_rejects_unknown_subcommand(self):
        cfg = parse_config(MINIMAL)
        with pytest.raises(ConfigurationError):
            dispatch(cfg, "nope")

    def test_decompose_requires_linear_model(self, tmp_path, capsys):
        text = MINIMAL.replace("kind = ou", "kind = sode")
        cfg = write_config(tmp_path, text)
        rc = main(["decompose", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "ou" in capsys.readouterr().err


class TestArtifacts:
    def test_resolved_ini_reparses_identically(self, tmp_path, capsys):
        cfg_path = write_config(
            tmp_path, MINIMAL.replace("paths = 1", "paths = 1\nworkers = 2")
        )
        out = tmp_path / "o"
        rc = main(["estimate-v", "--config", cfg_path, "--out", str(out)])
        assert rc == 0
        original = parse_config((tmp_path / "run.ini").read_text())
        echoed_text = (out / "resolved.ini").read_text()
        echoed = parse_config(echoed_text)
        # the echo carries the effective output dir; strip it for comparison
        assert dataclasses.replace(echoed, output=original.output) == dataclasses.replace(
            original, output=original.output
        )
        assert "workers = 2" in echoed_text

    def test_paths_csv_schema(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL.replace("paths = 1", "paths = 3"))
        out = tmp_path / "o"
        rc = main(["lil-curve", "--config", cfg, "--out", str(out)])
        assert rc == 0
        lines = (out / "paths.csv").read_text().splitlines()
        assert lines[0] == "path_id,t,S,lil_stat,run_max,run_min"
        ids = sorted({int(r.split(",")[0]) for r in lines[1:]})
        assert ids == [0, 1, 2]
        # early checkpoints sit below the loglog threshold: stat fields empty
        first = lines[1].split(",")
        assert first[3] == "" and first[4] == "" and first[5] == ""
        # fields are parseable 17-digit doubles
        assert float(first[1]) > 0 and math.isfinite(float(first[2]))

    def test_estimate_v_has_exact_and_batch_entries(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        rc = main(["estimate-v", "--config", cfg, "--out", str(out)])
        assert rc == 0
        assert not (out / "paths.csv").exists()
        doc = json.loads((out / "summary.json").read_text())
        by_method = {e["method"]: e for e in doc["v_estimates"]}
        assert set(by_method) >= {"exact_linear", "batch_means"}
        assert by_method["exact_linear"]["v2"] == 1.0
        assert by_method["exact_linear"]["v"] == 1.0
        assert by_method["batch_means"]["n_blocks"] >= 2

    def test_summary_json_fingerprints(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        main(["estimate-v", "--config", cfg, "--out", str(out)])
        doc = json.loads((out / "summary.json").read_text())
        assert doc["subcommand"] == "estimate-v"
        assert doc["seed"] == 42
        assert len(doc["config_fingerprint"]) == 64
        assert len(doc["ensemble"]["content_hash"]) == 64

    def test_decompose_artifacts(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        rc = main(["decompose", "--config", cfg, "--out", str(out)])
        assert rc == 0
        lines = (out / "decomposition.csv").read_text().splitlines()
        assert lines[0] == "k,t_k,R,Mtilde,Rtilde,Z,reconstruction_residual"
        residuals = [abs(float(r.split(",")[-1])) for r in lines[1:]]
        sums = [abs(float(r.split(",")[2])) + abs(float(r.split(",")[3])) for r in lines[1:]]
        assert max(residuals) <= 1e-10 * (1.0 + max(sums))
        doc = json.loads((out / "summary.json").read_text())
        assert doc["qv_average"] > 0
        assert list(doc["strassen_lambda"]) == ["0", "0.25", "0.5", "0.75", "1"]
        assert doc["strassen_lambda"]["0"] == 0.0

    def test_no_leftover_temp_files(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        main(["estimate-v", "--config", cfg, "--out", str(out)])
        leftovers = [n for n in os.listdir(out) if n.startswith(".tmp-")]
        assert leftovers == []

    def test_lf_newlines_and_utf8(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        main(["lil-curve", "--config", cfg, "--out", str(out)])
        raw = (out / "paths.csv").read_bytes()
        assert b"\r" not in raw
        raw.decode("utf-8")


class TestDeterminismAcrossWorkers:
    def test_csv_and_json_bytes_identical(self, tmp_path, capsys):
        text = MINIMAL.replace("paths = 1", "paths = 300").replace(
            "n_steps = 1000", "n_steps = 500"
        )
        cfg = write_config(tmp_path, text)
        outs = []
        for workers in (1, 2):
            out = tmp_path / f"w{workers}"
            rc = main(["lil-curve", "--config", cfg, "--out", str(out),
                       "--workers", str(workers)])
            assert rc == 0
            outs.append(out)
        for name in ("paths.csv", "summary.json"):
            a = (outs[0] / name).read_bytes()
            b = (outs[1] / name).read_bytes()
            assert a == b


class TestOverrides:
    def test_seed_flag_overrides_file(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        rc = main(["estimate-v", "--config", cfg, "--seed", "99",
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "summary.json").read_text())
        assert doc["seed"] == 99

    def test_seed_flag_satisfies_requirement_without_file(self, tmp_path, capsys):
        out = tmp_path / "o"
        rc = main(["verify", "--seed", "5", "--out", str(out)])
        assert rc == 0

    def test_env_out_dir(self, tmp_path, capsys, monkeypatch):
        cfg = write_config(tmp_path, MINIMAL)
        target = tmp_path / "via-env"
        monkeypatch.setenv("LILSTEP_OUT", str(target))
        rc = main(["estimate-v", "--config", cfg])
        assert rc == 0
        assert (target / "summary.json").exists()

    def test_flag_beats_env_for_out_dir(self, tmp_path, capsys, monkeypatch):
        cfg = write_config(tmp_path, MINIMAL)
        monkeypatch.setenv("LILSTEP_OUT", str(tmp_path / "env"))
        rc = main(["estimate-v", "--config", cfg, "--out", str(tmp_path / "flag")])
        assert rc == 0
        assert (tmp_path / "flag" / "summary.json").exists()
        assert not (tmp_path / "env").exists()

    def test_env_workers_parsed_and_validated(self, tmp_path, capsys, monkeypatch):
        cfg = write_config(tmp_path, MINIMAL)
        monkeypatch.setenv("LILSTEP_WORKERS", "notanint")
        rc = main(["estimate-v", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "LILSTEP_WORKERS" in capsys.readouterr().err

    def test_workers_flag_lands_in_resolved_echo(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        out = tmp_path / "o"
        main(["estimate-v", "--config", cfg, "--out", str(out), "--workers", "4"])
        assert "workers = 4" in (out / "resolved.ini").read_text()
