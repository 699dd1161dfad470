"""End-to-end checks for the command-line layer: config parsing, file
formats, exit codes, and determinism of the emitted artifacts."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from bibo.bilevel import (
    MethodSpec,
    StudyConfig,
    StudyMode,
    compare_configs,
    make_objective,
    run_study,
    study_result_to_dict,
)
from bibo.cli import (
    ConfigError,
    build_compare_doc,
    load_experiment,
    main,
    read_trials_csv,
    render_compare_tables,
    write_trials_csv,
)
from bibo.objective import CANONICAL_SPACES, ObjectiveKind, ObjectiveSpec
from bibo.space import Level, ParamKind

STUB = str(Path(__file__).parent / "stub_echo.py")
CONFIGS = Path(__file__).parent.parent / "configs"


def write_config(tmp_path: Path, doc: dict, name: str = "config.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return str(path)


def small_run_config(**study_overrides) -> dict:
    study = {
        "mode": "bilevel",
        "outer_budget": 3,
        "inner_budget": 2,
        "init_outer": 2,
        "init_inner": 2,
        "candidates": 64,
        "seed": 7,
    }
    study.update(study_overrides)
    return {
        "objective": {"kind": "builtin", "name": "quadratic-bilevel"},
        "study": study,
    }


# ----------------------------------------------------------- config loading


class TestLoadExperiment:
    def test_canonical_space_fills_in_for_builtins(self, tmp_path):
        exp = load_experiment(write_config(tmp_path, small_run_config()))
        assert exp.space.names() == ["theta", "phi"]
        assert exp.objective.builtin_name == "quadratic-bilevel"
        assert exp.study.outer_budget == 3

    def test_explicit_space_parsed(self, tmp_path):
        doc = {
            "space": [
                {"name": "lr", "kind": "log-uniform", "level": "inner",
                 "bounds": [1e-4, 1e-1]},
                {"name": "opt", "kind": "categorical", "level": "outer",
                 "choices": ["sgd", "adam"]},
            ],
            "objective": {"kind": "external", "command": ["true"]},
        }
        exp = load_experiment(write_config(tmp_path, doc))
        assert exp.space.params[0].kind is ParamKind.LOG_UNIFORM
        assert exp.space.params[1].level is Level.OUTER
        assert exp.objective.kind is ObjectiveKind.EXTERNAL
        assert exp.objective.command == ("true",)

    def test_bad_bound_error_names_the_param(self, tmp_path):
        doc = small_run_config()
        doc["space"] = [
            {"name": "lr", "kind": "log-uniform", "level": "inner", "bounds": [0.0, 1.0]},
            {"name": "phi", "kind": "uniform", "level": "outer", "bounds": [0.0, 1.0]},
        ]
        with pytest.raises(ConfigError, match="lr"):
            load_experiment(write_config(tmp_path, doc))

    def test_json_error_carries_line_and_column(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "objective": ,\n}\n', encoding="utf-8")
        with pytest.raises(ConfigError, match=r"broken\.json:2:16"):
            load_experiment(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.json"):
            load_experiment(tmp_path / "nope.json")

    def test_unknown_top_level_key(self, tmp_path):
        doc = small_run_config()
        doc["extra"] = 1
        with pytest.raises(ConfigError, match="extra"):
            load_experiment(write_config(tmp_path, doc))

    def test_unknown_study_key(self, tmp_path):
        doc = small_run_config()
        doc["study"]["buget"] = 9
        with pytest.raises(ConfigError, match="buget"):
            load_experiment(write_config(tmp_path, doc))

    def test_budget_violation_rejected(self, tmp_path):
        doc = small_run_config(init_outer=9)
        with pytest.raises(ConfigError, match="init_outer"):
            load_experiment(write_config(tmp_path, doc))

    def test_space_required_for_external(self, tmp_path):
        doc = {"objective": {"kind": "external", "command": ["true"]}}
        with pytest.raises(ConfigError, match="space"):
            load_experiment(write_config(tmp_path, doc))

    def test_unknown_pairing_rejected(self, tmp_path):
        doc = small_run_config()
        doc["compare"] = {"pairings": ["EI-MAX"], "baseline": "EI-MAX", "seeds": [0]}
        with pytest.raises(ConfigError, match="EI-MAX"):
            load_experiment(write_config(tmp_path, doc))

    def test_baseline_must_be_a_pairing(self, tmp_path):
        doc = small_run_config()
        doc["compare"] = {"pairings": ["EI-UCB"], "baseline": "random", "seeds": [0]}
        with pytest.raises(ConfigError, match="baseline"):
            load_experiment(write_config(tmp_path, doc))

    def test_acq_override_parsed(self, tmp_path):
        doc = small_run_config()
        doc["study"]["acq_outer"] = {"variant": "UCB", "kappa": 0.5}
        exp = load_experiment(write_config(tmp_path, doc))
        assert exp.study.acq_outer.kappa == 0.5

    def test_bad_kappa_rejected(self, tmp_path):
        doc = small_run_config()
        doc["study"]["acq_outer"] = {"variant": "UCB", "kappa": -1}
        with pytest.raises(ConfigError, match="kappa"):
            load_experiment(write_config(tmp_path, doc))

    def test_shipped_configs_load(self):
        run_exp = load_experiment(CONFIGS / "default.json")
        assert run_exp.study.mode is StudyMode.BILEVEL
        assert run_exp.space.names() == ["lr", "batch_size", "weight_decay"]
        cmp_exp = load_experiment(CONFIGS / "compare.json")
        assert cmp_exp.compare is not None
        assert cmp_exp.compare.baseline == "random"
        assert len(cmp_exp.compare.seeds) == 20
        assert [label for label, _ in cmp_exp.compare.objectives] == [
            "quadratic-bilevel", "misaligned",
        ]


# ------------------------------------------------------------------ cmd_run


class TestRun:
    def test_writes_all_artifacts(self, tmp_path, capsys):
        cfg = write_config(tmp_path, small_run_config())
        out = tmp_path / "out"
        assert main(["run", cfg, "--out", str(out)]) == 0
        assert (out / "study.json").is_file()
        assert (out / "trials.csv").is_file()
        assert (out / "cumulative_best.csv").is_file()
        assert "ok:" in capsys.readouterr().out

        doc = json.loads((out / "study.json").read_text())
        assert doc["schema"] == "bilevel-bo/study/1"
        assert len(doc["trials"]) == 3 * 2
        assert doc["experiment"]["study"]["seed"] == 7

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, small_run_config())
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", cfg, "--out", str(a)]) == 0
        assert main(["run", cfg, "--out", str(b)]) == 0
        for name in ("study.json", "trials.csv", "cumulative_best.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_flag_overrides_and_is_recorded(self, tmp_path):
        cfg = write_config(tmp_path, small_run_config())
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", cfg, "--out", str(a), "--seed", "11"]) == 0
        assert main(["run", cfg, "--out", str(b)]) == 0
        doc = json.loads((a / "study.json").read_text())
        assert doc["experiment"]["study"]["seed"] == 11
        assert (a / "trials.csv").read_bytes() != (b / "trials.csv").read_bytes()

    def test_out_precedence(self, tmp_path, monkeypatch, capsys):
        doc = small_run_config(mode="random", outer_budget=4)
        doc["out"] = str(tmp_path / "from-config")
        cfg = write_config(tmp_path, doc)

        monkeypatch.setenv("BIBO_OUT", str(tmp_path / "from-env"))
        assert main(["run", cfg]) == 0
        assert (tmp_path / "from-env" / "study.json").is_file()
        assert not (tmp_path / "from-config").exists()

        assert main(["run", cfg, "--out", str(tmp_path / "from-flag")]) == 0
        assert (tmp_path / "from-flag" / "study.json").is_file()

        monkeypatch.delenv("BIBO_OUT")
        assert main(["run", cfg]) == 0
        assert (tmp_path / "from-config" / "study.json").is_file()
        capsys.readouterr()

    def test_random_mode_ignores_init_defaults(self, tmp_path, capsys):
        doc = {
            "objective": {"kind": "builtin", "name": "misaligned"},
            "study": {"mode": "random", "outer_budget": 3, "seed": 1},
        }
        cfg = write_config(tmp_path, doc)
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
        rows = (tmp_path / "o" / "trials.csv").read_text().splitlines()
        assert len(rows) == 1 + 3
        capsys.readouterr()

    def test_config_error_exits_2(self, tmp_path, capsys):
        doc = small_run_config()
        doc["space"] = [
            {"name": "lr", "kind": "log-uniform", "level": "inner", "bounds": [0.0, 1.0]},
            {"name": "phi", "kind": "uniform", "level": "outer", "bounds": [0.0, 1.0]},
        ]
        assert main(["run", write_config(tmp_path, doc)]) == 2
        err = capsys.readouterr().err
        assert "lr" in err

    def test_protocol_error_exits_3(self, tmp_path, capsys):
        doc = {
            "space": [
                {"name": "x", "kind": "uniform", "level": "outer", "bounds": [0.0, 1.0]},
            ],
            "objective": {
                "kind": "external",
                "command": [sys.executable, STUB, "wrong-id"],
            },
            "study": {"mode": "single-level", "outer_budget": 3, "init_outer": 2,
                      "seed": 0},
        }
        cfg = write_config(tmp_path, doc)
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 3
        assert "study failed" in capsys.readouterr().err

    def test_external_objective_round_trip(self, tmp_path, capsys):
        doc = {
            "space": [
                {"name": "x", "kind": "uniform", "level": "outer", "bounds": [0.0, 1.0]},
            ],
            "objective": {
                "kind": "external",
                "command": [sys.executable, STUB, "echo", "0.25", "0.75"],
            },
            "study": {"mode": "random", "outer_budget": 3, "seed": 0},
        }
        cfg = write_config(tmp_path, doc)
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
        doc_out = json.loads((tmp_path / "o" / "study.json").read_text())
        assert doc_out["best_val"] == 0.75
        assert all(t["train_loss"] == 0.25 for t in doc_out["trials"])
        # external children get timed; builtins stay at 0.0 for determinism
        assert all(t["wall_time"] > 0 for t in doc_out["trials"])
        capsys.readouterr()


# ---------------------------------------------------------------- trials.csv


class TestTrialsCsv:
    def test_round_trip_is_exact(self, tmp_path):
        space = CANONICAL_SPACES["quadratic-bilevel"]()
        spec = ObjectiveSpec(kind=ObjectiveKind.BUILTIN, builtin_name="quadratic-bilevel",
                             noise_std=0.05)
        cfg = StudyConfig(mode=StudyMode.BILEVEL, outer_budget=3, inner_budget=2,
                          init_outer=2, init_inner=2, candidates=64, seed=3)
        with make_objective(spec, space, study_seed=3) as objective:
            result = run_study(objective, space, cfg)
        path = tmp_path / "trials.csv"
        write_trials_csv(path, result.trials, space)
        assert read_trials_csv(path, space) == list(result.trials)

    def test_categoricals_and_failures_round_trip(self, tmp_path):
        from bibo.bilevel import TrialRecord
        from bibo.space import ParamSpec, SearchSpace

        space = SearchSpace(params=(
            ParamSpec("opt", ParamKind.CATEGORICAL, Level.OUTER,
                      choices=("sgd", "adamw")),
            ParamSpec("lr", ParamKind.LOG_UNIFORM, Level.INNER, bounds=(1e-4, 1.0)),
        ))
        trials = [
            TrialRecord(0, 0, {"opt": "sgd", "lr": 0.1 + 0.2}, 0.5, -1.25, "ok", 0.125),
            TrialRecord(0, 1, {"opt": "adamw", "lr": 1e-4}, None, None, "failed", 2.0),
        ]
        path = tmp_path / "trials.csv"
        write_trials_csv(path, trials, space)
        text = path.read_text()
        assert text.splitlines()[0] == (
            "outer_index,inner_index,opt,lr,train_loss,val_metric,status,wall_time"
        )
        assert ",,," in text  # failed trial leaves loss and metric cells empty
        assert read_trials_csv(path, space) == trials

    def test_header_is_in_space_order(self):
        from bibo.cli import trials_csv_header

        exp = load_experiment(CONFIGS / "default.json")
        assert ",".join(trials_csv_header(exp.space)) == (
            "outer_index,inner_index,lr,batch_size,weight_decay,"
            "train_loss,val_metric,status,wall_time"
        )


# ---------------------------------------------------------------- cmd_compare


class TestCompare:
    def small_compare_doc(self) -> dict:
        return {
            "space": [
                {"name": "theta", "kind": "uniform", "level": "outer",
                 "bounds": [0.0, 1.0]},
                {"name": "phi", "kind": "uniform", "level": "inner",
                 "bounds": [0.0, 1.0]},
            ],
            "study": {
                "mode": "bilevel", "outer_budget": 3, "inner_budget": 2,
                "init_outer": 2, "init_inner": 2, "candidates": 64, "seed": 0,
            },
            "compare": {
                "objectives": [{"kind": "builtin", "name": "quadratic-bilevel"}],
                "pairings": ["EI-UCB", "random"],
                "baseline": "random",
                "seeds": [0, 1],
            },
        }

    def test_artifacts_and_table(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.small_compare_doc())
        out = tmp_path / "out"
        assert main(["compare", cfg, "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        for name in ("compare.json", "compare.csv", "compare.txt"):
            assert (out / name).is_file()
        text = (out / "compare.txt").read_text()
        assert text in stdout
        assert "EI-UCB" in text and "random" in text
        assert "(76.82, 74.80) -> 2.70" in text
        assert "(75.98, 74.80) -> 1.58" in text
        assert "1.18" in text

        doc = json.loads((out / "compare.json").read_text())
        assert doc["schema"] == "bilevel-bo/compare/1"
        assert doc["objectives"] == ["quadratic-bilevel"]
        base = next(m for m in doc["methods"] if m["name"] == "random")
        assert base["improvement_rate"] is None
        assert len(base["per_objective"]["quadratic-bilevel"]["series"][0]) == 3 * 2

    def test_matches_direct_compare_configs(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.small_compare_doc())
        out = tmp_path / "out"
        assert main(["compare", cfg, "--out", str(out)]) == 0
        capsys.readouterr()
        doc = json.loads((out / "compare.json").read_text())

        exp = load_experiment(cfg)
        rows = compare_configs(
            exp.compare.objectives[0][1], exp.space, exp.study,
            list(exp.compare.methods), [0, 1],
        )
        for m_doc, row in zip(doc["methods"], rows):
            assert m_doc["name"] == row.method.name
            assert m_doc["per_objective"]["quadratic-bilevel"]["best_vals"] == list(
                row.best_vals
            )

    def test_jobs_flag_does_not_change_results(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.small_compare_doc())
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["compare", cfg, "--out", str(a)]) == 0
        assert main(["compare", cfg, "--out", str(b), "--jobs", "2"]) == 0
        capsys.readouterr()
        assert (a / "compare.json").read_bytes() == (b / "compare.json").read_bytes()

    def test_seed_flag_shrinks_the_grid(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.small_compare_doc())
        out = tmp_path / "out"
        assert main(["compare", cfg, "--out", str(out), "--seed", "5"]) == 0
        capsys.readouterr()
        doc = json.loads((out / "compare.json").read_text())
        assert doc["seeds"] == [5]
        assert len(doc["methods"][0]["per_objective"]["quadratic-bilevel"]["best_vals"]) == 1

    def test_compare_requires_compare_section(self, tmp_path, capsys):
        cfg = write_config(tmp_path, small_run_config())
        assert main(["compare", cfg]) == 2
        capsys.readouterr()


class TestCompareDoc:
    def method_result(self, name, best_vals):
        return type(
            "Row",
            (),
            {
                "method": MethodSpec(name, StudyMode.RANDOM),
                "best_vals": tuple(best_vals),
                "final_losses": tuple(0.0 for _ in best_vals),
                "series": tuple((v,) for v in best_vals),
                "median_best_val": lambda self: float(
                    sorted(v for v in self.best_vals)[len(self.best_vals) // 2]
                ),
                "median_final_loss": lambda self: 0.0,
            },
        )()

    def test_reference_rates_render_exactly(self):
        # fixture reproduces the documented reference pairs
        methods = [MethodSpec("A", StudyMode.RANDOM), MethodSpec("B", StudyMode.RANDOM),
                   MethodSpec("base", StudyMode.RANDOM)]
        rows = [self.method_result("A", [76.82]),
                self.method_result("B", [75.98]),
                self.method_result("base", [74.80])]
        doc = build_compare_doc(["obj"], {"obj": rows}, methods, [0], "base")
        by_name = {m["name"]: m for m in doc["methods"]}
        assert by_name["A"]["improvement_rate"] == 2.70
        assert by_name["B"]["improvement_rate"] == 1.58
        assert by_name["base"]["improvement_rate"] is None

        text = render_compare_tables(doc)
        assert "2.70" in text and "1.58" in text
        assert "recomputed" in text


# ------------------------------------------------------------------- report


class TestReport:
    def study_doc(self, vals):
        space = CANONICAL_SPACES["misaligned"]()
        spec = ObjectiveSpec(kind=ObjectiveKind.BUILTIN, builtin_name="misaligned")
        cfg = StudyConfig(mode=StudyMode.RANDOM, outer_budget=len(vals), seed=0)
        with make_objective(spec, space) as objective:
            result = run_study(objective, space, cfg)
        doc = study_result_to_dict(result)
        # rewrite metrics to the scripted values, keeping the record shape
        for t, v in zip(doc["trials"], vals):
            t["val_metric"] = v
        series = []
        for v in vals:
            series.append(max(series[-1], v) if series else v)
        doc["cumulative_best"] = series
        doc["best_val"] = max(vals)
        return doc

    def test_cumulative_recompute(self, tmp_path, capsys):
        path = tmp_path / "study.json"
        path.write_text(json.dumps(self.study_doc([1.0, 3.0, 2.0])), encoding="utf-8")
        assert main(["report", str(path), "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        text = (tmp_path / "report_cumulative.csv").read_text()
        assert text == "evaluation_index,value\n0,1.0\n1,3.0\n2,3.0\n"
        trials = (tmp_path / "report_trials.csv").read_text().splitlines()
        assert trials[0] == "evaluation_index,outer_index,inner_index,train_loss,val_metric"
        assert len(trials) == 1 + 3

    def test_defaults_to_input_directory(self, tmp_path, capsys):
        path = tmp_path / "study.json"
        path.write_text(json.dumps(self.study_doc([1.0, 2.0])), encoding="utf-8")
        assert main(["report", str(path)]) == 0
        capsys.readouterr()
        assert (tmp_path / "report_cumulative.csv").is_file()

    def test_inconsistent_cumulative_rejected(self, tmp_path, capsys):
        doc = self.study_doc([1.0, 3.0, 2.0])
        doc["cumulative_best"] = [1.0, 3.0, 9.0]
        path = tmp_path / "study.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["report", str(path)]) == 2
        assert "disagrees" in capsys.readouterr().err

    def test_empty_trials_rejected(self, tmp_path, capsys):
        doc = self.study_doc([1.0])
        doc["trials"] = []
        path = tmp_path / "study.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["report", str(path)]) == 2
        assert "no trials" in capsys.readouterr().err

    def test_unsupported_schema_rejected(self, tmp_path, capsys):
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"schema": "something/2"}), encoding="utf-8")
        assert main(["report", str(path)]) == 2
        assert "something/2" in capsys.readouterr().err

    def test_compare_report_emits_median_series(self, tmp_path, capsys):
        doc = {
            "schema": "bilevel-bo/compare/1",
            "objectives": ["obj"],
            "seeds": [0, 1, 2],
            "baseline": "random",
            "methods": [
                {
                    "name": "EI-UCB",
                    "per_objective": {
                        "obj": {
                            "best_vals": [2.0, 4.0, 6.0],
                            "final_losses": [0.0, 0.0, 0.0],
                            "median_best_val": 4.0,
                            "median_final_loss": 0.0,
                            # one failed seed and one short series
                            "series": [[1.0, 2.0, 3.0], None, [3.0, 6.0]],
                        }
                    },
                    "avg_median_best_val": 4.0,
                    "avg_median_final_loss": 0.0,
                    "improvement_rate": None,
                }
            ],
        }
        path = tmp_path / "compare.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["report", str(path), "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        text = (tmp_path / "report_series.csv").read_text()
        # medians over the surviving seeds, truncated to the shorter series
        assert text == (
            "method,objective,evaluation_index,median_value\n"
            "EI-UCB,obj,0,2.0\n"
            "EI-UCB,obj,1,4.0\n"
        )


# ------------------------------------------------------------- installed CLI


class TestEntryPoint:
    def test_module_invocation_reports_usage(self):
        proc = subprocess.run(
            [sys.executable, "-m", "bibo.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "run" in proc.stdout and "compare" in proc.stdout and "report" in proc.stdout

    def test_run_help_mentions_flags(self):
        proc = subprocess.run(
            [sys.executable, "-m", "bibo.cli", "run", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "--out" in proc.stdout and "--seed" in proc.stdout
