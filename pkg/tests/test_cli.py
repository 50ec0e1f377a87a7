import numpy as np

from aggloc.cli import cli_main
from aggloc.experiment import ExperimentConfig, config_to_toml, initial_condition
from aggloc.grid import load_field


def write_config(tmp_path, config: ExperimentConfig):
    path = tmp_path / "config.toml"
    path.write_text(config_to_toml(config))
    return path


class TestValidateCommand:
    def test_case3_reports_rank_violation_with_exit_zero(self, capsys):
        code = cli_main(["validate", "--case", "3"])
        out = capsys.readouterr().out
        assert code == 0
        assert "rank 1 < N = 4" in out
        assert "violated" in out

    def test_case1_reports_pass(self, capsys):
        code = cli_main(["validate", "--case", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "rank 4 = N = 4" in out
        assert "pass" in out


class TestSimulateCommand:
    def test_zero_time_local_run_reproduces_initial_condition(self, tmp_path):
        out_dir = tmp_path / "runs"
        code = cli_main(
            [
                "simulate",
                "--case",
                "1",
                "--epsilon",
                "local",
                "--t-end",
                "0",
                "--grid",
                "64",
                "--out",
                str(out_dir),
            ]
        )
        assert code == 0
        config = ExperimentConfig(n=64, case=1, t_end=0.0)
        want = initial_condition(config, "local")
        loaded, meta = load_field(out_dir / "case1_eps_local" / "snapshot_s1_t0.csv")
        assert meta["species"] == 1
        assert np.array_equal(loaded.values, want.fields[0].values)

    def test_numeric_epsilon_accepted(self, tmp_path, capsys):
        config = ExperimentConfig(
            half_width=10.0, n=48, case=1, t_end=0.1, epsilons=(0.5,),
            out_dir=str(tmp_path / "runs"),
        )
        path = write_config(tmp_path, config)
        code = cli_main(["simulate", "--config", str(path), "--epsilon", "0.5"])
        assert code == 0
        assert "masses" in capsys.readouterr().out


class TestSweepCommand:
    def test_small_sweep_writes_table(self, tmp_path, capsys):
        config = ExperimentConfig(
            half_width=10.0, n=48, case=1, t_end=0.3, epsilons=(1.0, 0.5),
            out_dir=str(tmp_path / "runs"),
        )
        path = write_config(tmp_path, config)
        code = cli_main(["sweep", "--config", str(path)])
        out = capsys.readouterr().out
        assert code == 0
        assert (tmp_path / "runs" / "convergence.csv").is_file()
        assert "species 1" in out


class TestRadialCommand:
    def test_postprocesses_snapshots(self, tmp_path, capsys):
        out_dir = tmp_path / "runs"
        assert (
            cli_main(
                ["simulate", "--case", "1", "--epsilon", "local", "--t-end", "0",
                 "--grid", "64", "--out", str(out_dir)]
            )
            == 0
        )
        run_dir = out_dir / "case1_eps_local"
        snapshots = sorted(str(p) for p in run_dir.glob("snapshot_s*_t0.csv"))
        assert len(snapshots) == 4
        target = tmp_path / "radial.csv"
        code = cli_main(["radial", *snapshots, "--out", str(target)])
        assert code == 0
        header = target.read_text().splitlines()[0]
        assert header == "lambda,species_1,species_2,species_3,species_4"

    def test_mismatched_times_rejected(self, tmp_path, capsys):
        out_dir = tmp_path / "runs"
        cli_main(["simulate", "--case", "1", "--epsilon", "local", "--t-end", "0",
                  "--grid", "64", "--out", str(out_dir)])
        run_dir = out_dir / "case1_eps_local"
        snap = run_dir / "snapshot_s1_t0.csv"
        other = run_dir / "snapshot_s2_t0.json"
        # forge a different time in one sidecar
        import json

        meta = json.loads(other.read_text())
        meta["time"] = 5.0
        other.write_text(json.dumps(meta))
        code = cli_main(
            ["radial", str(snap), str(run_dir / "snapshot_s2_t0.csv"), "--out",
             str(tmp_path / "r.csv")]
        )
        assert code == 1
        assert "different times" in str(capsys.readouterr().err)


class TestExitCodes:
    def test_unknown_flag_exits_one(self, capsys):
        code = cli_main(["simulate", "--case", "1", "--wibble"])
        assert code == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_subcommand_exits_one(self):
        assert cli_main(["frobnicate"]) == 1

    def test_malformed_config_names_field_and_exits_one(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[grid]\nhalf_width = -3.0\nn = 64\n")
        code = cli_main(["validate", "--config", str(path)])
        assert code == 1
        assert "half_width" in capsys.readouterr().err

    def test_unknown_config_key_exits_one(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[grid]\nhalf_width = 10.0\nn = 64\nmystery = 1\n")
        code = cli_main(["validate", "--config", str(path)])
        assert code == 1
        assert "mystery" in capsys.readouterr().err

    def test_missing_config_file_exits_two(self, tmp_path, capsys):
        code = cli_main(["validate", "--config", str(tmp_path / "none.toml")])
        assert code == 2

    def test_solver_failure_exits_two(self, tmp_path, capsys):
        # an absurd coupling strength drives the drift past the blow-up limit
        config = ExperimentConfig(
            case=None,
            species=1,
            matrix=((1e7,),),
            variances=(0.1,),
            half_width=10.0,
            n=48,
            t_end=1.0,
            epsilons=(0.5,),
            out_dir=str(tmp_path / "runs"),
        )
        path = write_config(tmp_path, config)
        code = cli_main(["simulate", "--config", str(path), "--epsilon", "local"])
        assert code == 2
        err = capsys.readouterr().err
        assert "failure" in err or "error" in err

    def test_bad_epsilon_value_exits_one(self, capsys):
        assert cli_main(["simulate", "--case", "1", "--epsilon", "huge"]) == 1
        assert cli_main(["simulate", "--case", "1", "--epsilon", "-2"]) == 1
