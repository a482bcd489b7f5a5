# End-to-end checks of the command-line driver: every subcommand runs
# in-process via cli.main(argv) so exit codes and printed output are exact.
import numpy as np
import pytest

from modbe import cli
from modbe.dataset import load_dataset_csv
from modbe.evaluation import chain_classes, chain_mdp
from modbe.funcclass import FiniteClass, NestedSequence, save_sequence
from modbe.mdp import save_mdp


@pytest.fixture
def chain_files(tmp_path):
    mdp_path = tmp_path / "chain.mdp"
    cls_path = tmp_path / "chain.classes"
    save_mdp(chain_mdp(), str(mdp_path))
    save_sequence(chain_classes(), str(cls_path))
    return str(mdp_path), str(cls_path)


@pytest.fixture
def chain_data(chain_files, tmp_path):
    mdp_path, cls_path = chain_files
    data_path = str(tmp_path / "data.csv")
    rc = cli.main(["gen-data", "--mdp", mdp_path, "--n", "200",
                   "--seed", "7", "--out", data_path])
    assert rc == 0
    return mdp_path, cls_path, data_path


class TestGenData:
    def test_writes_loadable_csv(self, chain_files, tmp_path, capsys):
        mdp_path, _ = chain_files
        data_path = str(tmp_path / "d.csv")
        assert cli.main(["gen-data", "--mdp", mdp_path, "--n", "200",
                         "--seed", "7", "--out", data_path]) == 0
        assert "wrote 4 x 200 transitions" in capsys.readouterr().out
        data = load_dataset_csv(data_path)
        assert data.horizon == 4 and data.n == 200

    def test_same_seed_identical_bytes(self, chain_files, tmp_path):
        mdp_path, _ = chain_files
        outs = []
        for name in ("a.csv", "b.csv"):
            path = str(tmp_path / name)
            assert cli.main(["gen-data", "--mdp", mdp_path, "--n", "50",
                             "--seed", "3", "--out", path]) == 0
            outs.append(open(path, "rb").read())
        assert outs[0] == outs[1]

    def test_missing_mdp_is_usage_error(self, tmp_path, capsys):
        rc = cli.main(["gen-data", "--mdp", str(tmp_path / "nope.mdp"),
                       "--n", "50", "--out", str(tmp_path / "o.csv")])
        assert rc == 1
        assert "error: --mdp:" in capsys.readouterr().err

    def test_malformed_mdp_is_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.mdp"
        bad.write_text("not a header\n")
        rc = cli.main(["gen-data", "--mdp", str(bad), "--n", "50",
                       "--out", str(tmp_path / "o.csv")])
        assert rc == 1
        assert "error: --mdp:" in capsys.readouterr().err


class TestRunFQI:
    def test_prints_per_step_losses(self, chain_data, capsys):
        _, cls_path, data_path = chain_data
        rc = cli.main(["run-fqi", "--data", data_path, "--classes", cls_path,
                       "--k", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "fqi: class 3, horizon 4" in out
        assert out.count("validation_loss=") == 4

    def test_out_writes_q_tables(self, chain_data, tmp_path):
        _, cls_path, data_path = chain_data
        q_path = str(tmp_path / "q.txt")
        assert cli.main(["run-fqi", "--data", data_path, "--classes", cls_path,
                         "--k", "2", "--out", q_path]) == 0
        rows = [np.fromstring(l, sep=" ") for l in open(q_path)]
        assert len(rows) == 4 and all(len(r) == 8 for r in rows)  # H rows of S*A
        assert all(np.all((r >= 0) & (r <= 4)) for r in rows)

    def test_bad_class_index(self, chain_data, capsys):
        _, cls_path, data_path = chain_data
        rc = cli.main(["run-fqi", "--data", data_path, "--classes", cls_path,
                       "--k", "9"])
        assert rc == 1
        assert "outside [1, 3]" in capsys.readouterr().err

    def test_malformed_dataset(self, chain_data, tmp_path, capsys):
        _, cls_path, _ = chain_data
        bad = tmp_path / "bad.csv"
        bad.write_text("h,i,x,a,r,x_next\n1,0,0,zap,0.0,1\n")
        rc = cli.main(["run-fqi", "--data", str(bad), "--classes", cls_path])
        assert rc == 1
        assert "error: --data:" in capsys.readouterr().err


class TestRunModBE:
    def test_selects_and_reports_budget(self, chain_data, capsys):
        _, cls_path, data_path = chain_data
        rc = cli.main(["run-modbe", "--data", data_path, "--classes", cls_path,
                       "--schedule", "practical", "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "selected class:" in out and "of 3" in out
        assert "base calls:" in out and "erm calls:" in out

    def test_trace_is_deterministic(self, chain_data, tmp_path):
        _, cls_path, data_path = chain_data
        traces = []
        for name in ("t1.txt", "t2.txt"):
            path = str(tmp_path / name)
            assert cli.main(["run-modbe", "--data", data_path,
                             "--classes", cls_path, "--schedule", "practical",
                             "--seed", "5", "--trace", path]) == 0
            traces.append(open(path, "rb").read())
        assert traces[0] == traces[1] and len(traces[0]) > 0

    def test_single_class_skips_tests(self, chain_data, tmp_path, capsys):
        _, _, data_path = chain_data
        solo = tmp_path / "solo.classes"
        zero = np.zeros((4, 2))
        save_sequence(NestedSequence((FiniteClass((zero, zero + 1.0), clip_high=4.0),)),
                      str(solo))
        rc = cli.main(["run-modbe", "--data", data_path, "--classes", str(solo)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "selected class: 1 of 1" in out
        assert "test events: 0" in out

    def test_rejects_bad_schedule(self, chain_data):
        _, cls_path, data_path = chain_data
        rc = cli.main(["run-modbe", "--data", data_path, "--classes", cls_path,
                       "--schedule", "psychic"])
        assert rc == 1


class TestRunHoldout:
    def test_prints_all_scores(self, chain_data, capsys):
        _, cls_path, data_path = chain_data
        rc = cli.main(["run-holdout", "--data", data_path, "--classes", cls_path])
        assert rc == 0
        out = capsys.readouterr().out
        assert "selected class:" in out
        assert out.count("validation loss") == 3


class TestDiagnose:
    def test_chain_report(self, chain_files, capsys):
        mdp_path, cls_path = chain_files
        rc = cli.main(["diagnose", "--mdp", mdp_path, "--classes", cls_path])
        assert rc == 0
        out = capsys.readouterr().out
        assert "concentrability" in out and "class 3" in out

    def test_bad_mu_file(self, chain_files, tmp_path, capsys):
        mdp_path, cls_path = chain_files
        mu = tmp_path / "mu.txt"
        mu.write_text("0.5 0.5\n")
        rc = cli.main(["diagnose", "--mdp", mdp_path, "--classes", cls_path,
                       "--mu", str(mu)])
        assert rc == 1
        assert "error: --mu:" in capsys.readouterr().err


class TestBench:
    def _config(self, tmp_path, out_name, extra=""):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(
            "instance = chain\n"
            "n_list = 40\n"
            "seeds = 0, 1\n"
            "methods = modbe, holdout\n"
            "schedule = practical\n"
            f"output = {tmp_path / out_name}\n"
            + extra)
        return str(cfg)

    def test_runs_and_writes_csv(self, tmp_path, capsys):
        cfg = self._config(tmp_path, "res.csv")
        rc = cli.main(["bench", "--config", cfg, "--no-runtime"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "wrote 4 rows" in out and "mean_regret" in out
        lines = open(tmp_path / "res.csv").read().splitlines()
        assert lines[0] == "n,seed,method,selected_k,regret,runtime_ms"
        assert len(lines) == 5 and all(l.endswith(",") for l in lines[1:])

    def test_jobs_do_not_change_output(self, tmp_path):
        c1 = self._config(tmp_path, "r1.csv")
        assert cli.main(["bench", "--config", c1, "--no-runtime"]) == 0
        c2 = self._config(tmp_path, "r2.csv")
        assert cli.main(["bench", "--config", c2, "--no-runtime", "--jobs", "2"]) == 0
        assert open(tmp_path / "r1.csv", "rb").read() == open(tmp_path / "r2.csv", "rb").read()

    def test_unknown_instance(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("instance = lava\nn_list = 40\nseeds = 0\nmethods = modbe\n"
                       f"output = {tmp_path / 'x.csv'}\n")
        rc = cli.main(["bench", "--config", str(cfg)])
        assert rc == 1
        assert "unknown instance" in capsys.readouterr().err

    def test_missing_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("n_list = 40\nseeds = 0\nmethods = modbe\n")
        rc = cli.main(["bench", "--config", str(cfg)])
        assert rc == 1
        assert "missing config key" in capsys.readouterr().err


class TestUsage:
    def test_no_arguments(self, capsys):
        assert cli.main([]) == 1
        capsys.readouterr()

    def test_unknown_subcommand(self, capsys):
        assert cli.main(["frobnicate"]) == 1
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert cli.main(["--help"]) == 0
        capsys.readouterr()
