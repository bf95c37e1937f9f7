import json
import subprocess
import sys

import numpy as np
import pytest

from sdtw_stabilize import cli, kernel, oracle
from sdtw_stabilize.stabilizers import diagonal_prior


def run(*argv):
    return cli.main([str(a) for a in argv])


def write_csv(path, M):
    cli.write_matrix(path, M)
    return path


TINY_TASK = {"n_frames": 24, "dim": 4, "segment_length_range": [2, 6],
             "n_train": 8, "n_val": 2, "n_test": 2, "master_seed": 1}


class TestAlign:
    def test_single_frame(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", [[0.25, -1.0]])
        assert run("align", "--pred", a, "--target", a, "--gamma", 1, "--out", tmp_path / "o") == 0
        assert cli.read_matrix(tmp_path / "o" / "alignment.csv").tolist() == [[1.0]]
        meta = json.loads((tmp_path / "o" / "meta.json").read_text())
        assert meta["cost"] == 0.0 and meta["cost_matrix_shape"] == [1, 1]

    def test_two_by_two_cost(self, tmp_path):
        # one-dimensional sequences whose squared distances give C = [[0, 1], [1, 0]]
        x = write_csv(tmp_path / "x.csv", [[0.0], [1.0]])
        y = write_csv(tmp_path / "y.csv", [[0.0], [1.0]])
        assert run("align", "--pred", x, "--target", y, "--gamma", 1, "--out", tmp_path / "o") == 0
        meta = json.loads((tmp_path / "o" / "meta.json").read_text())
        assert meta["cost"] == pytest.approx(-0.551445, abs=1e-6)
        assert cli.read_matrix(tmp_path / "o" / "cost.csv")[0, 0] == meta["cost"]
        np.testing.assert_array_equal(cli.read_matrix(tmp_path / "o" / "cost_matrix.csv"), [[0, 1], [1, 0]])

    def test_with_prior(self, tmp_path):
        rng = np.random.default_rng(0)
        X, Y = rng.random((12, 3)), rng.random((4, 3))
        x, y = write_csv(tmp_path / "x.csv", X), write_csv(tmp_path / "y.csv", Y)
        assert run("align", "--pred", x, "--target", y, "--gamma", 0.5,
                   "--prior-nu", 10, "--prior-omega", 2, "--out", tmp_path / "o") == 0
        C = kernel.cost_matrix(X, Y) + 2 * diagonal_prior(12, 4, 10.0)
        E = kernel.soft_alignment(kernel.sdtw_forward(C, 0.5), C)
        np.testing.assert_array_equal(cli.read_matrix(tmp_path / "o" / "alignment.csv"), E)
        meta = json.loads((tmp_path / "o" / "meta.json").read_text())
        assert meta["omega"] == 2.0 and meta["nu"] == 10.0

    def test_round_trip_bit_identical(self, tmp_path):
        M = np.random.default_rng(1).normal(size=(7, 5)) * 10.0 ** np.arange(-3, 2)
        M[0, 0] = 1e-300
        M[1, 1] = 0.1 + 0.2
        back = cli.read_matrix(write_csv(tmp_path / "m.csv", M))
        assert np.array_equal(back, M) and back.tobytes() == M.tobytes()

    def test_missing_file(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", [[1.0]])
        assert run("align", "--pred", tmp_path / "nope.csv", "--target", a, "--gamma", 1,
                   "--out", tmp_path / "o") == cli.EXIT_NOT_FOUND

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,abc\n")
        a = write_csv(tmp_path / "a.csv", [[1.0, 2.0]])
        assert run("align", "--pred", bad, "--target", a, "--gamma", 1, "--out", tmp_path / "o") == cli.EXIT_PARSE

    def test_dim_mismatch(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", [[1.0, 2.0]])
        b = write_csv(tmp_path / "b.csv", [[1.0]])
        assert run("align", "--pred", a, "--target", b, "--gamma", 1, "--out", tmp_path / "o") == cli.EXIT_INVALID
        assert not (tmp_path / "o").exists()

    def test_bad_gamma(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", [[1.0]])
        assert run("align", "--pred", a, "--target", a, "--gamma", 0, "--out", tmp_path / "o") == cli.EXIT_INVALID


class TestPrior:
    def test_figure_size(self, tmp_path):
        assert run("prior", "--rows", 500, "--cols", 50, "--nu", 1000, "--out", tmp_path / "p.csv") == 0
        P = cli.read_matrix(tmp_path / "p.csv")
        np.testing.assert_array_equal(P, diagonal_prior(500, 50, 1000.0))
        assert np.all(P[np.arange(500), np.arange(500) // 10] == 0)

    def test_square_diagonal(self, tmp_path):
        assert run("prior", "--rows", 3, "--cols", 3, "--nu", 1000, "--out", tmp_path / "p.csv") == 0
        assert np.all(np.diag(cli.read_matrix(tmp_path / "p.csv")) == 0)

    def test_hand_value(self, tmp_path):
        assert run("prior", "--rows", 4, "--cols", 2, "--nu", 1000, "--out", tmp_path / "p.csv") == 0
        assert cli.read_matrix(tmp_path / "p.csv")[3, 0] == pytest.approx(4.99875e-4, rel=1e-5)

    def test_invalid(self, tmp_path):
        assert run("prior", "--rows", 2, "--cols", 3, "--out", tmp_path / "p.csv") == cli.EXIT_INVALID
        assert run("prior", "--rows", 4, "--cols", 3, "--nu", -1, "--out", tmp_path / "p.csv") == cli.EXIT_INVALID


class TestOracleCheck:
    def test_small_run(self, capsys):
        assert run("oracle-check", "--max-n", 4, "--max-m", 4, "--trials", 2) == 0
        assert "PASS" in capsys.readouterr().out

    def test_zero_trials(self, capsys):
        assert run("oracle-check", "--trials", 0) == 0
        assert '"cases": 0' in capsys.readouterr().out

    def test_corrupted_kernel(self, monkeypatch, capsys):
        real = oracle.kernel.sdtw_forward

        def corrupted(C, gamma):
            res = real(C, gamma)
            if res.shape == (2, 3):
                return kernel.SdtwResult(res.cost + 1e-3, res.accumulator, res.gamma)
            return res

        monkeypatch.setattr(oracle.kernel, "sdtw_forward", corrupted)
        assert run("oracle-check", "--max-n", 3, "--max-m", 3, "--trials", 1, "--gammas", "1") == cli.EXIT_VERIFY
        out = capsys.readouterr().out
        report = json.loads(out[: out.rindex("}") + 1])
        assert {(f["n"], f["m"]) for f in report["failures"]} == {(2, 3)}

    def test_limits(self):
        assert run("oracle-check", "--max-n", 9) == cli.EXIT_INVALID
        assert run("oracle-check", "--gammas", "1,x") == cli.EXIT_PARSE


class TestTrain:
    def write_config(self, path, train, task=TINY_TASK, **extra):
        path.write_text(json.dumps({"task": task, "train": train, **extra}))
        return path

    def test_schedule_history_and_snapshots(self, tmp_path):
        cfg = self.write_config(tmp_path / "c.json", {
            "strategy": {"kind": "sdtw_gamma_schedule", "schedule": {"hold_epochs": 1, "decay_epochs": 2}},
            "max_epochs": 5, "batch_size": 4}, snapshots=True)
        code = run("train", "--config", cfg, "--out", tmp_path / "o")
        assert code in (0, cli.EXIT_COLLAPSE)
        lines = (tmp_path / "o" / "history.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,gamma,omega,learning_rate"
        gammas = [float(line.split(",")[3]) for line in lines[1:]]
        assert gammas == [10.0, 10.0, 5.05, 0.1, 0.1]
        snaps = sorted((tmp_path / "o" / "snapshots").iterdir())
        assert len(snaps) == 5 and cli.read_matrix(snaps[0]).shape[0] == 24
        metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
        assert metrics["collapsed"] == (code == cli.EXIT_COLLAPSE)
        written = json.loads((tmp_path / "o" / "config.json").read_text())
        assert written["train"]["learning_rate"] == 0.001 and written["task"]["dim"] == 4

    def test_strong_identity(self, tmp_path):
        task = {"input_noise_std": 0.0, "mixing": "identity", "n_train": 256, "n_val": 16, "n_test": 16}
        cfg = self.write_config(tmp_path / "c.json", {"max_epochs": 50}, task=task)
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == 0
        assert json.loads((tmp_path / "o" / "metrics.json").read_text())["test_f_measure"] >= 0.99

    def test_deterministic_files(self, tmp_path):
        cfg = self.write_config(tmp_path / "c.json", {"strategy": {"kind": "sdtw_fixed", "gamma": 1.0},
                                                       "max_epochs": 3, "batch_size": 4})
        run("train", "--config", cfg, "--out", tmp_path / "a")
        run("train", "--config", cfg, "--out", tmp_path / "b")
        for name in ("history.csv", "metrics.json", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert not list((tmp_path / "a").glob(".*tmp"))

    def test_collapse_exit_code(self, tmp_path):
        # all-zero output on a sparse task is a collapse by definition
        cfg = self.write_config(tmp_path / "c.json", {"strategy": {"kind": "sdtw_fixed", "gamma": 0.1},
                                                       "max_epochs": 1, "learning_rate": 10.0, "batch_size": 4})
        code = run("train", "--config", cfg, "--out", tmp_path / "o")
        metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
        assert metrics["collapsed"] and code == cli.EXIT_COLLAPSE

    def test_invalid_config(self, tmp_path):
        cfg = self.write_config(tmp_path / "c.json", {"learning_rate": -1})
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_INVALID
        cfg = self.write_config(tmp_path / "c.json", {"strategy": {"kind": "ctc"}})
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_INVALID
        cfg = self.write_config(tmp_path / "c.json", {}, task={"n_frame": 10})
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_INVALID

    def test_unparseable_and_missing(self, tmp_path):
        bad = tmp_path / "c.json"
        bad.write_text("{not json")
        assert run("train", "--config", bad, "--out", tmp_path / "o") == cli.EXIT_PARSE
        assert run("train", "--config", tmp_path / "none.json", "--out", tmp_path / "o") == cli.EXIT_NOT_FOUND


class TestSweep:
    def test_single_seed(self, tmp_path):
        cfg = tmp_path / "s.json"
        cfg.write_text(json.dumps({"task": TINY_TASK, "base": {"max_epochs": 2, "batch_size": 4},
                                   "strategies": [{"kind": "strong_mse"}], "n_seeds": 1}))
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o") == 0
        rows = (tmp_path / "o" / "summary.csv").read_text().splitlines()
        assert rows[0] == "strategy,mean_f,std_f,collapse_count"
        assert rows[1].split(",")[2] == "0.0"

    def test_per_seed_reaggregates(self, tmp_path):
        cfg = tmp_path / "s.json"
        cfg.write_text(json.dumps({
            "task": TINY_TASK, "base": {"max_epochs": 2, "batch_size": 4}, "n_seeds": 3,
            "strategies": [{"kind": "strong_mse"}, {"kind": "sdtw_fixed", "gamma": 1.0}]}))
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o") == 0
        per_seed = (tmp_path / "o" / "per_seed.csv").read_text().splitlines()
        header = per_seed[0].split(",")
        records = [dict(zip(header, line.split(","))) for line in per_seed[1:]]
        summary = (tmp_path / "o" / "summary.csv").read_text().splitlines()[1:]
        assert len(records) == 6 and len(summary) == 2
        for line in summary:
            name, mean, std, collapses = line.split(",")
            f = np.array([float(r["f_measure"]) for r in records if r["strategy"] == name])
            assert float(mean) == float(np.mean(f)) and float(std) == float(np.std(f))
            assert int(collapses) == sum(r["collapsed"] == "True" for r in records if r["strategy"] == name)
        js = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert [s["strategy"] for s in js["summary"]] == ["strong_mse", "sdtw_fixed(gamma=1)"]

    def test_duplicate_strategies(self, tmp_path):
        cfg = tmp_path / "s.json"
        cfg.write_text(json.dumps({"strategies": [{"kind": "strong_mse"}, {"kind": "strong_mse"}]}))
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_INVALID


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sdtw_stabilize", "prior", "--rows", "4", "--cols", "2",
                           "--out", str(tmp_path / "p.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert cli.read_matrix(tmp_path / "p.csv").shape == (4, 2)


def test_argparse_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run("align", "--gamma", "abc")
    assert exc.value.code == cli.EXIT_PARSE
