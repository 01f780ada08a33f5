import numpy as np
import pytest

from capwave import cli_io, trig_core, wave_operators
from capwave.cli_io import RunConfig, main
from capwave.trig_core import TrigSeries

BASE = ["--h", "1", "--k", "1", "--gamma", "1", "--sigma", "5", "--N", "32"]


def write_config(path, **kv):
    path.write_text("# test config\n" + "".join(f"{k} = {v}\n" for k, v in kv.items()))
    return path


class TestConfig:
    def test_file_and_overrides(self, tmp_path):
        f = write_config(tmp_path / "run.cfg", gamma=2.5, N=24, modes="1+,2-")
        cfg = RunConfig.from_file(f, {"sigma": "0.3"})
        assert (cfg.gamma, cfg.N, cfg.sigma) == (2.5, 24, 0.3)
        assert cli_io.parse_modes(cfg.modes) == [(1, 1), (2, -1)]
        assert cfg.flow_params().M == 96

    def test_round_trip(self):
        cfg = RunConfig(gamma=-1.25, sigma=0.2, N=20, max_points=17)
        again = RunConfig.from_mapping(cli_io.read_key_values(cfg.to_text()))
        assert again == cfg

    @pytest.mark.parametrize("text", ["bogus = 1\n", "N = twelve\n", "sigma = 0\n", "gamma\n",
                                      "N = 8\nN = 9\n", "ds_min = 1\nds_max = 0.1\n", "modes = 0+\n"])
    def test_rejected(self, tmp_path, text):
        (tmp_path / "bad.cfg").write_text(text)
        with pytest.raises(cli_io.InvalidConfig):
            RunConfig.from_file(tmp_path / "bad.cfg")

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        write_config(tmp_path / "bad.cfg", not_a_key=3)
        assert main(["bifpoints", "--config", str(tmp_path / "bad.cfg")]) == cli_io.EXIT_CONFIG
        assert "not_a_key" in capsys.readouterr().err

    def test_invalid_physics_exit_code(self):
        assert main(["bifpoints", "--sigma", "0"]) == cli_io.EXIT_CONFIG
        assert main(["bifpoints", "--h", "-1"]) == cli_io.EXIT_CONFIG


class TestBifpoints:
    def test_table(self, tmp_path):
        out = tmp_path / "bif.txt"
        assert main(["bifpoints", *BASE, "--n-max", "10", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].split()[1:] == list(cli_io.TABLE_COLUMNS)
        rows = [l.split() for l in lines[1:]]
        assert [int(r[0]) for r in rows] == list(range(1, 11))
        from capwave import linear_analysis as la
        p = RunConfig(gamma=1, sigma=5, N=32).flow_params()
        assert float(rows[1][2]) == la.bifurcation_lambdas(2, p)[1]
        # modes beyond N/4 are flagged
        assert [r[-1] for r in rows] == ["0"] * 8 + ["1"] * 2

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        main(["bifpoints", *BASE, "--out", str(a)])
        main(["bifpoints", *BASE, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


@pytest.fixture
def branch_file(tmp_path):
    out = tmp_path / "branch.txt"
    assert main(["continue", *BASE, "--mode", "1", "--max-points", "10", "--out", str(out)]) == 0
    return out


class TestContinue:
    def test_file_contents(self, branch_file):
        bf = cli_io.read_branch(branch_file)
        assert bf.verdict == "StepLimit"
        assert len(bf.records) == 10
        assert bf.header["mode"] == "1" and bf.header["sign"] == "1"
        assert bf.params.N == 32 and bf.params.sigma == 5
        s = [r["s"] for r in bf.records]
        assert s == sorted(s)

    def test_byte_identical(self, tmp_path, branch_file):
        again = tmp_path / "again.txt"
        main(["continue", *BASE, "--mode", "1", "--max-points", "10", "--out", str(again)])
        assert again.read_bytes() == branch_file.read_bytes()

    def test_default_name(self, tmp_path):
        assert main(["continue", *BASE, "--mode", "2", "--branch-sign", "-", "--max-points", "3",
                     "--direction", "-1", "--output-dir", str(tmp_path)]) == 0
        assert (tmp_path / "branch_2m_down.txt").exists()

    def test_stored_points_revalidate(self, branch_file):
        bf = cli_io.read_branch(branch_file)
        for r in bf.records:
            w = TrigSeries.from_cos(r["coeffs"])
            F = wave_operators.residual_F(r["lambda"], w, bf.params).sup_norm(bf.params.M)
            assert F <= 1e-12 * (1 + w.sup_norm(bf.params.M))
            assert r["m"] == pytest.approx(bf.params.m_from_lambda(r["lambda"]), abs=1e-15)

    def test_corrupt_file(self, tmp_path, branch_file):
        text = branch_file.read_text().replace("format=capwave-branch/1", "format=other")
        (tmp_path / "x.txt").write_text(text)
        with pytest.raises(cli_io.InvalidConfig):
            cli_io.read_branch(tmp_path / "x.txt")


class TestReconstruct:
    def test_first_point(self, branch_file, tmp_path, capsys):
        out = tmp_path / "profile.txt"
        assert main(["reconstruct", "--branch", str(branch_file), "--index", "0", "--out", str(out)]) == 0
        report = dict(l[2:].split("=", 1) for l in capsys.readouterr().out.splitlines() if l.startswith("# "))
        assert report["injective"] == "1" and report["above_bed"] == "1"
        assert float(report["bernoulli_sup"]) <= 1e-9
        data = np.loadtxt(out)
        bf = cli_io.read_branch(branch_file)
        s = bf.records[0]["coeffs"][0]
        # to first order the surface is (s/k) cos t
        assert np.abs(data[:, 2] - s * np.cos(data[:, 0])).max() <= 10 * s**2

    def test_bad_index(self, branch_file, capsys):
        assert main(["reconstruct", "--branch", str(branch_file), "--index", "30"]) == cli_io.EXIT_CONFIG
        assert "index" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["reconstruct", "--branch", str(tmp_path / "nope"), "--index", "0"]) == cli_io.EXIT_CONFIG


class TestVerify:
    def test_passes(self, branch_file, capsys):
        assert main(["verify", *BASE, "--branch", str(branch_file)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == len(cli_io.verification.DEFAULT_CHECKS) + 1
        assert all(l.startswith("PASS") for l in out)

    def test_wrong_bracket_constant_fails(self, branch_file, monkeypatch, capsys):
        monkeypatch.setattr(wave_operators, "bracket_constant",
                            lambda m, p: m / p.h - p.gamma * p.h / p.k)
        assert main(["verify", *BASE, "--branch", str(branch_file)]) == cli_io.EXIT_VERIFY
        fails = [l for l in capsys.readouterr().out.splitlines() if l.startswith("FAIL")]
        assert len(fails) >= 2

    def test_wrong_multiplier_fails(self, monkeypatch, capsys):
        original = trig_core.ckh_multiplier

        def tanh_symbol(n, kh):
            c = original(n, kh)
            return np.where(c != 0, 1 / np.where(c != 0, c, 1), 0.0)

        monkeypatch.setattr(trig_core, "ckh_multiplier", tanh_symbol)
        assert main(["verify", *BASE]) == cli_io.EXIT_VERIFY
        out = capsys.readouterr().out
        assert "FAIL linearisation" in out


class TestSweep:
    def test_outputs_and_determinism(self, tmp_path):
        argv = ["sweep", *BASE, "--max-points", "4", "--modes", "1+,1-", "--grid", "gamma=-1,1"]
        assert main(argv + ["--output-dir", str(tmp_path / "a")]) == 0
        assert main(argv + ["--output-dir", str(tmp_path / "b"), "--workers", "2"]) == 0
        for cell in ("cell_000", "cell_001"):
            for name in ("cell.txt", "bifpoints.txt", "branch_1p_up.txt", "branch_1m_up.txt"):
                assert (tmp_path / "a" / cell / name).read_bytes() == (tmp_path / "b" / cell / name).read_bytes()
        summary = (tmp_path / "a" / "summary.txt").read_text().splitlines()
        assert summary[0].startswith("0 ok") and "1+:StepLimit:4" in summary[0]

    def test_failed_cell_isolated(self, tmp_path):
        argv = ["sweep", *BASE, "--max-points", "3", "--grid", "sigma=0,5", "--output-dir", str(tmp_path)]
        assert main(argv) == cli_io.EXIT_ANOMALY
        assert (tmp_path / "cell_000" / "error.txt").read_text().startswith("InvalidParameters")
        assert (tmp_path / "cell_001" / "branch_1p_up.txt").exists()

    def test_bad_grid(self):
        assert main(["sweep", "--grid", "colour=1,2"]) == cli_io.EXIT_CONFIG
        with pytest.raises(cli_io.InvalidConfig):
            cli_io.parse_grid(["gamma"])
