import json

import numpy as np
import pytest

from liftq import cli, iq
from liftq.config import ConfigError, build_config, load_config, parse_config
from liftq.grids import PolicyGrid, SimplexGrid
from liftq.runner import derive_seed, resolve_out_dir


class TestConfig:
    def test_defaults(self):
        cfg = build_config("iq-twostate")
        assert (cfg.T, cfg.l, cfg.gamma, cfg.N_s, cfg.N_a, cfg.repeats) == (20, 0.4, 0.5, 20, 20, 20)
        naive_cfg = build_config("naive-inconsistency")
        assert (naive_cfg.T, naive_cfg.penalty, naive_cfg.epsilon) == (10000, 10.0, 0.1)
        sup = build_config("supply-mkv")
        assert (sup.T, sup.N_a, sup.l, sup.gamma) == (100, 20, 0.1, 0.6)

    def test_parse(self):
        cfg = parse_config("experiment = iq-twostate  # c\n\nlambda = 3\nN = 10\np0_list = 0.1, 0.2\n")
        assert cfg.penalty == 3.0 and cfg.N_s == cfg.N_a == 10 and cfg.p0_list == (0.1, 0.2)

    @pytest.mark.parametrize("text, needle", [
        ("experiment = nope", "experiment"),
        ("experiment = iq-twostate\ngamma = 1.5", "gamma"),
        ("experiment = iq-twostate\nfoo = 1", "unknown key"),
        ("experiment = iq-twostate\nT = x", ":2:"),
        ("experiment = iq-twostate\njust text", ":2:"),
        ("seed = 1", "experiment"),
        ("experiment = iq-twostate\np = 0.95", "p:"),
        ("experiment = supply-mkv\nmode = fast", "mode"),
    ])
    def test_errors_name_the_problem(self, text, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.cfg")

    def test_derive_seed(self):
        assert derive_seed(0, 0) == int(np.random.SeedSequence([0, 0]).generate_state(1, np.uint64)[0])
        assert derive_seed(0, 1) != derive_seed(0, 0) != derive_seed(1, 0)

    def test_out_precedence(self, monkeypatch):
        monkeypatch.delenv("LIFTQ_OUT", raising=False)
        assert resolve_out_dir("cfg", None) == "cfg"
        monkeypatch.setenv("LIFTQ_OUT", "env")
        assert resolve_out_dir("cfg", None) == "env"
        assert resolve_out_dir("cfg", "flag") == "flag"


class TestCli:
    def test_validate(self, tmp_path, capsys):
        good = tmp_path / "g.cfg"
        good.write_text("experiment = identity-check\n")
        assert cli.main(["validate", "--config", str(good)]) == 0
        bad = tmp_path / "b.cfg"
        bad.write_text("experiment = identity-check\ngamma = 2\n")
        assert cli.main(["validate", "--config", str(bad)]) == 1
        assert "gamma" in capsys.readouterr().err

    def test_mismatched_subcommand(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = identity-check\n")
        assert cli.main(["iq-twostate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_run_writes_manifest(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = identity-check\nnum_mdps = 2\nnum_pairs = 5\n")
        out = tmp_path / "o"
        assert cli.main(["identity-check", "--config", str(cfg), "--out", str(out), "--repeats", "2"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        assert manifest["seeds"] == [derive_seed(0, 0), derive_seed(0, 1)]
        assert (out / "identity_check_r1.csv").exists()

    def test_env_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LIFTQ_OUT", str(tmp_path / "envout"))
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = identity-check\nnum_mdps = 1\nnum_pairs = 2\n")
        assert cli.main(["identity-check", "--config", str(cfg)]) == 0
        assert (tmp_path / "envout" / "manifest.json").exists()

    def test_failure_exit_code(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = value-iteration\nN = 4\nmax_iters = 2\n")
        out = tmp_path / "o"
        assert cli.main(["value-iteration", "--config", str(cfg), "--out", str(out)]) == 2
        assert json.loads((out / "manifest.json").read_text())["status"] == "failed"

    def test_plot_flag(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = value-iteration\nN = 4\n")
        out = tmp_path / "o"
        assert cli.main(["value-iteration", "--config", str(cfg), "--out", str(out), "--plot"]) == 0
        assert (out / "vi_convergence_r0.png").stat().st_size > 0

    def test_show(self, tmp_path, capsys, env):
        Q = iq.IQTable.uniform(SimplexGrid(2, 2), PolicyGrid(2, 2, 2), 0.5, np.random.default_rng(0))
        Q.save(tmp_path / "q.txt")
        assert cli.main(["show", str(tmp_path / "q.txt"), "--top", "2"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 1 + 3
        assert cli.main(["show", str(tmp_path / "missing.txt")]) == 1
