import json

import numpy as np
import pytest

from csduality.cli import main, parse_config, run
from csduality.errors import ConfigError


def _csv(path):
    body = [line for line in open(path, encoding="utf-8") if not line.startswith("#")]
    return np.genfromtxt(body, delimiter=",", names=True, dtype=None, encoding="utf-8")


def test_flag_overrides_file(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# spectral run\nbeta = 1.0\nT = 2.0\n")
    cfg = parse_config(["spectral", "--config", str(cfg_file), "--beta", "0.5"])
    assert cfg["beta"] == [0.5]
    assert cfg["T"] == 2.0
    assert cfg["mu"] == 1.0


def test_missing_required_key_named():
    with pytest.raises(ConfigError) as err:
        parse_config(["spectral"])
    assert "beta" in str(err.value)


def test_all_problems_reported(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("a = -0.1\nfoo = 3\nT = zero\n")
    with pytest.raises(ConfigError) as err:
        parse_config(["perturb", "--config", str(cfg_file)])
    probs = err.value.problems
    assert "a must be > 0" in probs
    assert any("foo" in p for p in probs)
    assert any(p.startswith("T:") for p in probs)
    assert any("beta" in p for p in probs)


def test_unknown_flag_and_exit_code(capsys):
    assert main(["jump", "--a", "0.001", "--beta", "0.5", "--k", "1", "--bogus", "2"]) == 1
    assert main(["perturb", "--a=-0.1", "--beta", "0.05"]) == 1
    assert "a must be > 0" in capsys.readouterr().err


def test_jump_output_deterministic(tmp_path):
    out1 = tmp_path / "j1.csv"
    args = ["jump", "--a", "0.002,0.001", "--beta", "0.5", "--k", "1", "--output", str(out1)]
    assert main(args) == 0
    first = out1.read_bytes()
    assert main(args) == 0
    assert out1.read_bytes() == first
    text = out1.read_text()
    assert "# csduality" in text and "# beta = 0.5" in text
    data = _csv(out1)
    assert np.all(data["converged"] == 1)
    assert np.all(np.abs(data["ratio"] - 0.5) < 0.02)


def test_failed_rows_flagged(tmp_path):
    out = tmp_path / "bad.csv"
    code = main(["jump", "--a", "0.001", "--beta", "0.5", "--k", "0,1", "--output", str(out)])
    assert code == 2
    data = _csv(out)
    assert list(data["converged"]) == [0, 1]
    assert np.isnan(data["ratio"][0])
    assert "# failure: IllConditionedFit" in out.read_text()


def test_spectral_grid_file_and_sidecar(tmp_path):
    out = tmp_path / "a.csv"
    code = main(["spectral", "--beta", "0,0.5", "--n_omega", "5", "--n_k", "3",
                 "--continuation", "eta", "--output", str(out)])
    assert code == 0
    data = _csv(out)
    assert data.dtype.names == ("beta", "omega", "k", "re_sigma", "im_sigma", "a_val", "converged")
    assert len(data) == 2 * 5 * 3
    assert np.all(data["a_val"] >= -1e-6 * np.max(data["a_val"]))
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["eta"] == 0.05 and meta["T"] == 1.0


def test_bethe_and_tba_columns(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bethe", "--c", "25,50,100", "--output", str(out)]) == 0
    d = _csv(out)
    ratio = d["difference"][:-1] / d["difference"][1:]
    assert np.all((ratio > 6) & (ratio < 10))
    out = tmp_path / "t.csv"
    assert main(["tba", "--c", "20", "--output", str(out)]) == 0
    d = _csv(out)
    assert abs(float(d["residual"])) < 1e-3


def test_validate_prints_pass_lines(capsys):
    assert main(["validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS ") for line in lines)


def test_perturb_columns(tmp_path):
    out = tmp_path / "p.csv"
    cfg = parse_config(["perturb", "--a", "0.04", "--beta", "0.05", "--regulator", "erf",
                        "--output", str(out)])
    assert run(cfg) == 0
    d = _csv(out)
    assert d.dtype.names[:7] == ("a", "beta", "e0", "e1", "e2", "e_closed", "cancel_residual")
    assert float(d["cancel_residual"]) == pytest.approx(float(d["e0"] + d["e1"] + d["e2"] - d["e_closed"]))
