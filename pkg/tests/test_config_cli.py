import json

import pytest

from cusplab.cli import main
from cusplab.config import ConfigError, parse_config

SQUARE = """[experiment]
kind = square-sanity
output = {out}

[geometry]
h0 = 0.015625

[solver]
k = 11
tol = 1e-8
seed = 0
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- parsing ------------------------------------------------------------------


def test_parse_defaults():
    cfg = parse_config("[experiment]\nkind = ball-volume\noutput = x\n")
    assert cfg.kind == "ball-volume" and cfg.output == "x"
    assert cfg.solver.tol == 1e-8 and cfg.solver.cache is True
    assert cfg.geometry.alpha == 2.0 and cfg.model.eps is None


def test_parse_lists_and_types():
    cfg = parse_config("[experiment]\nkind=manifold-hardy\noutput=o\n[model]\nalpha = 1, 1.5\nU_max = 1e3,1e4\nN_grid = 0\n[solver]\ncache = no\n")
    assert cfg.model.alpha == [1.0, 1.5] and cfg.model.U_max == [1e3, 1e4]
    assert cfg.solver.cache is False


@pytest.mark.parametrize(
    "text, key, line",
    [
        ("[experiment]\nkind = square-sanity\noutput = o\nbogus = 1\n", "experiment.bogus", 4),
        ("[experiment]\nkind = square-sanity\noutput = o\n[solver]\n\ntol = abc\n", "solver.tol", 6),
        ("[experiment]\nkind = square-sanity\noutput = o\n[solver]\ntol = 1.0\n", "solver.tol", 5),
        ("[experiment]\nkind = nope\noutput = o\n", "experiment.kind", 2),
        ("[experiment]\nkind = square-sanity\noutput = o\n[mesh]\nh0 = 0.1\n", "mesh", 4),
        ("[experiment]\nkind = square-sanity\noutput = o\n[geometry]\nw_min = 1e-3,,1e-4\n", "geometry.w_min", 5),
        ("[experiment]\nkind = square-sanity\noutput = o\n[solver]\nk = 2.5\n", "solver.k", 5),
        ("[experiment]\nkind = square-sanity\noutput = o\n[geometry]\nalpha = nan\n", "geometry.alpha", 5),
        ("[experiment]\nkind = square-sanity\noutput = o\noutput = p\n", "output", 4),
    ],
)
def test_parse_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "t.ini")
    assert exc.value.key == key
    assert exc.value.line == line
    assert f"t.ini:{line}" in str(exc.value)


def test_parse_missing_output():
    with pytest.raises(ConfigError) as exc:
        parse_config("[experiment]\nkind = square-sanity\n")
    assert exc.value.key == "experiment.output"


def test_shipped_configs_parse():
    from pathlib import Path

    files = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))
    assert len(files) == 8
    for f in files:
        parse_config(f.read_text(), str(f))


# -- CLI ----------------------------------------------------------------------


def test_unknown_key_exit_2_and_no_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write(tmp_path, SQUARE.format(out=out) + "color = blue\n")
    assert main(["run", str(cfg)]) == 2
    assert "solver.color" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "absent.ini")]) == 2


def test_usage_error_exit_2():
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_run_square_and_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(write(tmp_path, SQUARE.format(out=out)))]) == 0
    assert "PASS square: first 10 nonzero" in capsys.readouterr().out
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["failed_stage"] is None
    assert set(man["outputs"]) == {"eigenvalues.csv", "summary.txt"}
    assert man["config"]["solver"]["k"] == 11
    assert len(man["inputs"]["config_sha256"]) == 64
    assert {"numpy", "scipy", "python", "cusplab"} <= set(man["versions"])


def test_output_override(tmp_path):
    cfg = write(tmp_path, SQUARE.format(out=tmp_path / "a"))
    assert main(["run", str(cfg), "-o", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "eigenvalues.csv").exists() and not (tmp_path / "a").exists()


def test_repeat_runs_bit_identical(tmp_path):
    text = SQUARE.replace("seed = 0", "seed = 0\ncache = false")
    for name in ("a", "b"):
        assert main(["run", str(write(tmp_path, text.format(out=tmp_path / name), f"{name}.ini"))]) == 0
    assert (tmp_path / "a" / "eigenvalues.csv").read_bytes() == (tmp_path / "b" / "eigenvalues.csv").read_bytes()


def test_warm_cache_identical(tmp_path, capsys):
    cfg = write(tmp_path, SQUARE.format(out=tmp_path / "cold"))
    assert main(["run", str(cfg)]) == 0
    assert main(["run", str(cfg), "-o", str(tmp_path / "warm")]) == 0
    cold = json.loads((tmp_path / "cold" / "manifest.json").read_text())
    warm = json.loads((tmp_path / "warm" / "manifest.json").read_text())
    assert [v["hit"] for v in cold["inputs"]["cache"].values()] == [False]
    assert [v["hit"] for v in warm["inputs"]["cache"].values()] == [True]
    assert (tmp_path / "cold" / "eigenvalues.csv").read_bytes() == (tmp_path / "warm" / "eigenvalues.csv").read_bytes()
    capsys.readouterr()
    assert main(["cache", "status"]) == 0
    assert "1 entries" in capsys.readouterr().out


def test_cache_verify_quarantines_and_clear(tmp_path, capsys, monkeypatch):
    cache_dir = tmp_path / "cache"
    cfg = write(tmp_path, SQUARE.format(out=tmp_path / "run"))
    monkeypatch.setenv("LAB_CACHE_DIR", str(cache_dir))
    assert main(["run", str(cfg)]) == 0
    assert main(["cache", "verify", "--dir", str(cache_dir)]) == 0
    (f,) = [p for p in cache_dir.iterdir() if p.is_file()]
    data = bytearray(f.read_bytes())
    data[-10] ^= 0xFF
    f.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["cache", "verify", "--dir", str(cache_dir)]) == 1
    assert "1 quarantined" in capsys.readouterr().out
    assert main(["cache", "clear", "--dir", str(cache_dir)]) == 0
    assert main(["cache", "status", "--dir", str(cache_dir)]) == 0
    assert "0 entries" in capsys.readouterr().out


def test_manifest_written_on_failure(tmp_path, capsys):
    out = tmp_path / "run"
    text = SQUARE.format(out=out).replace("h0 = 0.015625", "h0 = 0.5").replace("k = 11", "k = 50")
    assert main(["run", str(write(tmp_path, text))]) == 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed"
    assert man["failed_stage"] == "eigensolve"
    assert man["error"]
    assert "status: failed" in (out / "summary.txt").read_text()


def test_check_command(tmp_path, capsys):
    out = tmp_path / "chk"
    assert main(["check", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    assert "status: ok" in text and "FAIL" not in text
    assert (out / "estbasic.csv").exists()
