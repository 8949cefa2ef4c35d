import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from bdsde.cli import main


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_constant_writes_flat_rows(tmp_path):
    assert run(tmp_path, "simulate", "--preset", "constant", "--levels", "4", "--paths", "10") == 0
    rows = _rows(tmp_path / "backward.csv")
    assert len({r["path_id"] for r in rows}) == 10
    assert all(float(r["y"]) == pytest.approx(1.0, abs=1e-12) for r in rows)
    assert (tmp_path / "value_table.csv").exists() and (tmp_path / "forward.csv").exists()


def test_simulate_martingale_y_equals_x(tmp_path):
    assert run(tmp_path, "simulate", "--preset", "martingale", "--levels", "8", "--paths", "20") == 0
    x = np.array([float(r["x_0"]) for r in _rows(tmp_path / "forward.csv")])
    y = np.array([float(r["y"]) for r in _rows(tmp_path / "backward.csv")])
    assert np.max(np.abs(x - y)) < 1e-6


def test_simulate_with_truncation_and_noise_dump(tmp_path):
    assert run(tmp_path, "simulate", "--preset", "quad", "--levels", "8", "--paths", "5",
               "--truncate", "on", "--dump-noise") == 0
    assert (tmp_path / "ledger.csv").exists() and (tmp_path / "noise.bdsn").exists()
    ledger = _rows(tmp_path / "ledger.csv")
    assert float(ledger[-1]["c_i"]) == 2.0 and float(ledger[-1]["q_i"]) == 1.0


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.config"
    cfg.write_text("# example\npreset = constant\npaths = 7\nlevels = 2\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--paths", "3", "--out", str(out)]) == 0
    resolved = (out / "resolved.config").read_text()
    assert "paths = 3" in resolved and "preset = constant" in resolved
    assert "out" not in [line.split(" = ")[0] for line in resolved.splitlines()]


def test_exit_code_usage_errors(tmp_path):
    assert run(tmp_path, "converge", "--preset", "nope") == 2
    assert run(tmp_path, "simulate", "--levels", "8,4") == 2
    bad = tmp_path / "bad.config"
    bad.write_text("colour = blue\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2
    assert run(tmp_path, "simulate", "--preset", "quad", "--mode", "per-path-b", "--levels", "4",
               "--paths", "5") == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--provider", "crystal-ball"])
    assert exc.value.code == 2


def test_exit_code_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--out", str(blocker / "sub")]) == 2


def test_exit_code_numeric_failure(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--preset", "quad", "--levels", "1", "--paths", "5") == 3
    assert "numerical failure" in capsys.readouterr().err


def test_exit_code_band(tmp_path):
    cfg = tmp_path / "band.config"
    cfg.write_text("slope_low = 5\nslope_high = 6\nb_realizations = 2\n")
    out = tmp_path / "o"
    code = main(["converge", "--config", str(cfg), "--preset", "quad", "--levels", "4,8",
                 "--paths", "200", "--out", str(out)])
    assert code == 1


def test_converge_exact_preset(tmp_path):
    cfg = tmp_path / "c.config"
    cfg.write_text("b_realizations = 2\n")
    assert main(["converge", "--config", str(cfg), "--preset", "constant", "--levels", "4,8",
                 "--paths", "50", "--out", str(tmp_path / "o")]) == 0
    assert "exact" in (tmp_path / "o" / "converge.csv").read_text()


COMMANDS = {
    "simulate": ["--preset", "quad", "--levels", "8", "--paths", "9000", "--truncate", "on"],
    "converge": ["--preset", "quad", "--levels", "4,8", "--paths", "9000", "--config", "{cfg}"],
    "diagnose": ["--preset", "heat-quad", "--levels", "2,4", "--paths", "9000"],
    "regress-study": ["--preset", "quad", "--levels", "4", "--paths", "9000", "--config", "{cfg}"],
}


def _cli(args, out, threads):
    env = dict(os.environ, BDSDE_THREADS=str(threads))
    proc = subprocess.run([sys.executable, "-m", "bdsde.cli", *args, "--out", str(out)],
                          env=env, capture_output=True, text=True)
    return proc.returncode


@pytest.mark.slow
@pytest.mark.parametrize("command", list(COMMANDS))
def test_outputs_identical_across_thread_counts(tmp_path, command):
    cfg = tmp_path / "small.config"
    cfg.write_text("b_realizations = 2\ndecay_paths = 500,2000\nperturb_levels = 4,8\n")
    args = [command] + [a.format(cfg=cfg) for a in COMMANDS[command]]
    codes = [_cli(args, tmp_path / f"t{t}", t) for t in (1, 8)]
    assert codes[0] == codes[1] and codes[0] in (0, 1)
    names = sorted(os.listdir(tmp_path / "t1"))
    assert names == sorted(os.listdir(tmp_path / "t8"))
    for name in names:
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t8" / name).read_bytes(), name
