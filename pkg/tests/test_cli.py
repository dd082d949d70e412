import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nappal.cli import main
from nappal.trace import Trace

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL = """
[problem]
builder = "sharing"
seed = 2
[problem.params]
N = 2
block_dims = 2
m = 3
[solver]
max_iters = {iters}
{extra}
"""


def test_solve_happy_path(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.format(iters=50000, extra=""))
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    trace = Trace.read_csv(out / "trace.csv")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"] == "converged"
    assert summary["trace_rows"] == len(trace)
    assert summary["gamma"] > summary["gamma_bound"]
    assert set(summary["constants"]) >= {"c1", "c2", "c3", "c4"}
    assert len(summary["final"]["u"]) == 4 and len(summary["best"]["iterate"]["p"]) == 3


def test_solve_max_iters_exit_2(tmp_path):
    cfg = write(tmp_path, SMALL.format(iters=1, extra=""))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_gamma_below_bound_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.format(iters=10, extra="gamma = 0.5"))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "sqrt(57)" in err and "must exceed" in err


@pytest.mark.parametrize("text", [
    "[problem]\nbuilder = 'sharing'\nsede = 1\n",
    "[problem]\nbuilder = 'sharing'\n[problem.params]\nNN = 3\n",
    "[problem]\nbuilder = 'sharing'\n[solver]\nmax_iter = 3\n",
    "[problem]\nbuilder = 'nope'\n",
    "[problem]\n",
    "[problem\nbuilder=",
    "[problem]\nbuilder = 'sharing'\n[solver]\ngamma = 'big'\n",
    "[problem]\nbuilder = 'sharing'\n[problem.params]\nN = 0\n",
])
def test_bad_configs_exit_1(tmp_path, text, capsys):
    cfg = write(tmp_path, text)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert main(["validate", "--config", cfg]) == 1
    assert "error" in capsys.readouterr().err


def test_validate_shipped(capsys):
    assert main(["validate", "--config", str(CONFIGS / "sharing.toml")]) == 0
    assert "validation passed" in capsys.readouterr().out


def test_validate_halved_LG(tmp_path, capsys):
    text = (CONFIGS / "sharing.toml").read_text().replace(
        "[solver]", "[problem.overrides]\nL_G_scale = 0.5\n\n[solver]")
    cfg = write(tmp_path, text)
    assert main(["validate", "--config", cfg]) == 1
    out = capsys.readouterr().out
    assert "[FAIL    ] G descent in v" in out


def test_seed_override_and_determinism(tmp_path):
    cfg = write(tmp_path, SMALL.format(iters=300, extra=""))
    a, b, c = (tmp_path / x for x in "abc")
    assert main(["solve", "--config", cfg, "--out", str(a), "--seed-override", "5"]) == 2
    assert main(["solve", "--config", cfg, "--out", str(b), "--seed-override", "5",
                 "--workers", "4"]) == 2
    assert main(["solve", "--config", cfg, "--out", str(c)]) == 2
    ta, tb, tc = ((d / "trace.csv").read_bytes() for d in (a, b, c))
    assert ta == tb and ta != tc


def test_trace_stride_flag(tmp_path):
    cfg = write(tmp_path, SMALL.format(iters=100, extra=""))
    main(["solve", "--config", cfg, "--out", str(tmp_path), "--trace-stride", "25"])
    assert Trace.read_csv(tmp_path / "trace.csv")["k"].tolist() == [0, 25, 50, 75, 100]


def test_report_roundtrip(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.format(iters=400, extra=""))
    main(["solve", "--config", cfg, "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "trace.csv")]) == 0
    out = capsys.readouterr().out
    for line in ("descent: 0", "certificate: 0", "dual_identity: 0", "best_index:", "rate:"):
        assert line in out


def test_report_counts_corrupted_row(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.format(iters=100, extra=""))
    main(["solve", "--config", cfg, "--out", str(tmp_path)])
    tr = Trace.read_csv(tmp_path / "trace.csv")
    tr.records[40].Lambda += 10.0
    tr.to_csv(tmp_path / "bad.csv")
    capsys.readouterr()
    main(["report", str(tmp_path / "bad.csv")])
    assert "descent: 1" in capsys.readouterr().out


def test_report_empty_trace(tmp_path):
    from nappal.trace import TRACE_COLUMNS
    p = tmp_path / "empty.csv"
    p.write_text(",".join(TRACE_COLUMNS) + "\n")
    assert main(["report", str(p)]) == 1
    p.write_text("")
    assert main(["report", str(p)]) == 1


def test_instance_file_config(tmp_path):
    from nappal import build_erm
    from nappal.problems import save_instance
    save_instance(build_erm(seed=4), tmp_path / "inst.json")
    cfg = write(tmp_path, '[problem]\ninstance = "inst.json"\n[solver]\nmax_iters = 30\n')
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, SMALL.format(iters=5, extra=""))
    proc = subprocess.run([sys.executable, "-m", "nappal", "solve", "--config", cfg,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "max_iters after 5 iterations" in proc.stdout
