import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from needlet_ustat import cli
from needlet_ustat import density as dn
from needlet_ustat.errors import InvalidParameterError

DEMO = "configs/demo.cfg"


def test_schedule_examples():
    assert cli.parse_schedule("B^(j*(2*s+d)) * j", 2.0, 1.0, 1)(3) == 1536
    assert cli.parse_schedule("B^(j*d)", 2.0, 1.0, 1)(4) == 16
    assert cli.parse_schedule("  B ^ ( j * d ) * j ^ 2 * 0.5 ", 2.0, 1.0, 1)(3) == 8 * 9 * 0.5


def test_schedule_syntax_error_column():
    with pytest.raises(cli.ScheduleSyntaxError) as err:
        cli.parse_schedule("B^(j*")
    assert err.value.column == 5
    with pytest.raises(InvalidParameterError):
        cli.parse_schedule("B^(j*d/0)")
    with pytest.raises(cli.ScheduleSyntaxError):
        cli.parse_schedule("B^(j*x)")
    with pytest.raises(cli.ScheduleSyntaxError):
        cli.parse_schedule("B^(j*d) *")


@given(st.floats(0.1, 4), st.integers(0, 3), st.floats(0.5, 3), st.integers(1, 8))
def test_schedule_matches_closed_form(a, p, c, j):
    sched = cli.parse_schedule(f"B^(j*{a!r}) * j^{p} * {c!r}", 2.0, 1.0, 1)
    assert math.isclose(sched(j), 2.0 ** (j * a) * j**p * c, rel_tol=1e-12)
    # the canonical form parses back to the same schedule
    again = cli.parse_schedule(sched.canonical, 2.0, 1.0, 1)
    assert math.isclose(again(j), sched(j), rel_tol=1e-12)


def _cfg(tmp_path, **extra):
    base = open(DEMO).read()
    lines = [ln for ln in base.splitlines() if ln.split("=")[0].strip() not in extra]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_missing_config_exits_1(tmp_path, capsys):
    assert cli.main(["variance", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "config file not found" in capsys.readouterr().err


def test_bad_B_exits_1(tmp_path, capsys):
    assert cli.main(["variance", "--config", _cfg(tmp_path, B=0.5)]) == 1
    assert "B must exceed 1" in capsys.readouterr().err


def test_unknown_key_exits_1(tmp_path, capsys):
    assert cli.main(["variance", "--config", _cfg(tmp_path, colour="blue")]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_clt_demo_end_to_end(tmp_path):
    out = tmp_path / "clt"
    assert cli.main(["clt", "--regime", "ii", "--config", DEMO, "--output", str(out)]) == 0
    rec = json.loads((out / "summary.json").read_text())
    assert "fitted_slope" in rec and rec["regime"] == "ii"
    with open(out / "clt.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["j"]) for r in rows] == [2, 3, 4]


def test_csv_round_trip_and_seed_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["ustat", "eval", "--config", DEMO, "--output", str(out), "--seed", "9"]) == 0
    assert (a / "ustat.csv").read_text() == (b / "ustat.csv").read_text()
    assert cli.main(["variance", "--config", DEMO, "--output", str(a)]) == 0
    cfg = cli.load_config(DEMO)
    frame, density = cli._setup(cfg)
    from needlet_ustat import ustat as us
    with open(a / "variance.csv") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        j = int(r["j"])
        rep = us.exact_variance(us.compute_gram(frame, density, j, fourth=False), float(r["R_t"]), cfg.n, j)
        assert float(r["sigma_sq"]) == rep.sigma_sq
        assert float(r["chaos_norm"]) == rep.chaos_norms[int(r["p"]) - 1]


def test_density_file_round_trip(tmp_path):
    out = tmp_path / "d"
    assert cli.main(["density", "build", "--config", DEMO, "--output", str(out), "--s", "1.5",
                     "--jmax", "5", "--amplitude", "0.2"]) == 0
    back = dn.load_density(out / "density.txt")
    assert back.s == 1.5 and back.j_max == 5 and back.amplitude == 0.2
    cfg = cli.load_config(DEMO, {"s": 1.5, "density_levels": 5, "amplitude": 0.2})
    _, fresh = cli._setup(cfg)
    assert np.array_equal(back.spectrum, fresh.spectrum)


@pytest.mark.parametrize("argv, name", [
    (["frame", "validate"], "frame_validation.csv"),
    (["sample"], "points.csv"),
    (["bounds"], "bounds.csv"),
    (["depoissonize"], "depoissonize.csv"),
])
def test_other_subcommands(tmp_path, argv, name):
    out = tmp_path / "o"
    assert cli.main(argv + ["--config", DEMO, "--output", str(out)]) == 0
    assert (out / name).exists() and (out / "summary.json").exists()


def test_bad_arguments_exit_1():
    assert cli.main(["nosuch"]) == 1
    assert cli.main(["variance"]) == 1
