import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from invmetrics import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def cfg(**kw):
    base = dict(domain="disk", metrics="poincare,bergman", seed="0", budget="16")
    base.update({k: str(v) for k, v in kw.items()})
    return cli.load_config(None, base, environ={})


# ---- config


def test_config_file_sections_and_positions(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("domain = disk\nmetrics = poincare, bergman\nseed = 4\n\n[bergman]\ndegree = 30\n[tolerances]\nequivalence_tol = 1e-5\n")
    c = cli.load_config(str(p), environ={})
    assert c.seed == 4 and c.bergman.degree == 30 and c.tolerances.equivalence_tol == 1e-5
    assert c.metrics == ("poincare", "bergman")


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("domain = disk\nseed = 0\nmetrics = poincare\n[bergman]\ndegre = 3\n", 5, 9),
        ("domain = disk\nseed = 0\nmetrics = poincare\n[nope]\n", 4, 2),
        ("domain = disk\nseed\n", 2, 1),
        ("domain = disk\nseed = zero\nmetrics = poincare\n", 2, 8),
    ],
)
def test_config_errors_carry_line_and_column(tmp_path, text, line, col):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(cli.ConfigError) as exc:
        cli.load_config(str(p), environ={})
    assert (exc.value.line, exc.value.column) == (line, col)
    assert f":{line}:{col}:" in str(exc.value)


def test_seed_mandatory():
    with pytest.raises(cli.ConfigError, match="seed"):
        cli.load_config(None, {"domain": "disk", "metrics": "poincare"}, environ={})


def test_env_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("domain = disk\nmetrics = poincare\nseed = 1\n[bergman]\ndegree = 10\n")
    env = {"INVMETRICS_SEED": "9", "INVMETRICS_BERGMAN_DEGREE": "12", "OTHER": "x"}
    c = cli.load_config(str(p), environ=env)
    assert c.seed == 9 and c.bergman.degree == 12
    c2 = cli.load_config(str(p), {"seed": 3}, environ=env)
    assert c2.seed == 3


@given(st.integers(0, 2**31), st.integers(1, 500))
def test_config_hash_stable(seed, budget):
    a = cfg(seed=seed, budget=budget)
    b = cfg(seed=seed, budget=budget)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != cfg(seed=seed + 1, budget=budget).config_hash()


# ---- compute


def test_compute_empty_metrics_is_usage_error(capsys):
    code, _, err = run(["compute", "--domain", "disk", "--metrics", "", "--seed", "0"], capsys)
    assert code == cli.EXIT_USAGE and "empty metric list" in err


def test_bad_subcommand_is_usage_error(capsys):
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    capsys.readouterr()


def test_compute_punctured_disk(capsys):
    code, out, _ = run(["compute", "--domain", "punctured_disk", "--metrics", "poincare,bergman", "--seed", "0"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["columns"][-2:] == ["poincare", "bergman"]
    rows = doc["rows"]
    assert all(r[-1] is not None and math.isfinite(r[-1]) for r in rows)
    # smallest |z| sample carries the largest Poincare value
    small = min(rows, key=lambda r: abs(complex(r[0].replace(" ", ""))))
    assert small[-2] == max(r[-2] for r in rows) and small[-2] > 1e4


def test_compute_kobayashi_center(capsys):
    code, out, _ = run(
        ["compute", "--domain", "ball:r=1,n=1", "--metrics", "kobayashi", "--seed", "0", "--points", "0"], capsys
    )
    doc = json.loads(out)
    assert code == 0 and "K(z,xi)^2" in doc["semantics"]
    assert math.sqrt(doc["rows"][0][-1]) == pytest.approx(1.0, rel=1e-2)


def test_nonfinite_values_are_flagged():
    rep = cli.Report("compute", cfg(), ["x"], [[float("inf")]], flags=["x_divergent[0]"])
    doc = json.loads(rep.to_json())
    assert doc["rows"] == [[None]] and doc["flags"]
    c = cfg(format="csv")
    text = cli.Report("compute", c, ["x"], [[float("nan")]], flags=["x_divergent[0]"]).to_csv()
    assert "nan" not in text.lower().replace("semantics", "") and "# flag=x_divergent[0]" in text


# ---- compare


def test_compare_disk_poincare_bergman():
    rep = cli.cmd_compare(cfg(metrics="poincare,bergman", budget=32))
    a, b, lo, hi = rep.rows[0][:4]
    assert (a, b) == ("poincare", "bergman")
    assert lo <= hi and abs(lo - 1) < 1e-5 and abs(hi - 1) < 1e-5


def test_compare_disk_poincare_ke():
    rep = cli.cmd_compare(cfg(metrics="poincare,kahler_einstein", budget=32))
    lo, hi = rep.rows[0][2:4]
    assert abs(lo - 1) < 1e-6 and abs(hi - 1) < 1e-6


def test_compare_punctured_sup_ratio():
    rep = cli.cmd_compare(cfg(domain="punctured_disk", metrics="poincare,bergman", budget=40))
    lo = rep.rows[0][2]
    assert 1 / lo > 1e3


def test_compare_needs_two_metrics():
    with pytest.raises(cli.ConfigError):
        cli.cmd_compare(cfg(metrics="poincare"))


def test_compare_determinism(tmp_path, capsys):
    args = ["compare", "--domain", "disk", "--metrics", "poincare,bergman,kahler_einstein", "--seed", "3", "--budget", "12"]
    outs = []
    for fmt in ("json", "csv"):
        for _ in range(2):
            path = tmp_path / f"r.{fmt}"
            assert cli.main(args + ["--format", fmt, "-o", str(path)]) == 0
            outs.append(cli.strip_footer(path.read_text()))
    assert outs[0] == outs[1] and outs[2] == outs[3]


# ---- flow


def test_flow_einstein_window():
    c = cfg(metrics="kahler_einstein")
    c = cli.RunConfig(**{**c.__dict__, "flow": cli.FlowOptions(start="einstein", t_max=0.1)})
    lo, hi = cli.cmd_flow(c).summary["pinching_window"]
    assert lo == pytest.approx(-1.0, abs=1e-8)
    assert hi == pytest.approx(-1 / (1 + 0.4), abs=1e-8)


def test_flow_flat_window():
    c = cfg(metrics="kahler_einstein")
    c = cli.RunConfig(**{**c.__dict__, "flow": cli.FlowOptions(start="flat")})
    assert cli.cmd_flow(c).summary["pinching_window"] == [0.0, 0.0]


def test_flow_unstable_step_exit_code(tmp_path, capsys):
    p = tmp_path / "f.cfg"
    p.write_text("seed = 0\n[flow]\nstart = einstein\ndt = 0.1\n")
    code, _, err = run(["flow", "--config", str(p)], capsys)
    assert code == cli.EXIT_NUMERIC and "stability" in err


# ---- report


def _write(tmp_path, name, argv):
    path = tmp_path / name
    code = cli.main(argv + ["-o", str(path)])
    return code, path


def test_report_pass_fail_and_provenance(tmp_path, capsys):
    p = tmp_path / "a.cfg"
    p.write_text("domain = disk\nmetrics = poincare, bergman\nseed = 0\nbudget = 12\n[tolerances]\nequivalence_tol = 1e-5\n")
    code, good = _write(tmp_path, "good.json", ["compare", "--config", str(p)])
    code2, good_csv = _write(tmp_path, "good.csv", ["compute", "--config", str(p), "--format", "csv"])
    assert code == 0 and code2 == 0
    # format is part of the config, so compare the json report with itself
    assert cli.main(["report", str(good)]) == 0

    bad_cfg = tmp_path / "b.cfg"
    bad_cfg.write_text(p.read_text().replace("1e-5", "1e-14"))
    code, bad = _write(tmp_path, "bad.json", ["compare", "--config", str(bad_cfg)])
    assert code == cli.EXIT_ASSERT
    capsys.readouterr()
    assert cli.main(["report", str(bad)]) == cli.EXIT_ASSERT
    assert "FAIL equivalence[poincare/bergman]" in capsys.readouterr().out

    assert cli.main(["report", str(good), str(bad)]) == cli.EXIT_USAGE
    assert "provenance mismatch" in capsys.readouterr().err


def test_report_csv_roundtrip(tmp_path, capsys):
    code, path = _write(tmp_path, "c.csv", ["compare", "--domain", "disk", "--metrics", "poincare,bergman", "--seed", "0", "--format", "csv", "--budget", "8"])
    doc = cli.parse_report(path.read_text())
    assert doc["command"] == "compare" and doc["columns"][0] == "metric_a"
    assert cli.main(["report", str(path)]) == 0
    capsys.readouterr()


def test_report_malformed(tmp_path, capsys):
    p = tmp_path / "junk.json"
    p.write_text("{not json")
    assert cli.main(["report", str(p)]) == cli.EXIT_USAGE
    assert "junk.json" in capsys.readouterr().err
