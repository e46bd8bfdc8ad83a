from __future__ import annotations

import csv
import json

import pytest

from nashmoser import artifacts
from nashmoser.cli import DEFAULTS, format_config, main, read_config_file, resolve_config


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--output.dir", str(out)])
    return code, out


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(lines[1:]))


def test_print_config_roundtrip(tmp_path, capsys):
    assert main(["print-config"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "c.ini"
    path.write_text(text)
    assert resolve_config(read_config_file(path)) == resolve_config()
    assert set(resolve_config()) == set(DEFAULTS)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nbogus = 1\n")
    with pytest.raises(KeyError):
        read_config_file(path)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        resolve_config(overrides={"seed": "-1"})


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nproblem.id = P0\nsolver.max_iter = 7\n")
    cfg = resolve_config(read_config_file(path), {"solver.max_iter": "9"})
    assert cfg["problem.id"] == "P0" and cfg["solver.max_iter"] == 9
    assert cfg["y.band"] == "3"  # P0 preset applied under explicit values
    assert "problem.id = P0" in format_config(cfg)


def test_verify_space_default_and_controls(tmp_path):
    assert run(tmp_path, "verify-space", name="a")[0] == 0
    code, out = run(tmp_path, "verify-space", "--space.weight_power", "2", name="b")
    assert code == 1
    rep = json.loads((out / "reports" / "verify_space.json").read_text())
    assert rep["first_failure"]["element"]["truncation_order"] == 128
    assert run(tmp_path, "verify-space", "--space.N", "1", name="c")[0] == 0


def test_verify_problem_p0(tmp_path):
    code, out = run(tmp_path, "verify-problem", "--problem.id", "P0", "--sampler.samples", "40")
    assert code == 0
    summary = json.loads((out / "reports" / "verify_problem.json").read_text())
    assert all(v <= 1 + 1e-10 for v in summary["constants"].values())
    assert (out / "reports" / "condition_7.json").exists()


def test_verify_problem_rational_alpha(tmp_path, capsys):
    code, _ = run(tmp_path, "verify-problem", "--problem.alpha", "1/3")
    assert code == 1
    assert "divisor floor violated" in capsys.readouterr().out


def test_verify_problem_p3_records_lambda(tmp_path):
    code, out = run(tmp_path, "verify-problem", "--problem.id", "P3", "--problem.N", "32", "--sampler.samples", "40")
    assert code == 0
    assert "lambda_hat" in json.loads((out / "reports" / "verify_problem.json").read_text())


def test_solve_p0_default(tmp_path):
    code, out = run(tmp_path, "solve", "--problem.id", "P0")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] <= 3 and summary["final_residual"] < 1e-12


def test_solve_p2_default_and_artifacts(tmp_path):
    code, out = run(tmp_path, "solve")
    assert code == 0
    chash = artifacts.config_hash(resolve_config(overrides={"output.dir": str(out)}))
    for f in ("summary.json", "reports/diagnostics.json"):
        assert json.loads((out / f).read_text())["config_hash"] == chash
    for f in ("trace.csv", "diagnostics.csv"):
        assert (out / f).read_text().startswith(f"# config_hash={chash}")
    rows = read_csv(out / "trace.csv")
    assert list(rows[0])[:7] == ["p", "theta", "x_d", "x_s0", "z_d", "z_s0", "dx_d"]
    assert "run.log" in {p.name for p in out.iterdir()}


def test_solve_is_byte_deterministic(tmp_path):
    _, a = run(tmp_path, "solve", name="a")
    _, b = run(tmp_path, "solve", name="b")
    for f in ("trace.csv", "summary.json", "reports/diagnostics.json", "diagnostics.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_solve_far_outside_domain(tmp_path):
    with pytest.warns(UserWarning, match="outside V"):
        code, out = run(tmp_path, "solve", "--y.amplitude", "10*delta", "--solver.allow_outside", "true")
    assert code != 0
    assert json.loads((out / "summary.json").read_text())["status"] in ("left U", "Neumann divergence", "stagnation",
                                                                        "max_iter", "ceiling")


def test_solve_outside_v_refused(tmp_path):
    code, out = run(tmp_path, "solve", "--y.amplitude", "10*delta")
    assert code == 1
    assert json.loads((out / "summary.json").read_text())["status"] == "outside V"


def test_negative_index_rejected(tmp_path):
    with pytest.raises(ValueError):
        run(tmp_path, "solve", "--diagnostics.n_grid", "d-5")


def test_sweep_single_point_equals_solve(tmp_path):
    _, s = run(tmp_path, "solve", name="solve")
    code, w = run(tmp_path, "sweep", "--sweep.epsilon", "1e-3", "--sweep.workers", "1", name="sweep")
    assert code == 0
    row = read_csv(w / "sweep.csv")[0]
    summary = json.loads((s / "summary.json").read_text())
    assert row["status"] == summary["status"]
    assert int(row["iterations"]) == summary["iterations"]
    assert float(row["final_residual"]) == summary["final_residual"]


def test_sweep_order_and_parallel_determinism(tmp_path):
    args = ["sweep", "--sweep.epsilon", "0, 1e-4, 1e-3", "--sweep.amplitude", "delta/1000, delta/100"]
    _, a = run(tmp_path, *args, "--sweep.workers", "1", name="a")
    _, b = run(tmp_path, *args, "--sweep.workers", "3", name="b")
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    rows = read_csv(a / "sweep.csv")
    assert [(float(r["epsilon"]), r["amplitude"]) for r in rows] == [
        (e, amp) for e in (0.0, 1e-4, 1e-3) for amp in ("delta/1000", "delta/100")]
    by_eps = {float(r["epsilon"]): r for r in rows if r["amplitude"] == "delta/1000"}
    assert int(by_eps[0.0]["iterations"]) <= int(by_eps[1e-3]["iterations"])
    assert float(by_eps[0.0]["final_residual"]) <= float(by_eps[1e-3]["final_residual"])


def test_sweep_bisection_mode_emits_delta(tmp_path):
    code, out = run(tmp_path, "sweep", "--sweep.epsilon", "1e-4, 1e-3", "--sweep.delta_bisection", "true",
                    "--solver.delta", "analytic")
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    assert all(r["delta_source"] == "bisection" and float(r["delta"]) > 0 for r in rows)


def test_sweep_records_row_failures(tmp_path):
    code, out = run(tmp_path, "sweep", "--sweep.epsilon", "1e-3", "--problem.alpha", "0.5")
    assert code == 0
    assert read_csv(out / "sweep.csv")[0]["status"].startswith("error")
