import json
import math

import numpy as np
import pytest

from vecgroth import cli, verify
from vecgroth.model import NumericError, sample_disorder


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_single_site_value_is_disorder_entry(capsys):
    code, out, _ = run(capsys, "ground-state", "--n-grid", "1", "--p", "3", "--replicas", "1", "--seed", "9")
    assert code == 0
    rows = cli.parse_csv(out)
    rep = [r for r in rows if r["row"] == "replica"][0]
    assert rep["value"] == pytest.approx(sample_disorder(9, 1, 0).g[0, 0], rel=4e-16)


def test_bit_identical_across_runs_and_workers(tmp_path, capsys):
    outputs = []
    for workers in ("1", "1", "2"):
        path = tmp_path / f"gs{len(outputs)}.csv"
        code, _, _ = run(capsys, "ground-state", "--n-grid", "6", "8", "--p", "1.5", "3", "--kappa", "1", "2",
                         "--replicas", "3", "--restarts", "2", "--seed", "5", "--workers", workers,
                         "--out", str(path))
        assert code == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]
    meta = json.loads((tmp_path / "gs0.csv.json").read_text())
    assert "wall_seconds" in meta and meta["config"]["seed"] == 5


def test_csv_round_trip(capsys):
    code, out, _ = run(capsys, "lagrangian", "--n-grid", "6", "--t-grid", "0.5", "1", "--replicas", "2",
                       "--restarts", "2")
    assert code == 0
    rows = cli.parse_csv(out)
    assert cli.to_csv(rows) == out
    assert out.splitlines()[0] == ",".join(cli.COLUMNS)
    assert all(r["aux_name"] == "gse_transform" for r in rows)
    agg = [r for r in rows if r["row"] == "aggregate"]
    assert len(agg) == 2 and all(math.isfinite(r["stderr"]) for r in agg)


def test_float_format_has_17_digits():
    text = cli.to_csv([cli._record(cli.ExperimentConfig(command="x"), value=0.1, converged=True)])
    assert "0.10000000000000001" in text and "true" in text


def test_quoting_follows_rfc4180():
    text = cli.to_csv([cli._record(cli.ExperimentConfig(command="x"), aux_name='a,"b"')])
    assert '"a,""b"""' in text
    assert cli.parse_csv(text)[0]["aux_name"] == 'a,"b"'


def test_constrained_lagrangian(capsys):
    code, out, _ = run(capsys, "lagrangian", "--constrained", "--n-grid", "6", "--kappa", "2",
                       "--d", "[[1.0, 0.2], [0.2, 0.5]]", "--replicas", "1", "--restarts", "1")
    assert code == 0
    assert len(cli.parse_csv(out)) == 2


def test_parisi_min_then_eval_reproduces_value(tmp_path, capsys):
    params = tmp_path / "best.json"
    code, out, _ = run(capsys, "parisi", "min", "--r-max", "1", "--params", str(params))
    assert code == 0
    best = cli.parse_csv(out)[0]["value"]
    code, out, _ = run(capsys, "parisi", "eval", "--params", str(params))
    assert code == 0
    assert cli.parse_csv(out)[0]["value"] == pytest.approx(best, abs=1e-8)


def test_asymptotics_table(capsys):
    code, out, _ = run(capsys, "asymptotics", "--p", "1.5", "2", "3", "--n-grid", "1024")
    rows = cli.parse_csv(out)
    assert code == 0
    assert rows[0]["value"] == pytest.approx(0.6558, abs=1e-4)
    assert rows[2]["value"] is None
    assert rows[3]["value"] == 64.0


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_grid": [1], "replicas": 2, "seed": 3}))
    code, out, _ = run(capsys, "ground-state", "--config", str(cfg), "--seed", "4")
    rows = [r for r in cli.parse_csv(out) if r["row"] == "replica"]
    assert code == 0 and len(rows) == 2
    assert rows[0]["value"] == pytest.approx(sample_disorder(4, 1, 0).g[0, 0], rel=4e-16)


@pytest.mark.parametrize("argv,field", [
    (["ground-state", "--seed", "-1"], "seed"),
    (["ground-state", "--replicas", "0"], "replicas"),
    (["ground-state", "--p", "0.5"], "p"),
    (["lagrangian", "--p", "2"], "p"),
    (["lagrangian", "--constrained", "--d", "[[1, 2], [2, 1]]", "--kappa", "2"], "d"),
    (["parisi", "eval"], "params"),
])
def test_config_errors_exit_one(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert field in err


def test_unknown_setting_exits_one(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    code, _, err = run(capsys, "ground-state", "--config", str(cfg))
    assert code == 1 and "colour" in err


def test_numeric_failure_exits_two(monkeypatch, capsys):
    def boom(cfg):
        raise NumericError("did not converge")
    monkeypatch.setattr(cli, "cmd_ground_state", boom)
    code, _, err = run(capsys, "ground-state")
    assert code == 2 and "did not converge" in err


def test_verify_linalg_passes(capsys):
    code, out, _ = run(capsys, "verify", "linalg")
    assert code == 0
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_verify_failure_exits_three(monkeypatch, capsys):
    def failing(trials=10, seed=0):
        rng = np.random.default_rng(seed)
        return [verify._run("demo", "always false", trials, rng, lambda r: {"x": float(r.random())},
                            lambda x: False)]
    monkeypatch.setitem(verify.SUITES, "linalg", failing)
    code, out, err = run(capsys, "verify", "linalg")
    assert code == 3
    assert "FAIL" in out and '"x"' in err


def test_quadrupled_replicas_halve_stderr(capsys):
    errs = []
    for reps in ("32", "128"):
        code, out, _ = run(capsys, "ground-state", "--n-grid", "4", "--p", "3", "--replicas", reps,
                           "--restarts", "1", "--seed", "1")
        errs.append([r for r in cli.parse_csv(out) if r["row"] == "aggregate"][0]["stderr"])
    assert 1.5 <= errs[0] / errs[1] <= 2.6
