import json
import os

import pytest

from talab.cli import run
from talab.config import ConfigError, hash_config, parse_config


def base_config(**overrides):
    cfg = {
        "version": "1",
        "n_weak": 2,
        "weak": {"kind": "uniform", "params": [], "support": [0, 1]},
        "strong": {"dist": {"kind": "uniform", "params": [], "support": [0, 2]}},
        "mc": {"n": 20000, "seed": 7},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def test_parse_minimal_ta_config():
    cfg = parse_config(base_config(mechanism={"kind": "ta"}))
    assert cfg.n_weak == 2
    assert cfg.mechanism == "ta"
    assert cfg.weak.support.hi == 1.0
    assert cfg.mc_n == 20000 and cfg.mc_seed == 7


def test_parse_reserve_semantic_error():
    with pytest.raises(ConfigError) as err:
        parse_config(base_config(mechanism={"kind": "sa_reserve", "reserve": 0.5}))
    messages = {path: msg for path, msg in err.value.errors}
    assert "mechanism.reserve" in messages
    assert "r >= v_bar" in messages["mechanism.reserve"]


def test_parse_collects_every_violation():
    bad = base_config(mechanism={"kind": "sa_reserve", "reserve": 0.5})
    bad["mystery"] = 1
    bad["mc"] = {"n": 0}
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    paths = {path for path, _ in err.value.errors}
    assert {"mystery", "mechanism.reserve", "mc.n"} <= paths


def test_parse_discrete_feasibility():
    cfg = base_config(strong={"atom": {"k": 2.0, "p": 0.4}},
                      mechanism={"kind": "ta_discrete"})
    with pytest.raises(ConfigError, match="not guaranteed"):
        parse_config(cfg)


def test_parse_unknown_solver_key():
    with pytest.raises(ConfigError, match="solver.fancy"):
        parse_config(base_config(solver={"fancy": True}))


def test_hash_roundtrip_and_key_order():
    cfg = base_config(mechanism={"kind": "sa"})
    parsed = parse_config(cfg)
    again = parse_config(json.loads(json.dumps(parsed.raw)))
    assert parsed.config_hash == again.config_hash
    reordered = dict(reversed(list(cfg.items())))
    assert hash_config(cfg) == hash_config(reordered)
    assert hash_config(cfg) != hash_config(base_config(mechanism={"kind": "sa_reserve",
                                                                  "reserve": 1.5}))


# ---------------------------------------------------------------------------
# subcommand bundles
# ---------------------------------------------------------------------------


def test_solve_verify_bundle(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert run(["verify", "--config", path, "--out-dir", str(out)]) == 0
    files = sorted(os.listdir(out))
    stems = {f.split(".")[0] for f in files}
    assert {"best_response", "bid_function", "solve_report", "run_meta"} <= stems
    br = json.loads(next(out.glob("best_response.*.json")).read_text())
    assert br["passed"] and br["max_regret"] <= 1e-4
    bid_csv = next(out.glob("bid_function.*.csv")).read_text()
    assert bid_csv.splitlines()[0] == "v,b,b_prime"
    assert "\r" not in bid_csv and "," in bid_csv and ";" not in bid_csv.splitlines()[1]


def test_simulate_deterministic_across_runs_and_threads(tmp_path):
    cfg = base_config(mechanism={"kind": "sa"})
    path = write_config(tmp_path, cfg)
    outs = []
    for name, threads in (("a", "1"), ("b", "8"), ("c", "1")):
        out = tmp_path / name
        assert run(["simulate", "--config", path, "--out-dir", str(out),
                    "--threads", threads]) == 0
        body = next(out.glob("simulate.*.json")).read_bytes()
        outs.append(body)
    assert outs[0] == outs[1] == outs[2]


def test_sweep_deterministic(tmp_path):
    cfg = base_config(
        strong={"family": {"kind": "slow_drain", "k": 2.0, "w_bar": 2.5, "size": 2}},
        sweep={"prop": "P8", "rule": {"kind": "constant", "value": 1.6}},
    )
    path = write_config(tmp_path, cfg)
    bodies = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["sweep", "--config", path, "--out-dir", str(out)]) == 0
        bodies.append(next(out.glob("sweep_table.*.csv")).read_bytes())
    assert bodies[0] == bodies[1]
    header = bodies[0].decode().splitlines()[0]
    assert header == "l,R_mean,R_se,S_mean,S_se,target,gap,solver_method,max_regret"


def test_seed_override_changes_results(tmp_path):
    cfg = base_config(mechanism={"kind": "sa"})
    path = write_config(tmp_path, cfg)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run(["simulate", "--config", path, "--out-dir", str(out1)]) == 0
    assert run(["simulate", "--config", path, "--out-dir", str(out2),
                "--seed", "99"]) == 0
    r1 = json.loads(next(out1.glob("simulate.*.json")).read_text())
    r2 = json.loads(next(out2.glob("simulate.*.json")).read_text())
    assert r1["seed"] == 7 and r2["seed"] == 99
    assert r1["revenue"]["mean"] != r2["revenue"]["mean"]


def test_per_draw_output(tmp_path):
    cfg = base_config(mechanism={"kind": "sa"}, mc={"n": 500, "seed": 1})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["simulate", "--config", path, "--out-dir", str(out),
                "--per-draw"]) == 0
    draws = next(out.glob("draws.*.csv")).read_text()
    lines = draws.splitlines()
    assert lines[0] == "replicate,revenue,surplus"
    assert len(lines) == 501


def test_per_draw_rejected_for_large_n(tmp_path):
    cfg = base_config(mechanism={"kind": "sa"}, mc={"n": 20000, "seed": 1})
    path = write_config(tmp_path, cfg)
    assert run(["simulate", "--config", path, "--out-dir", str(tmp_path / "o"),
                "--per-draw"]) == 2


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_config_error_exit_and_no_outputs(tmp_path, capsys):
    cfg = base_config(mechanism={"kind": "sa_reserve", "reserve": 0.2})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["simulate", "--config", path, "--out-dir", str(out)]) == 2
    assert not out.exists()  # invalid configs never trigger computation
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"]["type"] == "config"
    assert any(v["path"] == "mechanism.reserve" for v in err["error"]["violations"])


def test_numeric_error_exit(tmp_path, capsys):
    cfg = base_config(
        strong={"family": {"kind": "fast_drain", "k": 2.0, "w_bar": 2.5, "size": 2}},
        sweep={"prop": "P6"},
        mc={"n": 10, "seed": 0},
    )
    path = write_config(tmp_path, cfg)
    assert run(["sweep", "--config", path, "--out-dir", str(tmp_path / "o")]) == 3
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"]["type"] == "numeric"
    assert "drain" in err["error"]["message"]


def test_verify_failure_exit(tmp_path, capsys, monkeypatch):
    import talab.cli as cli
    from talab.equilibrium import BestResponseReport

    def failing_verify(*args, **kwargs):
        return BestResponseReport(max_regret=0.5, worst_pair=(0.5, 0.9),
                                  grid_shape=(50, 200), max_argmax_offset=40)

    monkeypatch.setattr(cli, "verify_best_response", failing_verify)
    path = write_config(tmp_path, base_config())
    code = run(["verify", "--config", path, "--out-dir", str(tmp_path / "o")])
    assert code == 4
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"]["type"] == "verification"
    # the failing report is still written for inspection
    br = json.loads(next((tmp_path / "o").glob("best_response.*.json")).read_text())
    assert br["passed"] is False


def test_oa_rejects_two_point_strong(tmp_path):
    cfg = base_config(strong={"atom": {"k": 2.0, "p": 0.75}})
    path = write_config(tmp_path, cfg)
    assert run(["oa", "--config", path, "--out-dir", str(tmp_path / "o")]) == 2


def test_report_subcommand(tmp_path, capsys):
    cfg = base_config(mechanism={"kind": "sa"}, mc={"n": 1000, "seed": 3})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert run(["simulate", "--config", path, "--out-dir", str(out)]) == 0
    capsys.readouterr()
    result = str(next(out.glob("simulate.*.json")))
    assert run(["report", result]) == 0
    text = capsys.readouterr().out
    assert "revenue" in text and "config_hash" in text
