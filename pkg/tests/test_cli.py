import json
import subprocess
import sys

import numpy as np
import pytest

from behavioral_lqg.behavioral import BehavioralGain
from behavioral_lqg.cli import ConfigError, main, sig6, validate_config
from behavioral_lqg.systems import config_dict, example1, example4

from conftest import EX1_K, EX4_K


def _cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def ex1_cfg():
    return config_dict(*example1())


@pytest.fixture
def ex4_cfg():
    return config_dict(*example4())


def test_solve_example1(tmp_path, ex1_cfg, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 0
    gain = json.loads((out / "gain.json").read_text())
    np.testing.assert_allclose(gain["K"], EX1_K, atol=5e-4)
    assert gain["K2_is_zero"] is True
    classical = json.loads((out / "classical.json").read_text())
    assert classical["K_kf"][0][0] == pytest.approx(0.5674, abs=5e-4)
    riccati = json.loads((out / "riccati.json").read_text())
    assert riccati["residual_M"] <= 1e-7 and riccati["residual_P"] <= 1e-7
    assert "K:" in capsys.readouterr().out


def test_solve_example4(tmp_path, ex4_cfg):
    out = tmp_path / "out"
    assert main(["solve", "--config", _cfg(tmp_path, ex4_cfg), "--out", str(out)]) == 0
    gain = json.loads((out / "gain.json").read_text())
    np.testing.assert_allclose(gain["K"], EX4_K, atol=1e-3)


def test_gain_json_roundtrip(tmp_path, ex4_cfg):
    from behavioral_lqg.behavioral import solve_behavioral_lqg

    out = tmp_path / "out"
    main(["solve", "--config", _cfg(tmp_path, ex4_cfg), "--out", str(out)])
    back = BehavioralGain.from_dict(json.loads((out / "gain.json").read_text()))
    orig, _ = solve_behavioral_lqg(*example4())
    assert np.array_equal(back.K, orig.K)


def test_unobservable_plant_exits_2(tmp_path, capsys):
    cfg = {"system": {"A": [[1.1, 0], [0, 0.5]], "B": [[1], [1]], "C": [[1, 0]],
                      "Q_w": [[1, 0], [0, 1]], "R_v": 1},
           "weights": {"Q_x": [[1, 0], [0, 1]], "R_u": 1}}
    assert main(["solve", "--config", _cfg(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "(A, C) is not observable" in capsys.readouterr().err


def test_unknown_key_exits_4_with_path(tmp_path, ex1_cfg, capsys):
    ex1_cfg["experiment"] = {"armijo": {"gamma": 0.5}}
    assert main(["pg", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(tmp_path)]) == 4
    assert "experiment.armijo.gamma" in capsys.readouterr().err


def test_validate_config_messages(ex1_cfg):
    with pytest.raises(ConfigError, match="bogus"):
        validate_config({**ex1_cfg, "bogus": 1})
    bad = json.loads(json.dumps(ex1_cfg))
    del bad["system"]["A"]
    with pytest.raises(ConfigError, match="system"):
        validate_config(bad)
    bad = json.loads(json.dumps(ex1_cfg))
    bad["experiment"] = {"horizon": 0}
    with pytest.raises(ConfigError, match="experiment.horizon"):
        validate_config(bad)


def test_invalid_json_exits_4(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == 4


def test_inconsistent_dims_exit_4(tmp_path, ex1_cfg):
    ex1_cfg["system"]["dims"] = {"n": 2}
    assert main(["solve", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(tmp_path)]) == 4


@pytest.mark.parametrize("controller, tol", [("none", 1e-10), ("classical", 1e-8),
                                             ("behavioral", 1e-8)])
def test_simulate_deviation(tmp_path, ex1_cfg, controller, tol):
    ex1_cfg["experiment"] = {"controller": controller, "horizon": 50, "seed": 3}
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_output_deviation"] <= tol
    rows = (out / "deviation.csv").read_text().splitlines()
    assert rows[0] == "t,dy1,max_abs" and len(rows) == 1 + 50
    assert rows[1].startswith("1,")
    for name in ("trajectory_state_space.csv", "trajectory_behavioral.csv"):
        assert (out / name).exists()


def test_simulate_horizon_equal_to_order(tmp_path, ex1_cfg):
    ex1_cfg["experiment"] = {"controller": "behavioral", "horizon": 1}
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 0
    rows = (out / "trajectory_behavioral.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("1,,")


def test_simulate_is_deterministic(tmp_path, ex4_cfg):
    ex4_cfg["experiment"] = {"controller": "classical", "horizon": 30}
    cfg = _cfg(tmp_path, ex4_cfg)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "7"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "8"])
    for name in ("trajectory_state_space.csv", "trajectory_behavioral.csv", "deviation.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert a != (tmp_path / "c" / name).read_bytes()


def test_pg_from_optimum_is_single_row(tmp_path, ex4_cfg):
    ex4_cfg["experiment"] = {"mode": "behavioral", "init": "optimal", "grad_tol": 1e-4,
                             "num_seeds": 1}
    out = tmp_path / "pg"
    assert main(["pg", "--config", _cfg(tmp_path, ex4_cfg), "--out", str(out)]) == 0
    rows = (out / "trace_behavioral_seed0.csv").read_text().splitlines()
    assert rows[0] == "iter,cost,grad_norm,alpha,subopt_gap" and len(rows) == 2


def test_pg_example1_both_modes(tmp_path, ex1_cfg):
    ex1_cfg["experiment"] = {"mode": "both", "seeds": [4, 5], "max_iters": 3000,
                             "grad_tol": 1e-6}
    out = tmp_path / "pg"
    assert main(["pg", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    runs = {(r["mode"], r["seed"]): r for r in summary["runs"]}
    assert set(runs) == {("behavioral", 4), ("behavioral", 5), ("dynamic", 4), ("dynamic", 5)}
    for seed in (4, 5):
        assert runs[("behavioral", seed)]["status"] == "gradient-vanished"
        assert runs[("behavioral", seed)]["final_gap"] <= 1e-6
        assert runs[("dynamic", seed)]["status"] == "gradient-vanished"
        assert (out / f"trace_dynamic_seed{seed}.csv").exists()


def test_pg_tight_tolerance_hits_rounding_floor(tmp_path, ex1_cfg):
    # The compensator cost stalls near 1e-13 above the optimum with the gradient
    # still around 1e-7; the Armijo decrease is then below rounding.
    ex1_cfg["experiment"] = {"mode": "dynamic", "seeds": [4], "max_iters": 3000,
                             "grad_tol": 1e-9}
    out = tmp_path / "pg"
    assert main(["pg", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"][0]["status"] == "line-search-failed"
    assert abs(summary["runs"][0]["final_gap"]) <= 1e-10


def test_pg_seed_override(tmp_path, ex1_cfg):
    ex1_cfg["experiment"] = {"mode": "behavioral", "seeds": [0, 1], "max_iters": 3}
    out = tmp_path / "pg"
    main(["pg", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out), "--seed", "10"])
    assert (out / "trace_behavioral_seed10.csv").exists()
    assert (out / "trace_behavioral_seed11.csv").exists()


def test_pg_line_search_failure_exits_3(tmp_path, ex4_cfg):
    ex4_cfg["experiment"] = {"mode": "behavioral", "num_seeds": 1, "max_iters": 10,
                             "armijo": {"max_backtracks": 1}}
    out = tmp_path / "pg"
    assert main(["pg", "--config", _cfg(tmp_path, ex4_cfg), "--out", str(out)]) == 3
    assert (out / "trace_behavioral_seed0.csv").exists()


def test_pg_bad_armijo_exits_4(tmp_path, ex1_cfg):
    ex1_cfg["experiment"] = {"armijo": {"beta": 1.5}}
    assert main(["pg", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(tmp_path)]) == 4


def test_imitate_example3_matrices(tmp_path, ex1_cfg):
    ex1_cfg["experiment"] = {"demo": {"source": "matrices", "U_N": [[-0.2269, -0.1231]],
                                      "Y_N": [[1.7878, -0.2269], [1.3371, 0.211]]}}
    out = tmp_path / "imi"
    assert main(["imitate", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 0
    learned = json.loads((out / "learned_gain.json").read_text())
    np.testing.assert_allclose(np.hstack([learned["K1"], learned["K3"]]), [[0.1716, -0.3991]],
                               atol=5e-4)
    suff = json.loads((out / "sufficiency.json").read_text())
    assert suff["N_required"] == 3 and suff["N_used"] == 3 and suff["sufficient"]


def test_imitate_generated_demo(tmp_path, ex1_cfg):
    ex1_cfg["experiment"] = {"seed": 2, "demo": {"source": "generate"}}
    out = tmp_path / "imi"
    assert main(["imitate", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "rollout_report.json").read_text())
    assert rep["max_output_deviation"] <= 1e-8


def test_imitate_csv_demo(tmp_path, ex4_cfg):
    from behavioral_lqg.behavioral import solve_behavioral_lqg
    from behavioral_lqg.imitation import expert_log_from_trajectory, write_expert_csv
    from behavioral_lqg.lti_system import simulate

    sys_, w = example4()
    tr = simulate(sys_, solve_behavioral_lqg(sys_, w)[0], T=30, seed=1)
    demo = tmp_path / "demo.csv"
    write_expert_csv(demo, expert_log_from_trajectory(tr))
    ex4_cfg["experiment"] = {"demo": {"source": "csv", "path": str(demo), "t0": 5, "k": 6}}
    out = tmp_path / "imi"
    assert main(["imitate", "--config", _cfg(tmp_path, ex4_cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "rollout_report.json").read_text())
    assert abs(rep["cost_learned"] - rep["cost_reference"]) <= 1e-6 * rep["cost_reference"]


def test_imitate_csv_with_gap_exits_4(tmp_path, ex1_cfg, capsys):
    demo = tmp_path / "demo.csv"
    demo.write_text("t,u1,y1\n0,0.1,0.2\n1,0.3,0.4\n3,0.5,0.6\n")
    ex1_cfg["experiment"] = {"demo": {"source": "csv", "path": str(demo)}}
    assert main(["imitate", "--config", _cfg(tmp_path, ex1_cfg), "--out", str(tmp_path)]) == 4
    assert "row 4" in capsys.readouterr().err


def test_output_prefix(tmp_path, ex1_cfg):
    ex1_cfg["output"] = {"directory": str(tmp_path / "o"), "prefix": "ex1_"}
    assert main(["solve", "--config", _cfg(tmp_path, ex1_cfg)]) == 0
    assert (tmp_path / "o" / "ex1_gain.json").exists()


def test_sig6():
    assert sig6({"a": [1.23456789, np.float64(2e-9)], "b": 3}) == {"a": [1.23457, 2e-9], "b": 3}


def test_console_entry_point(tmp_path, ex1_cfg):
    res = subprocess.run([sys.executable, "-m", "behavioral_lqg.cli", "solve", "--config",
                          _cfg(tmp_path, ex1_cfg), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "summary.json").exists()
