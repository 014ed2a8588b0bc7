import json

import pytest

from grmdp.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline_gen_fit_eval(tmp_path, capsys):
    env_dir, data_dir, art_dir = tmp_path / "env", tmp_path / "data", tmp_path / "art"
    assert run("gen-env", "--kind", "benchmark", "--seed", 1, "--out", env_dir) == 0
    assert run("gen-data", "--env", env_dir / "env.json", "--N", "6,5,4", "--seed", 2, "--out", data_dir) == 0
    for method in ("sitewise", "pool_pevi", "persite_min"):
        assert run("fit", "--env", env_dir / "env.json", "--data", data_dir / "data.csv", "--method", method,
                   "--out", art_dir) == 0
        assert (art_dir / f"artifact_{method}.json").exists()
    assert run("eval", "--env", env_dir / "env.json", "--artifact", art_dir / "artifact_sitewise.json",
               "--m", 5, "--out", tmp_path / "ev") == 0
    res = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert res["method"] == "sitewise" and res["suboptimality"] >= -1e-9
    doc = json.loads((art_dir / "artifact_sitewise.json").read_text())
    assert len(doc["fingerprint"]) == 16


def test_hard_instance_writes_env_and_data(tmp_path):
    assert run("gen-env", "--kind", "hard", "--N", "5,7", "--A", 3, "--H", 4, "--out", tmp_path) == 0
    assert run("fit", "--env", tmp_path / "env.json", "--data", tmp_path / "data.csv", "--out", tmp_path) == 0


def test_trap_data_capped(tmp_path):
    assert run("gen-env", "--kind", "trap", "--out", tmp_path) == 0
    assert run("gen-data", "--env", tmp_path / "env.json", "--N", "3,3,3", "--behavior", "trap_capped",
               "--cap", 2, "--out", tmp_path) == 0


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"convergence": {"R": 1, "bogus": 3}}))
    assert run("converge", "--config", cfg, "--out", tmp_path) == 2
    cfg.write_text(json.dumps({"nonsense": {}}))
    assert run("converge", "--config", cfg, "--out", tmp_path) == 2
    cfg.write_text(json.dumps({"run": {"lambda": -1.0}}))
    assert run("gen-env", "--config", cfg, "--out", tmp_path) == 2


def test_bad_data_exits_3(tmp_path):
    assert run("gen-env", "--kind", "hard", "--N", "5,7", "--A", 3, "--H", 4, "--out", tmp_path) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("site,traj,h,a,r,s_code,s_next_code\n0,0,1,0,zero,0,1\n")
    assert run("fit", "--env", tmp_path / "env.json", "--data", bad, "--out", tmp_path) == 3
    # horizon step out of range is a validation violation
    bad.write_text("site,traj,h,a,r,s_code,s_next_code\n0,0,9,0,0.0,0,1\n")
    assert run("fit", "--env", tmp_path / "env.json", "--data", bad, "--out", tmp_path) == 3


def test_missing_file_exits_4(tmp_path):
    assert run("gen-data", "--env", tmp_path / "nope.json", "--N", "1,1,1", "--out", tmp_path) == 4


def test_small_experiment_and_plot(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"convergence": {"R": 2, "grid": [10, 40], "K": 2, "A": 3, "H": 5}}))
    out = tmp_path / "out"
    assert run("converge", "--config", cfg, "--out", out) == 0
    names = {p.name for p in out.iterdir()}
    assert {"convergence_summary.json", "convergence_trials.csv", "convergence_suboptimality.svg"} <= names
    assert run("plot", "--summary", out / "convergence_summary.json", "--out", tmp_path / "plots") == 0
    assert (tmp_path / "plots" / "convergence_suboptimality.svg").exists()


def test_help_exits_cleanly():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
