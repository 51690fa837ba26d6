import json

import pytest

from masskv.cli import ExperimentPlan, PlanEntry, cmd_run, load_plan, main
from masskv.core import ConfigError, default_config


def test_single_run_via_flags(tmp_path):
    out = tmp_path / "traces"
    rc = main(
        [
            "run",
            "--policy", "ams",
            "--scorer", "expected",
            "--workload", "uniform",
            "--t-keep", "48",
            "--interval", "96",
            "--steps", "192",
            "--seed", "3",
            "--out", str(out),
        ]
    )
    assert rc == 0
    stem = out / "ams_expected_uniform_seed3"
    assert stem.with_suffix(".json").exists()
    assert stem.with_suffix(".csv").exists()
    doc = json.loads(stem.with_suffix(".json").read_text())
    assert doc["policy"] == "ams" and doc["seed"] == 3
    assert len(doc["events"]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("t_keep = 32\ninterval = 64\nn_last = 4\n")
    out = tmp_path / "o"
    rc = main(
        [
            "run", "--config", str(cfg_file), "--steps", "128",
            "--interval", "128",  # flag overrides the file
            "--out", str(out), "--policy", "streaming",
        ]
    )
    assert rc == 0
    doc = json.loads(next(out.glob("*.json")).read_text())
    assert doc["config"]["t_keep"] == 32       # from file
    assert doc["config"]["interval"] == 128    # flag wins
    assert doc["config"]["n_last"] == 4


def test_invalid_config_exits_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("segment_mass = 0.0\n")
    rc = main(["run", "--config", str(bad), "--t-keep", "32", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_missing_t_keep_exits_2(tmp_path):
    rc = main(["run", "--out", str(tmp_path / "x"), "--steps", "64"])
    assert rc == 2


def test_plan_run_multiple_entries(tmp_path):
    plan = {
        "out_dir": str(tmp_path / "traces"),
        "entries": [
            {
                "name": "a",
                "policy": "ams",
                "workload": "uniform",
                "steps": 128,
                "seeds": [0, 1],
                "config": {"t_keep": 32, "interval": 64, "window": 32},
            },
            {
                "name": "b",
                "policy": "streaming",
                "workload": "heavy_hitter",
                "steps": 128,
                "seeds": [0],
                "config": {"t_keep": 32, "interval": 64},
            },
        ],
    }
    ppath = tmp_path / "plan.json"
    ppath.write_text(json.dumps(plan))
    rc = main(["run", "--plan", str(ppath)])
    assert rc == 0
    made = sorted(p.name for p in (tmp_path / "traces").glob("*.json"))
    assert made == ["a_seed0.json", "a_seed1.json", "b_seed0.json"]


def test_plan_rejects_collisions_and_unknown_keys(tmp_path):
    entry = {"name": "x", "policy": "ams", "seeds": [0]}
    with pytest.raises(ConfigError, match="collide"):
        ExperimentPlan(entries=[PlanEntry(**entry), PlanEntry(**entry)], out_dir=tmp_path)
    ppath = tmp_path / "plan.json"
    ppath.write_text(json.dumps({"entries": [{"policy": "ams", "wat": 1}]}))
    with pytest.raises(ConfigError, match="unknown keys"):
        load_plan(ppath)
    ppath.write_text("{not json")
    with pytest.raises(ConfigError, match="line"):
        load_plan(ppath)
    ppath.write_text(json.dumps({"entries": []}))
    with pytest.raises(ConfigError, match="no entries"):
        load_plan(ppath)


def test_plan_bad_policy_exits_2(tmp_path):
    ppath = tmp_path / "plan.json"
    ppath.write_text(json.dumps({"entries": [{"name": "x", "policy": "nope"}]}))
    rc = main(["run", "--plan", str(ppath), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_parallel_jobs_match_serial(tmp_path):
    base = {
        "policy": "ams",
        "workload": "drifting_focus",
        "steps": 128,
        "config": {"t_keep": 32, "interval": 64, "window": 32},
    }
    plan = {
        "entries": [
            dict(base, name="p0", seeds=[0]),
            dict(base, name="p1", seeds=[1]),
        ]
    }
    ppath = tmp_path / "plan.json"
    ppath.write_text(json.dumps(plan))
    rc = main(["run", "--plan", str(ppath), "--out", str(tmp_path / "serial")])
    assert rc == 0
    rc = main(["run", "--plan", str(ppath), "--out", str(tmp_path / "par"), "--jobs", "2"])
    assert rc == 0
    for name in ("p0_seed0.json", "p1_seed1.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


def test_compact_check_cli():
    assert main(["compact-check", "--cases", "40", "--seed", "0"]) == 0
    assert main(["compact-check", "--cases", "8", "--seed", "0", "--corrupt"]) == 1


def test_cmd_run_library_parity(tmp_path):
    # the CLI is a thin shell over the library path
    from masskv.sim import WorkloadSpec, run_schedule, trace_to_dict

    entry = PlanEntry(
        name="z",
        policy="global_topk",
        workload="uniform",
        steps=128,
        seeds=[5],
        config={"t_keep": 32, "interval": 64},
    )
    plan = ExperimentPlan(entries=[entry], out_dir=tmp_path / "o")
    assert cmd_run(plan, default_config()) == 0
    via_cli = json.loads((tmp_path / "o" / "z_seed5.json").read_text())

    cfg = default_config().replace(t_keep=32, interval=64)
    trace = run_schedule(WorkloadSpec("uniform", steps=128, seed=5), "global_topk", cfg)
    assert via_cli == json.loads(json.dumps(trace_to_dict(trace)))
