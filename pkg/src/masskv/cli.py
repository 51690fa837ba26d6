"""Experiment driver.

``masskv run`` executes either a single run described by flags or a JSON plan
file of independent entries (policy, scorer, config overrides, workload,
seeds), writing one JSON + one CSV trace per entry/seed. ``masskv
compact-check`` runs the paged-compaction equivalence fuzz. Exit codes:
0 success, 1 contract/test failure, 2 configuration error.

Precedence for settings: built-in defaults < --config file < command flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from masskv.core import CompressionConfig, ConfigError, ContractViolation, default_config, load_config
from masskv.engine import POLICIES
from masskv.paged import run_equivalence_fuzz
from masskv.scorers import SCORERS
from masskv.sim import WORKLOADS, WorkloadSpec, run_schedule, write_trace_csv, write_trace_json


@dataclass
class PlanEntry:
    name: str
    policy: str
    scorer: str = "expected"
    workload: str = "uniform"
    workload_params: dict = field(default_factory=dict)
    steps: int = 1024
    seeds: list[int] = field(default_factory=lambda: [0])
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"plan entry {self.name!r}: unknown policy {self.policy!r}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"plan entry {self.name!r}: unknown scorer {self.scorer!r}")
        if self.workload not in WORKLOADS:
            raise ConfigError(f"plan entry {self.name!r}: unknown workload {self.workload!r}")


@dataclass
class ExperimentPlan:
    entries: list[PlanEntry]
    out_dir: Path

    def __post_init__(self):
        names = [(e.name, s) for e in self.entries for s in e.seeds]
        if len(names) != len(set(names)):
            raise ConfigError("plan output names collide; entry names/seeds must be unique")


def load_plan(path, out_dir=None) -> ExperimentPlan:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"plan {path}: line {exc.lineno}: {exc.msg}") from None
    entries = []
    for i, item in enumerate(raw.get("entries", [])):
        known = {
            "name", "policy", "scorer", "workload", "workload_params",
            "steps", "seeds", "config",
        }
        unknown = set(item) - known
        if unknown:
            raise ConfigError(f"plan entry {i}: unknown keys {sorted(unknown)}")
        item.setdefault("name", f"entry{i}")
        entries.append(PlanEntry(**item))
    if not entries:
        raise ConfigError("plan has no entries")
    out = Path(out_dir) if out_dir else Path(raw.get("out_dir", "traces"))
    return ExperimentPlan(entries=entries, out_dir=out)


def _run_one(entry: PlanEntry, seed: int, base_cfg: CompressionConfig, out_dir: str) -> str:
    cfg = base_cfg.replace(**entry.config)
    cfg.require_t_keep()
    spec = WorkloadSpec(
        name=entry.workload, steps=entry.steps, seed=seed, params=entry.workload_params
    )
    trace = run_schedule(spec, entry.policy, cfg, scorer=entry.scorer)
    stem = Path(out_dir) / f"{entry.name}_seed{seed}"
    write_trace_json(trace, stem.with_suffix(".json"))
    write_trace_csv(trace, stem.with_suffix(".csv"))
    return str(stem)


def cmd_run(plan: ExperimentPlan, base_cfg: CompressionConfig, jobs: int = 1) -> int:
    plan.out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(entry, seed) for entry in plan.entries for seed in entry.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_one, entry, seed, base_cfg, str(plan.out_dir))
                for entry, seed in tasks
            ]
            for fut in futures:
                fut.result()
    else:
        for entry, seed in tasks:
            _run_one(entry, seed, base_cfg, str(plan.out_dir))
    return 0


def cmd_compact_check(n_cases: int, seed: int, corrupt: bool = False) -> int:
    passed, failed = run_equivalence_fuzz(n_cases, seed, corrupt=corrupt)
    print(f"compact-check: {passed} passed, {failed} failed out of {n_cases}")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masskv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a policy schedule (flags or plan file)")
    run_p.add_argument("--plan", help="JSON plan file of entries to run")
    run_p.add_argument("--policy", choices=POLICIES, default="ams")
    run_p.add_argument("--scorer", choices=sorted(SCORERS), default="expected")
    run_p.add_argument("--workload", choices=WORKLOADS, default="uniform")
    run_p.add_argument("--t-keep", type=int, help="post-compression cache budget")
    run_p.add_argument("--interval", type=int, help="tokens between compression events")
    run_p.add_argument("--steps", type=int, default=1024)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--config", help="flat key=value config file")
    run_p.add_argument("--out", help="output directory (default: plan's out_dir, else ./traces)")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel plan entries")

    chk = sub.add_parser("compact-check", help="paged compaction vs dense gather fuzz")
    chk.add_argument("--cases", type=int, default=1000)
    chk.add_argument("--seed", type=int, default=42)
    chk.add_argument("--corrupt", action="store_true",
                     help="inject a post-copy corruption (sensitivity check)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compact-check":
            return cmd_compact_check(args.cases, args.seed, corrupt=args.corrupt)
        cfg = default_config()
        if args.config:
            cfg = load_config(args.config, base=cfg)
        overrides = {}
        if args.t_keep is not None:
            overrides["t_keep"] = args.t_keep
        if args.interval is not None:
            overrides["interval"] = args.interval
        if overrides:
            cfg = cfg.replace(**overrides)
        if args.plan:
            plan = load_plan(args.plan, out_dir=args.out)
        else:
            entry = PlanEntry(
                name=f"{args.policy}_{args.scorer}_{args.workload}",
                policy=args.policy,
                scorer=args.scorer,
                workload=args.workload,
                steps=args.steps,
                seeds=[args.seed],
            )
            plan = ExperimentPlan(entries=[entry], out_dir=Path(args.out or "traces"))
        return cmd_run(plan, cfg, jobs=args.jobs)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
