"""Build simulations from run configs, check them and report verdicts."""
from __future__ import annotations

import json
import os
import random
from importlib import resources
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import properties
from .adversary import (
    ScriptedByzantine, ScriptedNetwork, SlowCommitPolicy, StrategyByzantine, UnlockBait,
    t_monitor,
)
from .config import STRATEGIES, ConfigError, RunConfig, from_dict
from .fairness import audit_fairness, timeout_trajectory
from .netsim import Mode, Simulator, Trace
from .oneshot import OneShot, Timeouts
from .repeated import RepeatedNode, stake_rotation_selector, static_selector
from .types import GENESIS, Mempool, create_new_block, is_valid, max_faulty

REPORT_VERSION = 1
OUT_ENV = "TENDERSIM_OUT"


class OneShotProcess:
    """Adapts a single :class:`OneShot` instance to the simulator's process protocol."""

    def __init__(self, pid, validators, cfg: RunConfig, mempool: Mempool | None = None):
        self.pid = pid
        mempool = mempool or Mempool()
        self.machine = OneShot(
            pid, 1, validators,
            make_block=lambda rnd: create_new_block((), mempool, GENESIS, pid, nonce=rnd - 1),
            is_valid=lambda v: is_valid(v, GENESIS),
            timeouts=Timeouts(**vars(cfg.timeouts)),
            unlock_rule=cfg.unlock_rule, step_timers=cfg.step_timers,
            check_proposer=cfg.check_proposer, proposer_offset=cfg.proposer_offset)

    def start(self):
        return self.machine.start()

    def on_message(self, m):
        return self.machine.on_message(m)

    def on_timer(self, kind, height, rnd):
        return self.machine.on_timer(kind, rnd)


def _selector(cfg: RunConfig):
    if cfg.selector == "stake_rotation":
        return stake_rotation_selector(cfg.n, cfg.stakes)
    return static_selector(cfg.n)


def _policy(cfg: RunConfig):
    if cfg.delays:
        return ScriptedNetwork.from_config(cfg.delays)
    slow = cfg.fairness.get("slow_commit")
    if slow is not None:
        return SlowCommitPolicy(slow.get("delay"), base=slow.get("base", 1),
                                horizon=cfg.max_time, proposer_offset=cfg.proposer_offset)
    return None


def _meta(cfg: RunConfig) -> dict:
    m = cfg.network
    return {
        "name": cfg.name, "protocol": cfg.protocol, "seed": cfg.seed,
        "n": cfg.n, "f": cfg.f, "roster": list(cfg.processes),
        "validators": list(cfg.processes[: cfg.n]),
        "correct": list(cfg.correct), "byzantine": list(cfg.byzantine),
        "mode": m.mode.value, "gst": m.gst, "delta": m.delta,
        "max_pre_gst_delay": m.max_pre_gst_delay,
        "unlock_rule": cfg.unlock_rule, "step_timers": cfg.step_timers,
        "mechanism": cfg.mechanism.name, "selector": cfg.selector,
        "proposer_offset": cfg.proposer_offset, "heights": cfg.heights,
        "max_time": cfg.max_time, "max_rounds": cfg.max_rounds,
    }


def build(cfg: RunConfig) -> Simulator:
    """Instantiate processes, adversaries and the network for one run."""
    validators = cfg.processes[: cfg.n]
    procs = []
    if cfg.protocol == "oneshot":
        procs = [OneShotProcess(p, validators, cfg) for p in cfg.correct]
        public_validators = lambda h: validators  # noqa: E731
        public_tip = lambda h: GENESIS  # noqa: E731
    else:
        sel = _selector(cfg)
        procs = [RepeatedNode(p, cfg.processes, sel, mechanism=cfg.mechanism,
                              timeouts=cfg.timeouts, delta_commit=cfg.delta_commit, f=cfg.f,
                              unlock_rule=cfg.unlock_rule, step_timers=cfg.step_timers,
                              proposer_offset=cfg.proposer_offset)
                 for p in cfg.correct]

        def public_validators(h):
            for node in procs:
                vs = node.validators(h)
                if vs is not None:
                    return vs
            return None

        def public_tip(h):
            for node in procs:
                if len(node.chain) >= h:
                    return node.chain[h - 1]
            return None

    actors = []
    mix = cfg.strategy.get("mix", ["silent"])
    for p in cfg.byzantine:
        if p in cfg.script:
            actors.append(ScriptedByzantine(p, cfg.script[p]))
        elif "unlock_bait" in mix:
            actors.append(UnlockBait(p, proposer_offset=cfg.proposer_offset))
        else:
            actors.append(StrategyByzantine(p, mix, delta=cfg.network.delta,
                                            proposer_offset=cfg.proposer_offset))
    return Simulator(procs, actors, cfg.network, seed=cfg.seed, policy=_policy(cfg),
                     public_validators=public_validators, public_tip=public_tip,
                     meta=_meta(cfg))


def _until(cfg: RunConfig):
    correct = cfg.correct
    if cfg.protocol == "oneshot":
        return lambda sim: all((p, 1) in sim.decisions for p in correct)
    return lambda sim: all(sim.outputs[p] >= cfg.heights for p in correct)


def simulate(cfg: RunConfig) -> Trace:
    sim = build(cfg)
    return sim.run(max_time=cfg.max_time, max_rounds=cfg.max_rounds, until=_until(cfg))


# -- reports -----------------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    trace: Trace
    report: dict

    @property
    def ok(self) -> bool:
        return self.report["expectations"]["met"]


def statuses(verdicts) -> dict:
    return {v.name: v.status for v in verdicts}


def analyse(trace: Trace, tail_window: int = 10) -> dict:
    """Verdicts, monitor summary and (for repeated runs) the fairness audit."""
    verdicts = properties.check_all(trace)
    st = statuses(verdicts)
    rows = t_monitor(trace)
    first_t = next((r for r in rows if r.satisfying and r.post_gst), None)
    report = {
        "version": REPORT_VERSION,
        "name": trace.meta.get("name"),
        "seed": trace.meta.get("seed"),
        "protocol": trace.meta["protocol"],
        "stop": trace.meta.get("stop"),
        "end_time": trace.meta.get("end_time"),
        "partial": bool(trace.meta.get("truncated")),
        "verdicts": [v.to_json() for v in verdicts],
        "assumption_t": {
            "rounds_checked": len(rows),
            "satisfying": sum(r.satisfying for r in rows),
            "first_post_gst": None if first_t is None else
            {"height": first_t.height, "round": first_t.round, "witness": first_t.witness},
        },
    }
    if trace.meta["protocol"] == "repeated":
        audit = audit_fairness(trace, tail_window)
        report["fairness"] = audit
        st["4bis"] = "PASS" if audit["condition4bis"]["holds"] else "FAIL"
        st["fairness"] = audit["verdict"]
        report["timeout_commit"] = {str(h): v for h, v in timeout_trajectory(trace).items()}
    report["status"] = st
    return report


def _status_matches(expected, actual) -> bool:
    if isinstance(expected, str) and isinstance(actual, str):
        if expected == actual:
            return True
        return "(" not in expected and actual.split("(")[0] == expected
    return expected == actual


def match_expectations(expect: dict, status: dict) -> dict:
    diff = {}
    for key, want in sorted(expect.items()):
        got = status.get(key)
        if not _status_matches(want, got):
            diff[key] = {"expected": want, "actual": got}
    return {"met": not diff, "checked": sorted(expect), "diff": diff}


def run_config(cfg: RunConfig) -> RunResult:
    trace = simulate(cfg)
    report = analyse(trace, cfg.tail_window)
    report["expectations"] = match_expectations(cfg.expect, report["status"])
    return RunResult(cfg, trace, report)


def render(report: dict) -> str:
    """Human summary: one status line per verdict with witnessing record ids."""
    lines = [f"{report['name']} seed={report['seed']} stop={report['stop']} "
             f"t={report['end_time']}"]
    for v in report["verdicts"]:
        wit = ",".join(map(str, v["witness"][:8]))
        lines.append(f"  {v['property']}: {v['status']}" + (f"  [records {wit}]" if wit else ""))
    if "fairness" in report:
        a = report["fairness"]
        lines.append(f"  4bis: {report['status']['4bis']}  fairness: {a['verdict']}  "
                     f"(condition 4 violated at {a['condition4']['violations']} of "
                     f"{a['audited_heights']} heights)")
    exp = report.get("expectations")
    if exp:
        if exp["met"]:
            lines.append(f"  expectations met ({len(exp['checked'])} checked)")
        for k, d in exp["diff"].items():
            lines.append(f"  UNEXPECTED {k}: expected {d['expected']!r}, got {d['actual']!r}")
    return "\n".join(lines)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def out_dir(explicit: str | os.PathLike | None = None) -> Path:
    return Path(explicit or os.environ.get(OUT_ENV) or "tendersim-out")


def write_artifacts(result: RunResult, directory: Path) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{result.config.name}-s{result.config.seed}"
    tpath = directory / f"{stem}.trace.jsonl"
    rpath = directory / f"{stem}.report.json"
    tpath.write_text(result.trace.to_jsonl())
    rpath.write_text(dumps(result.report))
    return tpath, rpath


def check_trace(path: str | os.PathLike, tail_window: int = 10) -> dict:
    return analyse(Trace.from_jsonl(Path(path).read_text()), tail_window)


# -- fuzzing -----------------------------------------------------------------------

SAFETY = ("Integrity", "Validity", "Agreement")

DEFAULT_CAMPAIGN = {
    "name": "fuzz",
    "runs": 100,
    "n": [4, 7],
    "modes": ["SYNCHRONOUS", "EVENTUALLY_SYNCHRONOUS", "ASYNCHRONOUS"],
    "strategies": ["silent", "equivocate", "selective", "stale", "invalid", "lock_split",
                   "unlock_bait"],
    "unlock_rule": "corrected",
    "step_timers": ["after_quorum", "on_entry"],
    "byzantine": "max",
    "horizon": {"time": 3000, "rounds": 40},
}


def campaign_from_dict(d: dict | None) -> dict:
    c = dict(DEFAULT_CAMPAIGN)
    for k, v in (d or {}).items():
        if k not in DEFAULT_CAMPAIGN:
            raise ConfigError(f"unknown campaign key {k!r}")
        c[k] = v
    for s in c["strategies"]:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    for m in c["modes"]:
        try:
            Mode(m)
        except ValueError:
            raise ConfigError(f"unknown network mode {m!r}") from None
    if c["unlock_rule"] not in ("corrected", "legacy"):
        raise ConfigError("unlock_rule must be corrected or legacy")
    if c["byzantine"] not in ("max", "random"):
        raise ConfigError("byzantine must be max or random")
    if int(c["runs"]) < 1:
        raise ConfigError("runs must be positive")
    return c


def campaign_names() -> list[str]:
    files = resources.files("tendersim") / "campaigns"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def campaign_path(name: str):
    p = resources.files("tendersim") / "campaigns" / f"{name}.yaml"
    if not p.is_file():
        raise KeyError(f"no bundled campaign {name!r}")
    return p


def derive_run(campaign: dict, seed: int) -> dict:
    """The run config a campaign assigns to ``seed``; a pure function of both."""
    rng = random.Random(seed)
    n = rng.choice(list(campaign["n"]))
    f = max_faulty(n)
    nb = f if campaign["byzantine"] == "max" else rng.randint(0, f)
    byz = sorted(rng.sample(range(1, n + 1), nb))
    mode = rng.choice(list(campaign["modes"]))
    delta = rng.randint(1, 4)
    net = {"mode": mode, "delta": delta, "max_pre_gst_delay": rng.randint(delta, 12 * delta)}
    if mode == "EVENTUALLY_SYNCHRONOUS":
        net["gst"] = rng.randint(0, 60)
    base = rng.randint(delta, 4 * delta)
    k = rng.randint(1, min(3, len(campaign["strategies"])))
    steps = campaign["step_timers"]
    mix = sorted(rng.sample(list(campaign["strategies"]), k))
    raw = {
        "name": f"{campaign['name']}-{seed}",
        "protocol": "oneshot", "n": n, "f": f, "byzantine": byz, "seed": seed,
        "network": net,
        "timeouts": {"propose": base + rng.randint(0, delta), "prevote": base,
                     "precommit": base},
        "unlock_rule": campaign["unlock_rule"],
        "step_timers": rng.choice(steps) if isinstance(steps, list) else steps,
        "strategy": {"mix": mix},
        "horizon": dict(campaign["horizon"]),
    }
    if "unlock_bait" in mix and mode == "ASYNCHRONOUS":
        # the asynchronous scheduler sits on relayed copies of Byzantine precommits
        raw["delays"] = {"rules": [{"kind": "PRECOMMIT", "signer": b, "relay": True,
                                    "delay": 100 * int(campaign["horizon"]["time"])}
                                   for b in byz]}
    return raw


def _fuzz_one(args) -> dict:
    campaign, seed = args
    raw = derive_run(campaign, seed)
    cfg = from_dict(raw)
    trace = simulate(cfg)
    verdicts = {v.name: v for v in properties.check_all(trace)}
    decided_all = verdicts["Termination(bounded)"].ok
    t_holds = verdicts["AssumptionT"].status == "present"
    violated = sorted(name for name, v in verdicts.items() if not v.ok and name != "Termination(bounded)")
    link_broken = (t_holds and raw["network"]["mode"] == "EVENTUALLY_SYNCHRONOUS"
                   and not decided_all)
    return {"seed": seed, "n": cfg.n, "mode": raw["network"]["mode"],
            "mix": raw["strategy"]["mix"], "violated": violated, "decided": decided_all,
            "assumption_t": t_holds, "termination_link_broken": link_broken,
            "config": raw}


def fuzz(campaign: dict, seeds, *, workers: int = 1) -> dict:
    """Run a campaign over ``seeds``; results are aggregated in seed order."""
    seeds = sorted(seeds)
    jobs = [(campaign, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_fuzz_one, jobs, chunksize=8))
    else:
        rows = [_fuzz_one(j) for j in jobs]
    counts: dict[str, int] = {}
    for r in rows:
        for name in r["violated"]:
            counts[name] = counts.get(name, 0) + 1
    failures = [r for r in rows if r["violated"] or r["termination_link_broken"]]
    return {
        "version": REPORT_VERSION,
        "campaign": campaign,
        "runs": len(rows),
        "seeds": [seeds[0], seeds[-1]] if seeds else [],
        "violations": dict(sorted(counts.items())),
        "safety_violations": sum(counts.get(k, 0) for k in SAFETY),
        "decided_runs": sum(r["decided"] for r in rows),
        "assumption_t_runs": sum(r["assumption_t"] for r in rows),
        "termination_link_violations": sum(r["termination_link_broken"] for r in rows),
        "failures": [{k: r[k] for k in ("seed", "n", "mode", "mix", "violated",
                                        "termination_link_broken")} for r in failures],
        "_reproducers": {r["seed"]: r["config"] for r in failures},
    }


def write_fuzz_artifacts(summary: dict, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    repro = summary.pop("_reproducers", {})
    name = summary["campaign"]["name"]
    paths = []
    if repro:
        rdir = directory / f"{name}-reproducers"
        rdir.mkdir(exist_ok=True)
        for seed, raw in sorted(repro.items()):
            p = rdir / f"seed-{seed}.yaml"
            p.write_text(yaml.safe_dump(raw, sort_keys=True))
            paths.append(str(p.relative_to(directory)))
    summary["reproducers"] = paths
    spath = directory / f"{name}-summary.json"
    spath.write_text(dumps(summary))
    return spath
