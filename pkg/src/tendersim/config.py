"""Run configuration: one YAML document describes a run or a scenario."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .fairness import Mechanism
from .netsim import Mode, NetworkModel
from .oneshot import Timeouts
from .types import max_faulty


class ConfigError(ValueError):
    pass


STRATEGIES = ("silent", "equivocate", "selective", "stale", "invalid", "lock_split", "freerider",
              "unlock_bait")

_TOP_KEYS = {
    "name", "description", "protocol", "n", "roster", "byzantine", "f", "unsafe", "network",
    "timeouts", "unlock_rule", "step_timers", "mechanism", "selector", "seed", "horizon",
    "tail_window", "strategy", "script", "delays", "expect", "proposer_offset", "stakes",
    "check_proposer", "fairness",
}


@dataclass
class RunConfig:
    name: str = "run"
    description: str = ""
    protocol: str = "oneshot"
    n: int = 4
    roster: int = 4
    byzantine: tuple = ()
    f: int = 1
    unsafe: bool = False
    network: NetworkModel = field(default_factory=NetworkModel)
    timeouts: Timeouts = field(default_factory=Timeouts)
    delta_commit: int = 10
    unlock_rule: str = "corrected"
    step_timers: str = "after_quorum"
    mechanism: Mechanism = field(default_factory=Mechanism)
    selector: str = "static"
    stakes: dict = field(default_factory=dict)
    seed: int = 0
    max_time: int = 20000
    max_rounds: int | None = None
    heights: int = 1
    tail_window: int = 10
    strategy: dict = field(default_factory=dict)
    script: dict = field(default_factory=dict)
    delays: dict = field(default_factory=dict)
    fairness: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    proposer_offset: int = 0
    check_proposer: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def processes(self) -> tuple[int, ...]:
        return tuple(range(1, self.roster + 1))

    @property
    def correct(self) -> tuple[int, ...]:
        return tuple(p for p in self.processes if p not in self.byzantine)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _req_int(d: dict, key: str, default: int, minimum: int = 0) -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer")
    if v < minimum:
        raise ConfigError(f"{key} must be >= {minimum}")
    return v


def from_dict(d: dict[str, Any], *, seed: int | None = None) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    raw = copy.deepcopy(d)
    if seed is not None:
        raw["seed"] = seed
    protocol = d.get("protocol", "oneshot")
    if protocol not in ("oneshot", "repeated"):
        raise ConfigError("protocol must be oneshot or repeated")
    n = _req_int(d, "n", 4, 1)
    roster = _req_int(d, "roster", n, n)
    if protocol == "oneshot" and roster != n:
        raise ConfigError("one-shot runs use roster == n")
    byz = d.get("byzantine", [])
    if not isinstance(byz, list) or any(not isinstance(p, int) or not 1 <= p <= roster for p in byz):
        raise ConfigError("byzantine must list process indices in 1..roster")
    f = _req_int(d, "f", max_faulty(n), 0)
    unsafe = bool(d.get("unsafe", False))
    if not unsafe:
        if 3 * f >= n:
            raise ConfigError(f"f={f} violates f < n/3 for n={n} (set unsafe: true to override)")
        if len(byz) > f:
            raise ConfigError(f"{len(byz)} Byzantine processes exceed f={f}")

    net = d.get("network", {}) or {}
    try:
        mode = Mode(net.get("mode", "EVENTUALLY_SYNCHRONOUS"))
        model = NetworkModel(mode, _req_int(net, "gst", 0), _req_int(net, "delta", 3, 1),
                             _req_int(net, "max_pre_gst_delay", 30, 1),
                             _req_int(net, "min_delay", 1, 1))
    except ValueError as e:
        raise ConfigError(f"network: {e}") from None

    to = d.get("timeouts", {}) or {}
    timeouts = Timeouts(_req_int(to, "propose", 10, 1), _req_int(to, "prevote", 10, 1),
                        _req_int(to, "precommit", 10, 1))
    delta_commit = _req_int(to, "commit", 10, 1)

    unlock = d.get("unlock_rule", "corrected")
    if unlock not in ("corrected", "legacy"):
        raise ConfigError("unlock_rule must be corrected or legacy")
    step_timers = d.get("step_timers", "after_quorum")
    if step_timers not in ("after_quorum", "on_entry"):
        raise ConfigError("step_timers must be after_quorum or on_entry")
    try:
        mech = Mechanism.parse(str(d.get("mechanism", "ORIGINAL")))
    except ValueError as e:
        raise ConfigError(f"mechanism: {e}") from None
    selector = d.get("selector", "static")
    if selector not in ("static", "stake_rotation"):
        raise ConfigError("selector must be static or stake_rotation")

    hz = d.get("horizon", {}) or {}
    max_rounds = hz.get("rounds")
    if max_rounds is not None:
        max_rounds = _req_int(hz, "rounds", 0, 1)
    heights = _req_int(hz, "heights", 1, 1)

    strategy = d.get("strategy", {}) or {}
    for s in strategy.get("mix", []):
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    script = d.get("script", {}) or {}
    for pid in script:
        if pid not in byz:
            raise ConfigError(f"script references non-Byzantine process {pid}")

    return RunConfig(
        name=str(d.get("name", "run")), description=str(d.get("description", "")),
        protocol=protocol, n=n, roster=roster, byzantine=tuple(sorted(byz)), f=f, unsafe=unsafe,
        network=model, timeouts=timeouts, delta_commit=delta_commit, unlock_rule=unlock,
        step_timers=step_timers, mechanism=mech, selector=selector,
        stakes={int(k): float(v) for k, v in (d.get("stakes") or {}).items()},
        seed=_req_int(raw, "seed", 0), max_time=_req_int(hz, "time", 20000, 1),
        max_rounds=max_rounds, heights=heights, tail_window=_req_int(d, "tail_window", 10, 0),
        strategy=strategy, script=script, delays=d.get("delays", {}) or {},
        fairness=d.get("fairness", {}) or {}, expect=d.get("expect", {}) or {},
        proposer_offset=_req_int(d, "proposer_offset", 0),
        check_proposer=bool(d.get("check_proposer", True)), raw=raw,
    )


def load(path: str | Path, *, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
        data = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return from_dict(data, seed=seed)
