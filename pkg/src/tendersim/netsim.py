"""Deterministic discrete-event network simulator.

Time is an integer tick.  Events are ordered by ``(time, class, seq)``
where deliveries (class 0) come before timer firings (class 1) and
adversary wake-ups (class 2) at the same tick.  Nothing here reads a clock
or global randomness: every run is a pure function of its inputs.
"""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Protocol, Sequence

from .oneshot import (
    Broadcast, CancelTimer, Decide, EnterStep, Evidence, LeaveRound, LockChange,
    SetTimer, Step, TimeoutChange,
)
from .types import Authenticator, Block, ConsensusMessage, Kind, Marker, ProcessId, value_label

TRACE_VERSION = 1


class Mode(Enum):
    SYNCHRONOUS = "SYNCHRONOUS"
    EVENTUALLY_SYNCHRONOUS = "EVENTUALLY_SYNCHRONOUS"
    ASYNCHRONOUS = "ASYNCHRONOUS"


@dataclass(frozen=True)
class NetworkModel:
    mode: Mode = Mode.EVENTUALLY_SYNCHRONOUS
    gst: int = 0
    delta: int = 3
    max_pre_gst_delay: int = 30
    min_delay: int = 1

    def __post_init__(self):
        if self.min_delay < 1 or self.delta < self.min_delay:
            raise ValueError("need 1 <= min_delay <= delta")
        if self.max_pre_gst_delay < self.min_delay:
            raise ValueError("max_pre_gst_delay below min_delay")
        if self.mode is Mode.SYNCHRONOUS and self.gst != 0:
            object.__setattr__(self, "gst", 0)

    def synchronous_at(self, t: int) -> bool:
        if self.mode is Mode.ASYNCHRONOUS:
            return False
        return t >= self.gst

    def sample(self, rng: random.Random, t: int) -> int:
        if self.synchronous_at(t):
            return rng.randint(self.min_delay, self.delta)
        return rng.randint(self.min_delay, self.max_pre_gst_delay)


class ModelViolation(RuntimeError):
    """A schedule broke the network model it claims to run under."""


@dataclass(frozen=True)
class Anchor:
    """Deliver relative to the recipient's timer ``(kind, height, round)`` expiry."""
    timer: str
    height: int
    round: int
    offset: int


Delay = int | Anchor | None  # None means "never" (Byzantine omission only)


class DelayPolicy(Protocol):
    def delay(self, sim: "Simulator", msg: ConsensusMessage, sender: ProcessId,
              recipient: ProcessId, relay: bool, base: int) -> Delay: ...


class DefaultPolicy:
    def delay(self, sim, msg, sender, recipient, relay, base):
        return base


@dataclass(frozen=True)
class Send:
    """A Byzantine emission: message plus per-recipient delay (missing = omitted)."""
    msg: ConsensusMessage
    to: dict


@dataclass(frozen=True)
class Wakeup:
    delay: int
    tag: Any


class Actor(Protocol):
    pid: ProcessId

    def start(self, ctx: "ActorContext") -> list: ...
    def on_message(self, ctx: "ActorContext", msg: ConsensusMessage, sender: ProcessId) -> list: ...
    def on_wakeup(self, ctx: "ActorContext", tag) -> list: ...


class Process(Protocol):
    pid: ProcessId

    def start(self) -> list: ...
    def on_message(self, msg: ConsensusMessage) -> list: ...
    def on_timer(self, kind: str, height: int, rnd: int) -> list: ...


class ActorContext:
    """What a Byzantine actor may observe and use."""

    def __init__(self, sim: "Simulator", pid: ProcessId):
        self.sim = sim
        self.pid = pid
        self.rng = random.Random(sim.rng.getrandbits(64))

    @property
    def now(self) -> int:
        return self.sim.now

    @property
    def roster(self) -> tuple[ProcessId, ...]:
        return self.sim.roster

    def validators(self, height: int):
        return self.sim.public_validators(height)

    def tip(self, height: int):
        return self.sim.public_tip(height)


@dataclass
class Trace:
    records: list
    messages: list
    blocks: dict
    meta: dict

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "meta", "version": TRACE_VERSION, **self.meta},
                            sort_keys=True, separators=(",", ":"))]
        for digest in sorted(self.blocks):
            lines.append(json.dumps({"type": "block", **self.blocks[digest].to_json()},
                                    sort_keys=True, separators=(",", ":")))
        for i, m in enumerate(self.messages):
            lines.append(json.dumps({"type": "msg", "mid": i, **_msg_json(m)},
                                    sort_keys=True, separators=(",", ":")))
        for rid, t, pid, kind, data in self.records:
            lines.append(json.dumps({"type": "rec", "id": rid, "t": t, "pid": pid,
                                     "kind": kind, "data": data},
                                    sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def of_kind(self, *kinds: str):
        return [r for r in self.records if r[3] in kinds]

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        """Parse a trace; a torn final line marks the trace ``truncated``."""
        meta, blocks, messages, records = None, {}, [], []
        lines = text.splitlines()
        truncated = False
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    truncated = True
                    break
                raise ValueError(f"line {i + 1} is not JSON") from None
            typ = d.pop("type")
            if typ == "meta":
                if d.pop("version") != TRACE_VERSION:
                    raise ValueError("unsupported trace version")
                meta = d
            elif typ == "block":
                b = Block.from_json(d)
                blocks[b.digest] = b
            elif typ == "msg":
                if d["mid"] != len(messages):
                    raise ValueError(f"message ids out of order at line {i + 1}")
                ref = d["ref"]
                value = blocks[ref] if ref in blocks else Marker(ref)
                attest = d.get("attest")
                messages.append(ConsensusMessage(
                    Kind(d["kind"]), d["signer"], d["height"], d["round"], value,
                    d.get("polc_round"), d.get("llr"),
                    frozenset(attest) if attest is not None else None))
            elif typ == "rec":
                records.append((d["id"], d["t"], d["pid"], d["kind"], d["data"]))
        if meta is None:
            raise ValueError("trace has no meta line")
        if truncated or "stop" not in meta:
            meta["truncated"] = True
        return cls(records, messages, blocks, meta)


def _msg_json(m: ConsensusMessage) -> dict:
    d = m.brief()
    d["ref"] = m.value.digest if isinstance(m.value, Block) else m.value.value
    if m.llr is not None:
        d["llr"] = m.llr
    if m.attest is not None:
        d["attest"] = sorted(m.attest)
    return d


class Simulator:
    """Runs correct processes and Byzantine actors over a :class:`NetworkModel`."""

    def __init__(self, processes: Sequence[Process], actors: Sequence[Actor],
                 model: NetworkModel, *, seed: int,
                 policy: DelayPolicy | None = None,
                 public_validators: Callable[[int], Any] | None = None,
                 public_tip: Callable[[int], Any] | None = None,
                 meta: dict | None = None):
        self.model = model
        self.rng = random.Random(seed)
        self.policy = policy or DefaultPolicy()
        self.procs = {p.pid: p for p in processes}
        self.actors = {a.pid: a for a in actors}
        if set(self.procs) & set(self.actors):
            raise ValueError("a pid cannot be both correct and Byzantine")
        self.roster = tuple(sorted([*self.procs, *self.actors]))
        self.correct = frozenset(self.procs)
        self.auth = Authenticator()
        self._public_validators = public_validators
        self._public_tip = public_tip
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self._timer_gen: dict = {}
        self._timer_expiry: dict = {}
        self._anchored: dict = {}
        self._msg_ids: dict[ConsensusMessage, int] = {}
        self.messages: list[ConsensusMessage] = []
        self.blocks: dict[str, Block] = {}
        self.records: list = []
        self.meta = dict(meta or {})
        self.ctx = {pid: ActorContext(self, pid) for pid in sorted(self.actors)}
        self.decisions: dict[tuple[ProcessId, int], Block] = {}
        self.max_round: dict[ProcessId, int] = {p: 0 for p in self.procs}
        self.outputs: dict[ProcessId, int] = {p: 0 for p in self.procs}
        self.hooks: list[Callable] = []

    # -- public knowledge ---------------------------------------------------

    def public_validators(self, height: int):
        return self._public_validators(height) if self._public_validators else None

    def public_tip(self, height: int):
        return self._public_tip(height) if self._public_tip else None

    # -- recording ---------------------------------------------------------

    def record(self, pid: ProcessId | None, kind: str, data: dict) -> int:
        rid = len(self.records)
        self.records.append((rid, self.now, pid, kind, data))
        return rid

    def _mid(self, m: ConsensusMessage) -> int:
        mid = self._msg_ids.get(m)
        if mid is None:
            mid = self._msg_ids[m] = len(self.messages)
            self.messages.append(m)
            if isinstance(m.value, Block):
                self.blocks.setdefault(m.value.digest, m.value)
        return mid

    # -- queue -------------------------------------------------------------

    def _push(self, t: int, cls: int, item) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (t, cls, self._seq, item))

    def _schedule(self, sender: ProcessId, recipient: ProcessId, m: ConsensusMessage,
                  d: Delay, mid: int) -> None:
        if d is None:
            return
        if isinstance(d, Anchor):
            key = (recipient, d.timer, d.height, d.round)
            expiry = self._timer_expiry.get(key)
            if expiry is not None:
                self._push(max(self.now, expiry + d.offset), 0, ("msg", recipient, sender, m, mid))
            else:
                self._anchored.setdefault(key, []).append((sender, m, mid, d.offset))
            return
        self._push(self.now + d, 0, ("msg", recipient, sender, m, mid))

    def _fanout(self, sender: ProcessId, m: ConsensusMessage, relay: bool) -> None:
        self.auth.emit(sender, m)
        mid = self._mid(m)
        self.record(sender, "emit", {"mid": mid, "relay": relay, "signer": m.signer})
        for r in self.roster:
            if r == sender:
                continue
            base = self.model.sample(self.rng, self.now)
            d = self.policy.delay(self, m, sender, r, relay, base)
            if r in self.correct:
                self._check(sender, r, d)
            self._schedule(sender, r, m, d, mid)

    def _check(self, sender, recipient, d: Delay) -> None:
        if sender not in self.correct:
            return
        if d is None or isinstance(d, Anchor):
            raise ModelViolation("correct-to-correct messages need a finite tick delay")
        if d < 1:
            raise ModelViolation("delays are at least one tick")
        if self.model.synchronous_at(self.now) and d > self.model.delta:
            raise ModelViolation(
                f"p{sender}->p{recipient} delay {d} exceeds delta={self.model.delta} after GST")

    # -- effects -----------------------------------------------------------

    def _apply(self, pid: ProcessId, effects: Iterable) -> None:
        for e in effects:
            t = type(e)
            if t is Broadcast:
                self._fanout(pid, e.msg, e.relay)
            elif t is SetTimer:
                key = (pid, e.kind, e.height, e.round)
                gen = self._timer_gen.get(key, 0) + 1
                self._timer_gen[key] = gen
                expiry = self.now + e.duration
                self._timer_expiry[key] = expiry
                self._push(expiry, 1, ("timer", pid, key, gen))
                self.record(pid, "timer_set", {"timer": e.kind, "height": e.height,
                                               "round": e.round, "expiry": expiry})
                for sender, m, mid, off in self._anchored.pop(key, ()):
                    self._push(max(self.now, expiry + off), 0, ("msg", pid, sender, m, mid))
            elif t is CancelTimer:
                key = (pid, e.kind, e.height, e.round)
                self._timer_gen[key] = self._timer_gen.get(key, 0) + 1
            elif t is EnterStep:
                if e.step is Step.PROPOSE or e.via == "goto":
                    self.max_round[pid] = max(self.max_round[pid], e.round)
                self.record(pid, "step", {"step": e.step.value, "height": e.height,
                                          "round": e.round, "locked": value_label(e.locked),
                                          "llr": e.llr, "polcr": e.polcr, "via": e.via})
            elif t is LeaveRound:
                self.record(pid, "round_end", {"height": e.height, "round": e.round,
                                               "locked": value_label(e.locked), "llr": e.llr,
                                               "polcr": e.polcr})
            elif t is LockChange:
                if isinstance(e.locked, Block):
                    self.blocks.setdefault(e.locked.digest, e.locked)
                self.record(pid, "lock", {"height": e.height, "round": e.round,
                                          "locked": value_label(e.locked), "llr": e.llr,
                                          "cause": e.cause})
            elif t is TimeoutChange:
                self.record(pid, "timeout", {"name": e.name, "height": e.height, "value": e.value})
            elif t is Decide:
                self.blocks.setdefault(e.block.digest, e.block)
                self.decisions[(pid, e.height)] = e.block
                self.record(pid, "decide", {"height": e.height, "round": e.round,
                                            "block": e.block.digest})
            elif t is Evidence:
                self.record(pid, "evidence", {"mid": self._mid(e.msg), "reason": e.reason})
            else:
                self._apply_extra(pid, e)

    def _apply_extra(self, pid, e) -> None:
        handler = getattr(e, "apply_to", None)
        if handler is None:
            raise TypeError(f"unknown effect {e!r}")
        handler(self, pid)

    def _apply_actor(self, pid: ProcessId, out: Iterable) -> None:
        for item in out:
            if isinstance(item, Wakeup):
                self._push(self.now + max(0, item.delay), 2, ("wake", pid, item.tag))
                continue
            m = item.msg
            self.auth.emit(pid, m)
            mid = self._mid(m)
            self.record(pid, "emit", {"mid": mid, "relay": m.signer != pid,
                                      "signer": m.signer, "to": sorted(item.to)})
            for r, d in sorted(item.to.items()):
                if r == pid or r not in self.roster:
                    continue
                if isinstance(d, int) and d < 1:
                    d = 1
                self._schedule(pid, r, m, d, mid)

    # -- loop --------------------------------------------------------------

    def run(self, *, max_time: int, max_rounds: int | None = None,
            until: Callable[["Simulator"], bool] | None = None) -> Trace:
        stop = "horizon"
        for pid in sorted(self.procs):
            self._apply(pid, self.procs[pid].start())
        for pid in sorted(self.actors):
            self._apply_actor(pid, self.actors[pid].start(self.ctx[pid]))
        while self._queue:
            t, cls, _, item = self._queue[0]
            if t > max_time:
                break
            heapq.heappop(self._queue)
            self.now = t
            tag = item[0]
            if tag == "msg":
                _, r, sender, m, mid = item
                if r in self.procs:
                    self.record(r, "deliver", {"mid": mid, "from": sender})
                    self._apply(r, self.procs[r].on_message(m))
                else:
                    self._apply_actor(r, self.actors[r].on_message(self.ctx[r], m, sender))
            elif tag == "timer":
                _, pid, key, gen = item
                if self._timer_gen.get(key) != gen:
                    continue
                _, kind, h, rnd = key
                self.record(pid, "timer_fired", {"timer": kind, "height": h, "round": rnd})
                self._apply(pid, self.procs[pid].on_timer(kind, h, rnd))
            else:
                _, pid, wtag = item
                self._apply_actor(pid, self.actors[pid].on_wakeup(self.ctx[pid], wtag))
            for hook in self.hooks:
                hook(self)
            if max_rounds is not None and max(self.max_round.values(), default=0) > max_rounds:
                stop = "round_horizon"
                break
            if until is not None and until(self):
                stop = "done"
                break
        else:
            stop = "quiescent"
        self.meta["stop"] = stop
        self.meta["end_time"] = self.now
        return Trace(self.records, self.messages, self.blocks, self.meta)
