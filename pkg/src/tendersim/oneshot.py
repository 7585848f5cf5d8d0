"""Per-validator one-shot consensus for a single height.

The machine is a plain event handler: ``start``, ``on_message`` and
``on_timer`` each return the list of effects the call produced.  It never
touches a clock or a network; the simulator (or a test) interprets effects.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .types import (
    BOTTOM, NIL, Block, ConsensusMessage, Kind, ProcessId, Value, VoteSet, quorum,
)


class Step(Enum):
    PROPOSE = "PROPOSE"
    PREVOTE = "PREVOTE"
    PRECOMMIT = "PRECOMMIT"
    DECIDED = "DECIDED"


class _Wait(Enum):
    PROPOSAL = 1
    UNLOCK = 2
    PREVOTES = 3
    PREVOTE_TIMER = 4
    PRECOMMITS = 5
    NONE = 6


# -- effects -----------------------------------------------------------------

@dataclass(frozen=True)
class Broadcast:
    msg: ConsensusMessage
    relay: bool = False


@dataclass(frozen=True)
class SetTimer:
    kind: str
    height: int
    round: int
    duration: int


@dataclass(frozen=True)
class CancelTimer:
    kind: str
    height: int
    round: int


@dataclass(frozen=True)
class EnterStep:
    step: Step
    height: int
    round: int
    locked: Value
    llr: int
    polcr: int | None
    via: str = "sequence"


@dataclass(frozen=True)
class LeaveRound:
    height: int
    round: int
    locked: Value
    llr: int
    polcr: int | None


@dataclass(frozen=True)
class LockChange:
    height: int
    round: int
    locked: Value
    llr: int
    cause: str


@dataclass(frozen=True)
class TimeoutChange:
    name: str
    height: int
    value: int


@dataclass(frozen=True)
class Decide:
    height: int
    round: int
    block: Block


@dataclass(frozen=True)
class Evidence:
    msg: ConsensusMessage
    reason: str


Effect = (Broadcast | SetTimer | CancelTimer | EnterStep | LeaveRound | LockChange
          | TimeoutChange | Decide | Evidence)


def proposer(validators: Sequence[ProcessId], height: int, rnd: int, offset: int = 0) -> ProcessId:
    if not validators:
        raise ValueError("empty validator list")
    if rnd < 1:
        raise ValueError("rounds start at 1")
    return validators[((height - 1) + (rnd - 1) + offset) % len(validators)]


@dataclass
class Timeouts:
    propose: int = 10
    prevote: int = 10
    precommit: int = 10


class OneShot:
    """State machine of one correct validator for height ``height``.

    ``unlock_rule`` is ``"corrected"`` (unlock only on a quorum for some
    other block) or ``"legacy"`` (any block quorum unlocks).

    ``step_timers`` selects how the prevote and precommit steps end when no
    decisive quorum shows up.  ``"after_quorum"`` follows the pseudo-code
    literally: the prevote timer starts once more than 2n/3 prevotes of any
    value are in, and the precommit step waits for more than 2n/3
    precommits.  ``"on_entry"`` follows the state-machine figure: both
    timers start on step entry, and precommit has its own timeout.
    """

    def __init__(self, pid: ProcessId, height: int, validators: Sequence[ProcessId], *,
                 make_block: Callable[[int], Block],
                 is_valid: Callable[[Value], bool],
                 timeouts: Timeouts | None = None,
                 unlock_rule: str = "corrected",
                 step_timers: str = "after_quorum",
                 check_proposer: bool = True,
                 proposer_offset: int = 0):
        if unlock_rule not in ("corrected", "legacy"):
            raise ValueError(f"unknown unlock rule {unlock_rule!r}")
        if step_timers not in ("after_quorum", "on_entry"):
            raise ValueError(f"unknown step_timers {step_timers!r}")
        self.pid = pid
        self.height = height
        self.validators = tuple(validators)
        self.n = len(self.validators)
        self._members = frozenset(self.validators)
        self.q = quorum(self.n)
        self.make_block = make_block
        self.is_valid = is_valid
        t = timeouts or Timeouts()
        self.timeout_propose = t.propose
        self.timeout_prevote = t.prevote
        self.timeout_precommit = t.precommit
        self.unlock_rule = unlock_rule
        self.step_timers = step_timers
        self.check_proposer = check_proposer
        self.proposer_offset = proposer_offset

        self.round = 0
        self.step: Step | None = None
        self.locked: Value = NIL
        self.llr = -1
        self.polcr: int | None = None
        self.proposals: dict[int, ConsensusMessage] = {}
        self.votes = VoteSet()
        self.decided: Value = BOTTOM
        self._wait = _Wait.NONE
        self._fired: set[tuple[str, int]] = set()
        self._armed: set[tuple[str, int]] = set()
        self._out: list[Effect] = []

    # -- public handlers --------------------------------------------------

    def proposer(self, rnd: int) -> ProcessId:
        return proposer(self.validators, self.height, rnd, self.proposer_offset)

    def start(self) -> list[Effect]:
        if self.round == 0:
            self._enter_round(1)
            self._progress()
        return self._flush()

    def on_message(self, m: ConsensusMessage) -> list[Effect]:
        if self.step is Step.DECIDED or m.height != self.height or m.kind is Kind.COMMIT:
            return []
        self._ingest(m, relay=True)
        if self.step is not Step.DECIDED:
            self._progress()
        return self._flush()

    def on_timer(self, kind: str, rnd: int) -> list[Effect]:
        if self.step is Step.DECIDED or (kind, rnd) not in self._armed:
            return []
        self._armed.discard((kind, rnd))
        self._fired.add((kind, rnd))
        self._progress()
        return self._flush()

    # -- plumbing ---------------------------------------------------------

    def _flush(self) -> list[Effect]:
        out, self._out = self._out, []
        return out

    def _emit(self, e: Effect) -> None:
        self._out.append(e)

    def _set_timer(self, kind: str, duration: int) -> None:
        self._armed.add((kind, self.round))
        self._emit(SetTimer(kind, self.height, self.round, duration))

    def _cancel_timers(self) -> None:
        for kind, rnd in sorted(self._armed):
            self._emit(CancelTimer(kind, self.height, rnd))
        self._armed.clear()

    def _broadcast(self, m: ConsensusMessage) -> None:
        self._emit(Broadcast(m))
        self._ingest(m, relay=False)

    def _snapshot_leave(self) -> None:
        if self.round >= 1:
            self._emit(LeaveRound(self.height, self.round, self.locked, self.llr, self.polcr))

    def _set_lock(self, value: Value, llr: int, cause: str) -> None:
        if value == self.locked and llr == self.llr:
            return
        self.locked, self.llr = value, llr
        self._emit(LockChange(self.height, self.round, value, llr, cause))

    def _enter_step(self, step: Step, via: str = "sequence") -> None:
        self.step = step
        self._emit(EnterStep(step, self.height, self.round, self.locked, self.llr, self.polcr, via))

    # -- delivery ---------------------------------------------------------

    def _ingest(self, m: ConsensusMessage, relay: bool) -> None:
        if m.signer not in self._members:
            self._emit(Evidence(m, "not-validator"))
            return
        if m.kind is Kind.PROPOSE:
            self._deliver_propose(m, relay)
            return
        status = self.votes.insert(m)
        if status == "conflict":
            self._emit(Evidence(m, "equivocation"))
            if m.kind is Kind.PRECOMMIT:
                self._try_decide(m.round)
            return
        if status != "new":
            return
        if relay:
            self._emit(Broadcast(m, relay=True))
        if m.kind is Kind.PRECOMMIT:
            self._try_decide(m.round)
            if self.step is Step.DECIDED:
                return
        if m.round > self.round and self.votes.count(self.height, m.round, m.kind) >= self.q:
            self._goto(m.round, Step.PREVOTE if m.kind is Kind.PREVOTE else Step.PRECOMMIT)

    def _deliver_propose(self, m: ConsensusMessage, relay: bool) -> None:
        if self.check_proposer and m.signer != self.proposer(m.round):
            self._emit(Evidence(m, "not-proposer"))
            return
        held = self.proposals.get(m.round)
        if held is not None:
            if held != m and held.signer == m.signer:
                self._emit(Evidence(m, "equivocation"))
            return
        self.proposals[m.round] = m
        self.polcr = m.polc_round
        if relay:
            self._emit(Broadcast(m, relay=True))

    def _try_decide(self, rnd: int) -> None:
        b = self.votes.decision_block(self.height, rnd, Kind.PRECOMMIT, self.n)
        if b is None:
            return
        self.decided = b
        self._cancel_timers()
        self._snapshot_leave()
        self.step = Step.DECIDED
        self._wait = _Wait.NONE
        self._emit(Decide(self.height, rnd, b))

    def _goto(self, rnd: int, step: Step) -> None:
        self._cancel_timers()
        self._snapshot_leave()
        self.round = rnd
        if step is Step.PREVOTE:
            self._enter_prevote(via="goto")
        else:
            self._enter_precommit(via="goto")

    # -- steps ------------------------------------------------------------

    def _enter_round(self, rnd: int) -> None:
        self._cancel_timers()
        self._snapshot_leave()
        self.round = rnd
        self.polcr = None
        self._enter_step(Step.PROPOSE)
        if self.proposer(rnd) == self.pid:
            if self.llr != -1:
                self.polcr = self.llr
                b = self.locked
            else:
                b = self.make_block(rnd)
            self._broadcast(ConsensusMessage(Kind.PROPOSE, self.pid, self.height, rnd, b,
                                             polc_round=self.polcr))
            if self.step is not Step.DECIDED:
                self._enter_prevote()
        else:
            self._wait = _Wait.PROPOSAL
            self._set_timer("propose", self.timeout_propose)

    def _enter_prevote(self, via: str = "sequence") -> None:
        self._enter_step(Step.PREVOTE, via)
        p = self.polcr
        if p is not None and self.llr != -1 and self.llr < p < self.round:
            self._wait = _Wait.UNLOCK
        else:
            self._cast_prevote()

    def _unlock_check(self) -> None:
        p = self.polcr
        tally = self.votes.block_quorum(self.height, p, Kind.PREVOTE, self.n)
        if tally is None:
            return
        if self.unlock_rule == "legacy" or tally != self.locked:
            self._set_lock(NIL, -1, "unlock_rule")

    def _cast_prevote(self) -> None:
        r = self.round
        if self.locked is not NIL:
            v = self.locked
        else:
            prop = self.proposals.get(r)
            v = prop.value if prop is not None and self.is_valid(prop.value) else NIL
        self._broadcast(ConsensusMessage(Kind.PREVOTE, self.pid, self.height, r, v, llr=self.llr))
        if self.step is Step.DECIDED:
            return
        if self.step_timers == "on_entry":
            self._set_timer("prevote", self.timeout_prevote)
            self._wait = _Wait.PREVOTE_TIMER
        else:
            self._wait = _Wait.PREVOTES

    def _decisive_prevotes(self) -> bool:
        h, r = self.height, self.round
        return (self.votes.has_quorum(h, r, Kind.PREVOTE, NIL, self.n)
                or self.votes.block_quorum(h, r, Kind.PREVOTE, self.n) is not None)

    def _enter_precommit(self, via: str = "sequence") -> None:
        self._enter_step(Step.PRECOMMIT, via)
        h, r = self.height, self.round
        b = self.votes.block_quorum(h, r, Kind.PREVOTE, self.n)
        if b is not None:
            self._set_lock(b, r, "lock")
            v: Value = b
        else:
            if self.votes.has_quorum(h, r, Kind.PREVOTE, NIL, self.n):
                self._set_lock(NIL, -1, "nil_quorum")
            v = NIL
        self._broadcast(ConsensusMessage(Kind.PRECOMMIT, self.pid, h, r, v))
        if self.step is Step.DECIDED:
            return
        self._wait = _Wait.PRECOMMITS
        if self.step_timers == "on_entry":
            self._set_timer("precommit", self.timeout_precommit)

    def _bump(self, name: str) -> None:
        attr = f"timeout_{name}"
        setattr(self, attr, getattr(self, attr) + 1)
        self._emit(TimeoutChange(name, self.height, getattr(self, attr)))

    def _expired(self, kind: str) -> bool:
        return (kind, self.round) in self._fired

    def _cancel(self, kind: str) -> None:
        if (kind, self.round) in self._armed:
            self._armed.discard((kind, self.round))
            self._emit(CancelTimer(kind, self.height, self.round))

    def _progress(self) -> None:
        """Re-evaluate the current wait condition until nothing more can move."""
        while self.step is not Step.DECIDED:
            w, h, r = self._wait, self.height, self.round
            if w is _Wait.PROPOSAL:
                if r in self.proposals:
                    self._cancel("propose")
                elif self._expired("propose"):
                    self._bump("propose")
                else:
                    return
                self._enter_prevote()
            elif w is _Wait.UNLOCK:
                if self.votes.count(h, self.polcr, Kind.PREVOTE) >= self.q:
                    self._unlock_check()
                    self._cast_prevote()
                else:
                    return
            elif w is _Wait.PREVOTES:
                if self._decisive_prevotes():
                    self._enter_precommit()
                elif self.votes.count(h, r, Kind.PREVOTE) >= self.q:
                    self._set_timer("prevote", self.timeout_prevote)
                    self._wait = _Wait.PREVOTE_TIMER
                else:
                    return
            elif w is _Wait.PREVOTE_TIMER:
                if self._decisive_prevotes():
                    self._cancel("prevote")
                elif self._expired("prevote"):
                    self._bump("prevote")
                else:
                    return
                self._enter_precommit()
            elif w is _Wait.PRECOMMITS:
                if (self.votes.has_quorum(h, r, Kind.PREVOTE, NIL, self.n)
                        or self.votes.count(h, r, Kind.PRECOMMIT) >= self.q):
                    self._cancel("precommit")
                elif self.step_timers == "on_entry" and self._expired("precommit"):
                    self._bump("precommit")
                else:
                    return
                self._enter_round(r + 1)
            else:
                return

    # -- inspection -------------------------------------------------------

    def snapshot(self) -> dict:
        return {"round": self.round, "step": self.step.value if self.step else None,
                "locked": self.locked, "llr": self.llr, "polcr": self.polcr,
                "decided": self.decided}
