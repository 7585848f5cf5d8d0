"""Repeated consensus: one chain, one one-shot instance per height."""
from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Sequence

from .fairness import Mechanism
from .oneshot import Broadcast, Decide, OneShot, SetTimer, Timeouts
from .types import (
    GENESIS, Block, ConsensusMessage, Kind, Mempool, ProcessId, VoteSet,
    at_least_one_third, create_new_block, is_valid,
)

Selector = Callable[[Sequence[ProcessId], tuple, int], tuple]


def static_selector(n: int | None = None) -> Selector:
    def select(roster, chain, height):
        return tuple(sorted(roster)[: n or len(roster)])
    select.label = f"static(n={n})"
    return select


def stake_rotation_selector(n: int, stakes: dict[ProcessId, float] | None = None) -> Selector:
    """Weighted sampling without replacement, keyed by the chain tip digest.

    Uses exponential-race keys so higher stake means a smaller expected key;
    every process with equal inputs picks the same ``n`` validators.
    """
    def select(roster, chain, height):
        tip = chain[-1].digest
        keyed = []
        for p in sorted(roster):
            h = hashlib.sha256(f"{tip}:{height}:{p}".encode()).digest()
            u = (int.from_bytes(h[:8], "big") + 1) / 2.0 ** 64
            w = (stakes or {}).get(p, 1.0)
            keyed.append((-math.log(u) / w, p))
        return tuple(sorted(p for _, p in sorted(keyed)[:n]))
    select.label = f"stake_rotation(n={n})"
    return select


@dataclass(frozen=True)
class Output:
    height: int
    block: Block

    def apply_to(self, sim, pid):
        sim.blocks.setdefault(self.block.digest, self.block)
        sim.outputs[pid] = max(sim.outputs.get(pid, 0), self.height)
        sim.record(pid, "output", {"height": self.height, "block": self.block.digest,
                                   "parent": self.block.parent_hash})


@dataclass(frozen=True)
class HeightStart:
    height: int
    validators: tuple
    member: bool

    def apply_to(self, sim, pid):
        sim.record(pid, "height_start", {"height": self.height,
                                         "validators": list(self.validators),
                                         "member": self.member})


@dataclass(frozen=True)
class CommitWindow:
    height: int
    to_reward: frozenset
    seen: int
    timeout: int
    next_timeout: int

    def apply_to(self, sim, pid):
        sim.record(pid, "commit_window", {"height": self.height,
                                          "to_reward": sorted(self.to_reward),
                                          "seen": self.seen, "timeout": self.timeout,
                                          "next_timeout": self.next_timeout})


@dataclass(frozen=True)
class Adopt:
    height: int
    block: Block

    def apply_to(self, sim, pid):
        sim.blocks.setdefault(self.block.digest, self.block)
        sim.record(pid, "adopt", {"height": self.height, "block": self.block.digest})


class ProtocolViolation(RuntimeError):
    pass


class RepeatedNode:
    """A correct process running the repeated-consensus loop."""

    def __init__(self, pid: ProcessId, roster: Sequence[ProcessId], selector: Selector, *,
                 mechanism: Mechanism | None = None, timeouts: Timeouts | None = None,
                 delta_commit: int = 10, f: int = 0, unlock_rule: str = "corrected",
                 step_timers: str = "after_quorum", mempool: Mempool | None = None,
                 proposer_offset: int = 0):
        self.pid = pid
        self.roster = tuple(sorted(roster))
        self.selector = selector
        self.mechanism = mechanism or Mechanism()
        self.timeouts = timeouts or Timeouts()
        self.timeout_commit = delta_commit
        self.f = f
        self.unlock_rule = unlock_rule
        self.step_timers = step_timers
        self.mempool = mempool or Mempool()
        self.proposer_offset = proposer_offset

        self.height = 1
        self.chain: list[Block] = [GENESIS]
        self.commits = VoteSet()
        self.to_reward: dict[int, set] = defaultdict(set)
        self.heard: dict[int, set] = defaultdict(set)
        self.vsets: dict[int, tuple] = {}
        self.instance: OneShot | None = None
        self.block: Block | None = None
        self.waiting_commit_timer = False
        self._future: dict[int, list] = defaultdict(list)
        self._early_commits: dict[int, list] = defaultdict(list)
        self._out: list = []

    # -- handlers ---------------------------------------------------------

    def start(self) -> list:
        self._begin_height()
        return self._flush()

    def on_message(self, m: ConsensusMessage) -> list:
        if m.kind in (Kind.PREVOTE, Kind.PRECOMMIT) and m.signer in self.vsets.get(m.height, ()):
            self.heard[m.height].add(m.signer)
        if m.kind is Kind.COMMIT:
            self._deliver_commit(m)
        elif m.height == self.height and self.instance is not None:
            self._feed(self.instance.on_message(m))
        elif m.height > self.height:
            self._future[m.height].append(m)
        return self._flush()

    def on_timer(self, kind: str, height: int, rnd: int) -> list:
        if kind == "commit":
            if height == self.height and self.waiting_commit_timer:
                self._close_height()
        elif self.instance is not None and height == self.height:
            self._feed(self.instance.on_timer(kind, rnd))
        return self._flush()

    # -- internals --------------------------------------------------------

    def _flush(self) -> list:
        out, self._out = self._out, []
        return out

    def validators(self, height: int) -> tuple | None:
        return self.vsets.get(height)

    def _make_block(self, rnd: int) -> Block:
        rh, rewards = self.mechanism.assignment(self.height, self.to_reward,
                                                self._commit_lists(), self.f, self.heard)
        return create_new_block(rewards, self.mempool, self.chain, self.pid,
                                nonce=rnd - 1, reward_height=rh)

    def _commit_lists(self) -> dict[int, list]:
        return _CommitView(self.commits)

    def _begin_height(self) -> None:
        h = self.height
        vs = tuple(self.selector(self.roster, tuple(self.chain), h))
        self.vsets[h] = vs
        self.block = None
        self.waiting_commit_timer = False
        member = self.pid in vs
        self._out.append(HeightStart(h, vs, member))
        if member:
            self.instance = OneShot(
                self.pid, h, vs,
                make_block=self._make_block,
                is_valid=lambda v, tip=self.chain[-1]: is_valid(v, tip),
                timeouts=Timeouts(**vars(self.timeouts)),
                unlock_rule=self.unlock_rule, step_timers=self.step_timers,
                proposer_offset=self.proposer_offset)
            self._feed(self.instance.start())
            for m in self._future.pop(h, ()):
                if self.height != h or self.instance is None:
                    break
                self._feed(self.instance.on_message(m))
        else:
            self.instance = None
            self._future.pop(h, None)
        for m in self._early_commits.pop(h, ()):
            self._deliver_commit(m)
        if not member and self.height == h:
            self._try_adopt()

    def _feed(self, effects: list) -> None:
        for e in effects:
            self._out.append(e)
            if isinstance(e, Decide) and e.height == self.height and self.block is None:
                self._on_decide(e.block)

    def _on_decide(self, b: Block) -> None:
        h = self.height
        self.block = b
        heard = set()
        for k in (Kind.PREVOTE, Kind.PRECOMMIT):
            for r in self.instance.votes.rounds(h, k):
                heard |= self.instance.votes.signers(h, r, k)
        self.heard[h] |= heard
        m = ConsensusMessage(Kind.COMMIT, self.pid, h, 0, b, attest=frozenset(heard))
        self._out.append(Broadcast(m))
        self._insert_commit(m)
        self._arm_commit_timer()

    def _arm_commit_timer(self) -> None:
        self.waiting_commit_timer = True
        self._out.append(SetTimer("commit", self.height, 0, self.timeout_commit))

    def _insert_commit(self, m: ConsensusMessage) -> bool:
        vs = self.vsets.get(m.height)
        if vs is None or m.signer not in vs:
            return False
        if self.commits.insert(m) != "new":
            return False
        self.to_reward[m.height].add(m.signer)
        return True

    def _deliver_commit(self, m: ConsensusMessage) -> None:
        if m.height > self.height or m.height not in self.vsets:
            self._early_commits[m.height].append(m)
            return
        if not self._insert_commit(m):
            return
        self._out.append(Broadcast(m, relay=True))
        if m.height == self.height and self.instance is None and self.block is None:
            self._try_adopt()

    def _try_adopt(self) -> None:
        h = self.height
        n = len(self.vsets[h])
        for r in self.commits.rounds(h, Kind.COMMIT):
            msgs = self.commits.messages(h, r, Kind.COMMIT)
            for b in {m.value for m in msgs}:
                if isinstance(b, Block) and at_least_one_third(b, msgs, n) and is_valid(b, self.chain[-1]):
                    self.block = b
                    self._out.append(Adopt(h, b))
                    self._arm_commit_timer()
                    return

    def _close_height(self) -> None:
        h = self.height
        if self.block is None:
            raise ProtocolViolation(f"p{self.pid} reached the commit timeout of {h} without a block")
        n = len(self.vsets[h])
        seen = self.commits.count(h, 0, Kind.COMMIT)
        nxt = self.mechanism.next_timeout(self.timeout_commit, seen, n)
        self._out.append(CommitWindow(h, frozenset(self.to_reward[h]), seen,
                                      self.timeout_commit, nxt))
        self.timeout_commit = nxt
        self._out.append(Output(h, self.block))
        self.chain.append(self.block)
        self.height = h + 1
        self.instance = None
        self._begin_height()


class _CommitView(dict):
    """Lazy height -> commit list mapping over a VoteSet."""

    def __init__(self, votes: VoteSet):
        super().__init__()
        self._votes = votes

    def get(self, height, default=()):
        return self._votes.messages(height, 0, Kind.COMMIT) or default
