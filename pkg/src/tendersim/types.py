"""Shared domain types: processes, blocks, messages, vote sets and quorum predicates."""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

ProcessId = int
GENESIS_PARENT = "0" * 64
TX_PATTERN = re.compile(r"^tx:\d+:\d+:\d+$")


def pname(pid: ProcessId) -> str:
    return f"p{pid}"


def quorum(n: int) -> int:
    """Smallest signer count that is strictly more than two thirds of ``n``."""
    if n < 1:
        raise ValueError("n must be positive")
    return 2 * n // 3 + 1


def one_third_plus(n: int) -> int:
    """Smallest signer count that is strictly more than a third of ``n``."""
    if n < 1:
        raise ValueError("n must be positive")
    return n // 3 + 1


def max_faulty(n: int) -> int:
    return (n - 1) // 3


class Marker(Enum):
    NIL = "nil"
    BOTTOM = "bottom"

    def __repr__(self) -> str:
        return self.value


NIL = Marker.NIL
BOTTOM = Marker.BOTTOM


@dataclass(frozen=True, eq=False)
class Block:
    height: int
    parent_hash: str
    payload: tuple[str, ...] = ()
    last_commit: frozenset[ProcessId] = frozenset()
    reward_height: int | None = None
    digest: str = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "payload", tuple(self.payload))
        object.__setattr__(self, "last_commit", frozenset(self.last_commit))
        object.__setattr__(self, "digest", _digest(self.to_json(with_digest=False)))

    def __eq__(self, other):
        return isinstance(other, Block) and other.digest == self.digest

    def __hash__(self):
        return hash(self.digest)

    def __repr__(self):
        return f"Block(h={self.height}, {self.digest[:8]})"

    @property
    def short(self) -> str:
        return self.digest[:8]

    def to_json(self, with_digest: bool = True) -> dict:
        d = {
            "height": self.height,
            "parent_hash": self.parent_hash,
            "payload": list(self.payload),
            "last_commit": sorted(self.last_commit),
            "reward_height": self.reward_height,
        }
        if with_digest:
            d["digest"] = self.digest
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "Block":
        b = cls(d["height"], d["parent_hash"], tuple(d["payload"]),
                frozenset(d["last_commit"]), d.get("reward_height"))
        if "digest" in d and d["digest"] != b.digest:
            raise ValueError("block digest mismatch")
        return b


def _digest(obj) -> str:
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(raw).hexdigest()


def hash_block(b: Block) -> str:
    return b.digest


GENESIS = Block(0, GENESIS_PARENT, (), frozenset())

Value = Block | Marker


def value_to_json(v: Value):
    if isinstance(v, Block):
        return v.to_json()
    return v.value


def value_from_json(d) -> Value:
    if isinstance(d, str):
        return Marker(d)
    return Block.from_json(d)


def value_label(v: Value) -> str:
    return v.short if isinstance(v, Block) else v.value


def is_valid(v: Value, chain: Block | list[Block] | tuple[Block, ...] = GENESIS) -> bool:
    """Check ``v`` extends the tip of ``chain`` with well-formed transactions."""
    if not isinstance(v, Block):
        return False
    tip = chain if isinstance(chain, Block) else chain[-1]
    if v.height != tip.height + 1 or v.parent_hash != tip.digest:
        return False
    return all(isinstance(tx, str) and TX_PATTERN.match(tx) for tx in v.payload)


class Mempool:
    """Deterministic synthetic transaction source, one stream per process."""

    def __init__(self, per_block: int = 2):
        self.per_block = per_block

    def take(self, pid: ProcessId, height: int, nonce: int = 0) -> tuple[str, ...]:
        base = nonce * self.per_block
        return tuple(f"tx:{pid}:{height}:{base + i}" for i in range(self.per_block))


_AUTO = object()


def create_new_block(prev_signature: Iterable[ProcessId], mempool: Mempool, chain,
                     pid: ProcessId, nonce: int = 0, reward_height=_AUTO) -> Block:
    """Build the next block; ``reward_height`` defaults to the parent's height."""
    tip = chain if isinstance(chain, Block) else chain[-1]
    h = tip.height + 1
    if reward_height is _AUTO:
        reward_height = h - 1 if h > 1 else None
    return Block(h, tip.digest, mempool.take(pid, h, nonce), frozenset(prev_signature), reward_height)


class Kind(Enum):
    PROPOSE = "PROPOSE"
    PREVOTE = "PREVOTE"
    PRECOMMIT = "PRECOMMIT"
    COMMIT = "COMMIT"


@dataclass(frozen=True)
class ConsensusMessage:
    kind: Kind
    signer: ProcessId
    height: int
    round: int
    value: Value
    polc_round: int | None = None
    llr: int | None = None
    attest: frozenset[ProcessId] | None = None

    def __post_init__(self):
        if self.kind is Kind.COMMIT:
            if self.round != 0:
                raise ValueError("COMMIT carries no round")
        elif self.round < 1:
            raise ValueError("round must be >= 1")

    @property
    def slot(self) -> tuple[int, int, Kind]:
        return (self.height, self.round, self.kind)

    def to_json(self) -> dict:
        d = {"kind": self.kind.value, "signer": self.signer, "height": self.height,
             "round": self.round, "value": value_to_json(self.value)}
        if self.kind is Kind.PROPOSE:
            d["polc_round"] = self.polc_round
        if self.llr is not None:
            d["llr"] = self.llr
        if self.attest is not None:
            d["attest"] = sorted(self.attest)
        return d

    def brief(self) -> dict:
        d = {"kind": self.kind.value, "signer": self.signer, "height": self.height,
             "round": self.round, "value": value_label(self.value)}
        if self.kind is Kind.PROPOSE:
            d["polc_round"] = self.polc_round
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "ConsensusMessage":
        attest = d.get("attest")
        return cls(Kind(d["kind"]), d["signer"], d["height"], d["round"],
                   value_from_json(d["value"]), d.get("polc_round"), d.get("llr"),
                   frozenset(attest) if attest is not None else None)


def _check_homogeneous(votes: list[ConsensusMessage]) -> None:
    if len({m.slot for m in votes}) > 1:
        raise ValueError("votes must share (height, round, kind)")


def _first_per_signer(votes: Iterable[ConsensusMessage]) -> dict[ProcessId, ConsensusMessage]:
    kept: dict[ProcessId, ConsensusMessage] = {}
    for m in votes:
        kept.setdefault(m.signer, m)
    return kept


def is_23_maj(v: Value, votes: Iterable[ConsensusMessage], n: int) -> bool:
    votes = list(votes)
    _check_homogeneous(votes)
    kept = _first_per_signer(votes)
    return sum(1 for m in kept.values() if m.value == v) >= quorum(n)


def at_least_one_third(b: Block, commits: Iterable[ConsensusMessage], n: int) -> bool:
    commits = list(commits)
    if any(m.kind is not Kind.COMMIT for m in commits):
        raise ValueError("expected COMMIT messages")
    if len({m.height for m in commits}) > 1:
        raise ValueError("commits must share a height")
    kept = _first_per_signer(commits)
    return sum(1 for m in kept.values() if m.value == b) >= one_third_plus(n)


class VoteSet:
    """First-message-per-signer store for every (height, round, kind) slot.

    Later messages from the same signer for an occupied slot are either exact
    duplicates (ignored) or conflicting, in which case they land in
    ``evidence`` and never count toward locks or step changes.  The decide
    rule alone may use :meth:`decision_block`, which also counts them: a
    signed precommit is proof of that vote whatever else its signer sent.
    """

    def __init__(self):
        self._slots: dict[tuple, dict[ProcessId, ConsensusMessage]] = {}
        self._tally: dict[tuple, Counter] = {}
        self.evidence: list[ConsensusMessage] = []
        self._support: dict[tuple, dict[Value, set[ProcessId]]] = {}

    def insert(self, m: ConsensusMessage) -> str:
        """Return ``"new"``, ``"duplicate"`` or ``"conflict"``."""
        slot = self._slots.setdefault(m.slot, {})
        prev = slot.get(m.signer)
        self._support.setdefault(m.slot, {}).setdefault(m.value, set()).add(m.signer)
        if prev is None:
            slot[m.signer] = m
            self._tally.setdefault(m.slot, Counter())[m.value] += 1
            return "new"
        if prev == m:
            return "duplicate"
        self.evidence.append(m)
        return "conflict"

    def __contains__(self, m: ConsensusMessage) -> bool:
        return self._slots.get(m.slot, {}).get(m.signer) == m

    def messages(self, height: int, rnd: int, kind: Kind) -> list[ConsensusMessage]:
        return list(self._slots.get((height, rnd, kind), {}).values())

    def signers(self, height: int, rnd: int, kind: Kind) -> set[ProcessId]:
        return set(self._slots.get((height, rnd, kind), {}))

    def count(self, height: int, rnd: int, kind: Kind) -> int:
        return len(self._slots.get((height, rnd, kind), ()))

    def count_for(self, height: int, rnd: int, kind: Kind, v: Value) -> int:
        return self._tally.get((height, rnd, kind), Counter())[v]

    def has_quorum(self, height: int, rnd: int, kind: Kind, v: Value, n: int) -> bool:
        return self.count_for(height, rnd, kind, v) >= quorum(n)

    def block_quorum(self, height: int, rnd: int, kind: Kind, n: int) -> Block | None:
        tally = self._tally.get((height, rnd, kind))
        if not tally:
            return None
        q = quorum(n)
        for v, c in tally.items():
            if c >= q and isinstance(v, Block):
                return v
        return None

    def decision_block(self, height: int, rnd: int, kind: Kind, n: int) -> Block | None:
        """A block with ``quorum(n)`` distinct signers, quarantined votes included."""
        q = quorum(n)
        for v, who in self._support.get((height, rnd, kind), {}).items():
            if len(who) >= q and isinstance(v, Block):
                return v
        return None

    def rounds(self, height: int, kind: Kind) -> list[int]:
        return sorted(r for (h, r, k) in self._slots if h == height and k is kind)


class ForgeryError(RuntimeError):
    pass


class Authenticator:
    """Provenance registry standing in for unforgeable signatures."""

    def __init__(self):
        self._emitted: set[ConsensusMessage] = set()

    def emit(self, emitter: ProcessId, m: ConsensusMessage) -> None:
        if m.signer == emitter:
            self._emitted.add(m)
        elif m not in self._emitted:
            raise ForgeryError(f"p{emitter} cannot emit a message signed by p{m.signer}")

    def authenticate(self, m: ConsensusMessage, claimed: ProcessId) -> bool:
        return m.signer == claimed and m in self._emitted
