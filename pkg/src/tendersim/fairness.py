"""Reward mechanisms and the post-hoc fairness auditor."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .types import ConsensusMessage, ProcessId


class Variant(Enum):
    ORIGINAL = "ORIGINAL"
    MODULABLE = "MODULABLE"
    MODULABLE_F1FILTER = "MODULABLE_F1FILTER"
    DELAYED = "DELAYED"


def modulable_timeout_update(timeout_commit: int, commits_seen: int, n: int) -> int:
    return timeout_commit + 1 if commits_seen < n else timeout_commit


def f1_commit_filter(commits: Iterable[ConsensusMessage], f: int) -> frozenset[ProcessId]:
    """Processes named by at least ``f + 1`` distinct committers' attestations."""
    seen: dict[ProcessId, ConsensusMessage] = {}
    for m in commits:
        seen.setdefault(m.signer, m)
    votes = Counter(p for m in seen.values() for p in (m.attest or ()))
    return frozenset(p for p, c in votes.items() if c >= f + 1)


def delayed_reward(commits_by_height: Mapping[int, Iterable[ConsensusMessage]], height: int,
                   x: int, f: int, heard: Mapping[int, set] | None = None,
                   ) -> tuple[int, frozenset[ProcessId]] | None:
    """Reward assignment carried by the block at ``height``: rewards for ``height - x``.

    A validator of ``height - x`` is rewarded when its COMMIT arrived and its
    participation is established: by the caller's own record of the votes it
    received for that height (``heard``) when given, else by f+1 attestations.
    Returns ``None`` while ``height - x`` is not a real height yet.
    """
    target = height - x
    if target <= 0:
        return None
    commits = list(commits_by_height.get(target, ()))
    committed = {m.signer for m in commits}
    if heard is not None:
        return target, frozenset(committed & set(heard.get(target, ())))
    return target, f1_commit_filter(commits, f) & committed


@dataclass(frozen=True)
class Mechanism:
    variant: Variant = Variant.ORIGINAL
    x: int = 1

    @classmethod
    def parse(cls, spec: str) -> "Mechanism":
        s = spec.strip().upper()
        if s.startswith("DELAYED"):
            x = 1
            if "(" in s:
                x = int(s[s.index("(") + 1:s.index(")")].split("=")[-1])
            if x < 1:
                raise ValueError("delay x must be >= 1")
            return cls(Variant.DELAYED, x)
        return cls(Variant(s))

    @property
    def name(self) -> str:
        return f"DELAYED(x={self.x})" if self.variant is Variant.DELAYED else self.variant.value

    def next_timeout(self, timeout_commit: int, commits_seen: int, n: int) -> int:
        if self.variant in (Variant.MODULABLE, Variant.MODULABLE_F1FILTER):
            return modulable_timeout_update(timeout_commit, commits_seen, n)
        return timeout_commit

    def assignment(self, height: int, to_reward: Mapping[int, set],
                   commits: Mapping[int, list], f: int,
                   heard: Mapping[int, set] | None = None) -> tuple[int | None, frozenset]:
        """Rewards a proposer of ``height`` writes into its new block."""
        if self.variant is Variant.DELAYED:
            got = delayed_reward(commits, height, self.x, f, heard)
            return (None, frozenset()) if got is None else got
        prev = height - 1
        if prev <= 0:
            return None, frozenset()
        base = frozenset(to_reward.get(prev, ()))
        if self.variant is Variant.MODULABLE_F1FILTER:
            return prev, base & f1_commit_filter(commits.get(prev, ()), f)
        return prev, base


# -- audit --------------------------------------------------------------------

class AuditError(LookupError):
    pass


def ground_truth_reward_params(validators: Iterable[ProcessId], correct: Iterable[ProcessId],
                               roster: Iterable[ProcessId]) -> dict[ProcessId, int]:
    vs, cs = set(validators), set(correct)
    return {p: int(p in vs and p in cs) for p in sorted(set(roster) | vs)}


def _chain_view(trace) -> tuple[dict, dict, dict]:
    """Reference chain, validator sets and output-record ids from a repeated-run trace."""
    correct = trace.meta["correct"]
    ref = min(correct)
    vsets: dict[int, list] = {}
    chain: dict[int, str] = {}
    where: dict[int, int] = {}
    for rid, _t, pid, kind, data in trace.records:
        if kind == "height_start" and data["height"] not in vsets:
            vsets[data["height"]] = data["validators"]
        elif kind == "output" and pid == ref:
            chain[data["height"]] = data["block"]
            where[data["height"]] = rid
    return chain, vsets, where


def ground_truth_for(trace, height: int) -> dict[ProcessId, int]:
    chain, vsets, _ = _chain_view(trace)
    if height not in chain:
        raise AuditError(f"height {height} has no decided block in this trace")
    return ground_truth_reward_params(vsets[height], trace.meta["correct"], trace.meta["roster"])


def audit_fairness(trace, tail_window: int = 10) -> dict:
    """Check reward conditions 1, 2, 4 and (bounded) 4bis over a repeated-run trace."""
    chain, vsets, where = _chain_view(trace)
    correct = set(trace.meta["correct"])
    roster = trace.meta["roster"]
    rewarded: dict[int, tuple[frozenset, int]] = {}
    for h in sorted(chain):
        b = trace.blocks[chain[h]]
        if b.reward_height is not None and b.reward_height in chain:
            rewarded[b.reward_height] = (b.last_commit, where[h])
    rows = []
    for h in sorted(rewarded):
        got, rid = rewarded[h]
        params = ground_truth_reward_params(vsets[h], correct, roster)
        should = {p for p, v in params.items() if v}
        rows.append({"height": h, "ok": got == should,
                     "missing": sorted(should - got), "extra": sorted(got - should),
                     "witness": rid})
    bad = [r["height"] for r in rows if not r["ok"]]
    horizon = rows[-1]["height"] if rows else 0
    report = {
        "mechanism": trace.meta.get("mechanism"),
        "audited_heights": len(rows),
        "horizon": horizon,
        "tail_window": tail_window,
        "condition1": {"holds": True, "note": "parameters derived from fault configuration"},
        "condition2": {"holds": True, "note": "parameters derived from fault configuration"},
        "condition4": {"holds": not bad, "violations": len(bad),
                       "first": bad[0] if bad else None, "last": bad[-1] if bad else None,
                       "witnesses": [r["witness"] for r in rows if not r["ok"]][:20]},
        "heights": rows,
    }
    if not rows:
        verdict, catch_up = "NO-DATA", None
    elif not bad:
        verdict, catch_up = "FAIR", rows[0]["height"]
    elif bad[-1] + 1 < horizon - tail_window:
        verdict, catch_up = "EVENTUALLY-FAIR", bad[-1] + 1
    else:
        verdict, catch_up = "NOT-EVENTUALLY-FAIR", None
    report["condition4bis"] = {"holds": verdict in ("FAIR", "EVENTUALLY-FAIR"),
                               "catch_up": catch_up}
    report["verdict"] = verdict if catch_up is None or verdict == "FAIR" else f"{verdict}({catch_up})"
    report["catch_up_height"] = catch_up
    return report


def timeout_trajectory(trace, pid: ProcessId | None = None) -> dict[int, int]:
    """timeoutCommit in force at each height's commit window, for one process."""
    if pid is None:
        pid = min(trace.meta["correct"])
    out = {}
    for _rid, _t, p, kind, data in trace.records:
        if kind == "commit_window" and p == pid:
            out[data["height"]] = data["timeout"]
    return out
