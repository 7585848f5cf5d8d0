"""Property checkers over recorded traces.

Each checker returns a :class:`Verdict` naming the property, its status
and the record ids that witness it.  Checkers only read the trace, so the
same functions serve live runs and traces reloaded from disk.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .adversary import assumption_t_holds, t_monitor
from .types import GENESIS, NIL, Kind, VoteSet, is_valid, quorum, value_label


@dataclass
class Verdict:
    name: str
    status: str
    ok: bool
    witness: list = field(default_factory=list)
    detail: str = ""

    def to_json(self) -> dict:
        d = {"property": self.name, "status": self.status, "ok": self.ok,
             "witness": self.witness[:20]}
        if self.detail:
            d["detail"] = self.detail
        return d


def _safety(name: str, bad: list, detail: str = "") -> Verdict:
    return Verdict(name, "VIOLATED" if bad else "HOLDS", not bad, bad, detail)


def _decisions(trace):
    """(pid, height) -> list of (rid, digest) from decide records of correct processes."""
    correct = set(trace.meta["correct"])
    out = defaultdict(list)
    for rid, _t, pid, kind, data in trace.records:
        if kind == "decide" and pid in correct:
            out[(pid, data["height"])].append((rid, data["block"]))
    return out


def _outputs(trace):
    correct = set(trace.meta["correct"])
    out = defaultdict(list)
    for rid, _t, pid, kind, data in trace.records:
        if kind == "output" and pid in correct:
            out[pid].append((rid, data["height"], data["block"]))
    return out


def integrity(trace) -> Verdict:
    bad = [r for lst in _decisions(trace).values() if len(lst) > 1 for r, _ in lst]
    return _safety("Integrity", bad)


def validity(trace) -> Verdict:
    bad = []
    if trace.meta["protocol"] == "oneshot":
        for lst in _decisions(trace).values():
            for rid, d in lst:
                if not is_valid(trace.blocks[d], GENESIS):
                    bad.append(rid)
    else:
        for pid, outs in _outputs(trace).items():
            tip = GENESIS
            for rid, _h, d in outs:
                b = trace.blocks[d]
                if not is_valid(b, tip):
                    bad.append(rid)
                tip = b
    return _safety("Validity", bad)


def agreement(trace) -> Verdict:
    per_height = defaultdict(dict)
    for (pid, h), lst in _decisions(trace).items():
        per_height[h][pid] = lst[0]
    if trace.meta["protocol"] == "repeated":
        for pid, outs in _outputs(trace).items():
            for rid, h, d in outs:
                per_height[("out", h)][pid] = (rid, d)
    bad = []
    for h, got in per_height.items():
        if len({d for _r, d in got.values()}) > 1:
            bad += [r for r, _d in got.values()]
    return _safety("Agreement", sorted(bad))


def termination(trace) -> Verdict:
    correct = trace.meta["correct"]
    if trace.meta["protocol"] == "oneshot":
        dec = _decisions(trace)
        missing = [p for p in correct if (p, 1) not in dec]
        wit = [lst[0][0] for lst in dec.values()]
    else:
        goal = trace.meta["heights"]
        outs = _outputs(trace)
        missing = [p for p in correct if len(outs.get(p, ())) < goal]
        wit = [outs[p][-1][0] for p in correct if outs.get(p)]
    ok = not missing
    return Verdict("Termination(bounded)", "PASS" if ok else "FAIL", ok, wit,
                   "" if ok else f"undecided: {sorted(missing)}")


def outputs_identical(trace) -> Verdict:
    outs = _outputs(trace)
    seqs = {pid: [d for _r, _h, d in lst] for pid, lst in outs.items()}
    if not seqs:
        return Verdict("outputs identical across correct processes", "no", False)
    shortest = min(len(s) for s in seqs.values())
    ok = len({tuple(s[:shortest]) for s in seqs.values()}) == 1 and \
        all(len(s) == shortest for s in seqs.values())
    wit = [lst[-1][0] for lst in outs.values() if lst]
    return Verdict("outputs identical across correct processes", "yes" if ok else "no", ok, wit)


def chain_linkage(trace) -> Verdict:
    bad = []
    for pid, outs in _outputs(trace).items():
        prev = GENESIS
        for rid, h, d in outs:
            b = trace.blocks[d]
            if b.height != h or b.parent_hash != prev.digest:
                bad.append(rid)
            prev = b
    return _safety("Chain linkage", bad)


def _lock_records(trace):
    correct = set(trace.meta["correct"])
    return [(rid, pid, d) for rid, _t, pid, kind, d in trace.records
            if kind == "lock" and pid in correct]


def lock_monotonicity(trace) -> Verdict:
    """Once f+1 correct validators lock B at round r, nobody correct locks B' != B later."""
    f = trace.meta["f"]
    locks = [(rid, pid, d) for rid, pid, d in _lock_records(trace) if d["cause"] == "lock"]
    by_round = defaultdict(lambda: defaultdict(set))
    for _rid, pid, d in locks:
        by_round[(d["height"], d["llr"])][d["locked"]].add(pid)
    bad = []
    for (h, r), values in by_round.items():
        for v, who in values.items():
            if len(who) >= f + 1:
                bad += [rid for rid, _p, d in locks
                        if d["height"] == h and d["llr"] > r and d["locked"] != v]
    return _safety("Lock monotonicity", sorted(set(bad)))


def lock_edges(trace) -> Verdict:
    """Every lock transition is one of the lock/unlock machine's edges."""
    bad = []
    for rid, _pid, d in _lock_records(trace):
        cause = d["cause"]
        if cause == "lock":
            ok = d["locked"] != NIL.value and d["llr"] == d["round"]
        elif cause in ("nil_quorum", "unlock_rule"):
            ok = d["locked"] == NIL.value and d["llr"] == -1
        else:
            ok = False
        if not ok:
            bad.append(rid)
    return _safety("Lock/unlock edges", bad)


def timeout_monotonicity(trace) -> Verdict:
    last = {}
    bad = []
    for rid, _t, pid, kind, d in trace.records:
        if kind == "timeout":
            key = (pid, d["height"], d["name"])
            if key in last and d["value"] < last[key]:
                bad.append(rid)
            last[key] = d["value"]
    return _safety("Timeout monotonicity", bad)


def round_entry_reset(trace) -> Verdict:
    bad = [rid for rid, _t, _p, kind, d in trace.records
           if kind == "step" and d["step"] == "PROPOSE" and d["polcr"] is not None]
    return _safety("Round-entry PoLCR reset", bad)


def no_forgery(trace) -> Verdict:
    first_emit = {}
    bad = []
    for rid, _t, pid, kind, d in trace.records:
        if kind == "emit" and pid == d["signer"]:
            first_emit.setdefault(d["mid"], rid)
        elif kind == "deliver" and d["mid"] not in first_emit:
            bad.append(rid)
    return _safety("No forgery", bad)


def post_gst_bound(trace) -> Verdict:
    meta = trace.meta
    if meta.get("mode") == "ASYNCHRONOUS":
        return Verdict("Post-GST delay bound", "N/A", True)
    gst, delta = meta["gst"], meta["delta"]
    correct = set(meta["correct"])
    sent = {}
    bad = []
    for rid, t, pid, kind, d in trace.records:
        if kind == "emit" and pid in correct:
            sent.setdefault((pid, d["mid"]), t)
        elif kind == "deliver" and d["from"] in correct:
            te = sent.get((d["from"], d["mid"]))
            if te is not None and te >= gst and t - te > delta:
                bad.append(rid)
    return _safety("Post-GST delay bound", bad)


def replay(trace):
    """Yield ``(record, inbox)`` for every record of a correct process.

    ``inbox`` is that process's vote store rebuilt from its own votes and
    its deliveries up to and including the record.
    """
    correct = set(trace.meta["correct"])
    inbox: dict = defaultdict(VoteSet)
    msgs = trace.messages
    for rec in trace.records:
        _rid, _t, pid, kind, d = rec
        if pid not in correct:
            continue
        if kind == "deliver" or (kind == "emit" and d["signer"] == pid and not d["relay"]):
            m = msgs[d["mid"]]
            if m.kind in (Kind.PREVOTE, Kind.PRECOMMIT):
                inbox[pid].insert(m)
        yield rec, inbox[pid]


def thresholds(trace) -> Verdict:
    """Replays each correct process's inbox and re-checks every quorum-driven step.

    Locks and decisions must be backed by ``quorum(n)`` distinct signers;
    prevote timer expiries must not have had a decisive quorum available
    for a value.
    """
    n_of = _n_by_height(trace)
    bad = []
    for (rid, _t, _pid, kind, d), vs in replay(trace):
        if kind == "lock" and d["cause"] == "lock":
            c = max((vs.count_for(d["height"], d["round"], Kind.PREVOTE, v)
                     for v in _values_labelled(vs, d, Kind.PREVOTE)), default=0)
            if c < quorum(n_of(d["height"])):
                bad.append(rid)
        elif kind == "decide":
            b = trace.blocks[d["block"]]
            if vs.decision_block(d["height"], d["round"], Kind.PRECOMMIT, n_of(d["height"])) != b:
                bad.append(rid)
        elif kind == "timer_fired" and d["timer"] == "prevote":
            n = n_of(d["height"])
            h, r = d["height"], d["round"]
            if vs.has_quorum(h, r, Kind.PREVOTE, NIL, n) or vs.block_quorum(h, r, Kind.PREVOTE, n):
                bad.append(rid)
    return _safety("Quorum thresholds", bad)


def _values_labelled(vs: VoteSet, d: dict, kind: Kind):
    return [m.value for m in vs.messages(d["height"], d["round"], kind)
            if value_label(m.value) == d["locked"]]


def _n_by_height(trace):
    sizes = {}
    for _rid, _t, _p, kind, d in trace.records:
        if kind == "height_start":
            sizes.setdefault(d["height"], len(d["validators"]))
    default = len(trace.meta.get("validators") or trace.meta["roster"])
    return lambda h: sizes.get(h, default)


def round_table(trace, height: int = 1) -> dict:
    """End-of-round state per correct process: ``{round: {pid: (locked, llr, polcr)}}``.

    ``locked`` is a short block label or ``"nil"``; a process that decides
    in a round also gets ``decided`` appended as a fourth element.
    """
    table: dict = defaultdict(dict)
    correct = set(trace.meta["correct"])
    for _rid, _t, pid, kind, d in trace.records:
        if pid not in correct or d.get("height") != height:
            continue
        if kind == "round_end":
            table[d["round"]][pid] = (d["locked"], d["llr"], d["polcr"])
        elif kind == "decide":
            table[d["round"]][pid] += (trace.blocks[d["block"]].short,)
    return dict(table)


def assumption_t(trace) -> Verdict:
    rows = t_monitor(trace)
    held = assumption_t_holds(trace)
    wit = [r.witness for r in rows if r.satisfying and r.post_gst and r.witness is not None]
    return Verdict("AssumptionT", "present" if held else "absent", True, wit,
                   f"{sum(r.satisfying for r in rows)} T-satisfying rounds of {len(rows)}")


SAFETY = (integrity, validity, agreement)
INVARIANTS = (lock_monotonicity, lock_edges, timeout_monotonicity, round_entry_reset,
              no_forgery, post_gst_bound, thresholds)


def check_all(trace) -> list[Verdict]:
    out = [c(trace) for c in SAFETY]
    out.append(termination(trace))
    if trace.meta["protocol"] == "repeated":
        out += [outputs_identical(trace), chain_linkage(trace)]
    out += [c(trace) for c in INVARIANTS]
    out.append(assumption_t(trace))
    return out


def find(verdicts, name: str) -> Verdict:
    for v in verdicts:
        if v.name == name:
            return v
    raise KeyError(name)


__all__ = ["Verdict", "check_all", "find", "integrity", "validity", "agreement", "termination",
           "outputs_identical", "chain_linkage", "lock_monotonicity", "lock_edges",
           "timeout_monotonicity", "round_entry_reset", "no_forgery", "post_gst_bound",
           "thresholds", "assumption_t", "replay", "round_table"]
