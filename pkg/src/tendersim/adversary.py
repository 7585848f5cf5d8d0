"""Byzantine actors, scripted schedules and the assumption-T monitor."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .netsim import Anchor, Send, Simulator
from .oneshot import proposer
from .types import (
    GENESIS, NIL, Block, ConsensusMessage, Kind, Mempool, ProcessId, create_new_block, quorum,
)

# -- pattern matching shared by scripts and delay rules -------------------------


def match_round(spec, r: int) -> bool:
    if spec is None:
        return True
    if isinstance(spec, int):
        return r == spec
    if isinstance(spec, list):
        return r in spec
    if isinstance(spec, dict):
        lo = spec.get("from", 1)
        hi = spec.get("to")
        every = spec.get("every", 1)
        return r >= lo and (hi is None or r <= hi) and (r - lo) % every == 0
    raise ValueError(f"bad round pattern {spec!r}")


def match_pid(spec, p: ProcessId) -> bool:
    if spec is None:
        return True
    if isinstance(spec, list):
        return p in spec
    return p == spec


def _kind_ok(spec, kind: Kind) -> bool:
    if spec is None:
        return True
    if isinstance(spec, list):
        return kind.value in spec
    return kind.value == spec


class ScriptedNetwork:
    """Delay policy from an ordered rule list; the first matching rule wins.

    A rule may constrain ``kind``, ``round``, ``height``, ``signer``,
    ``sender`` (the process handing the message to the network, which
    differs from the signer for relays), ``to`` and ``relay``.  Unmatched
    traffic gets ``default`` ticks, or the model's sampled delay if no default
    is configured.
    """

    def __init__(self, rules: Sequence[dict] = (), default: int | None = None):
        self.rules = list(rules)
        self.default = default

    @classmethod
    def from_config(cls, d: dict) -> "ScriptedNetwork":
        return cls(d.get("rules", []), d.get("default"))

    def delay(self, sim, msg, sender, recipient, relay, base):
        for rule in self.rules:
            if (_kind_ok(rule.get("kind"), msg.kind)
                    and match_round(rule.get("round"), msg.round)
                    and match_round(rule.get("height"), msg.height)
                    and match_pid(rule.get("signer"), msg.signer)
                    and match_pid(rule.get("sender"), sender)
                    and match_pid(rule.get("to"), recipient)
                    and rule.get("relay", relay) == relay):
                return rule["delay"]
        return base if self.default is None else self.default


# -- scripted Byzantine actor ----------------------------------------------------


def _subst(v, r: int):
    if isinstance(v, str) and v.startswith("$r"):
        return r + int(v[2:] or 0)
    return v


class ScriptedByzantine:
    """Executes declarative trigger/emit rules.

    Each rule has a ``when`` pattern over deliveries to this actor (or the
    literal ``start``) and a ``send`` list.  A rule fires at most once per
    distinct trigger round.  Inside ``send`` the string ``$r`` (optionally
    ``$r+k``) stands for the trigger round.  Values are ``nil``,
    ``{proposal: k}`` (the first proposal this actor saw for round k) or
    ``{fresh: k}`` (a new block built by this actor).
    """

    def __init__(self, pid: ProcessId, rules: Sequence[dict], mempool: Mempool | None = None):
        self.pid = pid
        self.rules = list(rules)
        self.mempool = mempool or Mempool()
        self.proposals: dict[tuple[int, int], ConsensusMessage] = {}
        self._fired: set[tuple[int, int]] = set()

    def start(self, ctx):
        out = []
        for i, rule in enumerate(self.rules):
            if rule.get("when") == "start":
                self._fired.add((i, 0))
                out += self._emit(ctx, rule["send"], 1, 0)
        return out

    def on_wakeup(self, ctx, tag):
        return []

    def on_message(self, ctx, m, sender):
        if m.kind is Kind.PROPOSE:
            self.proposals.setdefault((m.height, m.round), m)
        out = []
        for i, rule in enumerate(self.rules):
            on = rule.get("when")
            if not isinstance(on, dict) or (i, m.round) in self._fired:
                continue
            if (_kind_ok(on.get("kind"), m.kind) and match_round(on.get("round"), m.round)
                    and match_pid(on.get("signer"), m.signer)
                    and match_pid(on.get("sender"), sender)):
                self._fired.add((i, m.round))
                out += self._emit(ctx, rule["send"], m.height, m.round)
        return out

    def _value(self, ctx, spec, height: int, r: int):
        if spec in (None, "nil"):
            return NIL
        if "proposal" in spec:
            p = self.proposals.get((height, _subst(spec["proposal"], r)))
            return None if p is None else p.value
        if "fresh" in spec:
            tip = ctx.tip(height) or GENESIS
            return create_new_block((), self.mempool, tip, self.pid, nonce=100 + spec["fresh"])
        raise ValueError(f"bad value spec {spec!r}")

    def _emit(self, ctx, sends, height: int, r: int) -> list:
        out = []
        for s in sends:
            kind = Kind(s["kind"])
            rnd = _subst(s.get("round", "$r"), r)
            value = self._value(ctx, s.get("value"), height, r)
            if value is None:
                continue
            m = ConsensusMessage(kind, self.pid, height, rnd, value,
                                 polc_round=_subst(s.get("polc_round"), r) if kind is Kind.PROPOSE else None,
                                 llr=s.get("llr", -1) if kind is Kind.PREVOTE else None)
            to = {}
            for p, d in s["to"].items():
                to[int(p)] = _delay_spec(d, height, r)
            out.append(Send(m, to))
        return out


def _delay_spec(d, height: int, r: int = 0):
    if isinstance(d, int):
        return d
    if isinstance(d, dict):
        for key, off in (("before_timer", -1), ("after_timer", 1)):
            if key in d:
                kind, rnd = d[key]
                return Anchor(kind, height, _subst(rnd, r), off)
        if "anchor" in d:
            kind, rnd, off = d["anchor"]
            return Anchor(kind, height, _subst(rnd, r), off)
    raise ValueError(f"bad delay spec {d!r}")


# -- randomized strategies for fuzzing ------------------------------------------


class StrategyByzantine:
    """Seeded Byzantine validator mixing the configured strategies per round.

    ``silent`` never sends; ``equivocate`` splits recipients between two
    values; ``selective`` votes to a random subset with random delays;
    ``stale`` replays earlier traffic and back-dated votes; ``invalid``
    proposes and prevotes malformed blocks; ``lock_split`` hands a vote to a
    single recipient promptly and to the rest late; ``freerider`` skips the
    protocol but echoes COMMIT messages to collect rewards.
    """

    def __init__(self, pid: ProcessId, mix: Sequence[str], *, delta: int = 3,
                 mempool: Mempool | None = None, proposer_offset: int = 0):
        self.pid = pid
        self.mix = list(mix) or ["silent"]
        self.delta = delta
        self.mempool = mempool or Mempool()
        self.proposer_offset = proposer_offset
        self.proposals: dict[tuple[int, int], ConsensusMessage] = {}
        self._acted: set[tuple[int, int]] = set()
        self._proposed: set[tuple[int, int]] = set()
        self._seen: list[ConsensusMessage] = []
        self._committed: set[int] = set()
        self._nonce = 0

    # helpers
    def _vals(self, ctx, h):
        v = ctx.validators(h)
        return tuple(v) if v else None

    def _fresh(self, ctx, h) -> Block:
        self._nonce += 1
        tip = ctx.tip(h) or GENESIS
        return create_new_block((), self.mempool, tip, self.pid, nonce=1000 + self._nonce)

    def _invalid(self, ctx, h) -> Block:
        tip = ctx.tip(h) or GENESIS
        if ctx.rng.random() < 0.5:
            return Block(tip.height + 1, "f" * 64, (f"tx:{self.pid}:{h}:0",))
        return Block(tip.height + 1, tip.digest, ("not-a-tx",))

    def _delay(self, ctx) -> int:
        return ctx.rng.choice([1, 1, 2, self.delta, 3 * self.delta, 10 * self.delta])

    def _targets(self, ctx, h) -> list:
        return [p for p in (ctx.validators(h) or ctx.roster) if p != self.pid]

    def start(self, ctx):
        return self._maybe_propose(ctx, 1, 1)

    def on_wakeup(self, ctx, tag):
        return []

    def on_message(self, ctx, m, sender):
        if m.kind is Kind.COMMIT:
            return self._freeride(ctx, m)
        if len(self._seen) < 400:
            self._seen.append(m)
        if m.kind is Kind.PROPOSE:
            self.proposals.setdefault((m.height, m.round), m)
        vs = self._vals(ctx, m.height)
        if vs is None or self.pid not in vs:
            return []
        out = []
        for r in (m.round, m.round + 1):
            out += self._maybe_propose(ctx, m.height, r)
        if (m.height, m.round) not in self._acted:
            self._acted.add((m.height, m.round))
            out += self._vote(ctx, m.height, m.round)
        return out

    def _choose(self, ctx, h, r) -> str:
        return ctx.rng.choice(self.mix)

    def _maybe_propose(self, ctx, h, r) -> list:
        vs = self._vals(ctx, h)
        if not vs or proposer(vs, h, r, self.proposer_offset) != self.pid or (h, r) in self._proposed:
            return []
        self._proposed.add((h, r))
        s = self._choose(ctx, h, r)
        targets = self._targets(ctx, h)
        if s in ("silent", "freerider"):
            return []
        polc = ctx.rng.choice([None, None, max(1, r - 1), max(1, r - 2)]) if r > 1 else None
        if polc is not None and polc >= r:
            polc = None
        if s == "invalid":
            m = ConsensusMessage(Kind.PROPOSE, self.pid, h, r, self._invalid(ctx, h), polc_round=polc)
            return [Send(m, {p: self._delay(ctx) for p in targets})]
        if s == "equivocate":
            a, b = self._fresh(ctx, h), self._fresh(ctx, h)
            ctx.rng.shuffle(targets)
            half = len(targets) // 2
            ma = ConsensusMessage(Kind.PROPOSE, self.pid, h, r, a, polc_round=polc)
            mb = ConsensusMessage(Kind.PROPOSE, self.pid, h, r, b, polc_round=polc)
            return [Send(ma, {p: 1 for p in targets[:half]}),
                    Send(mb, {p: 1 for p in targets[half:]})]
        m = ConsensusMessage(Kind.PROPOSE, self.pid, h, r, self._fresh(ctx, h), polc_round=polc)
        chosen = [p for p in targets if ctx.rng.random() < 0.7] or targets[:1]
        return [Send(m, {p: self._delay(ctx) for p in chosen})]

    def _vote(self, ctx, h, r) -> list:
        s = self._choose(ctx, h, r)
        if s in ("silent", "freerider"):
            return []
        targets = self._targets(ctx, h)
        prop = self.proposals.get((h, r))
        pv = prop.value if prop is not None else NIL
        out = []
        for kind in (Kind.PREVOTE, Kind.PRECOMMIT):
            llr = -1 if kind is Kind.PREVOTE else None
            if s == "equivocate":
                a = pv
                b = ctx.rng.choice([NIL, self._fresh(ctx, h)]) if pv is not NIL else self._fresh(ctx, h)
                ctx.rng.shuffle(targets)
                half = max(1, len(targets) // 2)
                out.append(Send(ConsensusMessage(kind, self.pid, h, r, a, llr=llr),
                                {p: self._delay(ctx) for p in targets[:half]}))
                out.append(Send(ConsensusMessage(kind, self.pid, h, r, b, llr=llr),
                                {p: self._delay(ctx) for p in targets[half:]}))
            elif s == "selective":
                v = ctx.rng.choice([pv, pv, NIL])
                chosen = [p for p in targets if ctx.rng.random() < 0.5]
                out.append(Send(ConsensusMessage(kind, self.pid, h, r, v, llr=llr),
                                {p: self._delay(ctx) for p in chosen}))
            elif s == "lock_split":
                lucky = ctx.rng.choice(targets)
                late = 10 * self.delta + ctx.rng.randint(0, 10 * self.delta)
                out.append(Send(ConsensusMessage(kind, self.pid, h, r, pv, llr=llr),
                                {p: (1 if p == lucky else late) for p in targets}))
            elif s == "invalid":
                v = self._invalid(ctx, h) if kind is Kind.PREVOTE else pv
                out.append(Send(ConsensusMessage(kind, self.pid, h, r, v, llr=llr),
                                {p: self._delay(ctx) for p in targets}))
            elif s == "stale":
                for old in ctx.rng.sample(self._seen, min(3, len(self._seen))):
                    out.append(Send(old, {p: self._delay(ctx) for p in targets}))
                if r > 2 and kind is Kind.PREVOTE:
                    back = ConsensusMessage(kind, self.pid, h, r - 2, self._fresh(ctx, h), llr=llr)
                    out.append(Send(back, {p: self._delay(ctx) for p in targets}))
                out.append(Send(ConsensusMessage(kind, self.pid, h, r, pv, llr=llr),
                                {p: self._delay(ctx) for p in targets}))
        return out

    def _freeride(self, ctx, m) -> list:
        if "freerider" not in self.mix or m.height in self._committed:
            return []
        vs = self._vals(ctx, m.height)
        if not vs or self.pid not in vs:
            return []
        self._committed.add(m.height)
        c = ConsensusMessage(Kind.COMMIT, self.pid, m.height, 0, m.value, attest=frozenset(vs))
        return [Send(c, {p: 1 for p in ctx.roster if p != self.pid})]


class UnlockBait:
    """Byzantine validator hunting the same-block unlock.

    On the first correct proposal ``B`` it hands its prevote promptly to the
    proposer and one other validator (late to the rest) and its precommit to
    the proposer alone, so the proposer can decide ``B`` and leave while one
    more validator stays locked on it.  In later rounds it prevotes ``B``
    just after each recipient's prevote timer: whenever the remaining
    validators prevote ``B`` too, a quorum exists that nobody locked on.  At
    its next proposer slot it proposes a fresh block whose PoLC round points
    at that quorum.  The legacy rule unlocks on it and the fresh block can
    then be decided next to ``B``.
    """

    def __init__(self, pid: ProcessId, *, proposer_offset: int = 0):
        self.pid = pid
        self.proposer_offset = proposer_offset
        self.mempool = Mempool()
        self.bait: dict[int, tuple[Block, int]] = {}
        self.echo: dict[int, int] = {}
        self._prevoters: dict[tuple[int, int], set[ProcessId]] = {}
        self._done: set[tuple[int, int]] = set()

    def start(self, ctx):
        return []

    def on_wakeup(self, ctx, tag):
        return []

    def on_message(self, ctx, m, sender):
        h, r = m.height, m.round
        vs = ctx.validators(h)
        if m.kind is Kind.COMMIT or not vs or self.pid not in vs:
            return []
        vs = tuple(vs)
        others = [p for p in vs if p != self.pid]
        bait = self.bait.get(h)
        out = []
        if bait is not None:
            b, lock_round = bait
            if m.kind is Kind.PREVOTE and m.value == b and r > lock_round and m.signer != self.pid:
                who = self._prevoters.setdefault((h, r), set())
                who.add(m.signer)
                # everyone still running prevoted b here: our late vote completes a quorum
                if len(who) + 1 >= quorum(len(vs)):
                    self.echo[h] = max(self.echo.get(h, 0), r)
            for nxt in (r + 1, r + 2):
                if proposer(vs, h, nxt, self.proposer_offset) == self.pid:
                    out += self._spring(ctx, h, nxt, others)
        if (h, r) in self._done or proposer(vs, h, r, self.proposer_offset) == self.pid:
            return out
        if bait is None:
            if m.kind is Kind.PROPOSE and isinstance(m.value, Block):
                out += self._set_bait(ctx, m, others)
        elif r > bait[1]:
            self._done.add((h, r))
            late = Anchor("prevote", h, r, 1)
            out.append(Send(ConsensusMessage(Kind.PREVOTE, self.pid, h, r, bait[0]),
                            {p: late for p in others}))
            out.append(Send(ConsensusMessage(Kind.PRECOMMIT, self.pid, h, r, NIL),
                            {p: 1 for p in others}))
        return out

    def _set_bait(self, ctx, m, others):
        h, r, b = m.height, m.round, m.value
        self._done.add((h, r))
        self.bait[h] = (b, r)
        rest = [p for p in others if p != m.signer]
        lucky = {m.signer, ctx.rng.choice(rest)} if rest else {m.signer}
        late = Anchor("prevote", h, r, 1)
        return [Send(ConsensusMessage(Kind.PREVOTE, self.pid, h, r, b, llr=-1),
                     {p: 1 if p in lucky else late for p in others}),
                Send(ConsensusMessage(Kind.PRECOMMIT, self.pid, h, r, b), {m.signer: 1})]

    def _spring(self, ctx, h, r, others):
        echo = self.echo.get(h)
        if (h, r) in self._done or echo is None or echo >= r:
            return []
        self._done.add((h, r))
        tip = ctx.tip(h) or GENESIS
        fresh = create_new_block((), self.mempool, tip, self.pid, nonce=5000 + r)
        on_entry = Anchor("propose", h, r, -1)
        return [Send(ConsensusMessage(Kind.PROPOSE, self.pid, h, r, fresh, polc_round=echo),
                     {p: on_entry for p in others}),
                Send(ConsensusMessage(Kind.PREVOTE, self.pid, h, r, fresh, llr=-1),
                     {p: on_entry for p in others}),
                Send(ConsensusMessage(Kind.PRECOMMIT, self.pid, h, r, fresh),
                     {p: on_entry for p in others})]


# -- fairness adversaries ------------------------------------------------------------


class SlowCommitPolicy:
    """Slows the COMMIT traffic of one correct validator per height.

    Its own commit and the commits addressed to it take ``delay`` ticks;
    everything else takes ``base``.  Cutting both directions means every
    validator misses one commit per height until its window catches up.
    The slow validator at height ``H`` is never the round-1 proposer of
    ``H + 1`` (who would otherwise count its own commit).  ``delay=None``
    defers the traffic past ``horizon``.
    """

    def __init__(self, delay: int | None, base: int = 1, horizon: int = 10 ** 9,
                 proposer_offset: int = 0):
        self.slow_delay = delay
        self.base = base
        self.horizon = horizon
        self.proposer_offset = proposer_offset

    def slow_at(self, validators: Sequence[ProcessId], height: int) -> ProcessId:
        nxt = proposer(validators, height + 1, 1, self.proposer_offset)
        i = validators.index(nxt)
        return validators[(i + 1) % len(validators)]

    def delay(self, sim: Simulator, msg, sender, recipient, relay, base):
        if msg.kind is Kind.COMMIT:
            vs = sim.public_validators(msg.height)
            if vs and self.slow_at(tuple(vs), msg.height) in (msg.signer, recipient):
                if self.slow_delay is None:
                    return max(1, self.horizon - sim.now + 1)
                return self.slow_delay
        return self.base


# -- assumption T ------------------------------------------------------------------


@dataclass(frozen=True)
class TRound:
    height: int
    round: int
    proposer: ProcessId
    proposer_correct: bool
    entered: bool
    count: int
    satisfying: bool
    post_gst: bool
    witness: int | None


def t_monitor(trace) -> list[TRound]:
    """Per-round assumption-T evaluation from round-entry LLR snapshots.

    For a round with proposer ``k`` the count is the number of correct
    processes ``j != k`` that are locked (LLR != -1) with ``LLR_k <= LLR_j``.
    The round qualifies when ``k`` is correct and ``3 * count < n - 3f``.
    """
    meta = trace.meta
    correct = set(meta["correct"])
    f = meta["f"]
    offset = meta.get("proposer_offset", 0)
    gst = meta.get("gst", 0)
    asynchronous = meta.get("mode") == "ASYNCHRONOUS"
    vsets: dict[int, list] = {}
    entries: dict[tuple[int, int], dict] = {}
    for rid, t, pid, kind, data in trace.records:
        if kind == "height_start":
            vsets.setdefault(data["height"], data["validators"])
        elif kind == "step":
            key = (data["height"], data["round"])
            entries.setdefault(key, {}).setdefault(pid, (t, data["llr"], rid))
    rows = []
    for (h, r) in sorted(entries):
        vs = vsets.get(h) or meta.get("validators")
        n = len(vs)
        k = proposer(vs, h, r, offset)
        ent = entries[(h, r)]
        k_ok = k in correct
        entered = k in ent
        count = 0
        if entered:
            llr_k = ent[k][1]
            count = sum(1 for j, (_t, llr_j, _rid) in ent.items()
                        if j != k and j in correct and llr_j != -1 and llr_k <= llr_j)
        first = min(t for t, _l, _r in ent.values())
        post = (not asynchronous) and first >= gst
        sat = k_ok and entered and 3 * count < n - 3 * f
        rows.append(TRound(h, r, k, k_ok, entered, count, sat, post,
                           ent[k][2] if entered else None))
    return rows


def assumption_t_holds(trace, from_round: int = 1) -> bool:
    return any(row.satisfying and row.post_gst and row.round >= from_round
               for row in t_monitor(trace))


# -- bundled scenarios -----------------------------------------------------------------


def scenario_names() -> list[str]:
    files = resources.files("tendersim") / "scenarios"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def scenario_path(name: str):
    p = resources.files("tendersim") / "scenarios" / f"{name}.yaml"
    if not p.is_file():
        raise KeyError(f"no bundled scenario {name!r}")
    return p


def load_scenario(name: str, **overrides):
    import yaml

    from .config import from_dict
    data = yaml.safe_load(scenario_path(name).read_text())
    data.update(overrides)
    return from_dict(data)


def scenario_agreement_violation(unlock_rule: str = "legacy"):
    return load_scenario("agreement_violation", unlock_rule=unlock_rule)


def scenario_livelock():
    return load_scenario("livelock")


def scenario_fairness_violation(mechanism: str = "ORIGINAL"):
    return load_scenario("fairness_violation", mechanism=mechanism)


def random_byzantine(pid: ProcessId, strategy_mix: Iterable[str], *, delta: int = 3,
                     proposer_offset: int = 0) -> StrategyByzantine:
    """A strategy actor; its choices draw on the run-seeded context RNG it is handed."""
    return StrategyByzantine(pid, list(strategy_mix), delta=delta, proposer_offset=proposer_offset)
