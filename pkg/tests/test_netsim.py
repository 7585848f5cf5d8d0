import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendersim.config import from_dict
from tendersim.harness import OneShotProcess, simulate
from tendersim.netsim import Mode, ModelViolation, NetworkModel, Send, Simulator, Trace
from tendersim.types import NIL, ConsensusMessage, ForgeryError, Kind


def cfg(**kw):
    base = {"n": 4, "network": {"mode": "SYNCHRONOUS", "delta": 2}, "horizon": {"time": 2000}}
    base.update(kw)
    return from_dict(base)


def test_model_validation():
    with pytest.raises(ValueError):
        NetworkModel(delta=0)
    with pytest.raises(ValueError):
        NetworkModel(delta=3, min_delay=4)
    assert NetworkModel(Mode.SYNCHRONOUS, gst=50).gst == 0
    m = NetworkModel(Mode.ASYNCHRONOUS, gst=0)
    assert not m.synchronous_at(10 ** 9)


@given(st.integers(1, 5), st.integers(0, 100), st.integers(0, 200), st.integers(0, 2 ** 32))
def test_sample_respects_bounds(delta, gst, t, seed):
    m = NetworkModel(Mode.EVENTUALLY_SYNCHRONOUS, gst, delta, max_pre_gst_delay=40)
    d = m.sample(random.Random(seed), t)
    assert 1 <= d <= (delta if t >= gst else 40)


@pytest.mark.parametrize("mode", ["SYNCHRONOUS", "EVENTUALLY_SYNCHRONOUS"])
def test_honest_run_decides(mode):
    trace = simulate(cfg(network={"mode": mode, "delta": 3, "gst": 40}, seed=5))
    assert trace.meta["stop"] == "done"
    decided = {d["block"] for _r, _t, _p, k, d in trace.records if k == "decide"}
    assert len(decided) == 1
    assert {p for _r, _t, p, k, _d in trace.records if k == "decide"} == {1, 2, 3, 4}


def test_records_are_ordered_and_numbered():
    trace = simulate(cfg(network={"mode": "ASYNCHRONOUS", "max_pre_gst_delay": 20}, seed=3,
                         byzantine=[2], strategy={"mix": ["equivocate"]}))
    ids = [r[0] for r in trace.records]
    times = [r[1] for r in trace.records]
    assert ids == list(range(len(ids)))
    assert times == sorted(times)


def test_same_seed_same_bytes_other_seed_differs():
    c = dict(network={"mode": "ASYNCHRONOUS", "max_pre_gst_delay": 20}, byzantine=[4],
             strategy={"mix": ["selective", "equivocate"]})
    a = simulate(cfg(seed=11, **c)).to_jsonl()
    assert a == simulate(cfg(seed=11, **c)).to_jsonl()
    assert a != simulate(cfg(seed=12, **c)).to_jsonl()


def test_post_gst_delay_above_delta_is_rejected():
    bad = cfg(delays={"default": 5})
    with pytest.raises(ModelViolation):
        simulate(bad)


def test_pre_gst_long_delays_are_allowed():
    ok = cfg(network={"mode": "EVENTUALLY_SYNCHRONOUS", "gst": 100, "delta": 2,
                      "max_pre_gst_delay": 5},
             delays={"rules": [{"kind": "PREVOTE", "round": 1, "delay": 60}], "default": 1})
    trace = simulate(ok)
    assert trace.meta["stop"] == "done"


def test_anchor_delivers_relative_to_recipient_timer():
    c = cfg(n=4, byzantine=[4], step_timers="on_entry", timeouts={"prevote": 9},
            network={"mode": "EVENTUALLY_SYNCHRONOUS", "gst": 500, "max_pre_gst_delay": 60},
            delays={"default": 1, "rules": [{"kind": "PREVOTE", "round": 1, "to": 2, "delay": 50}]},
            script={4: [{"when": {"kind": "PROPOSE", "round": 1, "signer": 1},
                         "send": [{"kind": "PREVOTE", "value": {"proposal": 1},
                                   "to": {2: {"before_timer": ["prevote", 1]}}}]}]})
    trace = simulate(c)
    byz_prevote = next(mid for mid, m in enumerate(trace.messages)
                       if m.signer == 4 and m.kind is Kind.PREVOTE)
    delivered = [t for _r, t, p, k, d in trace.records
                 if k == "deliver" and p == 2 and d["mid"] == byz_prevote and d["from"] == 4]
    timer = [d["expiry"] for _r, _t, p, k, d in trace.records
             if k == "timer_set" and p == 2 and d["timer"] == "prevote" and d["round"] == 1]
    assert delivered == [timer[0] - 1]


def test_jsonl_roundtrip_is_exact():
    trace = simulate(cfg(seed=2, byzantine=[3], strategy={"mix": ["invalid", "stale"]},
                         network={"mode": "ASYNCHRONOUS", "max_pre_gst_delay": 9}))
    text = trace.to_jsonl()
    again = Trace.from_jsonl(text)
    assert again.to_jsonl() == text
    assert "truncated" not in again.meta


def test_torn_trace_is_flagged_truncated():
    text = simulate(cfg(seed=1)).to_jsonl()
    torn = Trace.from_jsonl(text[: len(text) - 7])
    assert torn.meta["truncated"]
    headless = "\n".join(line for line in text.splitlines() if '"type":"meta"' not in line)
    with pytest.raises(ValueError):
        Trace.from_jsonl(headless)


def test_byzantine_actor_cannot_forge():
    class Forger:
        pid = 4

        def start(self, ctx):
            return [Send(ConsensusMessage(Kind.PREVOTE, 1, 1, 1, NIL), {2: 1})]

        def on_message(self, ctx, m, sender):
            return []

        def on_wakeup(self, ctx, tag):
            return []

    c = cfg(byzantine=[4])
    procs = [OneShotProcess(p, (1, 2, 3, 4), c) for p in (1, 2, 3)]
    sim = Simulator(procs, [Forger()], c.network, seed=0)
    with pytest.raises(ForgeryError):
        sim.run(max_time=10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_honest_eventually_synchronous_runs_agree(seed):
    trace = simulate(cfg(seed=seed, network={"mode": "EVENTUALLY_SYNCHRONOUS", "gst": 30,
                                             "delta": 2, "max_pre_gst_delay": 25}))
    blocks = {d["block"] for _r, _t, _p, k, d in trace.records if k == "decide"}
    assert len(blocks) == 1
