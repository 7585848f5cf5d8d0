import pytest

from tendersim.config import from_dict
from tendersim.fairness import (
    Mechanism, Variant, audit_fairness, delayed_reward, f1_commit_filter,
    ground_truth_reward_params, modulable_timeout_update, timeout_trajectory,
)
from tendersim.harness import run_config, simulate
from tendersim.types import GENESIS, ConsensusMessage, Kind, Mempool, create_new_block

B = create_new_block((), Mempool(), GENESIS, 1)


def commit(signer, attest, height=1):
    return ConsensusMessage(Kind.COMMIT, signer, height, 0, B, attest=frozenset(attest))


def test_modulable_timeout_update():
    assert modulable_timeout_update(5, 3, 4) == 6
    assert modulable_timeout_update(5, 4, 4) == 5
    t = 5
    for _ in range(7):
        t = modulable_timeout_update(t, 2, 4)
    assert t == 12


def test_f1_filter():
    cs = [commit(1, {1, 2}), commit(2, {1, 2}), commit(4, {5})]
    assert f1_commit_filter(cs, 1) == {1, 2}
    assert f1_commit_filter([commit(1, ()), commit(2, ())], 1) == frozenset()
    # a signer counts once even if it repeats itself
    assert f1_commit_filter([commit(4, {5}), commit(4, {5})], 1) == frozenset()


def test_delayed_reward():
    cs = {1: [commit(1, {1, 2, 3}), commit(2, {1, 2, 3}), commit(3, {1, 2, 3})]}
    assert delayed_reward(cs, 3, 5, 1) is None
    assert delayed_reward(cs, 1, 1, 1) is None
    assert delayed_reward(cs, 2, 1, 1) == (1, frozenset({1, 2, 3}))
    assert delayed_reward(cs, 2, 1, 1, heard={1: {1, 2}}) == (1, frozenset({1, 2}))
    assert delayed_reward({}, 2, 1, 1) == (1, frozenset())


@pytest.mark.parametrize("spec,variant,x", [("ORIGINAL", Variant.ORIGINAL, 1),
                                            ("modulable", Variant.MODULABLE, 1),
                                            ("MODULABLE_F1FILTER", Variant.MODULABLE_F1FILTER, 1),
                                            ("DELAYED", Variant.DELAYED, 1),
                                            ("DELAYED(x=3)", Variant.DELAYED, 3),
                                            ("DELAYED(2)", Variant.DELAYED, 2)])
def test_mechanism_parse(spec, variant, x):
    m = Mechanism.parse(spec)
    assert (m.variant, m.x) == (variant, x)
    assert Mechanism.parse(m.name) == m


@pytest.mark.parametrize("bad", ["FAST", "DELAYED(x=0)"])
def test_mechanism_parse_rejects(bad):
    with pytest.raises(ValueError):
        Mechanism.parse(bad)


def test_ground_truth_params():
    assert ground_truth_reward_params((1, 2, 3, 4), (1, 2, 3), (1, 2, 3, 4, 5)) == \
        {1: 1, 2: 1, 3: 1, 4: 0, 5: 0}
    assert ground_truth_reward_params((1, 2), (1, 2, 3), (1, 2, 3)) == {1: 1, 2: 1, 3: 0}


def _run(mechanism, **kw):
    d = {"protocol": "repeated", "n": 4, "mechanism": mechanism,
         "network": {"mode": "SYNCHRONOUS", "delta": 2}, "timeouts": {"commit": 4},
         "horizon": {"heights": 30, "time": 100000}}
    d.update(kw)
    return run_config(from_dict(d))


@pytest.mark.parametrize("mech", ["ORIGINAL", "MODULABLE", "MODULABLE_F1FILTER", "DELAYED(x=1)",
                                  "DELAYED(x=2)"])
def test_synchronous_honest_runs_are_fair(mech):
    r = _run(mech, seed=9)
    assert r.report["fairness"]["verdict"] == "FAIR"


def test_delayed_x_beyond_horizon_never_rewards():
    r = _run("DELAYED(x=100)", seed=1)
    assert r.report["fairness"]["audited_heights"] == 0
    assert r.report["fairness"]["verdict"] == "NO-DATA"


@pytest.mark.parametrize("mix", [["silent"], ["freerider"]])
def test_delayed_excludes_byzantine(mix):
    r = _run("DELAYED(x=1)", seed=3, byzantine=[3], strategy={"mix": mix})
    a = r.report["fairness"]
    assert a["verdict"] == "FAIR"
    assert all(3 not in row["extra"] for row in a["heights"])


def test_original_rewards_a_freerider():
    r = _run("ORIGINAL", seed=3, byzantine=[3], strategy={"mix": ["freerider"]})
    assert any(3 in row["extra"] for row in r.report["fairness"]["heights"])


def test_f1_filter_excludes_a_freerider():
    r = _run("MODULABLE_F1FILTER", seed=3, byzantine=[3], strategy={"mix": ["freerider"]})
    assert all(3 not in row["extra"] for row in r.report["fairness"]["heights"])


def test_audit_rows_cite_witnesses(fairness_original):
    a = fairness_original.report["fairness"]
    recs = fairness_original.trace.records
    for row in a["heights"]:
        assert recs[row["witness"]][3] == "output"
    assert a["condition4"]["witnesses"]


def test_timeout_trajectory_per_process(fairness_filtered):
    t = fairness_filtered.trace
    for p in t.meta["correct"]:
        traj = timeout_trajectory(t, p)
        vals = [traj[h] for h in sorted(traj)]
        assert vals == sorted(vals)


def test_audit_is_pure():
    trace = simulate(from_dict({"protocol": "repeated", "n": 4,
                                "network": {"mode": "SYNCHRONOUS", "delta": 2},
                                "horizon": {"heights": 5, "time": 10000}}))
    assert audit_fairness(trace) == audit_fairness(trace)
