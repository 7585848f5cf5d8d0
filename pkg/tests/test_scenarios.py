"""Golden checks for the three bundled scenarios."""
from collections import defaultdict

import pytest

from tendersim.adversary import assumption_t_holds, load_scenario, scenario_names, t_monitor
from tendersim.properties import round_table
from tendersim.types import Kind, at_least_one_third

from oracles import (
    AGREEMENT_DECIDES, AGREEMENT_LOCKS, LIVELOCK_LOCKS, agreement_golden, agreement_observed,
    livelock_golden, proposal_label, quorum_events,
)


def test_bundled_names():
    assert scenario_names() == ["agreement_violation", "fairness_violation", "livelock"]


def test_scenario_overrides_are_validated():
    with pytest.raises(ValueError):
        load_scenario("livelock", unlock_rule="maybe")


# -- agreement violation ------------------------------------------------------------


def test_agreement_violation_golden_states(legacy_run):
    t = legacy_run.trace
    assert proposal_label(t, 1, 1) != proposal_label(t, 6, 2)
    got, want = agreement_observed(t), agreement_golden(t)
    for r in range(1, 7):
        assert got[r] == want[r], f"round {r}"


def test_agreement_violation_verdicts(legacy_run):
    st = legacy_run.report["status"]
    assert st["Agreement"] == "VIOLATED"
    assert st["Lock monotonicity"] == "VIOLATED"
    assert st["Integrity"] == "HOLDS" and st["Validity"] == "HOLDS"
    assert st["Quorum thresholds"] == "HOLDS"
    assert legacy_run.ok
    agreement = next(v for v in legacy_run.report["verdicts"] if v["property"] == "Agreement")
    kinds = {legacy_run.trace.records[r][3] for r in agreement["witness"]}
    assert kinds == {"decide"}


def test_same_script_corrected_rule_keeps_agreement(corrected_run):
    st = corrected_run.report["status"]
    assert st["Agreement"] == "HOLDS"
    decided = {d["block"] for _r, _t, _p, k, d in corrected_run.trace.records if k == "decide"}
    assert len(decided) == 1
    assert not corrected_run.ok  # the config still expects the legacy violation


# -- livelock ----------------------------------------------------------------------


def test_livelock_golden_tables(livelock_run):
    tab = round_table(livelock_run.trace)
    for r, rows in livelock_golden(livelock_run.trace).items():
        assert tab[r] == rows, f"round {r}"


def test_livelock_never_decides_and_t_absent(livelock_run):
    t = livelock_run.trace
    assert not t.of_kind("decide")
    assert t.meta["stop"] == "round_horizon"
    assert max(d["round"] for _r, _t, _p, k, d in t.records if k == "step") >= 100
    assert not assumption_t_holds(t)
    rows = t_monitor(t)
    assert not any(r.satisfying and r.post_gst for r in rows)
    st = livelock_run.report["status"]
    assert st["Termination(bounded)"] == "FAIL" and st["AssumptionT"] == "absent"
    assert st["Agreement"] == "HOLDS" and livelock_run.ok


def test_livelock_pattern_repeats(livelock_run):
    """The lock alternation continues with period four rounds up to the horizon."""
    tab = round_table(livelock_run.trace)
    for r in range(7, 96, 4):
        assert tab[r][3][1] == r and tab[r + 2][1][1] == r + 2
        assert tab[r][2][:2] == ("nil", -1)


# -- vote-count oracles -------------------------------------------------------------


def test_vote_counts_agreement_scenario(legacy_run):
    ev = quorum_events(legacy_run)
    assert ev["decide"] == AGREEMENT_DECIDES
    assert ev["lock"] == AGREEMENT_LOCKS
    assert (3, 1) in ev["nil_precommit"]
    for r in (3, 4, 5):
        assert (2, r) in ev["nil_precommit"] and (3, r) in ev["nil_precommit"]


def test_vote_counts_livelock_scenario(livelock_run):
    ev = quorum_events(livelock_run)
    locks = {(p, r): s for p, r, s in ev["lock"]}
    for key, signers in LIVELOCK_LOCKS.items():
        assert locks[key] == signers
    assert not ev["decide"]
    assert {(2, 1), (3, 1), (2, 3), (1, 3), (2, 5), (3, 5), (1, 6), (2, 6), (3, 6)} <= \
        set(ev["nil_precommit"])


def test_commit_thresholds_fairness_scenario(fairness_original):
    t = fairness_original.trace
    n = t.meta["n"]
    by_height = defaultdict(list)
    for m in t.messages:
        if m.kind is Kind.COMMIT:
            by_height[m.height].append(m)
    outputs = {d["height"]: t.blocks[d["block"]] for _r, _t, p, k, d in t.records
               if k == "output" and p == 1}
    for h, b in outputs.items():
        assert at_least_one_third(b, by_height[h], n)


# -- fairness ----------------------------------------------------------------------


def test_fairness_original_never_catches_up(fairness_original):
    a = fairness_original.report["fairness"]
    assert a["verdict"] == "NOT-EVENTUALLY-FAIR"
    assert a["audited_heights"] >= 50
    assert a["condition4"]["violations"] == a["audited_heights"]
    assert fairness_original.report["status"]["4bis"] == "FAIL"


def test_fairness_filter_catches_up_when_timeout_covers_delay(fairness_filtered):
    rep = fairness_filtered.report
    traj = {int(h): v for h, v in rep["timeout_commit"].items()}
    delay = fairness_filtered.config.fairness["slow_commit"]["delay"]
    h_star = min(h for h, v in traj.items() if v >= delay)
    assert rep["fairness"]["catch_up_height"] == h_star
    assert rep["fairness"]["verdict"] == f"EVENTUALLY-FAIR({h_star})"
    assert rep["status"]["4bis"] == "PASS"
