from itertools import combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tendersim.types import (
    GENESIS, NIL, Authenticator, Block, ConsensusMessage, ForgeryError, Kind, Mempool, VoteSet,
    at_least_one_third, create_new_block, is_23_maj, is_valid, max_faulty, one_third_plus,
    quorum, value_from_json, value_to_json,
)


def _block(pid=1, nonce=0, tip=GENESIS):
    return create_new_block((), Mempool(), tip, pid, nonce=nonce)


def _votes(kind, values, rnd=1, height=1):
    return [ConsensusMessage(kind, signer, height, rnd, v) for signer, v in values.items()]


@pytest.mark.parametrize("n,q,t,f", [(1, 1, 1, 0), (3, 3, 2, 0), (4, 3, 2, 1), (6, 5, 3, 1),
                                     (7, 5, 3, 2), (10, 7, 4, 3), (100, 67, 34, 33)])
def test_thresholds_table(n, q, t, f):
    assert (quorum(n), one_third_plus(n), max_faulty(n)) == (q, t, f)


@given(st.integers(1, 500))
def test_thresholds_are_strict_fractions(n):
    q, t = quorum(n), one_third_plus(n)
    assert 3 * q > 2 * n >= 3 * (q - 1)
    assert 3 * t > n >= 3 * (t - 1)
    assert 3 * max_faulty(n) < n


@pytest.mark.parametrize("n", [4, 7])
def test_quorum_intersection_exhaustive(n):
    """Any two quorums share a correct process, whichever f processes are faulty."""
    procs = range(n)
    f, q = max_faulty(n), quorum(n)
    quorums = [frozenset(c) for k in range(q, n + 1) for c in combinations(procs, k)]
    faulty_sets = [frozenset(c) for c in combinations(procs, f)]
    for a in quorums:
        for b in quorums:
            common = a & b
            assert len(common) >= f + 1
            assert all(common - bad for bad in faulty_sets)
    # and one process fewer breaks it
    small = [frozenset(c) for c in combinations(procs, q - 1)]
    assert any(len(a & b) <= f for a in small for b in small)


@pytest.mark.parametrize("n", [4, 7])
def test_one_third_plus_contains_correct(n):
    f, t = max_faulty(n), one_third_plus(n)
    for s in combinations(range(n), t):
        for bad in combinations(range(n), f):
            assert set(s) - set(bad)


def test_is_23_maj_counts_distinct_signers():
    b = _block()
    assert is_23_maj(b, _votes(Kind.PREVOTE, {1: b, 2: b, 3: b}), 4)
    assert not is_23_maj(b, _votes(Kind.PREVOTE, {1: b, 2: b, 3: NIL}), 4)
    dup = _votes(Kind.PREVOTE, {1: b, 2: b}) * 3
    assert not is_23_maj(b, dup, 4)
    assert is_23_maj(NIL, _votes(Kind.PREVOTE, {1: NIL, 2: NIL, 4: NIL}), 4)


def test_is_23_maj_first_vote_per_signer_wins():
    b, c = _block(nonce=0), _block(nonce=1)
    votes = _votes(Kind.PREVOTE, {1: b, 2: b}) + [ConsensusMessage(Kind.PREVOTE, 3, 1, 1, c),
                                                  ConsensusMessage(Kind.PREVOTE, 3, 1, 1, b)]
    assert not is_23_maj(b, votes, 4)


def test_is_23_maj_rejects_mixed_slots():
    b = _block()
    with pytest.raises(ValueError):
        is_23_maj(b, _votes(Kind.PREVOTE, {1: b}) + _votes(Kind.PREVOTE, {2: b}, rnd=2), 4)


def test_at_least_one_third():
    b = _block()
    commits = [ConsensusMessage(Kind.COMMIT, p, 1, 0, b) for p in (1, 2)]
    assert at_least_one_third(b, commits, 4)
    assert not at_least_one_third(b, commits[:1], 4)
    assert not at_least_one_third(b, commits, 7)
    with pytest.raises(ValueError):
        at_least_one_third(b, _votes(Kind.PREVOTE, {1: b}), 4)


@given(st.integers(4, 13), st.data())
def test_is_23_maj_matches_count(n, data):
    b, c = _block(nonce=0), _block(nonce=1)
    values = {p: data.draw(st.sampled_from([b, c, NIL])) for p in range(1, n + 1)
              if data.draw(st.booleans())}
    votes = _votes(Kind.PRECOMMIT, values)
    for v in (b, c, NIL):
        expect = sum(x == v for x in values.values()) >= quorum(n)
        assert is_23_maj(v, votes, n) == expect
    assert sum(is_23_maj(v, votes, n) for v in (b, c, NIL)) <= 1


def test_block_digest_and_json_roundtrip():
    b = _block(pid=2)
    assert b == Block.from_json(b.to_json())
    assert value_from_json(value_to_json(b)) == b
    assert value_from_json(value_to_json(NIL)) is NIL
    assert b != _block(pid=3)
    assert len(b.digest) == 64 and b.short == b.digest[:8]
    tampered = b.to_json()
    tampered["digest"] = "0" * 64
    with pytest.raises(ValueError):
        Block.from_json(tampered)


def test_validity():
    b = _block()
    assert is_valid(b, GENESIS)
    assert is_valid(_block(tip=b), [GENESIS, b])
    assert not is_valid(_block(tip=b), GENESIS)
    assert not is_valid(NIL)
    assert not is_valid(Block(1, GENESIS.digest, ("garbage",)))
    assert not is_valid(Block(1, "f" * 64, ()))


def test_create_new_block_reward_height():
    b1 = _block()
    assert b1.reward_height is None and b1.height == 1
    b2 = create_new_block({1, 2}, Mempool(), b1, 1)
    assert b2.reward_height == 1 and b2.last_commit == {1, 2}
    assert create_new_block((), Mempool(), b1, 1, reward_height=None).reward_height is None


def test_message_validation_and_roundtrip():
    b = _block()
    with pytest.raises(ValueError):
        ConsensusMessage(Kind.PREVOTE, 1, 1, 0, b)
    with pytest.raises(ValueError):
        ConsensusMessage(Kind.COMMIT, 1, 1, 2, b)
    m = ConsensusMessage(Kind.COMMIT, 3, 1, 0, b, attest=frozenset({1, 2}))
    assert ConsensusMessage.from_json(m.to_json()) == m
    p = ConsensusMessage(Kind.PROPOSE, 1, 1, 2, b, polc_round=1)
    assert ConsensusMessage.from_json(p.to_json()) == p


def test_voteset_dedup_and_evidence():
    b, c = _block(nonce=0), _block(nonce=1)
    vs = VoteSet()
    m = ConsensusMessage(Kind.PREVOTE, 1, 1, 1, b)
    assert vs.insert(m) == "new"
    assert vs.insert(m) == "duplicate"
    assert vs.insert(ConsensusMessage(Kind.PREVOTE, 1, 1, 1, c)) == "conflict"
    assert vs.count_for(1, 1, Kind.PREVOTE, b) == 1
    assert vs.count_for(1, 1, Kind.PREVOTE, c) == 0
    assert len(vs.evidence) == 1
    for s in (2, 3):
        vs.insert(ConsensusMessage(Kind.PREVOTE, s, 1, 1, b))
    assert vs.block_quorum(1, 1, Kind.PREVOTE, 4) == b
    assert vs.rounds(1, Kind.PREVOTE) == [1]
    assert m in vs


def test_decision_block_counts_quarantined_precommits():
    b, c = _block(nonce=0), _block(nonce=1)
    vs = VoteSet()
    vs.insert(ConsensusMessage(Kind.PRECOMMIT, 1, 1, 1, c))
    for s in (1, 2, 3):
        vs.insert(ConsensusMessage(Kind.PRECOMMIT, s, 1, 1, b))
    assert vs.block_quorum(1, 1, Kind.PRECOMMIT, 4) is None
    assert vs.decision_block(1, 1, Kind.PRECOMMIT, 4) == b
    assert vs.decision_block(1, 1, Kind.PREVOTE, 4) is None


def test_authenticator_blocks_forgery():
    auth = Authenticator()
    m = ConsensusMessage(Kind.PREVOTE, 1, 1, 1, NIL)
    with pytest.raises(ForgeryError):
        auth.emit(2, m)
    auth.emit(1, m)
    auth.emit(2, m)  # relaying an emitted message is fine
    assert auth.authenticate(m, 1)
    assert not auth.authenticate(m, 2)
    assert not auth.authenticate(ConsensusMessage(Kind.PREVOTE, 3, 1, 1, NIL), 3)
