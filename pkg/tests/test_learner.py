"""Learner ledger upkeep and the verdict decision table."""

import itertools
import random

from paxsim.learner import (
    Anomaly,
    Consensus,
    Inconclusive,
    InstanceLedger,
    MAJORITY,
    STRICT,
    decide,
)
from paxsim.messages import Accepted, ProposalNumber
from paxsim.proposer import majority_threshold


def accepted(sender, output="OK", state="S1", round_=0, rid=0):
    return Accepted(n=ProposalNumber(round_, 0), request_id=rid, output=output,
                    new_state=state, sender=sender)


def filled_ledger(reports, rid=0):
    ledger = InstanceLedger(request_id=rid)
    for sender, (output, state, round_) in reports.items():
        ledger.record(accepted(sender, output=output, state=state, round_=round_))
    return ledger


def test_first_tuple_recorded():
    ledger = InstanceLedger(request_id=0)
    assert ledger.record(accepted(1))
    assert set(ledger.reports) == {1}


def test_duplicate_tuple_ignored():
    ledger = InstanceLedger(request_id=0)
    ledger.record(accepted(1))
    assert not ledger.record(accepted(1))
    assert len(ledger.reports) == 1


def test_higher_number_replaces_entry():
    ledger = InstanceLedger(request_id=0)
    ledger.record(accepted(1, output="old", round_=0))
    assert ledger.record(accepted(1, output="new", round_=2))
    assert ledger.reports[1].output == "new"
    assert not ledger.record(accepted(1, output="older", round_=1))
    assert ledger.reports[1].output == "new"


def test_unanimous_majority_is_consensus():
    ledger = filled_ledger({i: ("OK", "S1", 0) for i in range(5)})
    verdict = decide(ledger, membership_size=5, deadline_reached=False)
    assert verdict == Consensus(output="OK", state="S1")


def test_single_divergent_replica_is_anomaly():
    reports = {i: ("OK", "S1", 0) for i in range(4)}
    reports[4] = ("OK", "S7", 0)
    verdict = decide(filled_ledger(reports), membership_size=5, deadline_reached=False)
    assert isinstance(verdict, Anomaly)
    assert verdict.dissenting == frozenset({4})
    assert verdict.agreeing == frozenset({0, 1, 2, 3})
    assert dict(verdict.states_seen) == {"S1": 4, "S7": 1}


def test_too_few_tuples_is_inconclusive():
    ledger = filled_ledger({i: ("OK", "S1", 0) for i in range(2)})
    verdict = decide(ledger, membership_size=5, deadline_reached=True)
    assert verdict == Inconclusive(received=2, needed=3)


def test_empty_ledger_is_inconclusive_zero():
    verdict = decide(InstanceLedger(request_id=0), membership_size=5, deadline_reached=True)
    assert verdict == Inconclusive(received=0, needed=3)


def test_only_highest_number_tuples_count():
    reports = {0: ("old", "S0", 0), 1: ("new", "S1", 3), 2: ("new", "S1", 3)}
    verdict = decide(filled_ledger(reports), membership_size=3, deadline_reached=True)
    # Node 0's stale tuple is outside the decision set: two fresh agreeing
    # tuples of three members make a consensus.
    assert verdict == Consensus(output="new", state="S1")


def brute_force_decision(pairs_by_node, membership_size):
    """Independent decision-table oracle over same-round reports."""
    if not pairs_by_node:
        return ("Inconclusive", 0, membership_size // 2 + 1)
    distinct = set(pairs_by_node.values())
    if len(distinct) >= 2:
        best_size = max(len([n for n, p in pairs_by_node.items() if p == q]) for q in distinct)
        candidates = sorted(
            (q for q in distinct
             if len([n for n, p in pairs_by_node.items() if p == q]) == best_size),
            key=lambda q: (q[1], q[0]))
        winner = candidates[0]
        agreeing = frozenset(n for n, p in pairs_by_node.items() if p == winner)
        return ("Anomaly", agreeing, frozenset(pairs_by_node) - agreeing)
    if len(pairs_by_node) >= membership_size // 2 + 1:
        pair = next(iter(distinct))
        return ("Consensus", pair[0], pair[1])
    return ("Inconclusive", len(pairs_by_node), membership_size // 2 + 1)


def assert_matches_oracle(pairs_by_node, membership_size):
    ledger = filled_ledger({n: (p[0], p[1], 0) for n, p in pairs_by_node.items()})
    verdict = decide(ledger, membership_size=membership_size, deadline_reached=True)
    expected = brute_force_decision(pairs_by_node, membership_size)
    if expected[0] == "Consensus":
        assert verdict == Consensus(output=expected[1], state=expected[2])
    elif expected[0] == "Anomaly":
        assert isinstance(verdict, Anomaly)
        assert verdict.agreeing == expected[1]
        assert verdict.dissenting == expected[2]
    else:
        assert verdict == Inconclusive(received=expected[1], needed=expected[2])


def test_decide_agrees_with_oracle_on_all_small_multisets():
    # Every assignment of <= 3 distinct pairs (or absence) to up to 7 nodes.
    palette = [("O1", "S1"), ("O2", "S1"), ("O1", "S2")]
    options = [None] + palette
    for n_nodes in range(1, 8):
        for combo in itertools.product(options, repeat=n_nodes):
            pairs = {node: pair for node, pair in enumerate(combo) if pair is not None}
            assert_matches_oracle(pairs, membership_size=n_nodes)


def test_any_divergence_beats_any_count_under_strict_policy():
    rng = random.Random(99)
    palette = [("a", "X"), ("b", "X"), ("a", "Y")]
    for _ in range(300):
        size = rng.randint(2, 7)
        pairs = {node: rng.choice(palette) for node in range(size)}
        if len(set(pairs.values())) < 2:
            pairs[0] = ("zzz", "Z")
        ledger = filled_ledger({n: (p[0], p[1], 0) for n, p in pairs.items()})
        verdict = decide(ledger, membership_size=size, deadline_reached=True, policy=STRICT)
        assert isinstance(verdict, Anomaly)


def test_majority_policy_sides_with_majority_group():
    reports = {i: ("OK", "S1", 0) for i in range(4)}
    reports[4] = ("Error", "S7", 0)
    ledger = filled_ledger(reports)
    assert decide(ledger, 5, False, policy=MAJORITY) == Consensus(output="OK", state="S1")
    # Without a majority group the anomaly stands even in majority mode.
    split = filled_ledger({0: ("a", "X", 0), 1: ("b", "Y", 0), 2: ("c", "Z", 0),
                           3: ("a", "X", 0), 4: ("b", "Y", 0)})
    assert isinstance(decide(split, 5, False, policy=MAJORITY), Anomaly)


def test_anomaly_tie_breaks_toward_smallest_state_name():
    ledger = filled_ledger({0: ("x", "S2", 0), 1: ("x", "S1", 0)})
    verdict = decide(ledger, membership_size=2, deadline_reached=True)
    assert verdict.agreeing == frozenset({1})  # S1 sorts before S2
    assert verdict.dissenting == frozenset({0})


def test_decide_is_pure():
    ledger = filled_ledger({i: ("OK", "S1", 0) for i in range(3)})
    first = decide(ledger, 5, True)
    second = decide(ledger, 5, True)
    assert first == second
    assert set(ledger.reports) == {0, 1, 2}


def test_needed_tracks_membership_size():
    ledger = filled_ledger({0: ("OK", "S1", 0)})
    for size in range(1, 8):
        verdict = decide(ledger, membership_size=size, deadline_reached=True)
        if size <= 1:
            assert verdict == Consensus(output="OK", state="S1")
        else:
            assert verdict.needed == majority_threshold(size)
