"""Learner-side verdict logic: consensus detection by replica comparison.

The learner collects per-replica result triples for each slot, and decides
once every believed-alive member has reported or the slot's deadline
expires. Replicas are compared on (output, new state) jointly, restricted
to the highest proposal number present. Any divergence is an anomaly under
the default strict policy; the majority policy instead sides with the
largest agreeing group when that group is a majority, still flagging the
dissenters in a report.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .messages import Accepted, ClientResponse, NodeId, ProposalNumber
from .proposer import majority_threshold

STRICT = "strict"
MAJORITY = "majority"


@dataclass(frozen=True, slots=True)
class ReplicaReport:
    n: ProposalNumber
    output: str
    new_state: str


@dataclass(frozen=True, slots=True)
class Consensus:
    output: str
    state: str

    kind = "Consensus"


@dataclass(frozen=True, slots=True)
class Anomaly:
    agreeing: frozenset[NodeId]
    dissenting: frozenset[NodeId]
    states_seen: tuple[tuple[str, int], ...]  # state name -> count, sorted by name

    kind = "Anomaly"


@dataclass(frozen=True, slots=True)
class Inconclusive:
    received: int
    needed: int

    kind = "Inconclusive"


Verdict = Consensus | Anomaly | Inconclusive


@dataclass
class InstanceLedger:
    request_id: int
    reports: dict[NodeId, ReplicaReport] = field(default_factory=dict)
    verdict: Verdict | None = None
    first_report_time: int | None = None

    def record(self, a: Accepted) -> bool:
        """Record a replica report; a higher-numbered report replaces an older one.

        Returns False when the report was ignored (duplicate, lower-numbered,
        or arriving after a Consensus verdict was sealed).
        """
        if isinstance(self.verdict, Consensus):
            return False
        existing = self.reports.get(a.sender)
        if existing is not None and a.n <= existing.n:
            return False
        self.reports[a.sender] = ReplicaReport(n=a.n, output=a.output, new_state=a.new_state)
        return True


def _highest_round_reports(reports: dict[NodeId, ReplicaReport]) -> dict[NodeId, ReplicaReport]:
    top = max(r.n for r in reports.values())
    return {node: r for node, r in reports.items() if r.n == top}


def _groups(top: dict[NodeId, ReplicaReport]) -> list[tuple[tuple[str, str], list[NodeId]]]:
    """Group nodes by (output, state) pair; largest first, ties toward the
    lexicographically smallest state name (then output)."""
    by_pair: dict[tuple[str, str], list[NodeId]] = {}
    for node in sorted(top):
        pair = (top[node].output, top[node].new_state)
        by_pair.setdefault(pair, []).append(node)
    return sorted(by_pair.items(), key=lambda kv: (-len(kv[1]), kv[0][1], kv[0][0]))


def decide(ledger: InstanceLedger, membership_size: int, deadline_reached: bool,
           policy: str = STRICT) -> Verdict:
    """Pure decision function over the reports recorded so far.

    deadline_reached only marks why the decision point was reached; the
    decision table itself depends on the reports and the membership size.
    """
    needed = majority_threshold(membership_size)
    if not ledger.reports:
        return Inconclusive(received=0, needed=needed)

    top = _highest_round_reports(ledger.reports)
    groups = _groups(top)
    if len(groups) >= 2:
        (pair, winners), rest = groups[0], groups[1:]
        if policy == MAJORITY and len(winners) >= needed:
            return Consensus(output=pair[0], state=pair[1])
        dissenting = frozenset(n for _, nodes in rest for n in nodes)
        states = Counter(r.new_state for r in top.values())
        return Anomaly(agreeing=frozenset(winners), dissenting=dissenting,
                       states_seen=tuple(sorted(states.items())))
    if len(top) >= needed:
        pair = groups[0][0]
        return Consensus(output=pair[0], state=pair[1])
    return Inconclusive(received=len(top), needed=needed)


class Learner:
    """Event-driven wrapper around the pure verdict logic.

    membership_view exposes the believed-alive set; bus provides send /
    set_timer / log as for the other roles.
    """

    def __init__(self, node_id: NodeId, client_id: NodeId, membership_view, bus,
                 policy: str = STRICT, instance_deadline: int = 50):
        self.id = node_id
        self.client_id = client_id
        self.view = membership_view
        self.bus = bus
        self.policy = policy
        self.instance_deadline = instance_deadline
        self.ledgers: dict[int, InstanceLedger] = {}

    def ledger(self, request_id: int) -> InstanceLedger:
        return self.ledgers.setdefault(request_id, InstanceLedger(request_id=request_id))

    def on_accepted(self, a: Accepted, now: int) -> None:
        ledger = self.ledger(a.request_id)
        ledger.record(a)
        if ledger.reports and ledger.first_report_time is None:
            ledger.first_report_time = now
            self.bus.set_timer(("deadline", a.request_id), self.instance_deadline)
        if ledger.verdict is None and set(ledger.reports) >= set(self.view.alive):
            self._decide(ledger, deadline_reached=False)

    def on_deadline(self, request_id: int) -> None:
        ledger = self.ledger(request_id)
        if ledger.verdict is None:
            self._decide(ledger, deadline_reached=True)

    def finalize(self, request_id: int) -> None:
        """Force a verdict at the end of a run (time horizon reached)."""
        ledger = self.ledger(request_id)
        if ledger.verdict is None:
            self._decide(ledger, deadline_reached=True)

    def _decide(self, ledger: InstanceLedger, deadline_reached: bool) -> None:
        membership_size = max(1, len(self.view.alive))  # group may have emptied before a halt
        verdict = decide(ledger, membership_size, deadline_reached, self.policy)
        ledger.verdict = verdict
        if ledger.reports:
            top = _highest_round_reports(ledger.reports)
            groups = _groups(top)
            if len(groups) >= 2:
                dissenting = sorted(n for _, nodes in groups[1:] for n in nodes)
                states = Counter(r.new_state for r in top.values())
                outputs = Counter(r.output for r in top.values())
                self.bus.log("AnomalyReport", req=ledger.request_id,
                             dissenting=",".join(map(str, dissenting)),
                             states=_counts_text(states), outputs=_counts_text(outputs))
        self._log_verdict(ledger, membership_size, deadline_reached)
        if isinstance(verdict, Consensus):
            self.bus.send(ClientResponse(request_id=ledger.request_id, output=verdict.output),
                          self.client_id)

    def _log_verdict(self, ledger: InstanceLedger, membership_size: int,
                     deadline_reached: bool) -> None:
        verdict = ledger.verdict
        fields: dict[str, object] = {"req": ledger.request_id, "verdict": verdict.kind,
                                     "membership": membership_size,
                                     "deadline": 1 if deadline_reached else 0}
        if isinstance(verdict, Consensus):
            fields["output"] = verdict.output
            fields["state"] = verdict.state
        elif isinstance(verdict, Anomaly):
            fields["agreeing"] = ",".join(map(str, sorted(verdict.agreeing)))
            fields["dissenting"] = ",".join(map(str, sorted(verdict.dissenting)))
            fields["states"] = _counts_text(Counter(dict(verdict.states_seen)))
        else:
            fields["received"] = verdict.received
            fields["needed"] = verdict.needed
        self.bus.log("Verdict", **fields)


def _counts_text(counts: Counter) -> str:
    return ";".join(f"{name}:{count}" for name, count in sorted(counts.items()))
