"""Cluster wiring, the run loop, end-of-run reporting, and log replay.

Node ids in a run with n replicas: replicas are 0..n-1 (node 0 starts as
leader), the learner lives at id n (and hosts the membership watch), and
the client sink at id n+1. Every packet, including a leader's messages to
itself, travels through the simulated network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .acceptor import Acceptor
from .eventlog import Record, format_record, parse_record
from .learner import Anomaly, Consensus, InstanceLedger, Learner, decide
from .membership import EmptyGroup, MembershipService
from .messages import (
    Accepted,
    AcceptRequest,
    ClientRequest,
    Heartbeat,
    NodeId,
    Packet,
    Prepare,
    Promise,
    packet_from_fields,
)
from .proposer import Proposer
from .scenario import Scenario
from .simnet import CompromiseFault, CrashFault, FaultSpec, NetConfig, Simulation


class Replica:
    """A replica node: always an acceptor, plus the proposer role while leading."""

    def __init__(self, node_id: NodeId, scenario: Scenario, sim: Simulation,
                 monitor_id: NodeId, learner_id: NodeId):
        self.id = node_id
        self.sim = sim
        self.monitor_id = monitor_id
        self.learner_id = learner_id
        self.timing = scenario.timing
        self.acceptor = Acceptor(id=node_id, definition=scenario.machine,
                                 model=scenario.app_model)
        self.proposer: Proposer | None = None
        self.epoch = 0
        self.leader: NodeId = 0
        self.heartbeat_seq = 0
        self.max_round_seen = -1

    # Bus surface used by the proposer role.

    def send(self, packet: Packet, dst: NodeId) -> None:
        self.sim.send(packet, self.id, dst)

    def set_timer(self, tag: tuple, delay: int) -> None:
        self.sim.set_timer(self.id, tag, delay)

    def log(self, kind: str, **fields) -> None:
        self.sim.log(kind, **fields)

    @property
    def shutting_down(self) -> bool:
        return self.sim.shutting_down

    # Event handlers.

    def on_packet(self, packet: Packet, src: NodeId, now: int) -> None:
        if isinstance(packet, Prepare):
            self.note_round(packet.n.round)
            if packet.epoch != self.epoch:
                return  # fenced: a deposed leader's leftover
            reply = self.acceptor.on_prepare(packet)
            if reply is not None:
                self.send(reply, src)
        elif isinstance(packet, AcceptRequest):
            self.note_round(packet.n.round)
            if packet.epoch != self.epoch:
                return
            accepted = self.acceptor.on_accept_request(packet)
            if accepted is not None:
                self.send(accepted, src)
                self.send(accepted, self.learner_id)
        elif isinstance(packet, Promise):
            self.note_round(packet.n.round)
            if packet.last_served is not None:
                self.note_round(packet.last_served.round)
            if self.proposer is not None:
                self.proposer.on_promise(packet)
        elif isinstance(packet, Accepted):
            self.note_round(packet.n.round)
            if self.proposer is not None:
                self.proposer.on_accepted(packet)

    def on_timer(self, tag: tuple, now: int) -> None:
        if tag[0] == "hb":
            self.send(Heartbeat(sender=self.id, seq=self.heartbeat_seq), self.monitor_id)
            self.heartbeat_seq += 1
            if not self.sim.shutting_down:
                self.set_timer(("hb",), self.timing.heartbeat_interval)
        elif tag[0] == "phase" and self.proposer is not None:
            _, request_id, round_, phase = tag
            self.proposer.on_phase_timeout(request_id, round_, phase)

    def note_round(self, round_: int) -> None:
        if round_ > self.max_round_seen:
            self.max_round_seen = round_
        if self.proposer is not None:
            self.proposer.note_round(round_)

    def set_leadership(self, epoch: int, leader: NodeId, members) -> None:
        """Adopt the new epoch; take up or lay down the proposer role."""
        self.epoch = epoch
        self.leader = leader
        if leader == self.id:
            if self.proposer is None:
                self.proposer = Proposer(
                    node_id=self.id, epoch=epoch, members=members,
                    next_round=self.max_round_seen + 1, bus=self,
                    timeout=self.timing.prepare_timeout,
                )
        else:
            self.proposer = None


class InfraNode:
    """Hosts the learner and the membership watch, outside the replica group."""

    def __init__(self, node_id: NodeId, sim: Simulation, learner: Learner,
                 membership: MembershipService, heartbeat_interval: int):
        self.id = node_id
        self.sim = sim
        self.learner = learner
        self.membership = membership
        self.heartbeat_interval = heartbeat_interval

    def on_packet(self, packet: Packet, src: NodeId, now: int) -> None:
        if isinstance(packet, Heartbeat):
            self.membership.record_heartbeat(packet.sender, now)
        elif isinstance(packet, Accepted):
            self.learner.on_accepted(packet, now)

    def on_timer(self, tag: tuple, now: int) -> None:
        if tag[0] == "detect":
            self.membership.detect_failures(now)
            if not self.sim.shutting_down:
                self.sim.set_timer(self.id, ("detect",), self.heartbeat_interval)
        elif tag[0] == "deadline":
            self.learner.on_deadline(tag[1])


class ClientSink:
    """Terminal for ClientResponse packets; delivery is already logged."""

    def on_packet(self, packet: Packet, src: NodeId, now: int) -> None:
        pass

    def on_timer(self, tag: tuple, now: int) -> None:
        pass


@dataclass
class Report:
    scenario: str
    seed: int
    final_time: int
    verdicts: list[dict]
    counts: dict[str, int]
    final_membership: list[int]
    final_leader: int
    final_epoch: int
    horizon_reached: bool = False
    livelock: bool = False
    halted: bool = False
    anomalies: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=False)

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario} (seed {self.seed}) finished at t={self.final_time}"]
        for entry in self.verdicts:
            detail = {k: v for k, v in entry.items() if k not in ("request_id", "verdict")}
            lines.append(f"  request {entry['request_id']}: {entry['verdict']} {detail}")
        lines.append("  counts: " + ", ".join(f"{k}={v}" for k, v in self.counts.items()))
        lines.append(f"  membership: {self.final_membership} leader={self.final_leader} "
                     f"epoch={self.final_epoch}")
        flags = [name for name in ("horizon_reached", "livelock", "halted") if getattr(self, name)]
        if flags:
            lines.append("  flags: " + ", ".join(flags))
        return "\n".join(lines)


@dataclass
class RunResult:
    report: Report
    records: list[Record]
    learner: Learner


class ClusterRun:
    """One scenario execution: builds the nodes, drives the loop, reports."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        net = scenario.net if seed is None else NetConfig(
            seed=seed, base_delay=scenario.net.base_delay,
            jitter=scenario.net.jitter, loss_rate=scenario.net.loss_rate)
        self.seed = net.seed
        self.sim = Simulation(net)
        n = scenario.acceptors
        self.learner_id = n
        self.client_id = n + 1
        self.membership = MembershipService(
            members=range(n), suspect_after=scenario.timing.suspect_after,
            bus=self.sim, on_change=self._on_membership_change,
            on_election=self._on_election)
        self.learner = Learner(
            node_id=self.learner_id, client_id=self.client_id,
            membership_view=self.membership.view, bus=_NodeBus(self.sim, self.learner_id),
            policy=scenario.anomaly_policy,
            instance_deadline=scenario.timing.instance_deadline)
        self.replicas = [Replica(i, scenario, self.sim, self.learner_id, self.learner_id)
                         for i in range(n)]
        infra = InfraNode(self.learner_id, self.sim, self.learner, self.membership,
                          scenario.timing.heartbeat_interval)
        self.sim.nodes = {i: r for i, r in enumerate(self.replicas)}
        self.sim.nodes[self.learner_id] = infra
        self.sim.nodes[self.client_id] = ClientSink()
        self.sim.fault_targets = set(range(n))
        self.sim.arrival_handler = self._on_arrival
        self.sim.fault_handler = self._on_fault
        self.requests = [ClientRequest(request_id=i, payload=payload)
                         for i, (_, payload) in enumerate(scenario.requests)]
        self.arrival_times = [at for at, _ in scenario.requests]
        self.seen: dict[int, ClientRequest] = {}
        self.handed: set[int] = set()
        self.faults_applied = 0
        self.halted = False

    # -- callbacks ---------------------------------------------------------------

    def _on_membership_change(self, alive) -> None:
        leader = self.membership.view.leader
        replica = self.replicas[leader]
        if leader in self.sim.crashed or replica.proposer is None:
            return
        replica.proposer.on_membership_change(alive)

    def _on_election(self, epoch: int, leader: NodeId) -> None:
        members = frozenset(self.membership.view.alive)
        for replica in self.replicas:
            if replica.id not in self.sim.crashed:
                replica.set_leadership(epoch, leader, members)
        # The client retries every unanswered request against the new leader,
        # synchronously and in slot order, so nothing arriving later this tick
        # can jump the queue ahead of an older unfinished slot.
        self.handed = set()
        for rid in sorted(self.seen):
            ledger = self.learner.ledgers.get(rid)
            if ledger is not None and isinstance(ledger.verdict, Consensus):
                continue
            self._on_arrival(self.seen[rid], redispatch=True)

    def _on_arrival(self, request: ClientRequest, redispatch: bool = False) -> None:
        leader = self.membership.view.leader
        fields = {"req": request.request_id, "to": leader, "payload": request.payload}
        if redispatch:
            fields["redispatch"] = 1
        self.sim.log("ClientArrival", **fields)
        self.seen[request.request_id] = request
        if request.request_id in self.handed:
            return
        ledger = self.learner.ledgers.get(request.request_id)
        if ledger is not None and isinstance(ledger.verdict, Consensus):
            return
        replica = self.replicas[leader]
        if leader in self.sim.crashed or replica.proposer is None:
            return  # lost until the next election retries it
        self.handed.add(request.request_id)
        replica.proposer.submit(request)

    def _on_fault(self, spec: FaultSpec) -> None:
        self.faults_applied += 1
        if isinstance(spec, CrashFault):
            self.membership.mark_crashed(spec.target)
        elif isinstance(spec, CompromiseFault):
            self.replicas[spec.target].acceptor.compromise(spec.override)

    # -- the run loop -------------------------------------------------------------

    def run(self) -> RunResult:
        scenario = self.scenario
        self.sim.log("Init", acceptors=scenario.acceptors, leader=0, epoch=0,
                     policy=scenario.anomaly_policy, seed=self.seed)
        self.replicas[0].set_leadership(0, 0, frozenset(range(scenario.acceptors)))
        for fault in scenario.faults:
            self.sim.inject(fault)
        for replica in self.replicas:
            self.sim.set_timer(replica.id, ("hb",), 0)
        self.sim.set_timer(self.learner_id, ("detect",), scenario.timing.heartbeat_interval)
        for request, at in zip(self.requests, self.arrival_times):
            self.sim.schedule_arrival(at, request)

        horizon = scenario.timing.horizon
        horizon_reached = False
        while self.sim.pending():
            if self.sim.peek_time() > horizon:
                horizon_reached = True
                break
            try:
                self.sim.step()
            except EmptyGroup:
                self.halted = True
                break
            if not self.sim.shutting_down and self._work_complete():
                self.sim.request_shutdown()

        undecided = [r.request_id for r in self.requests
                     if self._verdict_of(r.request_id) is None]
        if horizon_reached and undecided:
            self.sim.log("Horizon", at=horizon)
        for rid in undecided:
            self.learner.finalize(rid)

        report = self._build_report(horizon_reached, bool(undecided) and horizon_reached)
        return RunResult(report=report, records=self.sim.records, learner=self.learner)

    def _verdict_of(self, request_id: int):
        ledger = self.learner.ledgers.get(request_id)
        return None if ledger is None else ledger.verdict

    def _work_complete(self) -> bool:
        if not self.requests:
            return False  # observation run: let it play to the horizon
        if self.faults_applied < len(self.scenario.faults):
            return False
        return all(self._verdict_of(r.request_id) is not None for r in self.requests)

    def _build_report(self, horizon_reached: bool, livelock: bool) -> Report:
        counts = {"consensus": 0, "anomaly": 0, "inconclusive": 0,
                  "reproposals": 0, "elections": 0, "drops": 0}
        verdicts = []
        anomalies = []
        for request in self.requests:
            verdict = self._verdict_of(request.request_id)
            entry: dict = {"request_id": request.request_id, "verdict": verdict.kind}
            if isinstance(verdict, Consensus):
                counts["consensus"] += 1
                entry["output"] = verdict.output
                entry["state"] = verdict.state
            elif isinstance(verdict, Anomaly):
                counts["anomaly"] += 1
                entry["agreeing"] = sorted(verdict.agreeing)
                entry["dissenting"] = sorted(verdict.dissenting)
                entry["states_seen"] = dict(verdict.states_seen)
                anomalies.append({"request_id": request.request_id,
                                  "dissenting": sorted(verdict.dissenting),
                                  "states_seen": dict(verdict.states_seen)})
            else:
                counts["inconclusive"] += 1
                entry["received"] = verdict.received
                entry["needed"] = verdict.needed
            verdicts.append(entry)
        for record in self.sim.records:
            if record.kind == "Repropose":
                counts["reproposals"] += 1
            elif record.kind == "Election":
                counts["elections"] += 1
            elif record.kind == "Drop":
                counts["drops"] += 1
        view = self.membership.view
        return Report(
            scenario=self.scenario.name, seed=self.seed, final_time=self.sim.now,
            verdicts=verdicts, counts=counts,
            final_membership=sorted(view.alive), final_leader=view.leader,
            final_epoch=view.epoch, horizon_reached=horizon_reached,
            livelock=livelock, halted=self.halted, anomalies=anomalies)


class _NodeBus:
    """Bus adapter for actors hosted on an infrastructure node."""

    def __init__(self, sim: Simulation, node_id: NodeId):
        self.sim = sim
        self.id = node_id

    def send(self, packet: Packet, dst: NodeId) -> None:
        self.sim.send(packet, self.id, dst)

    def set_timer(self, tag: tuple, delay: int) -> None:
        self.sim.set_timer(self.id, tag, delay)

    def log(self, kind: str, **fields) -> None:
        self.sim.log(kind, **fields)

    @property
    def shutting_down(self) -> bool:
        return self.sim.shutting_down


def run(scenario: Scenario, seed: int | None = None) -> RunResult:
    """Execute a scenario and return its report plus the full event log."""
    return ClusterRun(scenario, seed=seed).run()


def replay_verdicts(records: list[Record]) -> tuple[int, list[str]]:
    """Re-derive every Verdict record from the log and diff against it.

    Returns (number of verdicts checked, list of mismatch descriptions).
    The log itself carries everything needed: Init for the group size and
    policy, Failure/Rejoin for membership tracking, Accepted deliveries to
    the learner for the ledgers, and each Verdict's membership/deadline
    context fields.
    """
    # Live records carry typed field values; push everything through the
    # text codec so replay behaves identically for in-memory and file logs.
    records = [parse_record(format_record(r)) for r in records]
    init = next((r for r in records if r.kind == "Init"), None)
    if init is None:
        return 0, ["no Init record found"]
    n = int(init.fields["acceptors"])
    policy = init.fields["policy"]
    learner_id = n
    alive = set(range(n))
    ledgers: dict[int, InstanceLedger] = {}
    diffs: list[str] = []
    checked = 0

    for record in records:
        kind = record.kind
        if kind == "Failure":
            alive.discard(int(record.fields["node"]))
        elif kind == "Rejoin":
            alive.add(int(record.fields["node"]))
        elif kind == "Accepted" and int(record.fields["to"]) == learner_id:
            packet = packet_from_fields("Accepted", record.fields,
                                        sender=int(record.fields["from"]))
            ledger = ledgers.setdefault(packet.request_id,
                                        InstanceLedger(request_id=packet.request_id))
            ledger.record(packet)
        elif kind == "Verdict":
            rid = int(record.fields["req"])
            membership_size = int(record.fields["membership"])
            deadline = record.fields["deadline"] == "1"
            ledger = ledgers.setdefault(rid, InstanceLedger(request_id=rid))
            verdict = decide(ledger, max(1, membership_size), deadline, policy)
            ledger.verdict = verdict
            checked += 1
            if membership_size != len(alive):
                diffs.append(f"req {rid}: logged membership {membership_size} "
                             f"!= tracked {len(alive)}")
            expected = _verdict_fields(verdict)
            actual = {k: record.fields[k] for k in expected if k in record.fields}
            if expected != actual:
                diffs.append(f"req {rid}: recomputed {expected} != logged {actual}")
    return checked, diffs


def _verdict_fields(verdict) -> dict[str, str]:
    fields = {"verdict": verdict.kind}
    if isinstance(verdict, Consensus):
        fields["output"] = verdict.output
        fields["state"] = verdict.state
    elif isinstance(verdict, Anomaly):
        fields["agreeing"] = ",".join(map(str, sorted(verdict.agreeing)))
        fields["dissenting"] = ",".join(map(str, sorted(verdict.dissenting)))
        fields["states"] = ";".join(f"{name}:{count}"
                                    for name, count in sorted(verdict.states_seen))
    else:
        fields["received"] = str(verdict.received)
        fields["needed"] = str(verdict.needed)
    return fields
