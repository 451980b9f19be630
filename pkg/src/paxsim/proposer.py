"""Leader-side protocol logic: numbering, promise counting, retry.

The proposer converts each client request into a numbered proposal,
broadcasts Prepare to every believed member (itself included), issues
AcceptRequest once a majority has promised, and retries with a strictly
higher number when a phase times out without reaching majority. Requests
are driven one slot at a time, in slot order.

All outward effects go through a bus object supplied by the host node,
with the surface: send(packet, dst), set_timer(tag, delay),
log(kind, **fields) and a shutting_down flag.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .messages import (
    Accepted,
    AcceptRequest,
    ClientRequest,
    NodeId,
    Prepare,
    Promise,
    ProposalNumber,
)


class ZeroMembership(ValueError):
    pass


class DuplicateRequest(ValueError):
    pass


def majority_threshold(membership_size: int) -> int:
    """Smallest count that is a strict majority of the given membership."""
    if membership_size < 1:
        raise ZeroMembership(f"membership size must be >= 1, got {membership_size}")
    return membership_size // 2 + 1


PREPARING = "preparing"
ACCEPTING = "accepting"


@dataclass
class InFlight:
    request: ClientRequest
    n: ProposalNumber
    phase: str = PREPARING
    promises: dict[NodeId, ProposalNumber | None] = field(default_factory=dict)
    accepted: set[NodeId] = field(default_factory=set)


class Proposer:
    """One leadership incumbency of a node; discarded when the node is deposed."""

    def __init__(self, node_id: NodeId, epoch: int, members, next_round: int, bus, timeout: int):
        self.id = node_id
        self.epoch = epoch
        self.members: set[NodeId] = set(members)
        self.next_round = next_round
        self.highest_round_seen = next_round - 1
        self.bus = bus
        self.timeout = timeout
        self.in_flight: InFlight | None = None
        self.pending: deque[ClientRequest] = deque()
        self.done: set[int] = set()

    # -- client side -------------------------------------------------------

    def submit(self, request: ClientRequest) -> None:
        rid = request.request_id
        if rid in self.done or any(p.request_id == rid for p in self.pending) or (
            self.in_flight is not None and self.in_flight.request.request_id == rid
        ):
            raise DuplicateRequest(f"request {rid} is already decided or in flight")
        if self.in_flight is not None:
            self.pending.append(request)
        else:
            self._propose(request)

    # -- packet handlers ----------------------------------------------------

    def on_promise(self, p: Promise) -> None:
        self.note_round(p.n.round)
        if p.last_served is not None:
            self.note_round(p.last_served.round)
        flight = self.in_flight
        if flight is None or flight.phase != PREPARING or p.n != flight.n:
            return  # stale or foreign promise
        if p.sender not in self.members:
            return
        flight.promises[p.sender] = p.last_served
        self._check_promise_majority()

    def on_accepted(self, a: Accepted) -> None:
        self.note_round(a.n.round)
        flight = self.in_flight
        if flight is None or flight.phase != ACCEPTING or a.n != flight.n:
            return
        if a.sender not in self.members:
            return
        flight.accepted.add(a.sender)
        self._check_accept_majority()

    # -- timers and membership ----------------------------------------------

    def on_phase_timeout(self, request_id: int, round_: int, phase: str) -> None:
        flight = self.in_flight
        if flight is None or flight.request.request_id != request_id:
            return
        if flight.n.round != round_ or flight.phase != phase:
            return
        if getattr(self.bus, "shutting_down", False):
            return
        self._repropose()

    def on_membership_change(self, alive) -> None:
        """Adopt the new membership and re-evaluate majorities immediately.

        Promises and acceptances from departed nodes are discarded before
        the thresholds are recomputed, so a stalled 3-of-6 can become a
        satisfied 3-of-5 without waiting for a timeout.
        """
        self.members = set(alive)
        flight = self.in_flight
        if flight is None:
            return
        flight.promises = {k: v for k, v in flight.promises.items() if k in self.members}
        flight.accepted = {k for k in flight.accepted if k in self.members}
        if flight.phase == PREPARING:
            self._check_promise_majority()
        elif flight.phase == ACCEPTING:
            self._check_accept_majority()

    def note_round(self, round_: int) -> None:
        if round_ > self.highest_round_seen:
            self.highest_round_seen = round_

    # -- internals -----------------------------------------------------------

    def _allocate(self) -> ProposalNumber:
        round_ = max(self.next_round, self.highest_round_seen + 1)
        self.next_round = round_ + 1
        self.note_round(round_)
        return ProposalNumber(round_, self.id)

    def _propose(self, request: ClientRequest) -> None:
        n = self._allocate()
        self.in_flight = InFlight(request=request, n=n)
        self.bus.log("Propose", **{"from": self.id, "req": request.request_id,
                                   "n": n, "epoch": self.epoch})
        self._broadcast_prepare()

    def _repropose(self) -> None:
        flight = self.in_flight
        n = self._allocate()
        flight.n = n
        flight.phase = PREPARING
        flight.promises = {}
        flight.accepted = set()
        self.bus.log("Repropose", **{"from": self.id, "req": flight.request.request_id,
                                     "n": n, "epoch": self.epoch})
        self._broadcast_prepare()

    def _broadcast_prepare(self) -> None:
        flight = self.in_flight
        packet = Prepare(n=flight.n, request=flight.request, epoch=self.epoch)
        for member in sorted(self.members):
            self.bus.send(packet, member)
        self.bus.set_timer(("phase", flight.request.request_id, flight.n.round, PREPARING),
                           self.timeout)

    def _check_promise_majority(self) -> None:
        flight = self.in_flight
        if len(flight.promises) < majority_threshold(len(self.members)):
            return
        flight.phase = ACCEPTING
        self.bus.log("MajorityReached", **{"from": self.id, "req": flight.request.request_id,
                                           "n": flight.n, "promises": len(flight.promises),
                                           "membership": len(self.members)})
        packet = AcceptRequest(n=flight.n, request=flight.request, epoch=self.epoch)
        for member in sorted(self.members):
            self.bus.send(packet, member)
        self.bus.set_timer(("phase", flight.request.request_id, flight.n.round, ACCEPTING),
                           self.timeout)

    def _check_accept_majority(self) -> None:
        flight = self.in_flight
        if len(flight.accepted) < majority_threshold(len(self.members)):
            return
        self.done.add(flight.request.request_id)
        self.in_flight = None
        if self.pending:
            self._propose(self.pending.popleft())
