"""Protocol values exchanged between nodes, and their event-log text form.

All message values are immutable after construction; handlers may freely
keep or copy them across logical nodes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

NodeId = int

# Characters that may appear unquoted in a log field value.
_BARE_VALUE = re.compile(r"[A-Za-z0-9_.:*,\-/]+\Z")
_FIELD = re.compile(r'(\w+)=("(?:[^"\\]|\\.)*"|\S+)')


@dataclass(frozen=True, slots=True, order=True)
class ProposalNumber:
    """Totally ordered proposal identity: lexicographic on (round, proposer)."""

    round: int
    proposer: NodeId

    def __str__(self) -> str:
        return f"{self.round}.{self.proposer}"

    @classmethod
    def parse(cls, text: str) -> "ProposalNumber":
        r, p = text.split(".")
        return cls(int(r), int(p))


def compare_proposal(a: ProposalNumber, b: ProposalNumber) -> int:
    """Return -1, 0 or 1 as a is less than, equal to or greater than b."""
    if a == b:
        return 0
    return -1 if a < b else 1


@dataclass(frozen=True, slots=True)
class ClientRequest:
    request_id: int
    payload: str


@dataclass(frozen=True, slots=True)
class Prepare:
    """Phase-1 proposal, stamped with the leadership epoch it was issued in."""

    n: ProposalNumber
    request: ClientRequest
    epoch: int

    kind = "Prepare"


@dataclass(frozen=True, slots=True)
class Promise:
    """An acceptor's pledge to serve proposal n, echoing its last served number."""

    n: ProposalNumber
    last_served: ProposalNumber | None
    sender: NodeId

    kind = "Promise"


@dataclass(frozen=True, slots=True)
class AcceptRequest:
    n: ProposalNumber
    request: ClientRequest
    epoch: int

    kind = "AcceptRequest"


@dataclass(frozen=True, slots=True)
class Accepted:
    """The execution result a replica reports: proposal number, output, new state.

    request_id identifies the slot the result belongs to; it is addressing
    metadata, like sender, not part of the reported result triple.
    """

    n: ProposalNumber
    request_id: int
    output: str
    new_state: str
    sender: NodeId

    kind = "Accepted"


@dataclass(frozen=True, slots=True)
class Heartbeat:
    sender: NodeId
    seq: int

    kind = "Heartbeat"


@dataclass(frozen=True, slots=True)
class ClientResponse:
    request_id: int
    output: str

    kind = "ClientResponse"


Packet = Prepare | Promise | AcceptRequest | Accepted | Heartbeat | ClientResponse

PACKET_KINDS = ("Prepare", "Promise", "AcceptRequest", "Accepted", "Heartbeat", "ClientResponse")


def format_value(value) -> str:
    """Render a field value for a log line; free text is JSON-quoted."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, ProposalNumber):
        return str(value)
    text = str(value)
    if _BARE_VALUE.match(text):
        return text
    return json.dumps(text, ensure_ascii=True)


def parse_value(token: str) -> str:
    if token.startswith('"'):
        return json.loads(token)
    return token


def parse_fields(text: str) -> dict[str, str]:
    """Split a log line (or its tail) into an ordered field mapping."""
    return {m.group(1): parse_value(m.group(2)) for m in _FIELD.finditer(text)}


def packet_fields(packet: Packet) -> dict[str, object]:
    """Ordered log fields for a packet, excluding transport addressing."""
    if isinstance(packet, Prepare):
        return {"epoch": packet.epoch, "n": packet.n, "req": packet.request.request_id,
                "payload": packet.request.payload}
    if isinstance(packet, Promise):
        fields: dict[str, object] = {"n": packet.n}
        if packet.last_served is not None:
            fields["last"] = packet.last_served
        return fields
    if isinstance(packet, AcceptRequest):
        return {"epoch": packet.epoch, "n": packet.n, "req": packet.request.request_id,
                "payload": packet.request.payload}
    if isinstance(packet, Accepted):
        return {"n": packet.n, "req": packet.request_id, "output": packet.output,
                "state": packet.new_state}
    if isinstance(packet, Heartbeat):
        return {"hb_seq": packet.seq}
    if isinstance(packet, ClientResponse):
        return {"req": packet.request_id, "output": packet.output}
    raise TypeError(f"not a packet: {packet!r}")


def packet_from_fields(kind: str, fields: dict[str, str], sender: NodeId) -> Packet:
    """Rebuild a packet value from parsed log fields. Inverse of packet_fields."""
    if kind == "Prepare":
        return Prepare(n=ProposalNumber.parse(fields["n"]), epoch=int(fields["epoch"]),
                       request=ClientRequest(int(fields["req"]), fields["payload"]))
    if kind == "Promise":
        last = ProposalNumber.parse(fields["last"]) if "last" in fields else None
        return Promise(n=ProposalNumber.parse(fields["n"]), last_served=last, sender=sender)
    if kind == "AcceptRequest":
        return AcceptRequest(n=ProposalNumber.parse(fields["n"]), epoch=int(fields["epoch"]),
                             request=ClientRequest(int(fields["req"]), fields["payload"]))
    if kind == "Accepted":
        return Accepted(n=ProposalNumber.parse(fields["n"]), request_id=int(fields["req"]),
                        output=fields["output"], new_state=fields["state"], sender=sender)
    if kind == "Heartbeat":
        return Heartbeat(sender=sender, seq=int(fields["hb_seq"]))
    if kind == "ClientResponse":
        return ClientResponse(request_id=int(fields["req"]), output=fields["output"])
    raise ValueError(f"unknown packet kind: {kind}")
