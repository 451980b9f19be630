"""Line-oriented event log: one record per line, sortable by (time, seq).

Format: ``time=<t> seq=<s> kind=<Kind> key=value ...`` with free-text values
JSON-quoted. Packet deliveries are logged with the packet's own fields plus
from/to addressing; every other record kind carries its own small field set.
The format is fixed so that two runs can be compared byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .messages import PACKET_KINDS, format_value, parse_fields


@dataclass(slots=True)
class Record:
    time: int
    seq: int
    kind: str
    fields: dict


def format_record(record: Record) -> str:
    parts = [f"time={record.time}", f"seq={record.seq}", f"kind={record.kind}"]
    parts.extend(f"{key}={format_value(value)}" for key, value in record.fields.items())
    return " ".join(parts)


def parse_record(line: str) -> Record:
    fields = parse_fields(line)
    time = int(fields.pop("time"))
    seq = int(fields.pop("seq"))
    kind = fields.pop("kind")
    return Record(time=time, seq=seq, kind=kind, fields=fields)


def dump_records(records: Iterable[Record]) -> str:
    return "".join(format_record(r) + "\n" for r in records)


def write_log(records: Iterable[Record], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_records(records))


def read_log(path) -> list[Record]:
    with open(path, "r", encoding="utf-8") as fh:
        return [parse_record(line) for line in fh if line.strip()]


def packet_records(records: Iterable[Record]) -> Iterator[Record]:
    """Only the packet delivery records (Drop/DiscardCrashed excluded)."""
    for record in records:
        if record.kind in PACKET_KINDS:
            yield record
