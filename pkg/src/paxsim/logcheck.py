"""Log-scanning verifier for proposal-number discipline.

Checks, from an event log alone, that every proposer's rounds strictly
increase across its Propose/Repropose records and that every re-proposal
exceeds every round that proposer had observed beforehand (its own prior
proposals plus the n and last-served values of promises delivered to it).
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable

from .eventlog import Record
from .messages import ProposalNumber


def check_proposal_numbers(records: Iterable[Record]) -> list[str]:
    """Return a list of violations; empty means the log is clean."""
    problems: list[str] = []
    last_round: dict[int, int] = {}
    observed: dict[int, set[int]] = defaultdict(set)

    for record in records:
        if record.kind in ("Propose", "Repropose"):
            proposer = int(record.fields["from"])
            round_ = ProposalNumber.parse(str(record.fields["n"])).round
            if proposer in last_round and round_ <= last_round[proposer]:
                problems.append(
                    f"t={record.time}: proposer {proposer} round {round_} "
                    f"does not exceed its previous round {last_round[proposer]}")
            if record.kind == "Repropose" and observed[proposer]:
                ceiling = max(observed[proposer])
                if round_ <= ceiling:
                    problems.append(
                        f"t={record.time}: re-proposal round {round_} by proposer "
                        f"{proposer} does not exceed observed round {ceiling}")
            last_round[proposer] = round_
            observed[proposer].add(round_)
        elif record.kind == "Promise":
            to = int(record.fields["to"])
            observed[to].add(ProposalNumber.parse(str(record.fields["n"])).round)
            if "last" in record.fields:
                observed[to].add(ProposalNumber.parse(str(record.fields["last"])).round)
    return problems
