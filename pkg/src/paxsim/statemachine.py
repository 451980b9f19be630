"""Regex-labelled, repetition-counted state machine executed by every replica.

Each transition rule carries an output pattern (and optionally an input
pattern) plus a repetition threshold k: the rule must match k+1 times in a
row before the transition fires. A "*" threshold marks a self-loop that
never escalates. The application itself is modelled as a deterministic
payload -> output table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .messages import ClientRequest


class MachineError(ValueError):
    """Base class for state machine definition problems."""


class UnknownState(MachineError):
    pass


class BadRegex(MachineError):
    pass


class NoStartState(MachineError):
    pass


class StarNotSelfLoop(MachineError):
    pass


# Threshold value meaning "self-describe forever, never escalate".
STAR = None


@dataclass(frozen=True)
class TransitionRule:
    source: str
    target: str
    output_regex: str
    input_regex: str | None       # None matches any input
    threshold: int | None         # None is STAR
    # Compiled patterns, filled in by compile_machine; not part of identity.
    _output_pat: re.Pattern | None = field(compare=False, repr=False, default=None)
    _input_pat: re.Pattern | None = field(compare=False, repr=False, default=None)

    def matches(self, input_text: str, output_text: str) -> bool:
        if self._input_pat is not None and not self._input_pat.fullmatch(input_text):
            return False
        return self._output_pat.fullmatch(output_text) is not None


@dataclass(frozen=True)
class StateMachineDef:
    states: tuple[str, ...]
    start: str
    rules: tuple[TransitionRule, ...]

    def rules_from(self, state: str) -> list[tuple[int, TransitionRule]]:
        return [(i, r) for i, r in enumerate(self.rules) if r.source == state]


@dataclass(frozen=True, eq=False)
class RuntimeState:
    """Current state plus consecutive-match counters, keyed by rule index.

    Only non-zero counters are stored, so two replicas that walked the same
    trace compare equal.
    """

    current: str
    counters: dict[int, int] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, RuntimeState):
            return NotImplemented
        return self.current == other.current and self.counters == other.counters


@dataclass(frozen=True)
class AppModel:
    """Deterministic application: first fully-matching pattern wins, else default."""

    entries: tuple[tuple[str, str], ...]
    default_output: str
    _patterns: tuple[re.Pattern, ...] = field(compare=False, repr=False, default=())


def _compile_pattern(text: str, where: str) -> re.Pattern:
    try:
        return re.compile(text)
    except re.error as exc:
        raise BadRegex(f"{where}: cannot compile regex {text!r}: {exc}") from exc


def compile_machine(section: dict) -> StateMachineDef:
    """Validate a machine definition section and compile its patterns.

    Expected keys: states (list of names), start (name), rules (list of
    mappings with from/to/output_regex, optional input_regex, threshold as a
    non-negative integer or "*").
    """
    states = tuple(str(s) for s in section.get("states", ()))
    if not states:
        raise NoStartState("machine declares no states")
    declared = set(states)
    start = section.get("start")
    if start is None or str(start) not in declared:
        raise NoStartState(f"start state {start!r} is not a declared state")
    start = str(start)

    rules = []
    for idx, raw in enumerate(section.get("rules", ())):
        where = f"rules[{idx}]"
        source = str(raw.get("from"))
        target = str(raw.get("to"))
        if source not in declared:
            raise UnknownState(f"{where}.from: {source!r} is not a declared state")
        if target not in declared:
            raise UnknownState(f"{where}.to: {target!r} is not a declared state")
        threshold = raw.get("threshold", 0)
        if threshold == "*":
            threshold = STAR
        elif not isinstance(threshold, int) or threshold < 0:
            raise MachineError(f"{where}.threshold: expected non-negative integer or '*', got {threshold!r}")
        if threshold is STAR and target != source:
            raise StarNotSelfLoop(f"{where}: '*' threshold requires to == from, got {source!r} -> {target!r}")
        output_regex = str(raw.get("output_regex", ""))
        input_regex = raw.get("input_regex")
        rule = TransitionRule(
            source=source,
            target=target,
            output_regex=output_regex,
            input_regex=None if input_regex is None else str(input_regex),
            threshold=threshold,
            _output_pat=_compile_pattern(output_regex, f"{where}.output_regex"),
            _input_pat=_compile_pattern(str(input_regex), f"{where}.input_regex")
            if input_regex is not None else None,
        )
        rules.append(rule)

    return StateMachineDef(states=states, start=start, rules=tuple(rules))


def initial_state(definition: StateMachineDef) -> RuntimeState:
    return RuntimeState(current=definition.start, counters={})


def apply(definition: StateMachineDef, rs: RuntimeState, input_text: str, output_text: str) -> RuntimeState:
    """Step the machine for one (input, output) observation.

    The first declared rule out of the current state whose patterns fully
    match is the active rule. A threshold-k rule fires on its (k+1)-th
    consecutive match; any non-matching step resets every counter. A STAR
    rule leaves the state untouched.
    """
    active = None
    for idx, rule in definition.rules_from(rs.current):
        if rule.matches(input_text, output_text):
            active = (idx, rule)
            break

    if active is None:
        return RuntimeState(current=rs.current, counters={})

    idx, rule = active
    if rule.threshold is STAR:
        return rs
    count = rs.counters.get(idx, 0)
    if count < rule.threshold:
        return RuntimeState(current=rs.current, counters={idx: count + 1})
    return RuntimeState(current=rule.target, counters={})


def compile_app_model(section: dict) -> AppModel:
    """Build the application table: list of {request, output} plus default_output."""
    entries = []
    patterns = []
    for idx, raw in enumerate(section.get("outputs", ()) or ()):
        pattern = str(raw.get("request"))
        output = str(raw.get("output"))
        patterns.append(_compile_pattern(pattern, f"outputs[{idx}].request"))
        entries.append((pattern, output))
    return AppModel(
        entries=tuple(entries),
        default_output=str(section.get("default_output", "")),
        _patterns=tuple(patterns),
    )


def execute(model: AppModel, request: ClientRequest) -> str:
    """Deterministic application output for a request payload."""
    for pattern, (_, output) in zip(model._patterns, model.entries):
        if pattern.fullmatch(request.payload):
            return output
    return model.default_output
