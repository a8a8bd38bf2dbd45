"""Shared dialogue vocabulary: acts, goals, experiences, and run configuration.

Every other module builds on the types here. Acts and goals are immutable
values; they can be shared freely across parallel runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Iterable, Mapping

import numpy as np

# Closed intent vocabulary. Unknown intents are rejected at parse time.
INTENTS = (
    "request",
    "inform",
    "booking",
    "bye",
    "greet",
    "deny",
    "confirm",
    "thanks",
    "not_sure",
)

# Non-task intents the agent may emit (the "common" acts of the catalogue).
COMMON_AGENT_INTENTS = ("bye", "greet", "thanks")

# Sentinel slot values.
ANYTHING = "anything"  # user don't-care answer; never constrains the KB
UNKNOWN = "unknown"  # missing attribute in a KB row
NO_MATCH = "no_match"  # agent inform when no KB row matches
TICKET = "ticket"  # pseudo-slot the user requests to trigger booking

KINDS = ("original", "rescue", "warning")


class DialogueError(Exception):
    """Base class for dialogue-level errors."""


class ParseError(DialogueError):
    """Malformed act or goal payload."""


class SchemaError(DialogueError):
    """Slot name not present in the table schema."""


class ProtocolError(DialogueError):
    """Operation called in an invalid episode state."""


@dataclass(frozen=True)
class DialogueAct:
    """One dialogue act: an intent plus an ordered slot->value payload.

    Request acts carry slot names with ``None`` values. Inform acts carry
    values; an inform with ``None`` is a template whose value gets filled
    from the KB when the environment executes it.
    """

    intent: str
    slots: tuple[tuple[str, str | None], ...] = ()

    @classmethod
    def of(cls, intent: str, slots: Mapping[str, str | None] | None = None) -> "DialogueAct":
        return cls(intent, tuple((slots or {}).items()))

    @property
    def slot_dict(self) -> dict[str, str | None]:
        return dict(self.slots)

    @property
    def first_slot(self) -> str | None:
        return self.slots[0][0] if self.slots else None

    def to_json(self) -> dict:
        return {"intent": self.intent, "slots": {k: v for k, v in self.slots}}

    def __str__(self) -> str:
        inner = ", ".join(k if v is None else f"{k}={v}" for k, v in self.slots)
        return f"{self.intent}({inner})"


def parse_act(payload: Mapping) -> DialogueAct:
    """Parse ``{"intent": str, "slots": {name: value-or-null}}`` into an act."""
    try:
        intent = payload["intent"]
        slots = payload.get("slots", {})
    except (TypeError, KeyError) as exc:
        raise ParseError(f"act payload missing field: {exc}") from None
    if intent not in INTENTS:
        raise ParseError(f"unknown intent {intent!r}")
    if not isinstance(slots, Mapping):
        raise ParseError(f"malformed slot map {slots!r}")
    pairs = []
    for name, value in slots.items():
        if not isinstance(name, str) or not (value is None or isinstance(value, str)):
            raise ParseError(f"malformed slot entry {name!r}: {value!r}")
        pairs.append((name, value))
    return canonicalize_act(DialogueAct(intent, tuple(pairs)))


def canonicalize_act(act: DialogueAct) -> DialogueAct:
    """Normalize an act: lowercase sorted slot names, no values on requests.

    Idempotent; raises :class:`ParseError` on an unknown intent.
    """
    if act.intent not in INTENTS:
        raise ParseError(f"unknown intent {act.intent!r}")
    pairs = sorted((name.lower(), value) for name, value in act.slots)
    if act.intent == "request":
        pairs = [(name, None) for name, _ in pairs]
    return DialogueAct(act.intent, tuple(pairs))


@dataclass(frozen=True)
class UserGoal:
    """What the simulated user wants: constraints to state, slots to ask for."""

    constraints: tuple[tuple[str, str], ...]
    requests: tuple[str, ...]
    wants_booking: bool = False

    def __post_init__(self):
        if not self.constraints or not self.requests:
            raise ParseError("goal needs at least one constraint and one request")
        overlap = {k for k, _ in self.constraints} & set(self.requests)
        if overlap:
            raise ParseError(f"constraint/request slot overlap: {sorted(overlap)}")

    @classmethod
    def of(cls, constraints: Mapping[str, str], requests: Iterable[str],
           wants_booking: bool = False) -> "UserGoal":
        return cls(tuple(constraints.items()), tuple(requests), wants_booking)

    @property
    def constraint_dict(self) -> dict[str, str]:
        return dict(self.constraints)

    def to_json(self) -> dict:
        return {
            "constraints": dict(self.constraints),
            "requests": list(self.requests),
            "wants_booking": self.wants_booking,
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "UserGoal":
        try:
            return cls.of(payload["constraints"], payload["requests"],
                          bool(payload.get("wants_booking", False)))
        except (TypeError, KeyError) as exc:
            raise ParseError(f"goal payload missing field: {exc}") from None


def goals_to_json(goals: Iterable[UserGoal]) -> str:
    return json.dumps([g.to_json() for g in goals], indent=2)


def goals_from_json(text: str) -> list[UserGoal]:
    return [UserGoal.from_json(item) for item in json.loads(text)]


@dataclass
class Experience:
    """One replay-buffer transition, tagged by how it was produced."""

    state_vec: np.ndarray
    action_id: int
    next_state_vec: np.ndarray
    reward: float
    done: bool
    kind: str = "original"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experience kind {self.kind!r}")


class ActionCatalogue:
    """The finite system action space derived mechanically from a slot schema.

    One request and one inform per slot, a booking act, and the common acts.
    Action ids are stable for a given schema.
    """

    def __init__(self, schema: Iterable[str]):
        schema = tuple(schema)
        acts = [DialogueAct.of("request", {s: None}) for s in schema]
        acts += [DialogueAct.of("inform", {s: None}) for s in schema]
        acts.append(DialogueAct.of("booking"))
        acts += [DialogueAct.of(intent) for intent in COMMON_AGENT_INTENTS]
        self.schema = schema
        self.acts = tuple(acts)
        self._index = {(a.intent, a.first_slot): i for i, a in enumerate(acts)}

    def __len__(self) -> int:
        return len(self.acts)

    def act(self, action_id: int) -> DialogueAct:
        return self.acts[action_id]

    def id_of(self, act: DialogueAct) -> int:
        """Map any concrete or template act onto its catalogue id.

        Informs are keyed by intent and slot name; the value is ignored so
        realized acts land on their template's id.
        """
        key = (act.intent, act.first_slot if act.intent in ("request", "inform") else None)
        try:
            return self._index[key]
        except KeyError:
            raise SchemaError(f"act {act} is not in the catalogue") from None


def default_warning_penalty(max_turns: int) -> float:
    # A dead-end guarantees eventual failure, so the warning penalty defaults
    # to the failure-level reward.
    return -float(max_turns)


@dataclass
class RunConfig:
    """Hyperparameters and switches for one training run."""

    max_turns: int = 30
    discount: float = 0.95
    epsilon_start: float = 0.1
    epsilon_end: float = 0.01
    buffer_capacity: int = 10000
    batch_size: int = 16
    learning_rate: float = 0.001
    warm_start_epochs: int = 120
    dialogues_per_epoch: int = 100
    max_recoveries: int = 3
    warning_penalty: float | None = None
    slot_error_rate: float = 0.0
    dqn_variant: str = "vanilla"  # vanilla | double | dueling
    rescue_mode: str = "none"  # none | ig | se
    seed: int = 0
    # Knobs beyond the headline hyperparameters.
    hidden_dim: int = 80
    train_epochs: int = 200
    eval_every: int = 10
    eval_episodes: int = 100
    target_sync_every: int = 1
    # Alternative cadence: if set, run one batch update every N collected
    # experiences instead of a full buffer sweep per epoch.
    update_every_experiences: int | None = None

    def __post_init__(self):
        if self.warning_penalty is None:
            self.warning_penalty = default_warning_penalty(self.max_turns)
        if not 0.0 <= self.slot_error_rate < 1.0:
            raise ValueError("slot_error_rate must lie in [0, 1)")
        if self.dqn_variant not in ("vanilla", "double", "dueling"):
            raise ValueError(f"unknown dqn_variant {self.dqn_variant!r}")
        if self.rescue_mode not in ("none", "ig", "se"):
            raise ValueError(f"unknown rescue_mode {self.rescue_mode!r}")
        if self.max_turns < 1 or self.buffer_capacity < 1 or self.batch_size < 1:
            raise ValueError("max_turns, buffer_capacity, batch_size must be positive")

    def replace(self, **kwargs) -> "RunConfig":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(kwargs)
        return RunConfig(**current)

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
