"""Agenda-based user simulator with goal sampling and a slot-error channel.

The user discloses constraints only when asked (pure pull model), voices its
requests one at a time, and asks for a booking once every request has been
answered. Noise corrupts informed values into a different in-domain value,
which is what creates contradictory constraints downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ANYTHING, TICKET, UNKNOWN, DialogueAct, ProtocolError, UserGoal
from .kb import KbTable, match_count


@dataclass
class NoiseModel:
    """Per-slot value corruption at a fixed error rate."""

    slot_error_rate: float
    value_pool: dict[str, list[str]]

    def __post_init__(self):
        if not 0.0 <= self.slot_error_rate < 1.0:
            raise ValueError("slot_error_rate must lie in [0, 1)")

    @classmethod
    def for_table(cls, table: KbTable, slot_error_rate: float) -> "NoiseModel":
        return cls(slot_error_rate, {s: table.values_of(s) for s in table.schema})

    def corrupt(self, slot: str, value: str, rng: np.random.Generator) -> str:
        """Return the value the agent hears, possibly substituted."""
        if self.slot_error_rate <= 0.0:
            return value
        if rng.random() >= self.slot_error_rate:
            return value
        alternatives = [v for v in self.value_pool.get(slot, []) if v != value]
        if not alternatives:
            return value
        return alternatives[int(rng.integers(len(alternatives)))]


def sample_goal(table: KbTable, rng: np.random.Generator,
                booking_prob: float = 0.5) -> UserGoal:
    """Draw a satisfiable goal by sampling constraints off an existing row."""
    if len(table.schema) < 2:
        raise ValueError("goal sampling needs a schema with at least 2 slots")
    row = table.row(int(rng.integers(len(table))))
    concrete = [s for s in table.schema if row[s] != UNKNOWN]
    if not concrete:
        raise ValueError("sampled row has no concrete values to constrain on")
    max_constraints = min(len(concrete), len(table.schema) - 1)
    n_constraints = int(rng.integers(1, max_constraints + 1))
    constraint_slots = sorted(
        rng.choice(len(concrete), size=n_constraints, replace=False).tolist()
    )
    constraints = {concrete[i]: row[concrete[i]] for i in constraint_slots}
    remaining = [s for s in table.schema if s not in constraints]
    n_requests = int(rng.integers(1, len(remaining) + 1))
    request_ids = sorted(rng.choice(len(remaining), size=n_requests, replace=False).tolist())
    requests = [remaining[i] for i in request_ids]
    wants_booking = bool(rng.random() < booking_prob)
    return UserGoal.of(constraints, requests, wants_booking)


def validate_goal(goal: UserGoal, table: KbTable) -> bool:
    """True iff the goal is satisfiable and its slot sets are disjoint."""
    constraint_slots = {k for k, _ in goal.constraints}
    for slot in constraint_slots | set(goal.requests):
        if slot not in table.schema:
            table._column(slot)  # raises SchemaError
    if constraint_slots & set(goal.requests):
        return False
    return match_count(table, goal.constraint_dict) >= 1


@dataclass
class UserAgenda:
    """Per-episode user state machine."""

    goal: UserGoal
    pending_requests: list[str] = field(default_factory=list)
    disclosed: set[str] = field(default_factory=set)
    satisfied: dict[str, str] = field(default_factory=dict)
    booked: bool = False
    finished: bool = False

    def __post_init__(self):
        if not self.pending_requests:
            self.pending_requests = list(self.goal.requests)

    def opening_act(self) -> DialogueAct:
        return DialogueAct.of("greet")

    def _initiative(self) -> DialogueAct:
        """What the user pushes for when not directly answering a question."""
        if self.pending_requests:
            return DialogueAct.of("request", {self.pending_requests[0]: None})
        if self.goal.wants_booking and not self.booked:
            return DialogueAct.of("request", {TICKET: None})
        self.finished = True
        return DialogueAct.of("bye")


def respond(agenda: UserAgenda, system_act: DialogueAct, noise: NoiseModel,
            rng: np.random.Generator) -> DialogueAct:
    """The user's reply to one system act. Mutates the agenda."""
    if agenda.finished:
        raise ProtocolError("user already said bye; reset the episode")
    goal = agenda.goal
    intent = system_act.intent

    if intent == "request":
        slot = system_act.first_slot
        constraints = goal.constraint_dict
        if slot in constraints:
            agenda.disclosed.add(slot)
            heard = noise.corrupt(slot, constraints[slot], rng)
            return DialogueAct.of("inform", {slot: heard})
        return DialogueAct.of("inform", {slot: ANYTHING})

    if intent == "inform":
        for slot, value in system_act.slots:
            if slot in goal.requests and value is not None:
                agenda.satisfied[slot] = value
                if slot in agenda.pending_requests:
                    agenda.pending_requests.remove(slot)
        return agenda._initiative()

    if intent == "booking":
        agenda.booked = True
        if agenda.pending_requests:
            # Booked too early; acknowledge but keep needing answers.
            return DialogueAct.of("thanks")
        agenda.finished = True
        return DialogueAct.of("bye")

    if intent == "bye":
        agenda.finished = True
        return DialogueAct.of("bye")

    # greet / thanks / confirm / deny / not_sure: the user pushes its agenda.
    return agenda._initiative()
