"""Dialogue environment: state tracking, reward, termination, and rollback.

One turn is one system-user exchange. The tracker merges concrete slot
values from both user informs and agent informs into the KB query (first
writer wins), so the match count n is non-increasing within an episode and a
premature or contradicted inform can drive it to zero; that collapse is the
dead-end signal. Snapshots capture state, agenda, and the user-channel rng
so a rescue can roll a transition back and replay deterministically.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import (ANYTHING, INTENTS, NO_MATCH, TICKET, ActionCatalogue,
                   DialogueAct, ProtocolError, RunConfig, SchemaError, UserGoal)
from .kb import KbTable, match_count, match_entries
from .user_sim import NoiseModel, UserAgenda, respond, validate_goal

log = logging.getLogger(__name__)


@dataclass
class Outcome:
    status: str = "ongoing"  # ongoing | success | failure
    reason: str = "none"  # none | goal_met | max_turns | user_bye_unmet | no_match

    @property
    def terminal(self) -> bool:
        return self.status != "ongoing"


@dataclass
class EnvState:
    """Tracked dialogue state plus bookkeeping for success judgment."""

    turn: int = 0
    constraints_so_far: dict = dc_field(default_factory=dict)
    user_informed_slots: set = dc_field(default_factory=set)
    user_requests_seen: set = dc_field(default_factory=set)
    last_user_act: DialogueAct | None = None
    last_system_act: DialogueAct | None = None
    current_n: int = 0
    informed_by_agent: dict = dc_field(default_factory=dict)
    booked: bool = False
    booked_row: int | None = None

    def query_constraints(self) -> dict[str, str]:
        """Constraints as used against the KB; don't-care answers drop out."""
        return {k: v for k, v in self.constraints_so_far.items() if v != ANYTHING}


@dataclass(frozen=True)
class EnvSnapshot:
    """Opaque rollback point: state, user agenda, and user-channel rng."""

    schema: tuple[str, ...]
    state: EnvState
    agenda: UserAgenda
    rng_state: dict
    outcome: Outcome


def compute_reward(outcome: Outcome, config: RunConfig) -> float:
    """Outcome-level reward: 2L on success, -L on failure, -1 otherwise."""
    if outcome.status == "success":
        return 2.0 * config.max_turns
    if outcome.status == "failure":
        return -float(config.max_turns)
    return -1.0


def judge_success(state: EnvState, goal: UserGoal, table: KbTable) -> bool:
    """Did the agent answer every request from one goal-consistent row, and
    book exactly when the user wanted a booking?"""
    if state.booked != goal.wants_booking:
        return False
    if any(slot not in state.informed_by_agent for slot in goal.requests):
        return False
    candidates = match_entries(table, goal.constraint_dict)
    if goal.wants_booking:
        candidates = [i for i in candidates if i == state.booked_row]
    for i in candidates:
        row = table.row(i)
        if all(state.informed_by_agent[slot] == row[slot] for slot in goal.requests):
            return True
    return False


def feature_length(schema_size: int, catalogue_size: int) -> int:
    """Documented featurization width: intent one-hot, informed bag,
    requested bag (+ticket), agent action one-hot, 6 n-bins, turn scalar."""
    return len(INTENTS) + schema_size + (schema_size + 1) + catalogue_size + 6 + 1


def featurize(state: EnvState, catalogue: ActionCatalogue,
              max_turns: int = 30) -> np.ndarray:
    schema = catalogue.schema
    vec = np.zeros(feature_length(len(schema), len(catalogue)))
    offset = 0
    if state.last_user_act is not None:
        vec[offset + INTENTS.index(state.last_user_act.intent)] = 1.0
    offset += len(INTENTS)
    for i, slot in enumerate(schema):
        if slot in state.user_informed_slots:
            vec[offset + i] = 1.0
    offset += len(schema)
    for i, slot in enumerate(schema):
        if slot in state.user_requests_seen:
            vec[offset + i] = 1.0
    if TICKET in state.user_requests_seen:
        vec[offset + len(schema)] = 1.0
    offset += len(schema) + 1
    if state.last_system_act is not None:
        vec[offset + catalogue.id_of(state.last_system_act)] = 1.0
    offset += len(catalogue)
    vec[offset + min(state.current_n, 5)] = 1.0
    offset += 6
    vec[offset] = state.turn / max_turns
    return vec


class DialogueEnv:
    """One environment per episode stream; single-threaded mutation."""

    def __init__(self, table: KbTable, config: RunConfig,
                 noise: NoiseModel | None = None):
        self.table = table
        self.config = config
        self.noise = noise if noise is not None else NoiseModel.for_table(
            table, config.slot_error_rate)
        self.catalogue = ActionCatalogue(table.schema)
        self.state: EnvState | None = None
        self.agenda: UserAgenda | None = None
        self.goal: UserGoal | None = None
        self.outcome = Outcome()
        self._rng = np.random.default_rng(0)

    def reset(self, goal: UserGoal, seed: int) -> EnvState:
        if not validate_goal(goal, self.table):
            raise ValueError(f"goal {goal.to_json()} is not satisfiable on this table")
        self.goal = goal
        self.agenda = UserAgenda(goal)
        self._rng = np.random.default_rng(seed)
        opening = self.agenda.opening_act()
        self.state = EnvState(last_user_act=opening, current_n=len(self.table))
        self.outcome = Outcome()
        return self.state

    def realize(self, act: DialogueAct) -> DialogueAct:
        """Fill an inform template's value from the first matching row."""
        if act.intent != "inform" or not act.slots:
            return act
        slot, value = act.slots[0]
        if value is not None:
            return act
        rows = match_entries(self.table, self.state.query_constraints())
        filled = self.table.row(rows[0])[slot] if rows else NO_MATCH
        return DialogueAct.of("inform", {slot: filled})

    def step(self, system_act: DialogueAct) -> tuple[EnvState, float, Outcome]:
        if self.state is None:
            raise ProtocolError("reset the environment before stepping")
        if self.outcome.terminal:
            raise ProtocolError("episode already ended; reset to continue")
        state = self.state
        act = self.realize(system_act)

        if act.intent == "inform" and act.slots:
            slot, value = act.slots[0]
            state.informed_by_agent[slot] = value
            if value != NO_MATCH:
                state.constraints_so_far.setdefault(slot, value)
        elif act.intent == "booking":
            state.booked = True
            rows = match_entries(self.table, state.query_constraints())
            state.booked_row = rows[0] if rows else None
        elif act.intent == "request" and act.first_slot in state.constraints_so_far:
            # The first answer stays authoritative; re-asks change nothing.
            log.debug("repeat request for already-answered slot %r", act.first_slot)

        user_act = respond(self.agenda, act, self.noise, self._rng)

        if user_act.intent == "inform":
            slot, value = user_act.slots[0]
            state.user_informed_slots.add(slot)
            state.constraints_so_far.setdefault(slot, value)
        elif user_act.intent == "request":
            state.user_requests_seen.add(user_act.first_slot)

        state.last_system_act = act
        state.last_user_act = user_act
        state.current_n = match_count(self.table, state.query_constraints())
        state.turn += 1

        if user_act.intent == "bye":
            if judge_success(state, self.goal, self.table):
                self.outcome = Outcome("success", "goal_met")
            elif state.current_n == 0:
                self.outcome = Outcome("failure", "no_match")
            else:
                self.outcome = Outcome("failure", "user_bye_unmet")
        elif state.turn >= self.config.max_turns:
            if judge_success(state, self.goal, self.table):
                self.outcome = Outcome("success", "goal_met")
            else:
                self.outcome = Outcome("failure", "max_turns")

        reward = -1.0
        if self.outcome.terminal:
            reward += compute_reward(self.outcome, self.config)
        return state, reward, self.outcome

    def snapshot(self) -> EnvSnapshot:
        return EnvSnapshot(
            schema=self.table.schema,
            state=copy.deepcopy(self.state),
            agenda=copy.deepcopy(self.agenda),
            rng_state=copy.deepcopy(self._rng.bit_generator.state),
            outcome=copy.deepcopy(self.outcome),
        )

    def restore(self, snap: EnvSnapshot) -> EnvState:
        if snap.schema != self.table.schema:
            raise SchemaError("snapshot was taken on a different schema")
        self.state = copy.deepcopy(snap.state)
        self.agenda = copy.deepcopy(snap.agenda)
        self.outcome = copy.deepcopy(snap.outcome)
        self._rng = np.random.default_rng(0)
        self._rng.bit_generator.state = copy.deepcopy(snap.rng_state)
        return self.state

    def featurize(self) -> np.ndarray:
        return featurize(self.state, self.catalogue, self.config.max_turns)
