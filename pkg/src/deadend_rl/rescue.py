"""Dead-end detection, rescue guidance, and experience augmentation.

A dialogue is in a dead-end once no database entry matches the gathered
constraints; from there every continuation fails. The episode controller
here watches the match count, and when it collapses from positive to zero it
rolls the environment back to the pre-action snapshot and substitutes a
corrective action: either the explicit maximum-information-gain act (ig
mode) or a masked re-selection by the policy itself (se mode). Each recovery
also augments the replay stream with a rescue experience and a penalized
warning experience so the policy stops repeating the mistake.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (ANYTHING, DialogueAct, Experience, RunConfig, TICKET,
                   UserGoal)
from .env import DialogueEnv, EnvSnapshot, EnvState, Outcome
from .kb import EmptyMatchError, KbTable, best_request_slot, match_entries
from .policy import QNetwork, RescueExhausted, select_action


def detect_dead_end(prev_n: int, new_n: int) -> bool:
    """True only for the initial collapse: matches available, then none."""
    return prev_n > 0 and new_n == 0


@dataclass
class DeadEndEvent:
    """One detected collapse and the recovery attempt that answered it."""

    episode_id: int
    turn: int
    snapshot: EnvSnapshot
    offending_action_id: int
    recovery_index: int

    def to_json(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "turn": self.turn,
            "offending_action_id": self.offending_action_id,
            "recovery_index": self.recovery_index,
        }


@dataclass
class RescueResult:
    """The substitute transition produced from the restored snapshot."""

    action_id: int
    post_state_vec: np.ndarray
    reward: float
    done: bool
    mode: str  # ig | se


def ig_rescue_action(table: KbTable, state: EnvState,
                     exclude_slots: set[str] | frozenset[str] = frozenset()
                     ) -> DialogueAct:
    """Explicit corrective act chosen from the database.

    With several entries still matching, ask the unconstrained slot with the
    highest information gain; with a single match, answer the user's pending
    request or book; otherwise mirror the common acts. ``exclude_slots``
    removes requests already shown to collapse the match count.
    """
    n = state.current_n
    if n < 1:
        raise EmptyMatchError("rescue must start from a restored state with n >= 1")
    if n > 1:
        asked_dont_care = {
            slot for slot, value in state.constraints_so_far.items()
            if value == ANYTHING
        }
        slot = best_request_slot(table, state.query_constraints(),
                                 exclude=asked_dont_care | set(exclude_slots))
        if slot is not None:
            return DialogueAct.of("request", {slot: None})

    last = state.last_user_act
    if last is not None and last.intent == "request":
        if last.first_slot == TICKET:
            return DialogueAct.of("booking")
        rows = match_entries(table, state.query_constraints())
        value = table.row(rows[0])[last.first_slot]
        return DialogueAct.of("inform", {last.first_slot: value})
    if last is not None and last.intent in ("bye", "thanks"):
        return DialogueAct.of("bye")
    return DialogueAct.of("greet")


def se_rescue_action(net: QNetwork, state_vec: np.ndarray, forbidden: set[int],
                     epsilon: float, rng: np.random.Generator) -> int:
    """Re-run action selection with the dead-end-causing actions masked out."""
    return select_action(net, state_vec, epsilon, forbidden, rng)


def augment_experiences(original: Experience, rescue: RescueResult,
                        warning_penalty: float) -> list[Experience]:
    """The rescue and warning experiences for one detected dead-end."""
    if rescue.action_id == original.action_id:
        raise ValueError("rescue action must differ from the offending action")
    rescue_exp = Experience(original.state_vec, rescue.action_id,
                            rescue.post_state_vec, rescue.reward,
                            rescue.done, kind="rescue")
    warning_exp = Experience(original.state_vec, original.action_id,
                             original.next_state_vec,
                             original.reward + warning_penalty,
                             original.done, kind="warning")
    return [rescue_exp, warning_exp]


@dataclass
class EpisodeLog:
    """Final trajectory of one episode plus its dead-end events."""

    episode_id: int = 0
    seed: int = 0
    initial_n: int = 0
    rows: list[dict] = field(default_factory=list)
    events: list[DeadEndEvent] = field(default_factory=list)
    status: str = "ongoing"
    reason: str = "none"
    episode_return: float = 0.0
    length: int = 0

    @property
    def success(self) -> bool:
        return self.status == "success"

    @property
    def reached_zero(self) -> bool:
        return any(row["n"] == 0 for row in self.rows)

    def to_json_lines(self) -> str:
        import json

        lines = [json.dumps({"episode_id": self.episode_id, "seed": self.seed,
                             "initial_n": self.initial_n})]
        lines += [json.dumps(row) for row in self.rows]
        lines += [json.dumps({"dead_end_event": e.to_json()}) for e in self.events]
        lines.append(json.dumps({"status": self.status, "reason": self.reason,
                                 "return": self.episode_return,
                                 "length": self.length}))
        return "\n".join(lines) + "\n"


def episode_with_ddr(env: DialogueEnv, net: QNetwork | None, config: RunConfig,
                     explore_rng: np.random.Generator, goal: UserGoal,
                     episode_seed: int, epsilon: float,
                     actor=None, rescue_mode: str | None = None,
                     episode_id: int = 0
                     ) -> tuple[EpisodeLog, list[Experience], Outcome]:
    """Run one episode, rescuing detected dead-ends within the recovery budget.

    ``actor`` overrides the epsilon-greedy policy with a rule callable
    ``(table, state) -> DialogueAct`` (used for warm start). With
    ``rescue_mode="none"`` the loop is exactly plain collection: no
    snapshots, no extra rng draws, only original experiences.
    """
    mode = config.rescue_mode if rescue_mode is None else rescue_mode
    catalogue = env.catalogue
    state = env.reset(goal, episode_seed)
    log = EpisodeLog(episode_id=episode_id, seed=episode_seed,
                     initial_n=state.current_n)
    experiences: list[Experience] = []
    outcome = env.outcome
    recoveries = 0

    while not outcome.terminal:
        snap = env.snapshot() if mode != "none" else None
        state_vec = env.featurize()
        if actor is not None:
            act = actor(env.table, state)
            action_id = catalogue.id_of(act)
        else:
            action_id = select_action(net, state_vec, epsilon, set(), explore_rng)
            act = catalogue.act(action_id)

        prev_n = state.current_n
        state, reward, outcome = env.step(act)
        next_vec = env.featurize()
        kind = "original"

        if (mode != "none" and detect_dead_end(prev_n, state.current_n)
                and recoveries < config.max_recoveries):
            offender = Experience(state_vec, action_id, next_vec, reward,
                                  outcome.terminal, kind="original")
            forbidden = {action_id}
            rescued = False
            while recoveries < config.max_recoveries:
                if mode == "ig":
                    exclude = {catalogue.act(a).first_slot for a in forbidden
                               if catalogue.act(a).intent == "request"}
                    rescue_act = ig_rescue_action(env.table, snap.state,
                                                  exclude_slots=exclude)
                    rescue_id = catalogue.id_of(rescue_act)
                else:
                    try:
                        rescue_id = se_rescue_action(net, state_vec, forbidden,
                                                     epsilon, explore_rng)
                    except RescueExhausted:
                        break
                    rescue_act = catalogue.act(rescue_id)
                rescued = True

                env.restore(snap)
                recoveries += 1
                state, reward, outcome = env.step(env.realize(rescue_act))
                next_vec = env.featurize()
                kind = "rescue"
                log.events.append(DeadEndEvent(
                    episode_id=episode_id, turn=snap.state.turn, snapshot=snap,
                    offending_action_id=offender.action_id,
                    recovery_index=recoveries))
                result = RescueResult(rescue_id, next_vec, reward,
                                      outcome.terminal, mode)
                experiences.extend(
                    augment_experiences(offender, result, config.warning_penalty))
                act = env.state.last_system_act
                if (detect_dead_end(snap.state.current_n, state.current_n)
                        and recoveries < config.max_recoveries):
                    # The rescue collapsed the matches too; spend another
                    # recovery with this action also ruled out.
                    forbidden.add(rescue_id)
                    offender = Experience(state_vec, rescue_id, next_vec,
                                          reward, outcome.terminal,
                                          kind="original")
                    continue
                break
            if not rescued:
                # No substitute was available; keep the original transition.
                experiences.append(offender)
                kind = "original"
        else:
            experiences.append(Experience(state_vec, action_id, next_vec,
                                          reward, outcome.terminal,
                                          kind="original"))

        log.rows.append({
            "turn": state.turn,
            "system_act": act.to_json(),
            "user_act": state.last_user_act.to_json(),
            "n": state.current_n,
            "reward": reward,
            "kind": kind,
        })
        log.episode_return += reward
        log.length = state.turn

    log.status = outcome.status
    log.reason = outcome.reason
    return log, experiences, outcome
