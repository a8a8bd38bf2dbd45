"""User simulator: goal sampling, the agenda machine, and the noise channel."""

import math

import numpy as np
import pytest

from deadend_rl.core import ANYTHING, DialogueAct, ProtocolError, TICKET, UserGoal
from deadend_rl.user_sim import (NoiseModel, UserAgenda, respond, sample_goal,
                                 validate_goal)

NOISELESS = NoiseModel(0.0, {})


def make_agenda(constraints, requests, wants_booking=False):
    return UserAgenda(UserGoal.of(constraints, requests, wants_booking))


def test_sample_goal_is_deterministic(toy_table):
    g1 = sample_goal(toy_table, np.random.default_rng(42))
    g2 = sample_goal(toy_table, np.random.default_rng(42))
    assert g1 == g2


def test_sampled_goals_always_validate(movie_dataset):
    table, _ = movie_dataset
    rng = np.random.default_rng(5)
    for _ in range(1000):
        assert validate_goal(sample_goal(table, rng), table)


def test_sample_goal_needs_two_slots():
    from deadend_rl.kb import KbTable
    table = KbTable.of(["only"], [{"only": "x"}])
    with pytest.raises(ValueError):
        sample_goal(table, np.random.default_rng(0))


def test_request_for_constraint_slot_is_answered(rng):
    agenda = make_agenda({"genre": "action"}, ["city"])
    reply = respond(agenda, DialogueAct.of("request", {"genre": None}),
                    NOISELESS, rng)
    assert reply == DialogueAct.of("inform", {"genre": "action"})
    assert "genre" in agenda.disclosed


def test_request_for_other_slot_gets_dont_care(rng):
    agenda = make_agenda({"genre": "action"}, ["city"])
    reply = respond(agenda, DialogueAct.of("request", {"theater": None}),
                    NOISELESS, rng)
    assert reply == DialogueAct.of("inform", {"theater": ANYTHING})


def test_forced_corruption_picks_the_other_value():
    noise = NoiseModel(0.99, {"genre": ["action", "comedy"]})
    agenda = make_agenda({"genre": "action"}, ["city"])
    reply = respond(agenda, DialogueAct.of("request", {"genre": None}),
                    noise, np.random.default_rng(0))
    assert reply == DialogueAct.of("inform", {"genre": "comedy"})


def test_agenda_walks_requests_then_ticket_then_bye(rng):
    agenda = make_agenda({"genre": "action"}, ["city", "date"],
                         wants_booking=True)
    first = respond(agenda, DialogueAct.of("greet"), NOISELESS, rng)
    assert first == DialogueAct.of("request", {"city": None})
    nxt = respond(agenda, DialogueAct.of("inform", {"city": "LA"}),
                  NOISELESS, rng)
    assert nxt == DialogueAct.of("request", {"date": None})
    assert agenda.satisfied == {"city": "LA"}
    ticket = respond(agenda, DialogueAct.of("inform", {"date": "mon"}),
                     NOISELESS, rng)
    assert ticket == DialogueAct.of("request", {TICKET: None})
    closing = respond(agenda, DialogueAct.of("booking"), NOISELESS, rng)
    assert closing == DialogueAct.of("bye")
    assert agenda.booked and agenda.finished


def test_no_booking_wanted_goes_straight_to_bye(rng):
    agenda = make_agenda({"genre": "action"}, ["city"])
    respond(agenda, DialogueAct.of("greet"), NOISELESS, rng)
    closing = respond(agenda, DialogueAct.of("inform", {"city": "LA"}),
                      NOISELESS, rng)
    assert closing == DialogueAct.of("bye")
    assert agenda.finished


def test_premature_booking_gets_thanks_not_bye(rng):
    agenda = make_agenda({"genre": "action"}, ["city"])
    respond(agenda, DialogueAct.of("greet"), NOISELESS, rng)  # voices request
    reply = respond(agenda, DialogueAct.of("booking"), NOISELESS, rng)
    assert reply == DialogueAct.of("thanks")
    assert agenda.booked and not agenda.finished


def test_unsolicited_inform_is_ignored_but_agenda_moves(rng):
    agenda = make_agenda({"genre": "action"}, ["city"])
    reply = respond(agenda, DialogueAct.of("inform", {"theater": "t1"}),
                    NOISELESS, rng)
    assert reply == DialogueAct.of("request", {"city": None})
    assert agenda.satisfied == {}


def test_responding_after_bye_is_a_protocol_error(rng):
    agenda = make_agenda({"genre": "action"}, ["city"])
    respond(agenda, DialogueAct.of("bye"), NOISELESS, rng)
    with pytest.raises(ProtocolError):
        respond(agenda, DialogueAct.of("greet"), NOISELESS, rng)


def test_identical_seed_identical_response():
    noise = NoiseModel(0.5, {"genre": ["action", "comedy", "drama"]})
    replies = []
    for _ in range(2):
        agenda = make_agenda({"genre": "action"}, ["city"])
        replies.append(respond(agenda, DialogueAct.of("request", {"genre": None}),
                               noise, np.random.default_rng(123)))
    assert replies[0] == replies[1]


def test_corruption_frequency_matches_rate():
    rate = 0.1
    noise = NoiseModel(rate, {"genre": ["a", "b", "c"]})
    rng = np.random.default_rng(99)
    trials = 10000
    corrupted = sum(
        1 for _ in range(trials) if noise.corrupt("genre", "a", rng) != "a")
    bound = 3 * math.sqrt(rate * (1 - rate) / trials)
    assert abs(corrupted / trials - rate) < bound


def test_corruption_with_singleton_pool_is_identity(rng):
    noise = NoiseModel(0.9, {"genre": ["a"]})
    assert noise.corrupt("genre", "a", rng) == "a"
