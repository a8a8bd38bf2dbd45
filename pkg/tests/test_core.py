"""Acts, goals, catalogue, and config contracts."""

import pytest

from deadend_rl.core import (ActionCatalogue, COMMON_AGENT_INTENTS,
                             DialogueAct, ParseError, RunConfig, UserGoal,
                             canonicalize_act, goals_from_json, goals_to_json,
                             parse_act)
from deadend_rl.kb import TOY_TABLE
from deadend_rl.user_sim import validate_goal


def test_canonicalize_lowercases_and_strips_request_values():
    act = DialogueAct.of("request", {"Genre": "action"})
    out = canonicalize_act(act)
    assert out == DialogueAct.of("request", {"genre": None})


def test_canonicalize_is_idempotent():
    act = canonicalize_act(DialogueAct.of("inform", {"City": "LA", "Genre": "x"}))
    assert canonicalize_act(act) == act


def test_canonicalize_sorts_slot_names():
    act = DialogueAct("inform", (("city", "LA"), ("genre", "action")))
    scrambled = DialogueAct("inform", (("genre", "action"), ("city", "LA")))
    assert canonicalize_act(scrambled).to_json() == act.to_json()
    assert [k for k, _ in canonicalize_act(scrambled).slots] == ["city", "genre"]


def test_unknown_intent_rejected():
    with pytest.raises(ParseError, match="frobnicate"):
        parse_act({"intent": "frobnicate", "slots": {}})


def test_malformed_slot_map_rejected():
    with pytest.raises(ParseError):
        parse_act({"intent": "inform", "slots": {"genre": 42}})


def test_act_serialization_round_trips_over_catalogue():
    catalogue = ActionCatalogue(TOY_TABLE.schema)
    for act in catalogue.acts:
        assert parse_act(act.to_json()) == act


def test_catalogue_size_formula():
    catalogue = ActionCatalogue(TOY_TABLE.schema)
    slots = len(TOY_TABLE.schema)
    assert len(catalogue) == slots + slots + 1 + len(COMMON_AGENT_INTENTS)


def test_catalogue_ids_are_stable_and_invertible():
    catalogue = ActionCatalogue(TOY_TABLE.schema)
    for i, act in enumerate(catalogue.acts):
        assert catalogue.id_of(act) == i
    # realized informs map back onto their template id
    concrete = DialogueAct.of("inform", {"city": "LA"})
    assert catalogue.act(catalogue.id_of(concrete)) == DialogueAct.of(
        "inform", {"city": None})


def test_goal_requires_disjoint_nonempty_slot_sets():
    with pytest.raises(ParseError):
        UserGoal.of({}, ["city"])
    with pytest.raises(ParseError):
        UserGoal.of({"genre": "action"}, [])
    with pytest.raises(ParseError):
        UserGoal.of({"genre": "action"}, ["genre"])


def test_validate_goal_examples():
    good = UserGoal.of({"genre": "action"}, ["city"])
    assert validate_goal(good, TOY_TABLE)
    no_match = UserGoal.of({"genre": "horror"}, ["city"])
    assert not validate_goal(no_match, TOY_TABLE)


def test_goal_json_round_trip():
    goals = [UserGoal.of({"genre": "action"}, ["city"], wants_booking=True)]
    assert goals_from_json(goals_to_json(goals)) == goals


def test_config_defaults_follow_protocol():
    config = RunConfig()
    assert config.max_turns == 30
    assert config.discount == 0.95
    assert (config.epsilon_start, config.epsilon_end) == (0.1, 0.01)
    assert config.buffer_capacity == 10000
    assert config.batch_size == 16
    assert config.learning_rate == 0.001
    assert config.warm_start_epochs == 120
    assert config.max_recoveries == 3
    assert config.hidden_dim == 80
    assert config.warning_penalty == -30.0


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        RunConfig(slot_error_rate=1.0)
    with pytest.raises(ValueError):
        RunConfig(dqn_variant="categorical")
    with pytest.raises(ValueError):
        RunConfig(rescue_mode="magic")


def test_config_replace_keeps_other_fields():
    config = RunConfig(seed=4).replace(rescue_mode="ig")
    assert config.seed == 4
    assert config.rescue_mode == "ig"
