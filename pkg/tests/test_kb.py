"""Database operations against hand-enumerated and brute-force oracles."""

import math

import numpy as np
import pytest

from deadend_rl.core import SchemaError, UNKNOWN
from deadend_rl.kb import (EmptyMatchError, KbTable, best_request_slot,
                           entropy, information_gain, match_count,
                           match_entries, value_distribution)


# --- independent oracle: explicit partition entropies over dict rows -------

def brute_matches(rows, constraints):
    out = []
    for i, row in enumerate(rows):
        if all(v != UNKNOWN and row[s] == v for s, v in constraints.items()):
            out.append(i)
    return out


def entropy_of_uniform(k):
    return -sum((1.0 / k) * math.log2(1.0 / k) for _ in range(k))


def brute_ig(rows, constraints, slot):
    matched = brute_matches(rows, constraints)
    groups = {}
    for i in matched:
        groups.setdefault(rows[i][slot], []).append(i)
    n = len(matched)
    conditional = sum(
        (len(g) / n) * entropy_of_uniform(len(g)) for g in groups.values())
    return entropy_of_uniform(n) - conditional


def brute_best_slot(rows, schema, constraints):
    best, best_gain = None, 0.0
    for slot in schema:
        if slot in constraints:
            continue
        gain = brute_ig(rows, constraints, slot)
        if gain > best_gain + 1e-12:
            best, best_gain = slot, gain
    return best


def random_table(rng):
    n_slots = int(rng.integers(2, 7))
    schema = [f"s{i}" for i in range(n_slots)]
    n_values = [int(rng.integers(2, 5)) for _ in schema]
    n_rows = int(rng.integers(1, 65))
    rows = []
    for _ in range(n_rows):
        rows.append({s: f"{s}v{int(rng.integers(n_values[i]))}"
                     for i, s in enumerate(schema)})
    return KbTable.of(schema, rows), rows, schema


def random_constraints(rng, rows, schema):
    base = rows[int(rng.integers(len(rows)))]
    k = int(rng.integers(0, len(schema)))
    picked = rng.choice(len(schema), size=k, replace=False)
    return {schema[i]: base[schema[i]] for i in picked}


# --- matching ---------------------------------------------------------------

def test_match_empty_constraints_match_all(toy_table):
    assert match_entries(toy_table, {}) == [0, 1, 2, 3]
    assert match_count(toy_table, {}) == 4


def test_match_examples(toy_table):
    assert match_entries(toy_table, {"genre": "action"}) == [0, 1]
    assert match_entries(toy_table, {"genre": "action", "city": "SF"}) == []
    assert match_count(toy_table, {"genre": "comedy"}) == 2
    assert match_count(toy_table, {"genre": "horror"}) == 0


def test_match_unknown_slot_raises(toy_table):
    with pytest.raises(SchemaError):
        match_entries(toy_table, {"director": "x"})


def test_unknown_cells_never_match():
    table = KbTable.of(["a", "b"], [{"a": "x", "b": UNKNOWN}, {"a": "x", "b": "y"}])
    assert match_entries(table, {"b": "y"}) == [1]
    assert match_entries(table, {"b": UNKNOWN}) == []


def test_match_monotone_under_added_constraints():
    rng = np.random.default_rng(3)
    for _ in range(200):
        table, rows, schema = random_table(rng)
        constraints = {}
        last = match_count(table, constraints)
        base = rows[int(rng.integers(len(rows)))]
        for slot in schema:
            constraints[slot] = base[slot]
            now = match_count(table, constraints)
            assert now <= last
            last = now


# --- distributions and entropy ---------------------------------------------

def test_value_distribution_examples(toy_table):
    dist = value_distribution(toy_table, {}, "genre")
    assert dist.count_dict == {"action": 2, "comedy": 2}
    assert dist.total == 4

    pinned = value_distribution(toy_table, {"genre": "action"}, "genre")
    assert pinned.count_dict == {"action": 2}

    cities = value_distribution(toy_table, {}, "city")
    assert cities.count_dict == {"LA": 1, "NY": 1, "SF": 1, "SEA": 1}


def test_value_distribution_unknown_bucket():
    table = KbTable.of(["a", "b"],
                       [{"a": "x", "b": UNKNOWN}, {"a": "x", "b": "y"}])
    dist = value_distribution(table, {}, "b")
    assert dist.count_dict == {UNKNOWN: 1, "y": 1}


def test_value_distribution_empty_match_errors(toy_table):
    with pytest.raises(EmptyMatchError):
        value_distribution(toy_table, {"genre": "horror"}, "city")


def test_entropy_examples(toy_table):
    assert entropy(value_distribution(toy_table, {}, "city")) == pytest.approx(2.0)
    assert entropy(value_distribution(toy_table, {"genre": "action"}, "genre")) == 0.0
    assert entropy(value_distribution(toy_table, {}, "genre")) == pytest.approx(1.0)


# --- information gain --------------------------------------------------------

def test_information_gain_examples(toy_table):
    assert information_gain(toy_table, {}, "genre") == pytest.approx(1.0)
    assert information_gain(toy_table, {}, "city") == pytest.approx(2.0)
    assert information_gain(toy_table, {"genre": "action"}, "genre") == 0.0


def test_information_gain_needs_two_matches(toy_table):
    with pytest.raises(EmptyMatchError):
        information_gain(toy_table, {"city": "LA"}, "genre")


def test_information_gain_matches_brute_force():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 300:
        table, rows, schema = random_table(rng)
        constraints = random_constraints(rng, rows, schema)
        if match_count(table, constraints) < 2:
            continue
        for slot in schema:
            if slot in constraints:
                continue
            assert information_gain(table, constraints, slot) == pytest.approx(
                brute_ig(rows, constraints, slot), abs=1e-9)
        checked += 1


def test_information_gain_bounds():
    rng = np.random.default_rng(12)
    for _ in range(100):
        table, rows, schema = random_table(rng)
        constraints = random_constraints(rng, rows, schema)
        n = match_count(table, constraints)
        if n < 2:
            continue
        for slot in schema:
            if slot in constraints:
                assert information_gain(table, constraints, slot) == 0.0
            else:
                gain = information_gain(table, constraints, slot)
                assert -1e-12 <= gain <= math.log2(n) + 1e-12


# --- slot selection ----------------------------------------------------------

def test_best_slot_prefers_higher_gain(toy_table):
    assert best_request_slot(toy_table, {}) == "city"


def test_best_slot_marker_on_duplicates():
    table = KbTable.of(["a", "b"], [{"a": "x", "b": "y"}, {"a": "x", "b": "y"}])
    assert best_request_slot(table, {}) is None


def test_best_slot_tie_breaks_by_schema_order():
    table = KbTable.of(["a", "b"], [{"a": "a1", "b": "b1"},
                                    {"a": "a2", "b": "b2"}])
    assert best_request_slot(table, {}) == "a"


def test_best_slot_needs_two_matches(toy_table):
    with pytest.raises(EmptyMatchError):
        best_request_slot(toy_table, {"city": "LA"})


def test_best_slot_matches_brute_force_argmax():
    rng = np.random.default_rng(13)
    checked = 0
    while checked < 200:
        table, rows, schema = random_table(rng)
        constraints = random_constraints(rng, rows, schema)
        if match_count(table, constraints) < 2:
            continue
        assert best_request_slot(table, constraints) == brute_best_slot(
            rows, schema, constraints)
        checked += 1


def test_best_slot_invariant_under_row_duplication():
    rng = np.random.default_rng(14)
    for _ in range(50):
        table, rows, schema = random_table(rng)
        if match_count(table, {}) < 2:
            continue
        doubled = KbTable.of(schema, rows * 3)
        assert best_request_slot(table, {}) == best_request_slot(doubled, {})


# --- serialization -----------------------------------------------------------

def test_table_json_round_trip(toy_table):
    again = KbTable.from_json(toy_table.to_json())
    assert again == toy_table


def test_table_csv_with_unknown_cells():
    text = "a,b\nx,unknown\nx,y\n"
    table = KbTable.from_csv(text)
    assert table.schema == ("a", "b")
    assert table.entries[0] == ("x", UNKNOWN)
