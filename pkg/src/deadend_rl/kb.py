"""Task database: constraint matching, match counts, entropy, information gain.

The match count ``n`` (entries consistent with all constraints gathered so
far) is the signal that drives dead-end detection, and the per-slot
information gain drives the explicit rescue guidance. All operations here
are pure functions over an immutable table; entries are treated as
equiprobable, so the entropy of n matching entries is log2(n) bits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import SchemaError, UNKNOWN


class EmptyMatchError(ValueError):
    """Raised when an operation needs at least one matching entry."""


@dataclass(frozen=True)
class KbTable:
    """A slot-schema table. Rows may carry the ``unknown`` sentinel."""

    schema: tuple[str, ...]
    entries: tuple[tuple[str, ...], ...]  # row-major, aligned with schema

    def __post_init__(self):
        if not self.entries:
            raise ValueError("table needs at least one entry")
        for row in self.entries:
            if len(row) != len(self.schema):
                raise SchemaError(f"row {row} does not cover schema {self.schema}")

    @classmethod
    def of(cls, schema: Sequence[str], rows: Iterable[Mapping[str, str]]) -> "KbTable":
        schema = tuple(schema)
        packed = []
        for row in rows:
            extra = set(row) - set(schema)
            if extra:
                raise SchemaError(f"row has slots outside the schema: {sorted(extra)}")
            packed.append(tuple(row.get(slot, UNKNOWN) for slot in schema))
        return cls(schema, tuple(packed))

    def __len__(self) -> int:
        return len(self.entries)

    def row(self, index: int) -> dict[str, str]:
        return dict(zip(self.schema, self.entries[index]))

    def values_of(self, slot: str) -> list[str]:
        """Distinct concrete values of a slot, in first-appearance order."""
        col = self._column(slot)
        seen: dict[str, None] = {}
        for row in self.entries:
            if row[col] != UNKNOWN:
                seen.setdefault(row[col])
        return list(seen)

    def _column(self, slot: str) -> int:
        try:
            return self.schema.index(slot)
        except ValueError:
            raise SchemaError(f"slot {slot!r} not in schema {self.schema}") from None

    def to_json(self) -> str:
        return json.dumps(
            {"schema": list(self.schema),
             "entries": [self.row(i) for i in range(len(self))]},
            indent=2)

    @classmethod
    def from_json(cls, text: str) -> "KbTable":
        payload = json.loads(text)
        return cls.of(payload["schema"], payload["entries"])

    @classmethod
    def from_csv(cls, text: str) -> "KbTable":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            raise ValueError("empty CSV table")
        return cls.of(reader.fieldnames, list(reader))


# The canonical 4-row example table used throughout the tests and demos.
TOY_TABLE = KbTable.of(
    ["genre", "city"],
    [
        {"genre": "action", "city": "LA"},
        {"genre": "action", "city": "NY"},
        {"genre": "comedy", "city": "SF"},
        {"genre": "comedy", "city": "SEA"},
    ],
)


@dataclass(frozen=True)
class ValueDistribution:
    """Counts of a slot's values among the currently matching entries."""

    slot: str
    counts: tuple[tuple[str, int], ...]
    total: int

    @property
    def count_dict(self) -> dict[str, int]:
        return dict(self.counts)


def match_entries(table: KbTable, constraints: Mapping[str, str]) -> list[int]:
    """Indices of rows satisfying every constraint, in table order.

    An ``unknown`` cell never satisfies a concrete constraint, and
    constraining on ``unknown`` itself matches nothing.
    """
    cols = [(table._column(slot), value) for slot, value in constraints.items()]
    if any(value == UNKNOWN for _, value in cols):
        return []
    return [
        i for i, row in enumerate(table.entries)
        if all(row[col] == value for col, value in cols)
    ]


def match_count(table: KbTable, constraints: Mapping[str, str]) -> int:
    return len(match_entries(table, constraints))


def value_distribution(table: KbTable, constraints: Mapping[str, str],
                       slot: str) -> ValueDistribution:
    """Distribution of ``slot`` values over the matching entries.

    ``unknown`` forms its own bucket. Raises :class:`EmptyMatchError` when no
    entry matches (there is no distribution at a dead-end).
    """
    col = table._column(slot)
    rows = match_entries(table, constraints)
    if not rows:
        raise EmptyMatchError("no matching entries to distribute over")
    counts: dict[str, int] = {}
    for i in rows:
        value = table.entries[i][col]
        counts[value] = counts.get(value, 0) + 1
    return ValueDistribution(slot, tuple(counts.items()), len(rows))


def entropy(dist: ValueDistribution) -> float:
    """Shannon entropy of the value distribution, in bits."""
    if dist.total < 1:
        raise EmptyMatchError("entropy of an empty distribution")
    return -sum(
        (c / dist.total) * math.log2(c / dist.total) for _, c in dist.counts
    )


def information_gain(table: KbTable, constraints: Mapping[str, str],
                     slot: str) -> float:
    """Expected entropy reduction over matching entries from asking ``slot``.

    With the n matching entries uniform, the prior entropy is log2(n) and the
    conditional entropy after learning the slot's value v is log2(|N_v|)
    weighted by |N_v|/n, where N_v partitions the matches by value.
    """
    rows = match_entries(table, constraints)
    n = len(rows)
    if n < 2:
        raise EmptyMatchError(f"information gain needs n >= 2, got n={n}")
    col = table._column(slot)
    sizes: dict[str, int] = {}
    for i in rows:
        value = table.entries[i][col]
        sizes[value] = sizes.get(value, 0) + 1
    return math.log2(n) - sum((m / n) * math.log2(m) for m in sizes.values())


def best_request_slot(table: KbTable, constraints: Mapping[str, str],
                      exclude: Iterable[str] = ()) -> str | None:
    """The unconstrained slot with maximal information gain.

    Ties break by schema order. Returns ``None`` (the no-informative-slot
    marker) when every candidate has zero gain, e.g. over duplicated rows.
    ``exclude`` removes slots from consideration (the rescue controller uses
    it to rule out the request that caused a dead-end).
    """
    if match_count(table, constraints) < 2:
        raise EmptyMatchError("slot selection needs n >= 2")
    excluded = set(exclude)
    best_slot, best_gain = None, 0.0
    for slot in table.schema:
        if slot in constraints or slot in excluded:
            continue
        gain = information_gain(table, constraints, slot)
        if gain > best_gain + 1e-12:
            best_slot, best_gain = slot, gain
    return best_slot
