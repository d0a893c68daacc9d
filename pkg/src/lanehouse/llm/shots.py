"""Nearest-listing exemplar selection for few-shot prompts.

Distance between two listings is a location mismatch (0 or 1) plus a
weighted Gower distance over the remaining schema fields: categorical and
boolean fields contribute 0 when equal and 1 otherwise, numeric and ordinal
fields contribute ``|a - b| / range`` (range taken over the training set,
capped at 1). Records in the query's location always rank first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..ingest import FeatureSchema, HouseRecord


@dataclass(frozen=True)
class Shot:
    record: HouseRecord
    rent: float
    distance: float


@dataclass(frozen=True)
class ShotSet:
    k: int
    exemplars: tuple[Shot, ...]
    truncated: bool = False


class ShotIndex:
    """Training records pre-arranged as column arrays for repeated queries."""

    def __init__(self, train: Sequence[HouseRecord], schema: FeatureSchema,
                 weights: Mapping[str, float] | None = None, location_field: str = "district"):
        self.train = list(train)
        self.location_field = location_field
        weights = weights or {}
        self.fields = []
        for e in schema.entries:
            w = float(weights.get(e.name, 1.0))
            if e.name == location_field or w == 0:
                continue
            if e.kind in ("categorical", "boolean"):
                col = np.array([r.values[e.name] for r in self.train], dtype=object)
                self.fields.append((e.name, "match", w, col, 0.0))
            else:
                col = np.array([float(r.values[e.name]) for r in self.train])
                span = float(col.max() - col.min()) if col.size else 0.0
                self.fields.append((e.name, "range", w, col, span))
        self.weight_sum = sum(f[2] for f in self.fields)
        self.locations = np.array([r.values.get(location_field) for r in self.train], dtype=object)

    def distances(self, query: HouseRecord) -> tuple[np.ndarray, np.ndarray]:
        """``(location_mismatch, distance)`` arrays over the training records."""
        n = len(self.train)
        total = np.zeros(n)
        for name, how, w, col, span in self.fields:
            if how == "match":
                d = (col != query.values[name]).astype(np.float64)
            elif span == 0:
                d = np.zeros(n)
            else:
                d = np.minimum(1.0, np.abs(float(query.values[name]) - col) / span)
            total += w * d
        gower = total / self.weight_sum if self.weight_sum else total
        mismatch = (self.locations != query.values.get(self.location_field)).astype(np.float64)
        return mismatch, mismatch + gower

    def select(self, query: HouseRecord, k: int) -> ShotSet:
        if k < 0:
            raise ValueError("k must be non-negative")
        if k == 0:
            return ShotSet(0, ())
        mismatch, dist = self.distances(query)
        order = np.lexsort((np.arange(len(self.train)), dist, mismatch))[:k]
        chosen = tuple(Shot(self.train[i], self.train[i].target, float(dist[i])) for i in order)
        return ShotSet(k, chosen, truncated=k > len(self.train))


def select_shots(query: HouseRecord, train: Sequence[HouseRecord], k: int, schema: FeatureSchema,
                 weights: Mapping[str, float] | None = None, location_field: str = "district") -> ShotSet:
    """The ``k`` training records closest to ``query``; ties go to the earlier record.

    ``truncated`` is set when ``k`` exceeds the training size (all records
    are returned).
    """
    return ShotIndex(train, schema, weights, location_field).select(query, k)
