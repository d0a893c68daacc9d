"""Prompt-as-prefix rendering for rent prediction.

A prompt describes the query listing field by field (location, type and
area, features), gives the instruction, then summary statistics of the
training rents. Few-shot prompts prepend one "description -> actual rent"
block per exemplar. Several templates phrase the same content differently
for robustness checks; all renderings are byte-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..ingest import HouseRecord

INSTRUCTION = "Predict the house price based on the above information."
SQFT_PER_SQM = 10.763910416709722
TRENDS = ("upward", "downward", "unspecified")


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class StatsBlock:
    min_price: float
    max_price: float
    median_price: float
    trend: str = "unspecified"

    def __post_init__(self):
        if not self.min_price <= self.median_price <= self.max_price:
            raise PromptError("statistics must satisfy min <= median <= max")
        if self.trend not in TRENDS:
            raise PromptError(f"trend must be one of {TRENDS}")


def compute_statistics(train_rents: Sequence[float], trend: str = "unspecified") -> StatsBlock:
    """Min, max and lower-middle median of the training rents."""
    y = np.sort(np.asarray(train_rents, dtype=np.float64))
    if y.size == 0:
        raise PromptError("cannot summarise an empty training set")
    return StatsBlock(float(y[0]), float(y[-1]), float(y[(y.size - 1) // 2]), trend)


@dataclass(frozen=True)
class FieldMap:
    """Which record entries feed each descriptive prompt field."""

    location: str = "district"
    house_type: str = "building-type"
    area: str = "sqmeters"
    bedrooms: str = "bedrooms"
    living_rooms: str = "living-dining"
    bathrooms: str = "bathrooms"
    house_type_labels: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class HouseDescription:
    location: str
    house_type: str
    area: float
    bedrooms: float
    living_rooms: float
    bathrooms: float
    amenities: tuple[str, ...] = ()


def fmt_num(value: float) -> str:
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return f"{value:.2f}".rstrip("0").rstrip(".")


def amenity_label(column: str) -> str:
    return {"air-conditioner": "air conditioner", "outdoorspace": "outdoor space"}.get(
        column, column.replace("-", " ").replace("_", " "))


def describe(record: HouseRecord, fields: FieldMap = FieldMap()) -> HouseDescription:
    v = record.values
    raw_type = v[fields.house_type]
    key = fmt_num(raw_type) if isinstance(raw_type, (int, float)) else str(raw_type)
    house_type = fields.house_type_labels.get(key, f"lane house (building type {key})")
    return HouseDescription(
        location=str(v[fields.location]),
        house_type=house_type,
        area=float(v[fields.area]),
        bedrooms=float(v[fields.bedrooms]),
        living_rooms=float(v[fields.living_rooms]),
        bathrooms=float(v[fields.bathrooms]),
        amenities=tuple(amenity_label(a) for a in record.amenities),
    )


@dataclass(frozen=True)
class Exemplar:
    description: HouseDescription
    rent: float


@dataclass(frozen=True)
class PromptSpec:
    query: HouseDescription
    statistics: StatsBlock
    exemplars: tuple[Exemplar, ...] = ()
    instruction: str = INSTRUCTION
    template_id: str = "base"

    @property
    def location(self) -> str:
        return self.query.location

    @property
    def house_type(self) -> str:
        return self.query.house_type

    @property
    def area(self) -> float:
        return self.query.area


# ------------------------------------------------------------------ templates


def _amenity_phrase(amenities: Sequence[str], lead: str, none: str) -> str:
    return f"{lead} {', '.join(amenities)}" if amenities else none


@dataclass(frozen=True)
class Template:
    template_id: str
    location: Callable[[HouseDescription], str]
    type_area: Callable[[HouseDescription], str]
    features: Callable[[HouseDescription], str]
    statistics: Callable[[StatsBlock], str]
    order: tuple[str, ...] = ("location", "type_area", "features", "instruction", "statistics")
    example_header: str = "Example {i}:"
    example_answer: str = "Actual rent: {rent} per month."
    query_header: str = "Now the house to predict:"

    def describe(self, d: HouseDescription) -> list[str]:
        parts = {"location": self.location(d), "type_area": self.type_area(d), "features": self.features(d)}
        return [parts[key] for key in self.order if key in parts]


def _base_stats(s: StatsBlock) -> str:
    text = (f"The training data includes houses with prices ranging from {fmt_num(s.min_price)} "
            f"to {fmt_num(s.max_price)}, with a median price of {fmt_num(s.median_price)}.")
    if s.trend != "unspecified":
        text += f" The market trend is {s.trend}."
    return text


def _base_features(d: HouseDescription) -> str:
    return (f"It includes {fmt_num(d.bedrooms)} bedrooms, {fmt_num(d.living_rooms)} living rooms, "
            f"{fmt_num(d.bathrooms)} bathrooms, and "
            + _amenity_phrase(d.amenities, "features such as", "no listed amenities") + ".")


def _stats_list(s: StatsBlock) -> str:
    lines = ["Training price statistics:", f"- minimum: {fmt_num(s.min_price)}",
             f"- maximum: {fmt_num(s.max_price)}", f"- median: {fmt_num(s.median_price)}"]
    if s.trend != "unspecified":
        lines.append(f"- market trend: {s.trend}")
    return "\n".join(lines)


TEMPLATES: dict[str, Template] = {
    t.template_id: t
    for t in (
        Template(
            "base",
            location=lambda d: f"The house is located in {d.location}.",
            type_area=lambda d: f"The property is a {d.house_type}, with an area of {fmt_num(d.area)} square meters.",
            features=_base_features,
            statistics=_base_stats,
        ),
        Template(
            "base-sqft",
            location=lambda d: f"The house is located in {d.location}.",
            type_area=lambda d: (f"The property is a {d.house_type}, with an area of "
                                 f"{fmt_num(round(d.area * SQFT_PER_SQM, 1))} square feet."),
            features=_base_features,
            statistics=_base_stats,
        ),
        Template(
            "reordered",
            location=lambda d: f"Location: {d.location} district.",
            type_area=lambda d: f"This {d.house_type} covers {fmt_num(d.area)} square meters.",
            features=_base_features,
            statistics=_base_stats,
            order=("features", "type_area", "location", "statistics", "instruction"),
        ),
        Template(
            "synonyms",
            location=lambda d: f"The home sits in the {d.location} district of Shanghai.",
            type_area=lambda d: f"It is a {d.house_type} offering {fmt_num(d.area)} square meters of floor space.",
            features=lambda d: (f"The layout has {fmt_num(d.bedrooms)} bedrooms, "
                                f"{fmt_num(d.living_rooms)} living areas and {fmt_num(d.bathrooms)} bathrooms; "
                                + _amenity_phrase(d.amenities, "amenities include", "no amenities are listed")
                                + "."),
            statistics=lambda s: (f"Comparable listings in the training data rent for between "
                                  f"{fmt_num(s.min_price)} and {fmt_num(s.max_price)} per month "
                                  f"(median {fmt_num(s.median_price)})."
                                  + ("" if s.trend == "unspecified" else f" Rents are trending {s.trend}.")),
            example_header="Reference listing {i}:",
            example_answer="Its monthly rent is {rent}.",
            query_header="Listing to price:",
        ),
        Template(
            "stats-list",
            location=lambda d: f"The house is located in {d.location}.",
            type_area=lambda d: f"The property is a {d.house_type}, with an area of {fmt_num(d.area)} square meters.",
            features=_base_features,
            statistics=_stats_list,
        ),
    )
}


def build_prompt(spec: PromptSpec) -> str:
    try:
        template = TEMPLATES[spec.template_id]
    except KeyError:
        raise PromptError(f"unknown template {spec.template_id!r}; choose from {sorted(TEMPLATES)}") from None
    q = spec.query
    if not q.location or not q.house_type or not spec.instruction:
        raise PromptError("location, house type and instruction are required")
    blocks = []
    for i, ex in enumerate(spec.exemplars, start=1):
        lines = [template.example_header.format(i=i)]
        lines += template.describe(ex.description)
        lines.append(template.example_answer.format(rent=fmt_num(ex.rent)))
        blocks.append("\n".join(lines))
    parts = {"instruction": spec.instruction, "statistics": template.statistics(spec.statistics)}
    query_lines = [template.query_header] if spec.exemplars else []
    described = dict(zip([k for k in template.order if k not in parts], template.describe(q)))
    for key in template.order:
        query_lines.append(parts[key] if key in parts else described[key])
    blocks.append("\n".join(query_lines))
    return "\n\n".join(blocks) + "\n"
