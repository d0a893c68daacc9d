"""Synthetic listings in the raw CSV layout of the default schema.

Used by the tests, the benchmark and the README walkthrough when the real
rental dataset is not at hand. Rents follow a hedonic formula with
district premiums, a size effect and an amenity effect plus noise.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .ingest import default_schema

DISTRICT_PREMIUM = {
    "Baoshan": 0.70, "Changning": 1.15, "Hongkou": 0.95, "Huangpu": 1.25, "Jiading": 0.65,
    "Jing'an": 1.30, "Minhang": 1.05, "Pudong": 1.10, "Putuo": 0.85, "Qingpu": 1.00,
    "Songjiang": 0.90, "Xuhui": 1.35, "Yangpu": 0.90, "Zhabei": 0.85,
}
AMENITIES = ("heat", "air-conditioner", "balcony", "wifi", "outdoorspace", "bathtub", "floor-heating", "oven")
COLUMNS = ("district", "rent", "bedrooms", "living-dining", "bathrooms", "loft", "sqmeters",
           "building-type", "use-type-en") + AMENITIES


def make_rows(n: int, seed: int = 0, n_missing: int = 0, n_duplicates: int = 0) -> list[dict[str, str]]:
    """``n`` distinct listings, then ``n_missing`` rows with a blank rent and ``n_duplicates`` copies."""
    rng = np.random.Generator(np.random.PCG64(seed))
    districts = default_schema().entry("district").categories
    rows = []
    for i in range(n):
        district = districts[rng.integers(len(districts))]
        bedrooms = int(rng.integers(1, 5))
        sqm = int(np.clip(rng.normal(30 + 22 * bedrooms, 12), 12, 400))
        amen = rng.random(len(AMENITIES)) < rng.uniform(0.2, 0.8)
        rent = (DISTRICT_PREMIUM[district] * (2500 + 140 * sqm) + 600 * int(amen.sum())
                + rng.normal(0, 1500))
        rows.append({
            "district": district,
            # the trailing cents keep rows distinct so dedup only removes injected copies
            "rent": f"{max(rent, 800.0):.0f}.{i % 100:02d}",
            "bedrooms": str(bedrooms),
            "living-dining": str(int(rng.integers(0, 3))),
            "bathrooms": str(int(rng.integers(1, 3))),
            "loft": str(int(rng.random() < 0.2)),
            "sqmeters": str(sqm),
            "building-type": str(int(rng.integers(1, 4))),
            "use-type-en": str(int(rng.integers(1, 3))),
            **{a: str(int(flag)) for a, flag in zip(AMENITIES, amen)},
        })
    for j in range(n_missing):
        broken = dict(rows[j % n])
        broken["rent"] = ""
        rows.append(broken)
    for j in range(n_duplicates):
        rows.append(dict(rows[(7 * j) % n]))
    return rows


def write_csv(path: str | Path, n: int, seed: int = 0, n_missing: int = 0, n_duplicates: int = 0) -> Path:
    path = Path(path)
    rows = make_rows(n, seed, n_missing, n_duplicates)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path
