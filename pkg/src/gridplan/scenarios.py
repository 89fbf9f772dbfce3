"""Daily joint renewable scenarios and forward-selection reduction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _ext
from .meteorology import SLOTS_PER_DAY, GenerationProfile, ValidationError

DEFAULT_SCENARIO_COUNT = 10
PROB_TOL = 1e-12


@dataclass(frozen=True)
class Scenario:
    id: int
    solar: Mapping[str, np.ndarray]
    wind: Mapping[str, np.ndarray]

    def __post_init__(self):
        if not self.solar or set(self.solar) != set(self.wind):
            raise ValidationError(f"scenario {self.id}: solar and wind locations differ or are empty")
        lengths = {np.asarray(v).shape for table in (self.solar, self.wind) for v in table.values()}
        if len(lengths) != 1 or len(next(iter(lengths))) != 1 or next(iter(lengths))[0] == 0:
            raise ValidationError(f"scenario {self.id}: every profile needs the same nonzero slot count")
        for table in (self.solar, self.wind):
            for loc, v in table.items():
                v = np.asarray(v, dtype=float)
                if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
                    raise ValidationError(f"scenario {self.id}/{loc}: values outside [0, 1]")

    @property
    def locations(self) -> tuple[str, ...]:
        return tuple(sorted(self.solar))

    @property
    def slots(self) -> int:
        return len(next(iter(self.solar.values())))

    def vector(self, locations: Sequence[str] | None = None) -> np.ndarray:
        """Concatenated solar || wind values over ``locations``."""
        locs = self.locations if locations is None else locations
        return np.concatenate([np.asarray(self.solar[l], dtype=float) for l in locs]
                              + [np.asarray(self.wind[l], dtype=float) for l in locs])


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if not self.scenarios:
            raise ValidationError("empty scenario set")
        if p.shape != (len(self.scenarios),):
            raise ValidationError("one probability per scenario required")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("probabilities must be finite and >= 0")
        if abs(math.fsum(p) - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        ids = [s.id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate scenario ids")
        locs = self.scenarios[0].locations
        if any(s.locations != locs for s in self.scenarios):
            raise ValidationError("scenarios cover different locations")
        if len({s.slots for s in self.scenarios}) != 1:
            raise ValidationError("scenarios have different slot counts")

    def __len__(self) -> int:
        return len(self.scenarios)

    @property
    def locations(self) -> tuple[str, ...]:
        return self.scenarios[0].locations

    @property
    def slots(self) -> int:
        return self.scenarios[0].slots

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.scenarios]

    def by_id(self, sid: int) -> Scenario:
        for s in self.scenarios:
            if s.id == sid:
                return s
        raise ValidationError(f"unknown scenario id {sid}")

    def matrix(self) -> np.ndarray:
        locs = self.locations
        return np.stack([s.vector(locs) for s in self.scenarios])

    # -- JSON ---------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "locations": list(self.locations),
            "scenarios": [
                {
                    "id": s.id,
                    "pi": float(p),
                    "solar": {l: [float(v) for v in s.solar[l]] for l in self.locations},
                    "wind": {l: [float(v) for v in s.wind[l]] for l in self.locations},
                }
                for s, p in zip(self.scenarios, self.probabilities)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioSet":
        try:
            locs = list(doc["locations"])
            items = doc["scenarios"]
            scen = [
                Scenario(int(it["id"]), {l: np.array(it["solar"][l], float) for l in locs},
                         {l: np.array(it["wind"][l], float) for l in locs})
                for it in items
            ]
            probs = [float(it["pi"]) for it in items]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed scenario document: {exc!r}") from None
        return cls(tuple(scen), np.array(probs))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ScenarioSet":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        return cls.from_json(doc)


def build_daily_scenarios(
    solar: Mapping[str, GenerationProfile | None],
    wind: Mapping[str, GenerationProfile],
) -> ScenarioSet:
    """One scenario per day, each with probability 1/days.

    Locations without a solar profile get an all-zero solar row.
    """
    if not wind:
        raise ValidationError("no locations given")
    locs = sorted(wind)
    lengths = {wind[l].per_unit_output.size for l in locs}
    lengths |= {solar[l].per_unit_output.size for l in locs if solar.get(l) is not None}
    if len(lengths) != 1:
        raise ValidationError("profiles cover different numbers of slots")
    total = lengths.pop()
    if total == 0 or total % SLOTS_PER_DAY:
        raise ValidationError("profile length is not a whole number of days")
    days = total // SLOTS_PER_DAY
    shaped_w = {l: wind[l].per_unit_output.reshape(days, SLOTS_PER_DAY) for l in locs}
    shaped_s = {
        l: (solar[l].per_unit_output.reshape(days, SLOTS_PER_DAY) if solar.get(l) is not None
            else np.zeros((days, SLOTS_PER_DAY)))
        for l in locs
    }
    scen = tuple(Scenario(d + 1, {l: shaped_s[l][d] for l in locs}, {l: shaped_w[l][d] for l in locs})
                 for d in range(days))
    return ScenarioSet(scen, np.full(days, 1.0 / days))


def scenario_distance(a: Scenario, b: Scenario) -> float:
    if a.locations != b.locations or a.slots != b.slots:
        raise ValidationError("scenarios cover different locations")
    return float(np.linalg.norm(a.vector() - b.vector()))


def _nearest(dist: np.ndarray, kept_sorted: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, i.e. the lowest kept id
    return kept_sorted[np.argmin(dist[:, kept_sorted], axis=1)]


def reduce_scenarios(sset: ScenarioSet, target_count: int = DEFAULT_SCENARIO_COUNT) -> ScenarioSet:
    """Fast forward selection down to ``target_count`` scenarios.

    Each deleted scenario's probability moves to its nearest kept scenario.
    Kept scenarios retain their ids and are returned in id order.
    """
    n = len(sset)
    if not isinstance(target_count, (int, np.integer)) or not 1 <= target_count <= n:
        raise ValidationError(f"target count must be in 1..{n}")
    order = np.argsort(sset.ids, kind="stable")
    ordered = ScenarioSet(tuple(sset.scenarios[k] for k in order), sset.probabilities[order])
    if target_count == n:
        return ordered
    dist = _ext.pairwise_distances(ordered.matrix())
    kept = np.sort(np.array(_ext.forward_select(dist, ordered.probabilities, int(target_count)), dtype=int))
    nearest = _nearest(dist, kept)
    is_kept = np.zeros(n, dtype=bool)
    is_kept[kept] = True
    moved = {k: [ordered.probabilities[k]] for k in kept.tolist()}
    for k in np.flatnonzero(~is_kept):
        moved[int(nearest[k])].append(ordered.probabilities[k])
    probs = np.array([math.fsum(moved[k]) for k in kept.tolist()])
    return ScenarioSet(tuple(ordered.scenarios[k] for k in kept), probs)


def reduction_error(original: ScenarioSet, kept_ids: Sequence[int]) -> float:
    """Sum over deleted scenarios of probability times distance to the nearest kept one."""
    ids = original.ids
    index = {sid: k for k, sid in enumerate(ids)}
    kept_ids = list(dict.fromkeys(kept_ids))
    unknown = [k for k in kept_ids if k not in index]
    if unknown:
        raise ValidationError(f"unknown scenario id(s) {unknown}")
    if not kept_ids:
        raise ValidationError("at least one scenario must be kept")
    kept = np.array(sorted(index[k] for k in kept_ids))
    X = original.matrix()
    kept_set = set(kept.tolist())
    terms = []
    for k in range(len(ids)):
        if k in kept_set:
            continue
        d = np.sqrt(np.sum((X[kept] - X[k]) ** 2, axis=1)).min()
        terms.append(original.probabilities[k] * d)
    return math.fsum(terms)
