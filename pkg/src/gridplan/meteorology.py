"""Hourly weather series -> per-unit solar/wind generation and statistics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SLOTS_PER_DAY = 24
BETZ_LIMIT = 16.0 / 27.0
SOLAR = "solar"
WIND = "wind"


class ValidationError(ValueError):
    pass


class DegenerateSeriesError(ValueError):
    """Correlation requested for a series with zero variance."""

    def __init__(self, message: str, location: str | None = None):
        super().__init__(message)
        self.location = location


def _finite_nonneg(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{what} contains non-finite values")
    if np.any(values < 0):
        raise ValidationError(f"{what} contains negative values")


@dataclass(frozen=True)
class WeatherSeries:
    location_id: str
    day_count: int
    wind_speed: np.ndarray
    irradiance: np.ndarray | None = None
    slots_per_day: int = SLOTS_PER_DAY

    def __post_init__(self):
        object.__setattr__(self, "wind_speed", np.asarray(self.wind_speed, dtype=float))
        if self.irradiance is not None:
            object.__setattr__(self, "irradiance", np.asarray(self.irradiance, dtype=float))
        self.validate()

    def validate(self) -> None:
        if self.slots_per_day != SLOTS_PER_DAY:
            raise ValidationError("only hourly data (24 slots per day) is supported")
        if self.day_count < 1:
            raise ValidationError("day_count must be >= 1")
        expected = self.day_count * self.slots_per_day
        for name in ("wind_speed", "irradiance"):
            v = getattr(self, name)
            if v is None:
                continue
            if v.shape != (expected,):
                raise ValidationError(f"{self.location_id}: {name} has {v.size} values, expected {expected}")
            _finite_nonneg(v, f"{self.location_id}: {name}")


@dataclass(frozen=True)
class SolarModel:
    array_area: float = 16.0
    module_efficiency: float = 0.11
    packing_factor: float = 0.9
    conditioning_efficiency: float = 0.86
    reference_irradiance: float = 1000.0

    def __post_init__(self):
        if min(self.array_area, self.module_efficiency, self.packing_factor,
               self.conditioning_efficiency, self.reference_irradiance) <= 0:
            raise ValidationError("solar model parameters must be strictly positive")
        if max(self.module_efficiency, self.packing_factor, self.conditioning_efficiency) > 1:
            raise ValidationError("solar efficiencies must be <= 1")


@dataclass(frozen=True)
class WindModel:
    air_density: float = 1.225
    performance_coefficient: float = 0.593
    swept_area: float = 6.15
    cut_in: float = 3.0
    rated_speed: float = 15.0
    cut_out: float = 25.0

    def __post_init__(self):
        if self.air_density <= 0 or self.swept_area <= 0:
            raise ValidationError("air density and swept area must be positive")
        # 0.593 is the rounded Betz limit used in practice
        if not 0 < self.performance_coefficient <= max(0.593, BETZ_LIMIT):
            raise ValidationError("performance coefficient must be in (0, 0.593]")
        if not 0 < self.cut_in < self.rated_speed <= self.cut_out:
            raise ValidationError("need 0 < cut_in < rated_speed <= cut_out")


@dataclass(frozen=True)
class GenerationProfile:
    location_id: str
    technology: str
    per_unit_output: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.per_unit_output, dtype=float)
        object.__setattr__(self, "per_unit_output", v)
        if self.technology not in (SOLAR, WIND):
            raise ValidationError(f"unknown technology {self.technology!r}")
        if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise ValidationError(f"{self.location_id}/{self.technology}: per-unit output outside [0, 1]")


def _check_input(value, allow_negative=False):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("non-finite input")
    if not allow_negative and np.any(arr < 0):
        raise ValidationError("negative input")
    return arr


def solar_power(irradiance, model: SolarModel):
    """PV output in W: A_m * eta_m * P_f * eta_c * I."""
    arr = _check_input(irradiance)
    k = model.array_area * model.module_efficiency * model.packing_factor * model.conditioning_efficiency
    out = k * arr
    return float(out) if out.ndim == 0 else out


def wind_power(speed, model: WindModel):
    """Turbine output in W with cut-in, rated cap and cut-out."""
    v = _check_input(speed)
    k = 0.5 * model.air_density * model.performance_coefficient * model.swept_area
    out = k * np.minimum(v, model.rated_speed) ** 3
    out = np.where((v < model.cut_in) | (v > model.cut_out), 0.0, out)
    return float(out) if out.ndim == 0 else out


def per_unit_profile(series: WeatherSeries, solar: SolarModel, wind: WindModel):
    """Return ``(solar_profile, wind_profile)``; solar is ``None`` for wind-only sites."""
    series.validate()
    solar_profile = None
    if series.irradiance is not None:
        rated = solar_power(solar.reference_irradiance, solar)
        pu = np.clip(solar_power(series.irradiance, solar) / rated, 0.0, 1.0)
        solar_profile = GenerationProfile(series.location_id, SOLAR, pu)
    rated_w = wind_power(wind.rated_speed, wind)
    wind_profile = GenerationProfile(series.location_id, WIND, wind_power(series.wind_speed, wind) / rated_w)
    return solar_profile, wind_profile


def capacity_factor(profile: GenerationProfile) -> float:
    v = profile.per_unit_output
    if v.size == 0:
        raise ValidationError("empty profile")
    return float(np.mean(v))


def correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample (Pearson) correlation coefficient.

    Raises :class:`DegenerateSeriesError` if either series is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("series must be 1-D and of equal length")
    if x.size < 2:
        raise ValidationError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0:
        raise DegenerateSeriesError("first series has zero variance")
    if syy == 0.0:
        raise DegenerateSeriesError("second series has zero variance")
    r = float(dx @ dy) / (math.sqrt(sxx) * math.sqrt(syy))
    return max(-1.0, min(1.0, r))


def correlation_matrix(profiles: Sequence[GenerationProfile]) -> np.ndarray:
    if not profiles:
        raise ValidationError("no profiles given")
    size = profiles[0].per_unit_output.size
    for p in profiles:
        if p.per_unit_output.size != size:
            raise ValidationError(f"{p.location_id}: profile length differs")
        if len(profiles) > 1 and size >= 2 and np.ptp(p.per_unit_output) == 0:
            raise DegenerateSeriesError(f"{p.location_id}/{p.technology} has zero variance", p.location_id)
    k = len(profiles)
    out = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            out[a, b] = out[b, a] = correlation(profiles[a].per_unit_output, profiles[b].per_unit_output)
    return out


# --------------------------------------------------------------------------
# CSV I/O

WEATHER_HEADER = ("day", "hour", "irradiance_wm2", "wind_speed_ms")


def read_weather_csv(path, location_id: str | None = None) -> WeatherSeries:
    """Read ``day,hour,irradiance_wm2,wind_speed_ms`` (irradiance optional).

    The location id defaults to the file stem.  Rows may come in any order;
    every (day, hour) pair must appear exactly once.
    """
    path = Path(path)
    location_id = location_id or path.stem
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if "day" not in header or "hour" not in header or "wind_speed_ms" not in header:
            raise ValidationError(f"{path}:1: header must contain day,hour,wind_speed_ms")
        i_day, i_hour, i_wind = header.index("day"), header.index("hour"), header.index("wind_speed_ms")
        i_irr = header.index("irradiance_wm2") if "irradiance_wm2" in header else None
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                day = int(row[i_day])
                hour = int(row[i_hour])
                wind = float(row[i_wind])
                irr = float(row[i_irr]) if i_irr is not None else None
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= hour < SLOTS_PER_DAY:
                raise ValidationError(f"{path}:{lineno}: hour {hour} outside 0..23")
            if not math.isfinite(wind) or wind < 0 or (irr is not None and (not math.isfinite(irr) or irr < 0)):
                raise ValidationError(f"{path}:{lineno}: values must be finite and >= 0")
            if (day, hour) in rows:
                raise ValidationError(f"{path}:{lineno}: duplicate day {day} hour {hour}")
            rows[(day, hour)] = (irr, wind)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    days = sorted({d for d, _ in rows})
    if days != list(range(days[0], days[0] + len(days))):
        raise ValidationError(f"{path}: days are not contiguous")
    missing = [(d, h) for d in days for h in range(SLOTS_PER_DAY) if (d, h) not in rows]
    if missing:
        raise ValidationError(f"{path}: missing day {missing[0][0]} hour {missing[0][1]}")
    keys = [(d, h) for d in days for h in range(SLOTS_PER_DAY)]
    wind = np.array([rows[k][1] for k in keys])
    irr = np.array([rows[k][0] for k in keys]) if i_irr is not None else None
    return WeatherSeries(location_id, len(days), wind, irr)


def write_weather_csv(path, series: WeatherSeries) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_irr = series.irradiance is not None
        w.writerow(WEATHER_HEADER if has_irr else ("day", "hour", "wind_speed_ms"))
        for k in range(series.day_count * SLOTS_PER_DAY):
            d, h = divmod(k, SLOTS_PER_DAY)
            row = [d + 1, h]
            if has_irr:
                row.append(f"{series.irradiance[k]:.3f}")
            row.append(f"{series.wind_speed[k]:.3f}")
            w.writerow(row)


def write_capacity_factors(path, profiles: Iterable[GenerationProfile]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("location", "technology", "capacity_factor"))
        for p in profiles:
            w.writerow((p.location_id, p.technology, f"{capacity_factor(p):.12g}"))


def write_matrix(path, labels: Sequence[str], matrix: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("location", *labels))
        for lab, row in zip(labels, matrix):
            w.writerow((lab, *(f"{v:.12g}" for v in row)))


def models_from_json(doc: dict) -> tuple[SolarModel, WindModel]:
    """``{"solar": {...}, "wind": {...}}``; missing keys keep the defaults."""
    try:
        solar = SolarModel(**{k: float(v) for k, v in (doc.get("solar") or {}).items()})
        wind = WindModel(**{k: float(v) for k, v in (doc.get("wind") or {}).items()})
    except TypeError as exc:
        raise ValidationError(f"bad model parameters: {exc}") from None
    return solar, wind


def load_models(path) -> tuple[SolarModel, WindModel]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return models_from_json(doc)
