"""Generate the bundled synthetic weather files.

Four sites, one year of hourly data:

* URB - urban, weak daytime breeze (solar-wind positively correlated)
* SUB - suburban, moderate daytime wind (positive)
* HIL - hilltop, strong night-time wind (negative)
* ISL - island, strong wind with a weak daytime bias

Usage: python scripts/make_synthetic_weather.py --seed 7 --out src/gridplan/data/weather
"""

import argparse
from pathlib import Path

import numpy as np

from gridplan.meteorology import WeatherSeries, write_weather_csv

DAYS = 365
HOURS = np.arange(24)

SITES = {
    # mean speed, diurnal amplitude, hour of peak wind, day-to-day persistence
    "URB": (3.6, 0.45, 14, 0.6),
    "SUB": (5.0, 0.35, 13, 0.6),
    "HIL": (8.2, 0.45, 2, 0.7),
    "ISL": (8.6, 0.15, 15, 0.7),
}


def clear_sky(day: int) -> np.ndarray:
    # longer, stronger days in summer
    season = 0.85 + 0.15 * np.sin(2 * np.pi * (day - 80) / 365)
    half = 6.0 + 0.8 * np.sin(2 * np.pi * (day - 80) / 365)
    shape = np.clip(np.cos(np.pi * (HOURS + 0.5 - 12.5) / (2 * half)), 0, None)
    return 1000.0 * season * shape ** 1.3


def ar1(rng, n, phi, sigma):
    out = np.empty(n)
    out[0] = rng.normal(0, sigma / np.sqrt(1 - phi ** 2))
    for k in range(1, n):
        out[k] = phi * out[k - 1] + rng.normal(0, sigma)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    cloud = np.clip(0.75 + ar1(rng, DAYS, 0.5, 0.18), 0.1, 1.0)
    base_irr = np.concatenate([clear_sky(d) * cloud[d] for d in range(DAYS)])
    for name, (mean, amp, peak, phi) in SITES.items():
        local = np.clip(1.0 + rng.normal(0, 0.05, DAYS * 24), 0.7, 1.2)
        irr = np.clip(base_irr * local, 0, None)
        level = np.exp(ar1(rng, DAYS, phi, 0.3))
        diurnal = 1.0 + amp * np.cos(2 * np.pi * (HOURS - peak) / 24)
        speed = np.concatenate([mean * level[d] * diurnal for d in range(DAYS)])
        speed *= np.exp(rng.normal(0, 0.12, speed.size))
        series = WeatherSeries(name, DAYS, np.round(speed, 3), np.round(irr, 3))
        write_weather_csv(args.out / f"{name}.csv", series)


if __name__ == "__main__":
    main()
