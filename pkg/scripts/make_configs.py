"""Write the bundled 2- and 4-microgrid system configurations (deterministic)."""

import json
from pathlib import Path

import numpy as np

H = np.arange(24)
OUT = Path(__file__).resolve().parents[1] / "src" / "gridplan" / "data"

TARIFF = np.where((H >= 8) & (H < 22), 1.3, 0.8)


def load_shape(base, peak, peak_hour):
    return np.round(base + peak * np.exp(-0.5 * ((H - peak_hour) / 4.0) ** 2), 3)


def user(uid, total, pref_hour, width, beta=0.1):
    pref = np.exp(-0.5 * ((H - pref_hour) / width) ** 2)
    pref = total * pref / pref.sum()
    return {
        "id": uid,
        "daily_total": total,
        "l_min": [0.0] * 24,
        "l_max": np.round(np.maximum(2.5 * pref, total / 12), 3).tolist(),
        "preferred": np.round(pref, 6).tolist(),
        "beta": beta,
    }


def microgrid(mid, loc, fixed, base, peak, peak_hour, users):
    e = 2000.0
    return {
        "id": mid,
        "location_id": loc,
        "fixed_cost": fixed,
        "solar_unit_cost": 9000.0,
        "wind_unit_cost": 11000.0,
        "solar_cap": 5000.0,
        "wind_cap": 5000.0,
        "grid_cap": 5000.0,
        "inelastic_load": load_shape(base, peak, peak_hour).tolist(),
        "storage": {
            "capacity": e,
            "dod": 0.8,
            "charge_cap": 0.2 * e,
            "discharge_cap": 0.2 * e,
            "charge_eff": 0.98,
            "discharge_eff": 0.98,
            "wear_cost": 0.2,
        },
        "users": users,
    }


MGS = [
    microgrid("MG1", "URB", 3.0e7, 700.0, 500.0, 15, [user("ev", 2400.0, 20, 2.5), user("hvac", 3600.0, 14, 3.0)]),
    microgrid("MG2", "SUB", 0.3e7, 500.0, 400.0, 19, [user("ev", 1800.0, 21, 2.5), user("hvac", 2400.0, 15, 3.0)]),
    microgrid("MG3", "HIL", 1.5e7, 600.0, 300.0, 13, [user("ev", 1200.0, 22, 2.5), user("hvac", 3000.0, 13, 3.0)]),
    microgrid("MG4", "ISL", 2.0e7, 500.0, 300.0, 18, [user("ev", 1200.0, 20, 2.5), user("hvac", 2400.0, 14, 3.0)]),
]


def system(mgs):
    m = len(mgs)
    eff = np.full((m, m), 0.95)
    np.fill_diagonal(eff, 1.0)
    return {
        "horizon": {"days": 7300, "daily_rate": 0.0001},
        "tariff": TARIFF.tolist(),
        "distribution_eff": eff.tolist(),
        "microgrids": mgs,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "system_4mg.json").write_text(json.dumps(system(MGS), indent=1) + "\n")
    (OUT / "system_2mg.json").write_text(json.dumps(system([MGS[0], MGS[2]]), indent=1) + "\n")


if __name__ == "__main__":
    main()
