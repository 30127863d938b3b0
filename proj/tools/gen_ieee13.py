#!/usr/bin/env python3
"""Writes data/ieee13.json from the IEEE 13-node test feeder tables.

Per-unit system: S_base = 5000 kVA per phase quantity, V_base = 4.16 kV / sqrt(3).
Loads become wye constant-power consumption. A delta leg load is shared
equally by the two phases of its leg. The distributed 632-671 load sits at
bus 670 one third along the line.
Switch 671-692 is a short near-ideal line. XFM-1 (500 kVA, 1.1% + j2%) is a
grounded-wye/grounded-wye series impedance. The substation transformer is the
slack; regulator RG60 sits between 650 and the 650-632 line.
"""

import json
import math
import pathlib

S_BASE_KVA = 5000.0
V_BASE = 4160.0 / math.sqrt(3.0)
Z_BASE = V_BASE ** 2 / (S_BASE_KVA * 1000.0)
FT_PER_MILE = 5280.0

# ohm/mile, upper triangle keyed by phase pair
CONFIGS = {
    "601": {"aa": (0.3465, 1.0179), "ab": (0.1560, 0.5017), "ac": (0.1580, 0.4236),
            "bb": (0.3375, 1.0478), "bc": (0.1535, 0.3849), "cc": (0.3414, 1.0348)},
    "602": {"aa": (0.7526, 1.1814), "ab": (0.1580, 0.4236), "ac": (0.1560, 0.5017),
            "bb": (0.7475, 1.1983), "bc": (0.1535, 0.3849), "cc": (0.7436, 1.2112)},
    "603": {"bb": (1.3294, 1.3471), "bc": (0.2066, 0.4591), "cc": (1.3238, 1.3569)},
    "604": {"aa": (1.3238, 1.3569), "ac": (0.2066, 0.4591), "cc": (1.3294, 1.3471)},
    "605": {"cc": (1.3292, 1.3475)},
    "606": {"aa": (0.7982, 0.4463), "ab": (0.3192, 0.0328), "ac": (0.2849, -0.0143),
            "bb": (0.7891, 0.4041), "bc": (0.3192, 0.0328), "cc": (0.7982, 0.4463)},
    "607": {"aa": (1.3425, 0.5124)},
}

# from, to, config, length ft
LINES = [
    ("rg60", "632", "601", 2000.0),
    ("632", "670", "601", 667.0),
    ("670", "671", "601", 1333.0),
    ("632", "633", "602", 500.0),
    ("632", "645", "603", 500.0),
    ("645", "646", "603", 300.0),
    ("671", "680", "601", 1000.0),
    ("671", "684", "604", 300.0),
    ("684", "611", "605", 300.0),
    ("684", "652", "607", 800.0),
    ("692", "675", "606", 500.0),
]

PHASES = {
    "650": "abc", "rg60": "abc", "632": "abc", "670": "abc", "671": "abc", "633": "abc",
    "634": "abc", "645": "bc", "646": "bc", "680": "abc", "684": "ac", "611": "c",
    "652": "a", "692": "abc", "675": "abc",
}

# kW + j kvar per phase
WYE_LOADS = {
    "634": {"a": (160, 110), "b": (120, 90), "c": (120, 90)},
    "645": {"b": (170, 125)},
    "652": {"a": (128, 86)},
    "675": {"a": (485, 190), "b": (68, 60), "c": (290, 212)},
    "611": {"c": (170, 80)},
    "670": {"a": (17, 10), "b": (66, 38), "c": (117, 68)},
}

# kW + j kvar per delta leg
DELTA_LOADS = {
    "646": {"bc": (230, 132)},
    "671": {"ab": (385, 220), "bc": (385, 220), "ca": (385, 220)},
    "692": {"ca": (170, 151)},
}


def wye_equivalent():
    loads = {bus: dict(v) for bus, v in WYE_LOADS.items()}
    for bus, legs in DELTA_LOADS.items():
        per_phase = loads.setdefault(bus, {})
        for leg, (p, q) in legs.items():
            for ph in leg:
                old = per_phase.get(ph, (0.0, 0.0))
                per_phase[ph] = (old[0] + p / 2.0, old[1] + q / 2.0)
    return loads

# kvar per phase
CAPACITORS = {"675": {"a": 200, "b": 200, "c": 200}, "611": {"c": 100}}


def line_z(config, feet):
    table = CONFIGS[config]
    phases = sorted({p for key in table for p in key})
    scale = feet / FT_PER_MILE / Z_BASE
    rows = []
    for r in phases:
        row = []
        for c in phases:
            key = "".join(sorted(r + c))
            re, im = table[key]
            row.append([re * scale, im * scale])
        rows.append(row)
    return {"phases": "".join(phases), "rows": rows}


def diag(phases, value):
    return {"phases": phases,
            "rows": [[list(value) if r == c else [0.0, 0.0] for c in phases] for r in phases]}


def main():
    loads = wye_equivalent()
    buses = []
    for bus, phases in PHASES.items():
        entry = {"id": bus, "phases": phases}
        if bus == "650":
            entry["slack"] = True
        if bus in loads:
            ph = "".join(p for p in "abc" if p in loads[bus])
            entry["load"] = {"phases": ph,
                             "values": [[loads[bus][p][0] / S_BASE_KVA, loads[bus][p][1] / S_BASE_KVA] for p in ph]}
        if bus in CAPACITORS:
            ph = "".join(p for p in "abc" if p in CAPACITORS[bus])
            entry["shunt"] = {"phases": ph,
                              "rows": [[[0.0, CAPACITORS[bus][r] / S_BASE_KVA] if r == c else [0.0, 0.0]
                                        for c in ph] for r in ph]}
        buses.append(entry)

    lines = [{"from": f, "to": t, "z": line_z(cfg, ft)} for f, t, cfg, ft in LINES]
    xfm = (0.011 * S_BASE_KVA / 500.0, 0.02 * S_BASE_KVA / 500.0)
    lines.append({"from": "633", "to": "634", "z": diag("abc", xfm)})
    lines.append({"from": "671", "to": "692", "z": diag("abc", (1e-4, 1e-4))})

    a = 2.0 * math.pi / 3.0
    doc = {
        "format": 1,
        "name": "ieee13",
        "slack_voltage": {"phases": "abc",
                          "values": [[1.0, 0.0], [math.cos(-a), math.sin(-a)], [math.cos(a), math.sin(a)]]},
        "buses": buses,
        "lines": lines,
        "svrs": [{"from": "650", "to": "rg60", "kind": "B", "phases": "abc",
                  "tap_min": -16, "tap_max": 16, "step": 0.00625}],
        "defaults": {"v_min": 0.93, "v_max": 1.10, "verify_v_min": 0.90, "verify_v_max": 1.10},
    }
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "ieee13.json"
    out.write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
