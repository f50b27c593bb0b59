"""Writes an approximate England mobility table in community-report layout.

The curves are hand-shaped to follow the broad course of 2020 (drop in mid
March, trough in April, slow recovery through summer) with a weekly cycle
and seeded noise. They are not the published figures.
"""

import csv
import datetime as dt
import math
import random
import sys

START = dt.date(2020, 2, 15)
END = dt.date(2020, 9, 30)

# (day offset from 1 March, percent change) knots, linearly interpolated
KNOTS = {
    "retail": [(-15, 0), (10, -8), (22, -80), (45, -80), (75, -70), (100, -45), (150, -25), (213, -22)],
    "grocery": [(-15, 2), (10, 8), (16, 15), (22, -35), (45, -30), (75, -18), (120, -10), (213, -8)],
    "parks": [(-15, -5), (10, 0), (22, -25), (45, -5), (75, 35), (120, 60), (180, 40), (213, 10)],
    "transit": [(-15, 0), (10, -10), (22, -69), (45, -70), (75, -66), (120, -50), (180, -40), (213, -38)],
    "workplaces": [(-15, 0), (10, -5), (22, -61), (45, -62), (75, -58), (120, -48), (170, -40), (213, -32)],
    "residential": [(-15, 0), (10, 3), (22, 25), (45, 24), (75, 19), (120, 13), (213, 9)],
}
WEEKLY = {"retail": 6, "grocery": 4, "parks": 15, "transit": 5, "workplaces": 9, "residential": 3}
COLUMNS = ["retail", "grocery", "parks", "transit", "workplaces", "residential"]


def interp(knots, x):
    for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
        if x0 <= x <= x1:
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return knots[-1][1] if x > knots[-1][0] else knots[0][1]


def main(path):
    rng = random.Random(2020)
    header = [
        "country_region_code", "country_region", "sub_region_1", "sub_region_2", "metro_area",
        "iso_3166_2_code", "census_fips_code", "place_id", "date",
    ] + [
        f"{c}_percent_change_from_baseline" if c != "retail" else "retail_and_recreation_percent_change_from_baseline"
        for c in COLUMNS
    ]
    header = [h.replace("grocery_percent", "grocery_and_pharmacy_percent").replace("transit_percent", "transit_stations_percent") for h in header]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        day = START
        while day <= END:
            x = (day - dt.date(2020, 3, 1)).days
            weekend = day.weekday() >= 5
            row = ["GB", "United Kingdom", "England", "", "", "GB-ENG", "", "", day.isoformat()]
            for c in COLUMNS:
                base = interp(KNOTS[c], x)
                cycle = WEEKLY[c] * (1 if weekend else -0.4)
                if c in ("workplaces", "transit") and weekend:
                    cycle = -WEEKLY[c]
                v = base + cycle + rng.gauss(0.0, 1.5)
                row.append(str(round(max(v, -99.0))))
            w.writerow(row)
            day += dt.timedelta(days=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "england_mobility_approx.csv")
