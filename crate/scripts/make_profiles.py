"""Writes the synthetic member profiles shipped in configs/.

The profiles are smooth daily shapes; scenario randomness comes from the red
noise added by the simulator, not from here.
"""
import csv
import math
import os

HERE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")


def solar(hour, peak, sunrise=6.0, sunset=20.0):
    if hour <= sunrise or hour >= sunset:
        return 0.0
    return peak * math.sin(math.pi * (hour - sunrise) / (sunset - sunrise)) ** 1.5


def office(hour, base, peak):
    # Flat night load, ramp to a working-day plateau.
    day = 1.0 / (1.0 + math.exp(-(hour - 7.5) * 1.5)) - 1.0 / (1.0 + math.exp(-(hour - 18.5) * 1.5))
    return base + (peak - base) * day


def write(name, header, rows):
    with open(os.path.join(HERE, name), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.4f}" for x in r])


def rec2(steps=120):
    rows = []
    for t in range(steps):
        h = t % 24
        cons = 0.15 + 0.08 * math.sin(2 * math.pi * (h - 9) / 24) + (0.12 if 18 <= h <= 22 else 0.0)
        rows.append((cons, solar(h, 0.9)))
    write("rec2.csv", ["M1.consumption", "M2.production"], rows)


def rec7(steps=721):
    header = [
        "M2.consumption", "M3.consumption", "M4.consumption", "M5.consumption",
        "M6.consumption", "M6.production", "M7.consumption", "M7.production",
    ]
    rows = []
    for t in range(steps):
        # 3-minute steps starting at 06:00.
        h = (6.0 + t * 0.05) % 24
        rows.append((
            office(h, 20.0, 140.0),
            office(h, 35.0, 90.0),
            60.0 + 15.0 * math.sin(2 * math.pi * h / 24),
            office(h, 10.0, 55.0),
            office(h, 15.0, 70.0),
            solar(h, 260.0),
            office(h, 25.0, 110.0),
            solar(h, 180.0, 6.5, 19.5),
        ))
    write("rec7.csv", header, rows)


if __name__ == "__main__":
    rec2()
    rec7()
