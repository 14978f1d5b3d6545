#!/usr/bin/env python3
"""Writes har_like.csv: a small activity-recognition style table.

Each of 30 subjects contributes 40 windows over 6 activities. Activity
means are shared; every subject adds its own offset and gain, so the
per-subject partition is non-identically distributed.

Columns: subject, activity, f0..f11. Rerunning reproduces the file exactly.
"""

import csv
import random

SUBJECTS = 30
WINDOWS = 40
ACTIVITIES = 6
FEATURES = 12
SEED = 7


def main(path="har_like.csv"):
    rng = random.Random(SEED)
    means = [[rng.gauss(0.0, 1.0) for _ in range(FEATURES)] for _ in range(ACTIVITIES)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["subject", "activity"] + [f"f{j}" for j in range(FEATURES)])
        for s in range(1, SUBJECTS + 1):
            offset = [rng.gauss(0.0, 0.3) for _ in range(FEATURES)]
            gain = rng.uniform(0.8, 1.2)
            # subjects favour a few activities, as real recordings do
            prefs = [rng.random() + 0.2 for _ in range(ACTIVITIES)]
            for _ in range(WINDOWS):
                a = rng.choices(range(ACTIVITIES), weights=prefs)[0]
                row = [gain * m + o + rng.gauss(0.0, 0.45) for m, o in zip(means[a], offset)]
                out.writerow([s, a + 1] + [f"{x:.4f}" for x in row])


if __name__ == "__main__":
    main()
