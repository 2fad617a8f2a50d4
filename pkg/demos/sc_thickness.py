"""Shift of the SC/VE crossing time with stratum corneum thickness.

The crossing time grows roughly with the square of the SC thickness, so
doubling it should move the crossing about four times later.

    python3 demos/sc_thickness.py [--level N]
"""
import argparse

from skinperm.analysis import find_intersections
from skinperm.config import parse_config_dict
from skinperm.simulation import run_simulation


def crossing_days(profile, level):
    config = parse_config_dict({"chemical": "triclosan", "profile": profile, "t_end": 960.0,
                                "refinement_level": level, "output_times": {"count": 481}})
    hits = find_intersections(run_simulation(config).series, "sc", "ve")
    return hits[0][0] / 24.0 if hits else float("nan")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--level", type=int, default=2)
    args = parser.parse_args()
    cases = [("chest, h_sc 20 um", "chest/old"),
             ("chest, h_sc 40 um", {"preset": "chest", "h_sc": 40.0}),
             ("outer forearm", "outer_forearm/old")]
    base = None
    for label, profile in cases:
        days = crossing_days(profile, args.level)
        base = base or days
        print(f"{label:<20} crossing at {days:6.2f} d  (x{days / base:.2f})")


if __name__ == "__main__":
    main()
