"""Triclosan on old chest skin for 16 days: daily per-layer masses.

    python3 demos/canonical.py [--level N]
"""
import argparse
import os

from skinperm.config import parse_config

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--level", type=int, default=3)
    args = parser.parse_args()

    from skinperm.simulation import run_simulation
    config = parse_config(os.path.join(HERE, "canonical.json")).replace(
        refinement_level=args.level, emit=["csv"])
    result = run_simulation(config)
    s = result.series
    print(f"{'day':>5} {'DEPOS':>8} {'SC':>8} {'VE':>8} {'DE':>8} {'released':>9}")
    for k in range(0, len(s), 6):
        print(f"{s.times[k] / 24:5.1f} {s.depos[k]:8.3f} {s.sc[k]:8.3f} {s.ve[k]:8.3f} "
              f"{s.de[k]:8.3f} {s.released[k]:9.4f}")
    print(f"mass drift {result.drift:.1e}, {result.stats.accepted} steps, "
          f"{result.stats.rejected} rejected")


if __name__ == "__main__":
    main()
