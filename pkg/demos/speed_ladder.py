"""Benchmark boot_lite along the optimisation ladder and print the table.

    python demos/speed_ladder.py [phases] [reps]
"""
import sys

from fidelsim import compiled_modules
from fidelsim.harness.bench import ladder_table, speed_ladder


def main():
    phases = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    reps = int(sys.argv[2]) if len(sys.argv) > 2 else 2
    print("compiled:", compiled_modules())
    reports = speed_ladder("boot_lite", phases, reps,
                           progress=lambda r: print(f"  {r.label} done", flush=True))
    print(ladder_table(reports))


if __name__ == "__main__":
    main()
