"""Test-case generator for the Fibonacci demo problem.

Usage: generator.py [--levels 1,2,3] [--count 4] --seed S

Prints one JSON record per line: {"level": L, "input": [n]}. The largest
input of each level is always included so the level's scale is fixed.
"""
import argparse
import json
import random

# Input scale per level: n is drawn from [lo, hi].
LEVEL_BOUNDS = {0: (0, 10), 1: (25, 30), 2: (20000, 30000), 3: (90000, 100000)}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--levels", default="1,2,3")
    parser.add_argument("--count", type=int, default=4)
    parser.add_argument("--seed", type=int, required=True)
    args = parser.parse_args()
    rng = random.Random(args.seed)
    for level in (int(x) for x in args.levels.split(",")):
        lo, hi = LEVEL_BOUNDS[level]
        values = [hi] + [rng.randint(lo, hi) for _ in range(args.count - 1)]
        for n in values[: args.count]:
            print(json.dumps({"level": level, "input": [n]}))


if __name__ == "__main__":
    main()
