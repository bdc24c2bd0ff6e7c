"""Shortest and long-side paths around the unit disk: closed form against the discrete solver."""

import math

from fblab.bodies import Ball
from fblab.geodesics import GeodesicConfig, GeodesicProblem, disk_path_length, shortest_path_discrete

DISK = Ball((0.0, 0.0), 1.0)


def main():
    for a, b in (((-2.0, 0.0), (2.0, 0.0)), ((-2.0, 0.5), (2.0, 0.5)), ((-1.5, -1.0), (2.0, 1.0))):
        prob = GeodesicProblem(a, b, DISK)
        for side in ("short", "long"):
            path = shortest_path_discrete(prob, 64, GeodesicConfig(init=side))
            closed = disk_path_length(a, b, DISK, side)
            print(f"{a} -> {b} {side:>5}: discrete {path.length:.5f}  closed form {closed:.5f}  "
                  f"touching {path.touching}")
    print(f"2 sqrt 3 + pi / 3 = {2 * math.sqrt(3) + math.pi / 3:.5f}, "
          f"2 sqrt 3 + 5 pi / 3 = {2 * math.sqrt(3) + 5 * math.pi / 3:.5f}")


if __name__ == "__main__":
    main()
