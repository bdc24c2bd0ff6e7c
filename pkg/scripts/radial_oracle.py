"""Radial ball-in-ball oracle and the lattice energy deficit of x/|x|.

Prints the contact radius from the cubic and from shooting, then the rescaled
energy E(x/|x|, 0, r) / 8 pi for a few spacings, showing 1 - E / 8 pi ~ c h / r.
"""

import numpy as np

from fblab.constraint_maps import radial_profile, radial_shooting, rescaled_energy
from fblab.domain import BallDomain, build_grid


def main():
    prof = radial_profile(2.0)
    print(f"rho* (cubic)    = {prof.rho_star:.10f}")
    print(f"rho* (shooting) = {radial_shooting(2.0):.10f}")
    print()
    print(f"{'h':>8} {'r':>8} {'r/h':>6} {'E/8pi':>8} {'(1-E/8pi) r/h':>14}")
    for inv_h in (16, 32, 64):
        h = 1 / inv_h
        grid = build_grid(BallDomain((0.0, 0.0, 0.0), 1.0625), h)
        x = grid.coords
        u = np.where(grid.active[..., None], x / np.maximum(np.linalg.norm(x, axis=-1), 1e-300)[..., None], 0.0)
        radii = sorted({4 * h, 8 * h, 0.25, 0.5})
        rep = rescaled_energy(grid, u, (0.0, 0.0, 0.0), radii)
        for r, e in zip(rep.radii, rep.values):
            ratio = e / (8 * np.pi)
            print(f"{h:8.5f} {r:8.5f} {r / h:6.1f} {ratio:8.4f} {(1 - ratio) * r / h:14.3f}")


if __name__ == "__main__":
    main()
