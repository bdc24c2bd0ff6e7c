"""k-axially symmetric solutions under refinement: axis free boundary, partials and cone angle.

    python3 scripts/axisym_trend.py [k] [scale]     (h = 1/32, 1/64, 1/128)
"""

import sys
import time

from fblab.axisym import AxisymProblem, axis_branch_check, cone_fit, contact_mask, solve_axisym


def main():
    k = int(sys.argv[1]) if len(sys.argv) > 1 else 2
    scale = float(sys.argv[2]) if len(sys.argv) > 2 else 2.0
    print(f"{'h':>9} {'time':>7} {'fb z':>9} {'max partial':>12} {'3h':>7} {'cos phi':>8} {'gap':>7}")
    for inv_h in (32, 64, 128):
        t0 = time.perf_counter()
        p = AxisymProblem(1 / inv_h, k, scale)
        u = solve_axisym(p)
        elapsed = time.perf_counter() - t0
        contact = contact_mask(p.grid, u)
        for rep in axis_branch_check(p.grid, u, k):
            if not rep.free_boundary:
                continue
            worst = max(abs(v) for v in rep.partials.values())
            try:
                cone = cone_fit(p.grid, contact, (0.0, rep.z), k)
                cos_phi, gap = f"{cone.cos_phi:8.4f}", f"{cone.gap:7.4f}"
            except ValueError:
                cos_phi, gap = f"{'-':>8}", f"{'-':>7}"
            print(f"{1 / inv_h:9.6f} {elapsed:6.1f}s {rep.z:9.5f} {worst:12.4f} {3 / inv_h:7.4f} {cos_phi} {gap}")


if __name__ == "__main__":
    main()
