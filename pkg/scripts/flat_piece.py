"""Discontinuity candidates against the free boundary for a flat-sided and a strictly convex body.

    python3 scripts/flat_piece.py [h]      (default h = 1/32; a few minutes per body)
"""

import sys

from fblab.bodies import Ellipsoid, SlabCappedBall
from fblab.constraint_maps import FlatPieceConfig, flat_piece_experiment


def main():
    h = float(sys.argv[1]) if len(sys.argv) > 1 else 1 / 32
    bodies = {
        "slab-capped ball": SlabCappedBall((0.0, 0.0, 0.0), 1.0, 0.5),
        "ellipsoid (1, 1, 0.5)": Ellipsoid((0.0, 0.0, 0.0), (1.0, 1.0, 0.5)),
    }
    for label, body in bodies.items():
        res = flat_piece_experiment(FlatPieceConfig(body=body, h=h))
        print(f"{label}: candidate within 2h of free boundary {res['a_candidate_on_free_boundary']}, "
              f"image on a flat piece {res['b_image_on_flat_piece']}, min distance {res['min_distance_h']:.1f} h")
        for row in res["candidates"]:
            print(f"    {row['point']}  {row['dist_to_fb_h']:.1f} h  flat fraction {row['flat_fraction']:.2f}")


if __name__ == "__main__":
    main()
