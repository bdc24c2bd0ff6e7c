"""Compiled inner loops for the red-black constraint-map sweep.

Neighbour sums are grouped per axis pair, ((S_0 + S_1) + S_2), matching
``domain.neighbor_sum`` so lattice rotations reproduce results bitwise.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def relaxed_targets(uf, idx, offsets, omega):
    """Neighbour sums S, current values and over-relaxed targets for the nodes ``idx``."""
    n = idx.shape[0]
    m = uf.shape[1]
    n2 = 2 * offsets.shape[0]
    S = np.empty((n, m))
    cur = np.empty((n, m))
    target = np.empty((n, m))
    for k in range(n):
        i = idx[k]
        for c in range(m):
            t = uf[i - offsets[0], c] + uf[i + offsets[0], c]
            for a in range(1, offsets.shape[0]):
                t = t + (uf[i - offsets[a], c] + uf[i + offsets[a], c])
            S[k, c] = t
            x = uf[i, c]
            cur[k, c] = x
            mean = t / n2
            if omega == 1.0:
                target[k, c] = mean
            else:
                target[k, c] = x + omega * (mean - x)
    return S, cur, target


@numba.njit(cache=True)
def local_energy_change(cur, new, S, n2):
    """Per node: (new - cur) . (n2 (new + cur) - 2 S), the exact change of its edge energies."""
    n, m = cur.shape
    out = np.empty(n)
    for k in range(n):
        acc = 0.0
        for c in range(m):
            d = new[k, c] - cur[k, c]
            acc += d * (n2 * (new[k, c] + cur[k, c]) - 2.0 * S[k, c])
        out[k] = acc
    return out


@numba.njit(cache=True)
def scatter(uf, idx, vals):
    for k in range(idx.shape[0]):
        for c in range(uf.shape[1]):
            uf[idx[k], c] = vals[k, c]
