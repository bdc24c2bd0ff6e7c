"""Legendre polynomials by the three-term recurrence and their zeros by Newton."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NewtonError(RuntimeError):
    pass


@dataclass(frozen=True)
class LegendreTable:
    order: int
    zeros: np.ndarray

    def nearest_zero(self, x: float) -> tuple[float, float]:
        """Closest tabulated zero to ``x`` and the gap |x - zero|."""
        if self.order == 0:
            raise ValueError("P_0 has no zeros")
        k = int(np.argmin(np.abs(self.zeros - x)))
        z = float(self.zeros[k])
        return z, abs(x - z)


def _eval_pair(n: int, x):
    """(P_n(x), P_{n-1}(x)); P_{-1} is taken as 0."""
    x = np.asarray(x, float)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    for k in range(n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p, p_prev


def legendre_eval(n: int, x):
    if n < 0:
        raise ValueError("order must be nonnegative")
    p, _ = _eval_pair(n, x)
    return p if np.ndim(p) else float(p)


def legendre_deriv(n: int, x):
    """P_n'(x) from n (x P_n - P_{n-1}) / (x^2 - 1); endpoint limit +-n(n+1)/2."""
    x = np.asarray(x, float)
    p, q = _eval_pair(n, x)
    end = np.abs(x) == 1.0
    den = np.where(end, 1.0, x * x - 1.0)
    d = n * (x * p - q) / den
    limit = 0.5 * n * (n + 1) * np.where(x > 0, 1.0, (-1.0) ** (n + 1))
    d = np.where(end, limit, d)
    return d if np.ndim(d) else float(d)


def legendre_zeros(n: int, max_iter: int = 40) -> LegendreTable:
    """Zeros of P_n from Chebyshev-like guesses cos(pi (i - 1/4) / (n + 1/2))."""
    if not 1 <= n <= 100:
        raise ValueError("order must lie in [1, 100]")
    half = (n + 1) // 2
    i = np.arange(1, half + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p, q = _eval_pair(n, x)
        dp = n * (x * p - q) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.all(np.abs(dx) <= 1e-16 * np.maximum(1.0, np.abs(x))):
            break
    else:
        resid = np.max(np.abs(_eval_pair(n, x)[0]))
        if resid > 1e-12:
            raise NewtonError(f"Newton iteration for P_{n} zeros did not settle (residual {resid:.2e})")
    if n % 2:
        x[-1] = 0.0  # odd orders: the middle guess converges to the exact zero
    pos = np.sort(x[x > 0])
    neg = -pos[::-1]
    zeros = np.concatenate([neg, [0.0], pos]) if n % 2 else np.concatenate([neg, pos])
    return LegendreTable(n, zeros)
