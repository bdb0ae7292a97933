"""Gauss-Legendre rules on [0, 1] and their element/facet scalings."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["QuadratureRule", "gauss_legendre", "element_rule", "facet_rule", "scaled"]

MAX_POINTS = 30


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _legendre(n: int, x: np.ndarray):
    # P_n(x) and P_n'(x) by the three-term recurrence
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadratureRule:
    """``n``-point Gauss-Legendre rule on (0, 1), nodes by Newton iteration."""
    if not (1 <= n <= MAX_POINTS):
        raise ValueError(f"number of Gauss points must be in 1..{MAX_POINTS}, got {n}")
    if n == 1:
        x, w = np.array([0.0]), np.array([2.0])
    else:
        k = np.arange(1, n + 1)
        x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
        for _ in range(100):
            p, dp = _legendre(n, x)
            dx = p / dp
            x = x - dx
            if np.max(np.abs(dx)) < 1e-15:
                break
        _, dp = _legendre(n, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        x, w = x[::-1], w[::-1]
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(nodes, weights)


def scaled(rule: QuadratureRule, a: float, b: float) -> QuadratureRule:
    return QuadratureRule(a + (b - a) * rule.nodes, (b - a) * rule.weights)


def element_rule(p: int, extra: int = 0) -> tuple[QuadratureRule, QuadratureRule]:
    """Tensor rule (one 1-D rule per direction) with ``p + 2 + extra`` points each."""
    if p < 1:
        raise ValueError("degree must be >= 1")
    r = gauss_legendre(p + 2 + extra)
    return r, r


def facet_rule(p: int, extra: int = 0) -> QuadratureRule:
    if p < 1:
        raise ValueError("degree must be >= 1")
    return gauss_legendre(p + 2 + extra)
