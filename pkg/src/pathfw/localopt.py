"""Box-constrained smooth local minimisation for the sliding steps.

Limited-memory quasi-Newton (memory 10) with gradient projection onto the
box and a backtracking Armijo line search.  The returned value never
exceeds the starting value; iterates stay inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

__all__ = ["BoxProblem", "minimize"]

MEMORY = 10
ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 40


@dataclass(eq=False)
class BoxProblem:
    """Objective x -> (value, gradient) on the box [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray
    objective: Callable[[np.ndarray], Tuple[float, np.ndarray]]

    def __post_init__(self):
        self.lower = np.ascontiguousarray(self.lower, dtype=float)
        self.upper = np.ascontiguousarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("bounds must be matching 1-d vectors")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dimension(self) -> int:
        return self.lower.size

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


def _two_loop(grad, s_list, y_list, rho_list):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if y_list:
        y = y_list[-1]
        q *= np.dot(s_list[-1], y) / np.dot(y, y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def minimize(
    problem: BoxProblem,
    x0: np.ndarray,
    max_iter: int = 200,
    gtol: float = 1e-8,
) -> Tuple[np.ndarray, float]:
    """Local descent from x0; stops on projected-gradient norm or max_iter."""
    x = problem.clip(np.ascontiguousarray(x0, dtype=float))
    f, g = problem.objective(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    s_list, y_list, rho_list = [], [], []
    for _ in range(max_iter):
        pg = x - problem.clip(x - g)
        if np.max(np.abs(pg)) <= gtol:
            break
        d = -_two_loop(g, s_list, y_list, rho_list)
        # kill components pushing outward at active bounds
        d = np.where((x <= problem.lower) & (d < 0), 0.0, d)
        d = np.where((x >= problem.upper) & (d > 0), 0.0, d)
        if np.dot(d, g) >= 0 or not np.any(d):
            d = -pg  # fall back to projected steepest descent
        alpha = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = problem.clip(x + alpha * d)
            gap = np.dot(g, x_new - x)
            if gap >= 0:
                alpha *= 0.5
                continue
            f_new, g_new = problem.objective(x_new)
            if np.isfinite(f_new) and f_new <= f + ARMIJO_C1 * gap:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        s = x_new - x
        y = g_new - g
        sy = np.dot(s, y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > MEMORY:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x, f, g = x_new, f_new, g_new
    return x, f
