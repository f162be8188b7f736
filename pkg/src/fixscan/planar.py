"""Planar fixed points of ``P_{B3}^a P_{B2}^a P_{B1}^b``.

``B1`` is the parabola epigraph ``y >= x**2``, ``B2 = {(1, 0)}`` and
``B3 = {(0, 0)}``. The fixed point projects onto ``B1`` at
``(phi(a), phi(a)**2)`` whatever ``b`` is, where ``phi(a)`` solves
``2x^3 + x = (1 - a) / (2 - a)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    ContractViolation,
    ParabolaEpigraph,
    Singleton,
    monotone_cubic_root,
    project_parabola_epigraph,
)

B1 = ParabolaEpigraph()
B2 = Singleton((1.0, 0.0))
B3 = Singleton((0.0, 0.0))


class InconclusiveResult(RuntimeError):
    """Fixed-point iteration hit its iteration cap."""


def _check_unit(name: str, v: float, open_left: bool = False) -> float:
    v = float(v)
    ok = (0.0 < v <= 1.0) if open_left else (0.0 <= v <= 1.0)
    if not ok:
        interval = "(0, 1]" if open_left else "[0, 1]"
        raise ContractViolation(f"{name} must lie in {interval}, got {v}")
    return v


def psi(alpha: float) -> float:
    """``(1 - alpha) / (2 - alpha)``, decreasing from 1/2 to 0 on [0, 1]."""
    alpha = _check_unit("alpha", alpha)
    return (1.0 - alpha) / (2.0 - alpha)


def phi(alpha: float) -> float:
    """Root of ``2x^3 + x = psi(alpha)``; ``phi(0)`` is the continuous extension."""
    return monotone_cubic_root(2.0, 1.0, psi(alpha))


def planar_map(alpha: float, beta: float, p) -> np.ndarray:
    """One application of ``T = P_{B3}^alpha P_{B2}^alpha P_{B1}^beta``."""
    p = np.asarray(p, dtype=float)
    q = (1.0 - beta) * p + beta * project_parabola_epigraph(p)
    q = (1.0 - alpha) * q + alpha * np.array([1.0, 0.0])
    return (1.0 - alpha) * q


@dataclass(frozen=True)
class PlanarFixedPoint:
    alpha: float
    beta: float
    u: np.ndarray
    x_proj: np.ndarray
    residual: float
    iterations: int = 0


def planar_fixed_point_closed_form(alpha: float, beta: float) -> PlanarFixedPoint:
    """Closed-form fixed point ``u = x + k((alpha-2)x + (1-alpha)e1)`` with
    ``x = (phi, phi**2)`` and ``k = alpha / (1 - (1-alpha)^2 (1-beta))``."""
    alpha = _check_unit("alpha", alpha, open_left=True)
    beta = _check_unit("beta", beta, open_left=True)
    x1 = phi(alpha)
    x = np.array([x1, x1 * x1])
    k = alpha / (1.0 - (1.0 - alpha) ** 2 * (1.0 - beta))
    u = x + k * ((alpha - 2.0) * x + (1.0 - alpha) * np.array([1.0, 0.0]))
    res = float(np.linalg.norm(planar_map(alpha, beta, u) - u))
    return PlanarFixedPoint(alpha, beta, u, x, res)


def planar_fixed_point_iterative(alpha: float, beta: float, start=(0.0, 0.0),
                                 tol: float = 1e-13, max_iters: int = 100_000) -> PlanarFixedPoint:
    """Picard iteration of the planar contraction (factor at most ``(1-alpha)**2``)."""
    alpha = _check_unit("alpha", alpha, open_left=True)
    beta = _check_unit("beta", beta, open_left=True)
    u = np.asarray(start, dtype=float).copy()
    for it in range(1, max_iters + 1):
        nxt = planar_map(alpha, beta, u)
        res = float(np.linalg.norm(nxt - u))
        u = nxt
        if res <= tol:
            res = float(np.linalg.norm(planar_map(alpha, beta, u) - u))
            return PlanarFixedPoint(alpha, beta, u, project_parabola_epigraph(u), res, it)
    raise InconclusiveResult(f"no convergence after {max_iters} iterations (residual {res:.3e})")
