"""Relaxed projections, their compositions and fixed-point classification."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .geometry import ContractViolation, as_point

EXISTS = "Exists"
NOT_EXISTS = "NotExists"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True, eq=False)
class RelaxedProjection:
    """``x -> alpha * P_A(x) + (1 - alpha) * x``."""

    set: object
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractViolation(f"alpha must lie in [0, 1], got {self.alpha}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.alpha == 0.0:
            return np.array(x, dtype=float)
        p = self.set.project(x)
        if self.alpha == 1.0:
            return p
        return self.alpha * p + (1.0 - self.alpha) * x


def relax(rp: RelaxedProjection, x) -> np.ndarray:
    return rp(as_point(x, getattr(rp.set, "dim", None)))


def compose_apply(chain: Sequence[RelaxedProjection], x) -> np.ndarray:
    """Apply ``chain[0]`` first and ``chain[-1]`` last."""
    if not chain:
        raise ContractViolation("empty chain")
    x = as_point(x)
    for rp in chain:
        x = rp(x)
    return x


@dataclass(frozen=True)
class IterationConfig:
    """Stopping rules for :func:`iterate_to_fixed_point`.

    ``z_max`` bounds the last coordinate: an iterate beyond it that keeps
    rising is declared drifting. The non-drift coordinates count as settled
    when their residual is below ``settle_tol``, or below ``eps_fix`` and no
    longer halving over ``drift_window`` steps; a contact test is then run,
    and ``contact_tol`` is the excess below which contact counts as exact.
    """

    max_iters: int = 200_000
    eps_fix: float = 1e-9
    z_max: float = 1e6
    drift_window: int = 50
    settle_tol: float = 1e-13
    contact_tol: float = 1e-30

    def __post_init__(self):
        if self.max_iters < 1 or self.drift_window < 1:
            raise ContractViolation("max_iters and drift_window must be positive")
        if not 0.0 < self.eps_fix < 1.0:
            raise ContractViolation(f"eps_fix must lie in (0, 1), got {self.eps_fix}")
        if self.z_max <= 0.0:
            raise ContractViolation(f"z_max must be positive, got {self.z_max}")


@dataclass
class TraceSummary:
    first: np.ndarray
    last: np.ndarray
    residuals: list = field(default_factory=list)  # (iteration, residual), log-decimated
    jumps: list = field(default_factory=list)      # z-values reached by continuation


@dataclass
class IterationOutcome:
    status: str
    point: np.ndarray | None
    residual: float
    iterations: int
    reason: str | None = None
    trace: TraceSummary | None = None
    beta: float | None = None

    @property
    def exists(self) -> bool:
        return self.status == EXISTS


def _record(trace: TraceSummary, it: int, r: float) -> None:
    if it & (it - 1) == 0:
        trace.residuals.append((it, r))


def iterate_to_fixed_point(chain: Sequence[RelaxedProjection], start, config: IterationConfig | None = None,
                           contact: Callable[[np.ndarray], float] | None = None,
                           advance: Callable[[np.ndarray], np.ndarray] | None = None) -> IterationOutcome:
    """Picard iteration ``x <- T(x)`` with existence / non-existence detectors.

    * ``Exists`` once ``||T(x) - x|| <= eps_fix`` (and, when ``contact`` is
      given, the contact excess at ``x`` is at most ``contact_tol``).
    * ``NotExists("drift")`` when the last coordinate has not decreased over
      ``drift_window`` steps and exceeds ``z_max``.
    * ``NotExists("residual-floor")`` when the residual is stuck above
      ``10 * eps_fix`` while every other coordinate has stopped moving and
      the last one is not climbing steadily.
    * ``Inconclusive`` after ``max_iters``.

    ``contact`` and ``advance`` support slow monotone drift along the last
    axis: once the other coordinates settle and ``contact(x)`` is positive,
    ``advance`` moves the iterate forward along that axis. This is only
    sound when the fixed-point set is upward closed in the last coordinate.
    """
    cfg = config or IterationConfig()
    x = as_point(start).copy()
    trace = TraceSummary(first=x.copy(), last=x.copy())
    drift_axis = x.size >= 3
    rising = 0
    floor_hist: list[float] = []
    planar_hist: deque = deque(maxlen=cfg.drift_window + 1)
    r = math.inf
    for it in range(cfg.max_iters):
        y = compose_apply(chain, x)
        d = y - x
        r = float(np.linalg.norm(d))
        _record(trace, it + 1, r)
        planar = float(np.linalg.norm(d[:-1])) if drift_axis else r

        if r <= cfg.eps_fix and (contact is None or contact(x) <= cfg.contact_tol):
            trace.last = x.copy()
            return IterationOutcome(EXISTS, x, r, it, trace=trace)

        if drift_axis:
            rising = rising + 1 if d[-1] >= 0.0 else 0
            if rising >= cfg.drift_window and y[-1] > cfg.z_max:
                trace.last = y.copy()
                return IterationOutcome(NOT_EXISTS, y, r, it + 1, "drift", trace)

        planar_hist.append(planar)
        settled = planar <= cfg.settle_tol or (
            planar <= cfg.eps_fix and len(planar_hist) == planar_hist.maxlen
            and planar > 0.5 * planar_hist[0])
        if contact is not None and drift_axis and settled and contact(x) > cfg.contact_tol:
            # the other coordinates have settled and the z-velocity is strictly positive
            if advance is None:
                pass
            else:
                nxt = advance(y)
                trace.jumps.append(float(nxt[-1]))
                if nxt[-1] > cfg.z_max:
                    trace.last = nxt.copy()
                    return IterationOutcome(NOT_EXISTS, nxt, r, it + 1, "drift", trace)
                x = nxt
                rising = 0
                floor_hist.clear()
                planar_hist.clear()
                continue

        if r > 10.0 * cfg.eps_fix and planar <= cfg.eps_fix and rising < cfg.drift_window:
            floor_hist.append(r)
            if len(floor_hist) > cfg.drift_window:
                floor_hist.pop(0)
                lo, hi = min(floor_hist), max(floor_hist)
                if hi - lo <= 1e-12 * hi:
                    trace.last = y.copy()
                    return IterationOutcome(NOT_EXISTS, y, r, it + 1, "residual-floor", trace)
        else:
            floor_hist.clear()
        x = y
    trace.last = x.copy()
    return IterationOutcome(INCONCLUSIVE, x, r, cfg.max_iters, "max-iters", trace)


def beta_for(alpha: float, k: int) -> float:
    """Relaxation making ``(P^alpha)^(k-2)`` equal ``P^beta`` for a single set.

    ``1 - (1-alpha)^(k-2)`` summed as ``alpha * sum_j (1-alpha)^j`` so that
    ``k = 3`` gives ``alpha`` exactly.
    """
    return alpha * sum((1.0 - alpha) ** j for j in range(k - 2))


def scene_chain(scene, alpha: float, beta: float) -> list[RelaxedProjection]:
    return [RelaxedProjection(scene.A1, beta), RelaxedProjection(scene.A2, alpha),
            RelaxedProjection(scene.A3, alpha)]


def _next_rung(p: np.ndarray) -> np.ndarray:
    q = p.copy()
    # rounding can leave z an ulp below the rung it was lifted to
    q[-1] = math.floor(max(q[-1], 0.0) + 1e-9) + 1.0
    return q


def classify_triple(scene, alpha: float, beta: float, config: IterationConfig | None = None,
                    start=None) -> IterationOutcome:
    """Does ``P_{A3}^alpha P_{A2}^alpha P_{A1}^beta`` have a fixed point?

    Fixed points of the scene, when they exist, form the vertical ray above
    some height, so once ``(x, y)`` has settled and the contact excess is
    positive the iterate is lifted to the next integer height; heights
    beyond ``scene.horizon`` count as drift.
    """
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0.0 <= v <= 1.0:
            raise ContractViolation(f"{name} must lie in [0, 1], got {v}")
    cfg = config or IterationConfig()
    cfg = replace(cfg, z_max=min(cfg.z_max, scene.horizon))
    chain = scene_chain(scene, alpha, beta)
    if start is None:
        start = scene.A1.project(np.zeros(3))
    if beta == 0.0:
        # P_{A1} is not applied, so the contact excess says nothing about the z-velocity
        out = iterate_to_fixed_point(chain, start, cfg)
    else:
        out = iterate_to_fixed_point(chain, start, cfg, contact=scene.contact_excess, advance=_next_rung)
    out.beta = beta
    return out


def classify_alpha(scene, alpha: float, k: int = 3, config: IterationConfig | None = None,
                   start=None) -> IterationOutcome:
    """Does ``P_{A3}^a P_{A2}^a (P_{A1}^a)^(k-2)`` have a fixed point?

    The k-fold composition is the triple with ``beta = 1 - (1-a)^(k-2)`` on
    ``A1``; see :func:`classify_triple`.
    """
    if int(k) != k or k < 3:
        raise ContractViolation(f"k must be an integer >= 3, got {k}")
    if not 0.0 <= alpha <= 1.0:
        raise ContractViolation(f"alpha must lie in [0, 1], got {alpha}")
    return classify_triple(scene, alpha, beta_for(alpha, int(k)), config, start)
