"""Metric projections onto the closed convex sets of the counterexample scenes.

Every set knows its ambient dimension, a membership test and its exact
projection. A grid-based brute-force projector is provided as an oracle for
tests; it never calls the exact projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

__all__ = [
    "ContractViolation",
    "SolverFailure",
    "OracleFailure",
    "ConvexFunction",
    "Paraboloid",
    "Singleton",
    "VerticalRay",
    "ParabolaEpigraph",
    "SmoothEpigraph",
    "ProductWithHalfLine",
    "as_point",
    "project",
    "monotone_cubic_root",
    "project_parabola_epigraph",
    "project_smooth_epigraph",
    "brute_force_project",
]


class ContractViolation(ValueError):
    """Raised when an operation is called outside its documented domain."""


class SolverFailure(RuntimeError):
    """Raised when an iterative projection solver fails to converge."""

    def __init__(self, message: str, last_iterate, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.last_iterate = last_iterate
        self.residual = residual


class OracleFailure(RuntimeError):
    """The brute-force sampling window contains no point of the set."""


def as_point(p, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ContractViolation(f"a point must be a non-empty 1-D sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"point has non-finite coordinates: {arr}")
    if dim is not None and arr.size != dim:
        raise ContractViolation(f"expected a point of dimension {dim}, got {arr.size}")
    return arr


# --------------------------------------------------------------------------
# scalar root finding
# --------------------------------------------------------------------------

def _increasing_root(fn, dfn, lo: float, hi: float, xtol: float = 1e-10,
                     rtol: float = 1e-14, max_newton: int = 8) -> float:
    """Root of an increasing function bracketed by ``fn(lo) <= 0 <= fn(hi)``.

    Bisection shrinks the bracket, then Newton polishes inside it.
    """
    while hi - lo > xtol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    x = 0.5 * (lo + hi)
    r = fn(x)
    for _ in range(max_newton):
        if abs(r) <= rtol:
            break
        d = dfn(x)
        if d <= 0.0:
            break
        xn = x - r / d
        if not lo <= xn <= hi:
            break
        rn = fn(xn)
        if abs(rn) >= abs(r):
            break
        x, r = xn, rn
    return x


def monotone_cubic_root(a3: float, a1: float, rhs: float) -> float:
    """Unique real root of ``a3*x**3 + a1*x = rhs`` for ``a3, a1 > 0``.

    The root satisfies ``|x| <= |rhs| / a1``, which seeds the bisection
    bracket; Newton steps polish the result to near machine precision.
    """
    for name, v in (("a3", a3), ("a1", a1), ("rhs", rhs)):
        if not math.isfinite(v):
            raise ContractViolation(f"{name} must be finite, got {v}")
    if a3 <= 0.0 or a1 <= 0.0:
        raise ContractViolation(f"need a3 > 0 and a1 > 0, got a3={a3}, a1={a1}")
    if rhs == 0.0:
        return 0.0
    bound = max(1.0, abs(rhs) / a1)
    return _increasing_root(lambda x: (a3 * x * x + a1) * x - rhs,
                            lambda x: 3.0 * a3 * x * x + a1, -bound, bound)


# --------------------------------------------------------------------------
# convex function handles for SmoothEpigraph
# --------------------------------------------------------------------------

class ConvexFunction(Protocol):
    """A convex C^2 function of ``(x, z)`` on ``R x [0, inf)``.

    ``value`` must accept numpy arrays; ``derivatives`` returns the value,
    the gradient ``(f_x, f_z)`` and the 2x2 Hessian at a single point, and
    ``partials`` the same numbers as plain floats
    ``(f, f_x, f_z, f_xx, f_xz, f_zz)``.
    """

    tail_bound: float

    def value(self, x, z): ...

    def derivatives(self, x: float, z: float) -> tuple[float, np.ndarray, np.ndarray]: ...

    def partials(self, x: float, z: float) -> tuple[float, ...]: ...


class Paraboloid:
    """``f(x, z) = x**2``, independent of ``z``."""

    tail_bound = 0.0

    def value(self, x, z):
        x = np.asarray(x, dtype=float)
        return x * x + 0.0 * np.asarray(z, dtype=float)

    def derivatives(self, x, z):
        return x * x, np.array([2.0 * x, 0.0]), np.array([[2.0, 0.0], [0.0, 0.0]])

    def partials(self, x, z):
        return x * x, 2.0 * x, 0.0, 2.0, 0.0, 0.0


# --------------------------------------------------------------------------
# set descriptors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Singleton:
    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in as_point(self.point)))

    @property
    def dim(self) -> int:
        return len(self.point)

    def contains(self, p, tol: float = 0.0) -> bool:
        return float(np.linalg.norm(as_point(p, self.dim) - self.point)) <= tol

    def project(self, p) -> np.ndarray:
        as_point(p, self.dim)
        return np.array(self.point)

    def boundary_samples(self, lo, hi, step):
        pt = np.array(self.point)
        if np.all(pt >= lo) and np.all(pt <= hi):
            return pt[None, :]
        return np.empty((0, self.dim))


@dataclass(frozen=True)
class VerticalRay:
    """``{(bx, by, z) : z >= 0}``."""

    base: tuple

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(c) for c in as_point(self.base, 2)))

    dim = 3

    def contains(self, p, tol: float = 0.0) -> bool:
        p = as_point(p, 3)
        return math.hypot(p[0] - self.base[0], p[1] - self.base[1]) <= tol and p[2] >= -tol

    def project(self, p) -> np.ndarray:
        p = as_point(p, 3)
        return np.array([self.base[0], self.base[1], max(p[2], 0.0)])

    def boundary_samples(self, lo, hi, step):
        bx, by = self.base
        if not (lo[0] <= bx <= hi[0] and lo[1] <= by <= hi[1]):
            return np.empty((0, 3))
        zs = _grid(max(lo[2], 0.0), hi[2], step)
        out = np.empty((zs.size, 3))
        out[:, 0], out[:, 1], out[:, 2] = bx, by, zs
        return out


def project_parabola_epigraph(p) -> np.ndarray:
    """Projection onto ``{(x, y) : y >= x**2}``.

    Outside points land at ``(x, x**2)`` where ``x`` solves
    ``2x^3 + (1 - 2y)x - u = 0`` on the branch carrying the sign of ``u``.
    """
    u, v = as_point(p, 2)
    if v >= u * u:
        return np.array([u, v])
    a1 = 1.0 - 2.0 * v
    if a1 > 0.0:
        x = monotone_cubic_root(2.0, a1, u)
    else:
        # cubic increasing only for |x| > sqrt(-a1/6); the root shares the sign of u
        edge = math.sqrt(-a1 / 6.0)
        s = 1.0 if u > 0 else -1.0
        au = abs(u)
        hi = max(1.0, edge + 1.0, au)
        while 2.0 * hi ** 3 + a1 * hi - au < 0.0:
            hi *= 2.0
        x = s * _increasing_root(lambda t: (2.0 * t * t + a1) * t - au,
                                 lambda t: 6.0 * t * t + a1, edge, hi)
    return np.array([x, x * x])


@dataclass(frozen=True)
class ParabolaEpigraph:
    """``{(x, y) : y >= x**2}`` in the plane."""

    dim = 2

    def contains(self, p, tol: float = 0.0) -> bool:
        u, v = as_point(p, 2)
        return v >= u * u - tol

    def project(self, p) -> np.ndarray:
        return project_parabola_epigraph(p)

    def boundary_samples(self, lo, hi, step):
        xs = _grid(lo[0], hi[0], step)
        ys = xs * xs
        keep = (ys >= lo[1]) & (ys <= hi[1])
        return np.column_stack([xs[keep], ys[keep]])

    def member_samples(self, lo, hi, step):
        xs, ys = np.meshgrid(_grid(lo[0], hi[0], step), _grid(lo[1], hi[1], step), indexing="ij")
        keep = ys >= xs * xs
        return np.column_stack([xs[keep], ys[keep]])


def _solve_face(func, xp, yp, zp, tol, max_iter):
    """Nearest point of the curve ``{(x, f(x, 0), 0)}`` to ``p`` (1-D Newton)."""

    def resid(x):
        f, fx, fz, fxx, _, _ = func.partials(x, 0.0)
        s = f - yp
        return (x - xp) + s * fx, f, fx, fz, fxx, s

    x = xp
    r, f, fx, fz, fxx, s = resid(x)
    polish = 0
    for _ in range(max_iter + 3):
        if abs(r) <= tol:
            polish += 1
            if polish > 3:
                break
        d = 1.0 + fx * fx + s * fxx
        step = r / d if d > 0.0 else r
        t = 1.0
        while True:
            cand = resid(x - t * step)
            if abs(cand[0]) < abs(r) or polish or t < 1e-12:
                break
            t *= 0.5
        if abs(cand[0]) >= abs(r):
            break
        x = x - t * step
        r, f, fx, fz, fxx, s = cand
    if abs(r) > tol:
        raise SolverFailure("face projection did not converge", np.array([x, f, 0.0]), abs(r))
    return x, f, fz, s


def _solve_surface(func, xp, yp, zp, x, z, tol, max_iter):
    """Damped Newton on the stationarity system; polishes past ``tol`` while it helps."""

    def resid(x, z):
        f, fx, fz, fxx, fxz, fzz = func.partials(x, z)
        s = f - yp
        r0 = x - xp + s * fx
        r1 = z - zp + s * fz
        return math.hypot(r0, r1), r0, r1, f, fx, fz, fxx, fxz, fzz, s

    cur = resid(x, z)
    polish = 0
    for _ in range(max_iter + 3):
        nrm, r0, r1, f, fx, fz, fxx, fxz, fzz, s = cur
        if nrm <= tol:
            polish += 1
            if polish > 3:
                break
        j00 = 1.0 + fx * fx + s * fxx
        j01 = fx * fz + s * fxz
        j11 = 1.0 + fz * fz + s * fzz
        det = j00 * j11 - j01 * j01
        if det > 0.0:
            d0 = (j11 * r0 - j01 * r1) / det
            d1 = (j00 * r1 - j01 * r0) / det
        else:
            d0, d1 = r0, r1
        t = 1.0
        while True:
            cand = resid(x - t * d0, z - t * d1)
            if cand[0] < nrm or polish or t < 1e-12:
                break
            t *= 0.5
        if cand[0] >= nrm:
            break
        x, z = x - t * d0, z - t * d1
        cur = cand
    nrm, f = cur[0], cur[3]
    if nrm > tol:
        raise SolverFailure("epigraph projection did not converge", np.array([x, f, z]), nrm)
    return x, z, f


def project_smooth_epigraph(func: ConvexFunction, p, tol: float = 1e-10,
                            max_iter: int = 100) -> np.ndarray:
    """Projection onto ``{(x, y, z) : z >= 0, y >= f(x, z)}``.

    Outside points are sent to the surface point ``q = (x, f(x, z), z)``
    solving ``x = x_p - s f_x``, ``z = z_p - s f_z`` with ``s = f - y_p``
    (damped Newton). When the surface solution has ``z < 0`` or ``p`` lies
    below the half-space, the face ``z = 0`` is tried and accepted if the
    multiplier of ``z >= 0`` is non-negative.
    """
    xp, yp, zp = (float(c) for c in as_point(p, 3))
    zc = max(zp, 0.0)
    if zp >= 0.0 and yp >= float(func.value(xp, zp)):
        return np.array([xp, yp, zp])

    def face():
        if zp <= 0.0 and yp >= float(func.value(xp, 0.0)):
            return np.array([xp, yp, 0.0])
        x, f, fz, s = _solve_face(func, xp, yp, zp, tol, max_iter)
        mult = s * fz - zp
        if mult >= -tol:
            return np.array([x, f, 0.0])
        return None

    if zp < 0.0:
        q = face()
        if q is not None:
            return q
    x, z, f = _solve_surface(func, xp, yp, zp, xp, zc, tol, max_iter)
    if z >= 0.0:
        return np.array([x, f, z])
    q = face()
    if q is None:
        raise SolverFailure("active-set switch found no consistent face", np.array([x, f, z]), abs(z))
    return q


@dataclass(frozen=True, eq=False)
class SmoothEpigraph:
    """``{(x, y, z) : z >= 0, y >= f(x, z)}`` for a convex C^2 ``f``."""

    func: ConvexFunction
    tol: float = 1e-10
    max_iter: int = 100

    dim = 3

    def contains(self, p, tol: float = 0.0) -> bool:
        x, y, z = as_point(p, 3)
        return z >= -tol and y >= float(self.func.value(x, max(z, 0.0))) - tol

    def project(self, p) -> np.ndarray:
        return project_smooth_epigraph(self.func, p, self.tol, self.max_iter)

    def boundary_samples(self, lo, hi, step):
        xs = _grid(lo[0], hi[0], step)
        zs = _grid(max(lo[2], 0.0), hi[2], step)
        parts = []
        if xs.size and zs.size:
            X, Z = np.meshgrid(xs, zs, indexing="ij")
            Y = np.asarray(self.func.value(X.ravel(), Z.ravel()))
            keep = (Y >= lo[1]) & (Y <= hi[1])
            parts.append(np.column_stack([X.ravel()[keep], Y[keep], Z.ravel()[keep]]))
        if lo[2] <= 0.0 <= hi[2] and xs.size:
            X, Y = np.meshgrid(xs, _grid(lo[1], hi[1], step), indexing="ij")
            fx0 = np.asarray(self.func.value(X.ravel(), np.zeros(X.size)))
            keep = Y.ravel() >= fx0
            parts.append(np.column_stack([X.ravel()[keep], Y.ravel()[keep], np.zeros(int(keep.sum()))]))
        return np.concatenate(parts) if parts else np.empty((0, 3))


@dataclass(frozen=True, eq=False)
class ProductWithHalfLine:
    """``B x [0, inf)`` for a planar closed convex set ``B``."""

    planar: object

    dim = 3

    def contains(self, p, tol: float = 0.0) -> bool:
        p = as_point(p, 3)
        return p[2] >= -tol and self.planar.contains(p[:2], tol)

    def project(self, p) -> np.ndarray:
        p = as_point(p, 3)
        q = self.planar.project(p[:2])
        return np.array([q[0], q[1], max(p[2], 0.0)])

    def boundary_samples(self, lo, hi, step):
        rim = self.planar.boundary_samples(lo[:2], hi[:2], step)
        zs = _grid(max(lo[2], 0.0), hi[2], step)
        parts = []
        if rim.size and zs.size:
            parts.append(np.column_stack([np.repeat(rim, zs.size, axis=0), np.tile(zs, rim.shape[0])]))
        if lo[2] <= 0.0 <= hi[2]:
            members = getattr(self.planar, "member_samples", self.planar.boundary_samples)(lo[:2], hi[:2], step)
            if members.size:
                parts.append(np.column_stack([members, np.zeros(members.shape[0])]))
        return np.concatenate(parts) if parts else np.empty((0, 3))


def project(set_, p) -> np.ndarray:
    """Nearest point of ``set_`` to ``p``."""
    return set_.project(as_point(p, set_.dim))


# --------------------------------------------------------------------------
# brute-force oracle
# --------------------------------------------------------------------------

def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        return np.empty(0)
    k0 = math.ceil(lo / step - 1e-9)
    k1 = math.floor(hi / step + 1e-9)
    return np.arange(k0, k1 + 1) * step


def brute_force_project(set_, p, step: float = 1e-4, window: tuple | None = None,
                        coarse: float = 1e-2, halo: int = 6) -> np.ndarray:
    """Grid argmin of the distance to sampled boundary points.

    The projection of an outside point lies on the boundary, so only the
    boundary is sampled (members ``p`` are returned as is). Sampling runs
    coarse to fine: each level refines a window of ``halo`` cells around
    the previous argmin, down to ``step``.
    """
    p = as_point(p, set_.dim)
    if set_.contains(p):
        return p.copy()
    if window is None:
        lo, hi = p - 3.0, p + 3.0
    else:
        lo, hi = (np.asarray(w, dtype=float) for w in window)
    steps = []
    h = coarse
    while h > step * (1 + 1e-9):
        steps.append(h)
        h /= 10.0
    steps.append(step)
    best = None
    for h in steps:
        if best is not None:
            lo = np.maximum(lo, best - halo * h * 10.0)
            hi = np.minimum(hi, best + halo * h * 10.0)
        cand = set_.boundary_samples(lo, hi, h)
        if cand.shape[0] == 0:
            raise OracleFailure(f"no set point sampled in window {lo}..{hi} at step {h}")
        d = np.sum((cand - p) ** 2, axis=1)
        best = cand[int(np.argmin(d))]
    return best

