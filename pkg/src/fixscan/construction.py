"""Counterexample scene for a nested family of closed sets ``F_1 ⊂ F_2 ⊂ ...``.

For each level ``E_n = (-inf, -1] ∪ phi(F_n) ∪ [2, inf)`` and

    f(x, z) = x**2 + sum_n c_n g_n(x) h_n(z)

with ``g_n(x) = (x - a_n(x))^3 (b_n(x) - x)^3`` built from the gap of ``E_n``
around ``x`` and ``h_n(z) = (n - z)_+^3``. The scene is
``A1 = {z >= 0, y >= f(x, z)}``, ``A2 = {(1, 0, z)}``, ``A3 = {(0, 0, z)}``.
"""

from __future__ import annotations

import hashlib
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .geometry import SmoothEpigraph, VerticalRay, as_point
from .planar import phi

__all__ = [
    "SpecError",
    "IntervalUnion",
    "FSigmaSpec",
    "GapSet",
    "build_E",
    "gap_endpoints",
    "g_n",
    "h_n",
    "coefficient",
    "terms_for_tol",
    "SeriesFunction",
    "ConstructedScene",
    "build_scene",
    "f_eval",
    "membership_gap",
    "ConstructionReport",
    "verify_construction",
]

COEFF_CONST = 6.0 / 81.0 ** 2
# per-term bounds |c_n g h|, |c_n g' h'|, |c_n g h''| ... divided by 2^-(n+1)
VALUE_TERM_BOUND = 2.0 / 3.0
GRAD_TERM_BOUND = 2.0
HESS_TERM_BOUND = 4.0


class SpecError(ValueError):
    """Invalid F-sigma specification; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# interval unions and F-sigma specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of closed intervals, kept sorted with touching pieces merged."""

    intervals: tuple = ()

    def __post_init__(self):
        pieces = sorted((float(lo), float(hi)) for lo, hi in self.intervals)
        merged: list[list[float]] = []
        for lo, hi in pieces:
            if lo > hi:
                raise ValueError(f"interval [{lo}, {hi}] has lo > hi")
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        object.__setattr__(self, "intervals", tuple((lo, hi) for lo, hi in merged))

    def __contains__(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        return IntervalUnion(self.intervals + other.intervals)

    def issubset(self, other: "IntervalUnion") -> bool:
        return all(any(olo <= lo and hi <= ohi for olo, ohi in other.intervals)
                   for lo, hi in self.intervals)

    def endpoints(self) -> list[float]:
        return sorted({v for iv in self.intervals for v in iv})


@dataclass(frozen=True)
class FSigmaSpec:
    """Levels ``F_1 ⊂ ... ⊂ F_N`` plus a rule for ``F_n`` with ``n > N``.

    ``tail_mode == "constant"`` repeats ``F_N``; ``"shrinking"`` uses
    ``F_{N+j} = F_N ∪ [lo + delta0 * 2**-j, hi]`` so that the union adds the
    half-open ``(lo, hi]``.
    """

    levels: tuple
    tail_mode: str = "constant"
    lo: float | None = None
    hi: float | None = None
    delta0: float | None = None

    def __post_init__(self):
        levels = tuple(lv if isinstance(lv, IntervalUnion) else IntervalUnion(tuple(lv))
                       for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        self.validate()

    def validate(self) -> None:
        if not self.levels:
            raise SpecError("levels", "at least one level is required")
        for i, lv in enumerate(self.levels):
            for lo, hi in lv.intervals:
                if lo < 0.0 or hi > 1.0:
                    raise SpecError(f"levels[{i}]", f"interval [{lo}, {hi}] leaves [0, 1]")
            if i and not self.levels[i - 1].issubset(lv):
                raise SpecError(f"levels[{i}]", f"level {i + 1} does not contain level {i}")
        if 0.0 not in self.levels[0]:
            raise SpecError("levels[0]", "0 must belong to the first level")
        if self.tail_mode == "shrinking":
            if self.lo is None or self.hi is None or self.delta0 is None:
                raise SpecError("tail", "shrinking mode needs lo, hi and delta0")
            if not 0.0 <= self.lo < self.hi <= 1.0:
                raise SpecError("tail", f"need 0 <= lo < hi <= 1, got lo={self.lo}, hi={self.hi}")
            if not 0.0 < self.delta0 <= self.hi - self.lo:
                raise SpecError("tail.delta0", f"need 0 < delta0 <= hi - lo, got {self.delta0}")
        elif self.tail_mode != "constant":
            raise SpecError("tail.mode", f"unknown tail mode {self.tail_mode!r}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level(self, n: int) -> IntervalUnion:
        if n < 1:
            raise ValueError(f"levels are indexed from 1, got {n}")
        N = self.n_levels
        if n <= N:
            return self.levels[n - 1]
        if self.tail_mode == "constant":
            return self.levels[-1]
        j = n - N
        return self.levels[-1].union(IntervalUnion(((self.lo + self.delta0 * 2.0 ** -j, self.hi),)))

    def contains(self, alpha: float) -> bool:
        """``alpha`` in the union of all levels."""
        if alpha in self.levels[-1]:
            return True
        return self.tail_mode == "shrinking" and self.lo < alpha <= self.hi

    def first_level(self, alpha: float, max_level: int) -> int | None:
        for n in range(1, max_level + 1):
            if alpha in self.level(n):
                return n
        return None

    def boundary_points(self) -> list[float]:
        """Boundary of the union relative to [0, 1], excluding 0 and 1."""
        cands = set(self.levels[-1].endpoints())
        if self.tail_mode == "shrinking":
            cands.update((self.lo, self.hi))
        eps = 1e-12
        out = []
        for b in sorted(cands):
            if b <= 0.0 or b >= 1.0:
                continue
            states = {self.contains(b - eps), self.contains(b), self.contains(b + eps)}
            if len(states) > 1:
                out.append(b)
        return out

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        tail = {"mode": self.tail_mode}
        if self.tail_mode == "shrinking":
            tail.update(lo=self.lo, hi=self.hi, delta0=self.delta0)
        return {"levels": [{"intervals": [list(iv) for iv in lv.intervals]} for lv in self.levels],
                "tail": tail}

    @classmethod
    def from_dict(cls, data: dict) -> "FSigmaSpec":
        if not isinstance(data, dict) or "levels" not in data:
            raise SpecError("levels", "missing 'levels' list")
        raw = data["levels"]
        if not isinstance(raw, list):
            raise SpecError("levels", "must be a list")
        levels = []
        for i, lv in enumerate(raw):
            try:
                ivs = lv["intervals"]
                levels.append(IntervalUnion(tuple((float(a), float(b)) for a, b in ivs)))
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecError(f"levels[{i}]", f"malformed intervals ({exc})") from None
        tail = data.get("tail", {"mode": "constant"})
        mode = tail.get("mode", "constant")
        if mode == "shrinking":
            try:
                return cls(tuple(levels), "shrinking", float(tail["lo"]), float(tail["hi"]),
                           float(tail["delta0"]))
            except KeyError as exc:
                raise SpecError(f"tail.{exc.args[0]}", "missing for shrinking mode") from None
        return cls(tuple(levels), mode)

    @classmethod
    def from_json(cls, text: str) -> "FSigmaSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError("json", str(exc)) from None
        return cls.from_dict(data)

    @classmethod
    def constant(cls, *levels) -> "FSigmaSpec":
        return cls(tuple(IntervalUnion(tuple(lv)) for lv in levels))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# E_n and the gap functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GapSet:
    """Closed subset of R given as sorted disjoint closed intervals (rays allowed)."""

    los: np.ndarray
    his: np.ndarray

    def __contains__(self, x: float) -> bool:
        a, b = self.gaps(np.array([x]))
        return bool(a[0] == b[0])

    def gaps(self, x):
        """Vectorised ``(a_n(x), b_n(x))``; both equal ``x`` on members."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.los, x, side="right") - 1
        inside = x <= self.his[idx]
        nxt = np.minimum(idx + 1, self.los.size - 1)
        a = np.where(inside, x, self.his[idx])
        b = np.where(inside, x, self.los[nxt])
        return a, b

    def bounded_part(self) -> list[tuple[float, float]]:
        return [(lo, hi) for lo, hi in zip(self.los, self.his) if math.isfinite(lo) and math.isfinite(hi)]


def build_E(spec: FSigmaSpec, n: int) -> GapSet:
    """``(-inf, -1] ∪ phi(F_n) ∪ [2, inf)``; ``phi`` maps ``[a, b]`` to ``[phi(b), phi(a)]``."""
    images = sorted((phi(hi), phi(lo)) for lo, hi in spec.level(n).intervals)
    los = [-math.inf] + [lo for lo, _ in images] + [2.0]
    his = [-1.0] + [hi for _, hi in images] + [math.inf]
    return GapSet(np.array(los), np.array(his))


def gap_endpoints(E: GapSet, x: float) -> tuple[float, float]:
    a, b = E.gaps(np.array([float(x)]))
    return float(a[0]), float(b[0])


def g_n(x, a, b):
    """``(x-a)^3 (b-x)^3`` and its first two derivatives (gap endpoints held fixed)."""
    u = np.asarray(x, dtype=float) - a
    w = b - np.asarray(x, dtype=float)
    uw = u * w
    g = uw ** 3
    g1 = 3.0 * uw * uw * (w - u)
    g2 = 6.0 * uw * ((w - u) ** 2 - uw)
    return g, g1, g2


def h_n(z, n):
    """``(n - z)_+^3`` and its first two derivatives."""
    t = np.maximum(np.asarray(n, dtype=float) - np.asarray(z, dtype=float), 0.0)
    return t ** 3, -3.0 * t * t, 6.0 * t


def coefficient(n: int) -> float:
    """``c_n = (6/81^2) n^-3 2^-(n+1)``; then ``sum (81^2/6) n^3 c_n = 1/2``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return COEFF_CONST * n ** -3.0 * 2.0 ** -(n + 1)


def terms_for_tol(tol: float) -> int:
    """Smallest ``N`` with ``(2/3) 2^-(N+1) <= tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return max(1, math.ceil(math.log2(VALUE_TERM_BOUND / tol) - 1.0))


class SeriesFunction:
    """Truncated evaluation of ``f`` and its derivatives.

    Terms sharing a level share ``g_n``, so the z-dependence is summed once
    per level through shifted moments ``T_j(m) = sum_{n >= m} c_n (n - m)^j``:
    with ``m = floor(z) + 1`` and ``d = m - z`` every ``(n - z)`` equals
    ``(n - m) + d`` and all sums stay non-negative.

    ``c_scale`` multiplies every coefficient; values other than 1 break the
    convexity certificate and exist only for negative controls.
    """

    def __init__(self, spec: FSigmaSpec, n_terms: int, c_scale: float = 1.0):
        self.spec = spec
        self.n_terms = int(n_terms)
        self.c_scale = float(c_scale)
        self._E: list[GapSet] = []
        level_of = []
        uniq: dict[tuple, int] = {}
        for n in range(1, self.n_terms + 1):
            key = spec.level(n).intervals
            if key not in uniq:
                uniq[key] = len(self._E)
                self._E.append(build_E(spec, n))
            level_of.append(uniq[key])
        self._level_of = np.array(level_of)
        n = np.arange(1, self.n_terms + 1, dtype=float)
        self.coeffs = self.c_scale * COEFF_CONST * n ** -3.0 * 2.0 ** -(n + 1.0)
        # moments[l, m - 1, j] for m = 1..n_terms + 1 (last row all zero)
        L = len(self._E)
        mom = np.zeros((L, self.n_terms + 1, 4))
        for m in range(1, self.n_terms + 1):
            k = n[m - 1:] - m
            c = self.coeffs[m - 1:]
            lv = self._level_of[m - 1:]
            for j in range(4):
                np.add.at(mom[:, m - 1, j], lv, c * k ** j)
        self._moments = mom
        self._mom_list = mom.tolist()
        self._gap_lists = [(E.los.tolist(), E.his.tolist()) for E in self._E]

    @property
    def tail_bound(self) -> float:
        return self.c_scale * VALUE_TERM_BOUND * 2.0 ** -(self.n_terms + 1)

    def tail_bounds(self) -> dict:
        T = self.c_scale * 2.0 ** -(self.n_terms + 1)
        return {"value": VALUE_TERM_BOUND * T, "gradient": GRAD_TERM_BOUND * T, "hessian": HESS_TERM_BOUND * T}

    def E(self, n: int) -> GapSet:
        return self._E[self._level_of[n - 1]]

    def _shift(self, z):
        m = np.clip(np.floor(z) + 1.0, 1.0, self.n_terms + 1.0)
        return (m - 1).astype(int), m - z

    def evaluate(self, x, z):
        """Arrays ``(S, S_x, S_z, S_xx, S_xz, S_zz)`` of the series part ``S = f - x^2``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        x, z = np.broadcast_arrays(x, z)
        mi, d = self._shift(z)
        out = [np.zeros(x.shape) for _ in range(6)]
        for l, E in enumerate(self._E):
            g, g1, g2 = g_n(x, *E.gaps(x))
            T0, T1, T2, T3 = (self._moments[l, mi, j] for j in range(4))
            W0 = T3 + d * (3.0 * T2 + d * (3.0 * T1 + d * T0))
            W1 = -3.0 * (T2 + d * (2.0 * T1 + d * T0))
            W2 = 6.0 * (T1 + d * T0)
            out[0] += g * W0
            out[1] += g1 * W0
            out[2] += g * W1
            out[3] += g2 * W0
            out[4] += g1 * W1
            out[5] += g * W2
        return tuple(out)

    def excess(self, x, z):
        """``f(x, z) - x**2`` computed from the series itself (no cancellation)."""
        shape = np.broadcast(np.asarray(x), np.asarray(z)).shape
        return self.evaluate(x, z)[0].reshape(shape)

    def value(self, x, z):
        if isinstance(x, (float, int)) and isinstance(z, (float, int)):
            return x * x + self._scalar(x, z)[0]
        x = np.asarray(x, dtype=float)
        return x * x + self.excess(x, z)

    def _scalar(self, x: float, z: float):
        m = min(max(math.floor(z) + 1, 1), self.n_terms + 1)
        d = m - z
        s = sx = sz = sxx = sxz = szz = 0.0
        for l, (los, his) in enumerate(self._gap_lists):
            i = bisect_right(los, x) - 1
            if x <= his[i]:
                continue
            u = x - his[i]
            w = los[i + 1] - x
            uw = u * w
            g = uw * uw * uw
            g1 = 3.0 * uw * uw * (w - u)
            g2 = 6.0 * uw * ((w - u) ** 2 - uw)
            T0, T1, T2, T3 = self._mom_list[l][m - 1]
            W0 = T3 + d * (3.0 * T2 + d * (3.0 * T1 + d * T0))
            W1 = -3.0 * (T2 + d * (2.0 * T1 + d * T0))
            W2 = 6.0 * (T1 + d * T0)
            s += g * W0
            sx += g1 * W0
            sz += g * W1
            sxx += g2 * W0
            sxz += g1 * W1
            szz += g * W2
        return s, sx, sz, sxx, sxz, szz

    def partials(self, x: float, z: float):
        s, sx, sz, sxx, sxz, szz = self._scalar(x, z)
        return x * x + s, 2.0 * x + sx, sz, 2.0 + sxx, sxz, szz

    def derivatives(self, x: float, z: float):
        x, z = float(x), float(z)
        f, fx, fz, fxx, fxz, fzz = self.partials(x, z)
        return f, np.array([fx, fz]), np.array([[fxx, fxz], [fxz, fzz]])


@dataclass(eq=False)
class ConstructedScene:
    spec: FSigmaSpec
    f: SeriesFunction
    A1: SmoothEpigraph
    A2: VerticalRay
    A3: VerticalRay
    horizon: float
    tol: float
    meta: dict = field(default_factory=dict)

    def excess(self, x, z):
        return self.f.excess(x, z)

    def series(self, n_terms: int) -> SeriesFunction:
        """The series truncated after ``n_terms`` terms (cached)."""
        if n_terms == self.f.n_terms:
            return self.f
        cache = self.meta.setdefault("_series", {})
        if n_terms not in cache:
            cache[n_terms] = SeriesFunction(self.spec, n_terms, self.f.c_scale)
        return cache[n_terms]

    def contact_excess(self, p) -> float:
        """Excess ``f - x^2`` at ``P_{A1}(p)``; zero when ``p`` already lies in ``A1``.

        A positive value means ``P_{A1}`` raises the z-coordinate of ``p``.
        """
        p = as_point(p, 3)
        if self.A1.contains(p):
            return 0.0
        q = self.A1.project(p)
        return float(self.f.excess(q[0], q[2]))


def build_scene(spec: FSigmaSpec, tol: float = 1e-16, depth: int = 30,
                c_scale: float = 1.0, solver_tol: float = 1e-10,
                solver_max_iter: int = 100) -> ConstructedScene:
    """Assemble ``A1, A2, A3`` for ``spec``.

    ``horizon`` is the largest z-coordinate at which fixed points are looked
    for: ``N + 1`` with a constant tail, ``N + depth + 1`` with a shrinking
    one. The series keeps enough terms for ``tol`` and at least 20 beyond
    the horizon.
    """
    N = spec.n_levels
    horizon = N + 1 if spec.tail_mode == "constant" else N + depth + 1
    n_terms = max(terms_for_tol(tol), horizon + 20)
    f = SeriesFunction(spec, n_terms, c_scale)
    A1 = SmoothEpigraph(f, tol=solver_tol, max_iter=solver_max_iter)
    return ConstructedScene(spec, f, A1, VerticalRay((1.0, 0.0)), VerticalRay((0.0, 0.0)),
                            float(horizon), tol, {"n_terms": n_terms, "c_scale": c_scale})


@dataclass(frozen=True)
class FEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    n_terms: int
    tail: dict


def f_eval(scene: ConstructedScene, x: float, z: float, tol: float | None = None) -> FEval:
    """``f`` with gradient and Hessian, truncated so the value tail is below ``tol``."""
    if z < 0:
        raise ValueError(f"f is defined for z >= 0, got z={z}")
    series = scene.series(terms_for_tol(tol if tol is not None else scene.tol))
    value, grad, hess = series.derivatives(x, z)
    return FEval(value, grad, hess, series.n_terms, series.tail_bounds())


def membership_gap(scene: ConstructedScene, x: float, z_max: float | None = None,
                   n_grid: int = 401) -> float:
    """``min_z f(x, z) - x**2`` over a uniform grid on ``[0, z_max]``."""
    if z_max is None:
        z_max = scene.spec.n_levels + 1
    zs = np.linspace(0.0, z_max, n_grid)
    return float(np.min(scene.excess(np.full_like(zs, x), zs)))


# --------------------------------------------------------------------------
# numerical check of the four properties of f
# --------------------------------------------------------------------------

@dataclass
class ConstructionReport:
    min_excess: float
    min_excess_at: tuple
    min_eigenvalue: float
    min_eigenvalue_at: tuple
    grad_rel_err: float
    hess_rel_err: float
    dz_checked: int
    dz_violations: int
    dz_witness: tuple | None
    n_points: int
    thresholds: dict

    @property
    def checks(self) -> dict:
        t = self.thresholds
        return {
            "excess_nonnegative": self.min_excess >= -t["excess"],
            "hessian_psd": self.min_eigenvalue >= -t["eigenvalue"],
            "derivatives_match_fd": max(self.grad_rel_err, self.hess_rel_err) <= t["fd_rtol"],
            "dz_negative_off_parabola": self.dz_violations == 0,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["checks"] = self.checks
        d["passed"] = self.passed
        return d


def _rel_err(an: np.ndarray, fd: np.ndarray) -> float:
    scale = float(np.max(np.abs(an)))
    if scale == 0.0:
        return float(np.max(np.abs(fd)))
    return float(np.max(np.abs(an - fd)) / scale)


def verify_construction(scene: ConstructedScene, xs=None, zs=None, fd_step: float = 1e-6,
                        fd_rtol: float = 1e-5, excess_tol: float = 1e-12,
                        eig_tol: float = 1e-9, dz_threshold: float = 1e-6) -> ConstructionReport:
    """Grid check of ``f >= x^2``, convexity, derivative consistency and ``f_z < 0``.

    Finite differences act on the series part ``f - x^2`` (the quadratic
    part is exact); each derivative component is compared relative to its
    largest magnitude over the grid.
    """
    xs = np.linspace(-1.5, 2.5, 200) if xs is None else np.asarray(xs, dtype=float)
    zs = np.linspace(0.0, 5.0, 100) if zs is None else np.asarray(zs, dtype=float)
    X, Z = (a.ravel() for a in np.meshgrid(xs, zs, indexing="ij"))
    f = scene.f
    s, sx, sz, sxx, sxz, szz = f.evaluate(X, Z)

    i = int(np.argmin(s))
    min_excess, min_excess_at = float(s[i]), (float(X[i]), float(Z[i]))

    a, b, c = 2.0 + sxx, sxz, szz
    lam = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)
    j = int(np.argmin(lam))

    h = fd_step
    ex = f.excess
    fd_sx = (ex(X + h, Z) - ex(X - h, Z)) / (2 * h)
    fd_sz = (ex(X, Z + h) - ex(X, Z - h)) / (2 * h)
    px, mx = f.evaluate(X + h, Z), f.evaluate(X - h, Z)
    pz, mz = f.evaluate(X, Z + h), f.evaluate(X, Z - h)
    fd_sxx = (px[1] - mx[1]) / (2 * h)
    fd_sxz = (pz[1] - mz[1]) / (2 * h)
    fd_szx = (px[2] - mx[2]) / (2 * h)
    fd_szz = (pz[2] - mz[2]) / (2 * h)
    grad_err = max(_rel_err(sx, fd_sx), _rel_err(sz, fd_sz))
    hess_err = max(_rel_err(sxx, fd_sxx), _rel_err(sxz, fd_sxz), _rel_err(sxz, fd_szx),
                   _rel_err(szz, fd_szz))

    mask = s > dz_threshold
    bad = mask & ~(sz < 0.0)
    witness = None
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        witness = (float(X[k]), float(Z[k]))
    return ConstructionReport(
        min_excess, min_excess_at, float(lam[j]), (float(X[j]), float(Z[j])),
        grad_err, hess_err, int(mask.sum()), int(bad.sum()), witness, int(X.size),
        {"excess": excess_tol, "eigenvalue": eig_tol, "fd_rtol": fd_rtol, "fd_step": fd_step},
    )
