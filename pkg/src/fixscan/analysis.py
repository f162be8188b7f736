"""Averaging machinery for approximate fixed points in finite dimension.

Three pieces: near-orthonormal systems and how far a point ``y`` that is
roughly equidistant from them sits from their mean, Cesaro averaging of
approximate fixed points, and a probe checking that the set of relaxation
parameters admitting a bounded fixed point is closed along a sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import EXISTS, IterationConfig, beta_for, classify_alpha, compose_apply, scene_chain
from .geometry import ContractViolation
from .planar import planar_fixed_point_closed_form, planar_map


@dataclass
class OrthoSystem:
    """``M`` points ``ys`` (rows) and a point ``y`` in ``R^d``.

    ``metrics`` holds the norms of the ``ys``, their Gram matrix and the
    squared distances ``||y - y_i||^2``; it is recomputed from the points.
    """

    ys: np.ndarray
    y: np.ndarray
    metrics: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.ys.shape[1] != self.y.size:
            raise ContractViolation(f"dimension mismatch: {self.ys.shape[1]} vs {self.y.size}")
        self.metrics = self.compute_metrics()

    @property
    def M(self) -> int:
        return self.ys.shape[0]

    @property
    def dim(self) -> int:
        return self.y.size

    def compute_metrics(self) -> dict:
        gram = self.ys @ self.ys.T
        return {
            "norms": np.sqrt(np.diag(gram)),
            "gram": gram,
            "dist2": np.sum((self.y - self.ys) ** 2, axis=1),
        }

    def hypothesis_defect(self) -> float:
        """Largest violation of: unit norms, pairwise orthogonality and
        ``||y - y_i||^2 <= (M - 1) / M``."""
        m = self.metrics
        off = m["gram"] - np.diag(np.diag(m["gram"]))
        d_norm = float(np.max(np.abs(m["norms"] - 1.0)))
        d_orth = float(np.max(np.abs(off))) if self.M > 1 else 0.0
        d_dist = float(max(0.0, np.max(m["dist2"]) - (self.M - 1) / self.M))
        return max(d_norm, d_orth, d_dist)


def mean_deviation(sys: OrthoSystem) -> float:
    """``||y - mean(y_i)||``."""
    if sys.dim < sys.M:
        raise ContractViolation(f"dimension {sys.dim} is smaller than M = {sys.M}")
    return float(np.linalg.norm(sys.y - sys.ys.mean(axis=0)))


def random_orthonormal(dim: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` orthonormal rows in ``R^dim``."""
    if m > dim:
        raise ContractViolation(f"cannot fit {m} orthonormal vectors in dimension {dim}")
    q, r = np.linalg.qr(rng.standard_normal((dim, m)))
    return (q * np.sign(np.diag(r))).T


def exact_system(M: int, dim: int = 128, rotation: np.ndarray | None = None) -> OrthoSystem:
    """``y_i = e_i`` and ``y`` their mean, optionally rotated."""
    ys = np.eye(dim)[:M]
    if rotation is not None:
        ys = ys @ rotation.T
    return OrthoSystem(ys, ys.mean(axis=0))


def perturbed_system(M: int, eta: float, rng: np.random.Generator, dim: int = 128) -> OrthoSystem:
    """Orthonormal system with noise of size ``eta`` on each ``y_i`` and an
    offset of ``y`` from the mean of squared size up to ``eta``."""
    base = random_orthonormal(dim, M + 1, rng)
    ys = base[:M] + eta * rng.standard_normal((M, dim)) / np.sqrt(dim)
    y = ys.mean(axis=0) + np.sqrt(eta) * rng.uniform() * base[M]
    return OrthoSystem(ys, y)


def cesaro_refine(T: Callable[[np.ndarray], np.ndarray], points, x0) -> tuple[np.ndarray, float, float]:
    """Average ``points`` to ``u``; return ``(u, ||T(u) - u||, ||u - x0||)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise ContractViolation("need at least one point")
    u = pts.mean(axis=0)
    return u, float(np.linalg.norm(np.asarray(T(u)) - u)), float(np.linalg.norm(u - np.asarray(x0, dtype=float)))


def orthonormal_cesaro_distance(M: int, lam: float = 1.0, dim: int = 128,
                                rng: np.random.Generator | None = None) -> float:
    """``||mean(x0 + lam e_i) - x0||`` for random orthonormal ``e_i``; equals ``lam / sqrt(M)``."""
    rng = rng or np.random.default_rng(0)
    x0 = rng.standard_normal(dim)
    pts = x0 + lam * random_orthonormal(dim, M, rng)
    _, _, dist = cesaro_refine(lambda u: u, pts, x0)
    return dist


def alpha_sequence(alpha0: float, rate: float, terms: int) -> np.ndarray:
    """``alpha0 + rate / n`` for ``n = 1..terms``, clipped to [0, 1]."""
    if terms < 1:
        raise ContractViolation(f"terms must be positive, got {terms}")
    n = np.arange(1, terms + 1, dtype=float)
    return np.clip(alpha0 + rate / n, 0.0, 1.0)


def planar_cesaro(Ms: Sequence[int] = (4, 8, 16, 32, 64), alpha0: float = 0.5, rate: float = 0.1,
                  beta: float = 1.0) -> list[dict]:
    """Cesaro means of the planar fixed points at ``alpha0 + rate / n``, tested
    against the map at ``alpha0``."""
    x0 = planar_fixed_point_closed_form(alpha0, beta).u
    fps = [planar_fixed_point_closed_form(a, beta).u for a in alpha_sequence(alpha0, rate, max(Ms))]
    T = lambda u: planar_map(alpha0, beta, u)  # noqa: E731
    out = []
    for M in Ms:
        u, res, dist = cesaro_refine(T, fps[:M], x0)
        worst = max(float(np.linalg.norm(T(p) - p)) for p in fps[:M])
        out.append({"M": int(M), "u": u.tolist(), "residual": res, "dist": dist, "max_point_residual": worst})
    return out


def closedness_probe(scene, alphas, alpha0: float, r: float, config: IterationConfig | None = None,
                     k: int = 3, tol: float = 1e-6) -> dict:
    """Check that bounded fixed points along ``alphas`` persist at ``alpha0``.

    Every ``alphas[n]`` must classify Exists with a fixed point of norm at
    most ``r``; otherwise the report records the precondition failure. When
    the precondition holds, ``alpha0`` must classify Exists with norm at
    most ``r + tol``. The report also carries the Cesaro mean of the
    sequence of fixed points, its residual under the map at ``alpha0`` and
    the mean tail distance ``lambda`` of the sequence to the limit point.
    """
    cfg = config or IterationConfig()
    alphas = [float(a) for a in alphas]
    seq, failures = [], []
    for a in alphas:
        o = classify_alpha(scene, a, k, cfg)
        norm = float(np.linalg.norm(o.point)) if o.exists else None
        seq.append({"alpha": a, "status": o.status, "reason": o.reason, "residual": o.residual,
                    "point": o.point.tolist() if o.exists else None, "norm": norm})
        if not o.exists:
            failures.append({"alpha": a, "problem": f"classified {o.status}"})
        elif norm > r:
            failures.append({"alpha": a, "problem": f"fixed point norm {norm:.6g} exceeds r"})
    report = {"alpha0": float(alpha0), "r": float(r), "k": int(k), "tol": tol, "sequence": seq,
              "precondition_ok": not failures, "precondition_failures": failures}
    lim = classify_alpha(scene, alpha0, k, cfg)
    lim_norm = float(np.linalg.norm(lim.point)) if lim.exists else None
    report["limit"] = {"status": lim.status, "reason": lim.reason, "residual": lim.residual,
                       "point": lim.point.tolist() if lim.exists else None, "norm": lim_norm}
    report["confirmed"] = bool(not failures and lim.exists and lim_norm <= r + tol)
    pts = [s["point"] for s in seq if s["point"] is not None]
    if lim.exists and pts:
        chain = scene_chain(scene, alpha0, beta_for(alpha0, k))
        u, res, dist = cesaro_refine(lambda v: compose_apply(chain, v), pts, lim.point)
        tail = np.asarray(pts[len(pts) // 2:]) - lim.point
        report["cesaro"] = {"u": u.tolist(), "residual": res, "dist": dist, "M": len(pts)}
        report["lambda"] = float(np.mean(np.linalg.norm(tail, axis=1)))
    return report
