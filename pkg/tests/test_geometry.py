import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixscan.geometry import (
    ContractViolation,
    OracleFailure,
    Paraboloid,
    ParabolaEpigraph,
    ProductWithHalfLine,
    Singleton,
    SmoothEpigraph,
    SolverFailure,
    VerticalRay,
    brute_force_project,
    monotone_cubic_root,
    project,
    project_smooth_epigraph,
)

from oracle_values import PHI0, ROOT_ONE, ROOT_ONE_SQ


def random_point(rng, dim):
    p = rng.uniform(-2.0, 2.0, dim)
    if dim == 3:
        p[2] = rng.uniform(-1.0, 3.0)
    return p


def random_member(set_, rng):
    """A point of ``set_`` drawn near the region the tests probe."""
    if isinstance(set_, Singleton):
        return np.array(set_.point)
    if isinstance(set_, VerticalRay):
        return np.array([*set_.base, rng.uniform(0.0, 4.0)])
    if isinstance(set_, ParabolaEpigraph):
        x = rng.uniform(-2.0, 2.0)
        return np.array([x, x * x + rng.exponential(0.5)])
    if isinstance(set_, ProductWithHalfLine):
        return np.concatenate([random_member(set_.planar, rng), [rng.uniform(0.0, 4.0)]])
    if isinstance(set_, SmoothEpigraph):
        x, z = rng.uniform(-2.0, 2.0), rng.uniform(0.0, 4.0)
        return np.array([x, float(set_.func.value(x, z)) + rng.exponential(0.5), z])
    raise TypeError(set_)


def variants(scene=None):
    out = {
        "singleton": Singleton((0.0, 0.0)),
        "ray": VerticalRay((1.0, 0.0)),
        "parabola": ParabolaEpigraph(),
        "paraboloid": SmoothEpigraph(Paraboloid()),
        "product": ProductWithHalfLine(ParabolaEpigraph()),
    }
    if scene is not None:
        out["scene"] = scene.A1
    return out


# -- examples ------------------------------------------------------------------

def test_singleton_projection():
    assert np.array_equal(project(Singleton((0.0, 0.0)), (2.0, 0.0)), [0.0, 0.0])


def test_vertical_ray_projection():
    ray = VerticalRay((1.0, 0.0))
    assert np.array_equal(project(ray, (2, 2, 3)), [1.0, 0.0, 3.0])
    assert np.array_equal(project(ray, (0, 0, -1)), [1.0, 0.0, 0.0])


def test_parabola_projection_outside():
    q = project(ParabolaEpigraph(), (1.0, 0.0))
    assert q == pytest.approx([ROOT_ONE, ROOT_ONE_SQ], abs=1e-13)


def test_parabola_projection_inside():
    assert np.array_equal(project(ParabolaEpigraph(), (0.0, 1.0)), [0.0, 1.0])


def test_parabola_projection_nonmonotone_branch():
    # v > 1/2 makes the cubic non-monotone; the nearest point keeps the sign of u
    for u in (2.0, -2.0, 1.2, -1.2):
        q = project(ParabolaEpigraph(), (u, 1.1))
        assert math.copysign(1.0, q[0]) == math.copysign(1.0, u)
        assert q[1] == pytest.approx(q[0] ** 2)
        x = q[0]
        assert 2 * x ** 3 + (1 - 2 * 1.1) * x - u == pytest.approx(0.0, abs=1e-12)
    assert project(ParabolaEpigraph(), (2.0, 1.1)) == pytest.approx(-project(ParabolaEpigraph(), (-2.0, 1.1)) * [1, -1])


@pytest.mark.parametrize("args, expected", [((2, 1, 0), 0.0), ((2, 1, 0.5), PHI0), ((2, 1, 1), ROOT_ONE)])
def test_monotone_cubic_examples(args, expected):
    assert monotone_cubic_root(*args) == pytest.approx(expected, abs=1e-14)


def test_monotone_cubic_rejects_bad_input():
    with pytest.raises(ContractViolation):
        monotone_cubic_root(2.0, 1.0, math.nan)
    with pytest.raises(ContractViolation):
        monotone_cubic_root(-1.0, 1.0, 0.5)


def test_monotone_cubic_residual_and_monotone():
    rhs = np.linspace(-50.0, 50.0, 2001)
    roots = np.array([monotone_cubic_root(2.0, 1.0, r) for r in rhs])
    assert np.max(np.abs(2 * roots ** 3 + roots - rhs) / np.maximum(1.0, np.abs(rhs))) <= 1e-12
    assert np.all(np.diff(roots) > 0)
    small = np.linspace(0.0, 0.5, 1001)
    r2 = np.array([monotone_cubic_root(2.0, 1.0, r) for r in small])
    assert np.max(np.abs(2 * r2 ** 3 + r2 - small)) <= 1e-12


def test_smooth_epigraph_examples():
    f = Paraboloid()
    assert project_smooth_epigraph(f, (0.0, -1.0, 5.0)) == pytest.approx([0.0, 0.0, 5.0], abs=1e-12)
    assert project_smooth_epigraph(f, (1.0, 0.0, -2.0)) == pytest.approx([ROOT_ONE, ROOT_ONE_SQ, 0.0], abs=1e-9)
    inside = np.array([0.3, 2.0, 1.0])
    assert np.array_equal(project_smooth_epigraph(f, inside), inside)


def test_dimension_mismatch():
    with pytest.raises(ContractViolation):
        project(VerticalRay((1.0, 0.0)), (1.0, 2.0))
    with pytest.raises(ContractViolation):
        project(ParabolaEpigraph(), (1.0, 2.0, 3.0))


def test_non_finite_point_rejected():
    with pytest.raises(ContractViolation):
        project(ParabolaEpigraph(), (math.inf, 0.0))


def test_solver_failure_carries_context():
    with pytest.raises(SolverFailure) as info:
        project_smooth_epigraph(Paraboloid(), (3.0, -5.0, 1.0), tol=1e-30, max_iter=1)
    assert info.value.last_iterate is not None
    assert info.value.residual > 0


def test_oracle_examples():
    q = brute_force_project(ParabolaEpigraph(), (1.0, 0.0), step=1e-4, window=((-2, -2), (2, 2)))
    assert np.linalg.norm(q - [ROOT_ONE, ROOT_ONE_SQ]) <= 1e-4
    assert np.array_equal(brute_force_project(Singleton((0.5, 0.5)), (3.0, -1.0)), [0.5, 0.5])
    q = brute_force_project(VerticalRay((1.0, 0.0)), (2.0, 2.0, 3.0))
    assert np.linalg.norm(q - [1.0, 0.0, 3.0]) <= 1e-4


def test_oracle_failure_on_empty_window():
    with pytest.raises(OracleFailure):
        brute_force_project(Singleton((0.0, 0.0)), (5.0, 5.0), window=((4, 4), (6, 6)))


# -- properties over every variant -----------------------------------------------

@pytest.mark.parametrize("name", ["singleton", "ray", "parabola", "paraboloid", "product", "scene"])
def test_variational_inequality(name, scenes, rng):
    set_ = variants(scenes["mid"])[name]
    members = np.array([random_member(set_, rng) for _ in range(100)])
    worst = -math.inf
    for _ in range(100):
        p = random_point(rng, set_.dim)
        q = project(set_, p)
        worst = max(worst, float(np.max((members - q) @ (p - q))))
    assert worst <= 1e-8


@pytest.mark.parametrize("name", ["singleton", "ray", "parabola", "paraboloid", "product", "scene"])
def test_idempotent_and_firmly_nonexpansive(name, scenes, rng):
    set_ = variants(scenes["mid"])[name]
    for _ in range(50):
        p, r = random_point(rng, set_.dim), random_point(rng, set_.dim)
        pp, pr = project(set_, p), project(set_, r)
        assert np.linalg.norm(project(set_, pp) - pp) <= 1e-9
        assert set_.contains(pp, 1e-9)
        d = pp - pr
        assert d @ d <= d @ (p - r) + 1e-8


@pytest.mark.parametrize("name, count", [("singleton", 30), ("ray", 30), ("parabola", 30),
                                         ("paraboloid", 10), ("product", 10), ("scene", 5)])
def test_oracle_agreement(name, count, scenes, rng):
    set_ = variants(scenes["mid"])[name]
    for _ in range(count):
        p = random_point(rng, set_.dim)
        assert np.linalg.norm(project(set_, p) - brute_force_project(set_, p, step=1e-4)) <= 2e-4


coord = st.floats(-5.0, 5.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coord, coord)
def test_parabola_projection_property(u, v):
    q = project(ParabolaEpigraph(), (u, v))
    assert q[1] >= q[0] ** 2 - 1e-12
    if v < u * u:
        # normal condition: p - q is parallel to the outward normal (2x, -1)
        n = np.array([2 * q[0], -1.0])
        d = np.array([u, v]) - q
        assert abs(d[0] * n[1] - d[1] * n[0]) <= 1e-9 * (1 + np.linalg.norm(d))
        assert d @ n >= -1e-12


@settings(max_examples=100, deadline=None)
@given(coord, coord, st.floats(-2.0, 5.0))
def test_paraboloid_epigraph_matches_product(x, y, z):
    a = project(SmoothEpigraph(Paraboloid()), (x, y, z))
    b = project(ProductWithHalfLine(ParabolaEpigraph()), (x, y, z))
    assert np.linalg.norm(a - b) <= 1e-8
