import numpy as np
import pytest

from fixscan.dynamics import (
    EXISTS,
    INCONCLUSIVE,
    NOT_EXISTS,
    IterationConfig,
    RelaxedProjection,
    beta_for,
    classify_alpha,
    classify_triple,
    compose_apply,
    iterate_to_fixed_point,
    relax,
    scene_chain,
)
from fixscan.geometry import ContractViolation, ParabolaEpigraph, Singleton
from fixscan.planar import B1, B2, B3, planar_fixed_point_closed_form


def test_relax_examples():
    pt = Singleton((0.0, 0.0))
    x = np.array([2.0, 0.0])
    assert np.array_equal(relax(RelaxedProjection(pt, 0.0), x), x)
    assert np.array_equal(relax(RelaxedProjection(pt, 1.0), x), [0.0, 0.0])
    assert np.array_equal(relax(RelaxedProjection(pt, 0.5), x), [1.0, 0.0])


def test_relaxed_projection_range():
    with pytest.raises(ContractViolation):
        RelaxedProjection(Singleton((0.0, 0.0)), 1.5)


def test_compose_examples():
    par = ParabolaEpigraph()
    x = np.array([1.0, 0.0])
    assert np.array_equal(compose_apply([RelaxedProjection(par, 0.0)] * 3, x), x)
    assert np.array_equal(compose_apply([RelaxedProjection(par, 1.0)], x), par.project(x))
    fp = planar_fixed_point_closed_form(0.4, 0.7)
    chain = [RelaxedProjection(B1, 0.7), RelaxedProjection(B2, 0.4), RelaxedProjection(B3, 0.4)]
    assert np.linalg.norm(compose_apply(chain, fp.u) - fp.u) <= 1e-12
    with pytest.raises(ContractViolation):
        compose_apply([], x)


def test_compose_order():
    # A1 first: projecting onto (1, 0) then (0, 0) lands on (0, 0), not (1, 0)
    chain = [RelaxedProjection(Singleton((1.0, 0.0)), 1.0), RelaxedProjection(Singleton((0.0, 0.0)), 1.0)]
    assert np.array_equal(compose_apply(chain, (5.0, 5.0)), [0.0, 0.0])


def test_beta_for():
    assert beta_for(0.3, 3) == 0.3
    assert beta_for(0.5, 5) == 0.875
    assert beta_for(0.0, 7) == 0.0


def test_planar_contraction_factor():
    for a in (0.2, 0.5, 0.8):
        chain = [RelaxedProjection(B1, a), RelaxedProjection(B2, a), RelaxedProjection(B3, a)]
        x = np.array([3.0, -1.0])
        prev = None
        for _ in range(8):
            y = compose_apply(chain, x)
            r = np.linalg.norm(y - x)
            if prev is not None and prev > 1e-13:
                assert r / prev <= (1 - a) ** 2 + 1e-9
            prev, x = r, y


def test_iterate_planar_exists():
    chain = [RelaxedProjection(B1, 0.5), RelaxedProjection(B2, 0.5), RelaxedProjection(B3, 0.5)]
    out = iterate_to_fixed_point(chain, (0.0, 0.0))
    assert out.status == EXISTS and out.exists
    assert out.residual <= 1e-9
    assert out.trace.residuals[0][0] == 1


def test_iterate_inconclusive_at_cap():
    chain = [RelaxedProjection(B1, 0.01), RelaxedProjection(B2, 0.01), RelaxedProjection(B3, 0.01)]
    out = iterate_to_fixed_point(chain, (0.0, 0.0), IterationConfig(max_iters=5))
    assert out.status == INCONCLUSIVE and out.reason == "max-iters"


class Lift:
    """Test double: 'projection' that translates z by one, so T has no fixed point."""

    dim = 3

    def project(self, p):
        return np.asarray(p, dtype=float) + [0.0, 0.0, 1.0]


class Flip:
    """Test double: reflects z about 1/2, so iterates shuttle between two heights."""

    dim = 3

    def project(self, p):
        p = np.asarray(p, dtype=float)
        return np.array([p[0], p[1], 1.0 - p[2]])


def test_iterate_residual_floor():
    out = iterate_to_fixed_point([RelaxedProjection(Flip(), 1.0)], (0.0, 0.0, 0.0))
    assert out.status == NOT_EXISTS and out.reason == "residual-floor"
    assert out.residual == pytest.approx(1.0)


def test_steady_climb_is_not_a_floor():
    out = iterate_to_fixed_point([RelaxedProjection(Lift(), 1.0)], (0.0, 0.0, 0.0), IterationConfig(max_iters=500))
    assert out.status == INCONCLUSIVE


def test_iterate_drift():
    cfg = IterationConfig(z_max=20.0, drift_window=10)
    out = iterate_to_fixed_point([RelaxedProjection(Lift(), 1.0)], (0.0, 0.0, 0.0), cfg)
    assert out.status == NOT_EXISTS and out.reason == "drift"
    assert out.point[2] > 20.0


def test_iteration_config_validation():
    with pytest.raises(ContractViolation):
        IterationConfig(eps_fix=2.0)
    with pytest.raises(ContractViolation):
        IterationConfig(max_iters=0)
    with pytest.raises(ContractViolation):
        IterationConfig(z_max=-1.0)


def test_scene_examples(scenes):
    out = classify_triple(scenes["point"], 0.5, 0.75, start=(0.0, 0.0, 0.0))
    assert out.status == NOT_EXISTS and out.reason == "drift"
    assert out.point[2] > scenes["point"].horizon
    out = classify_triple(scenes["full"], 0.5, 0.75)
    assert out.status == EXISTS
    for name in ("point", "full", "mid"):
        out = classify_alpha(scenes[name], 0.0, k=4)
        assert out.status == EXISTS and out.iterations == 0


def test_classify_alpha_beta(scenes):
    assert classify_alpha(scenes["full"], 0.3, k=3).beta == 0.3
    assert classify_alpha(scenes["full"], 0.5, k=5).beta == 0.875
    with pytest.raises(ContractViolation):
        classify_alpha(scenes["full"], 0.5, k=2)
    with pytest.raises(ContractViolation):
        classify_alpha(scenes["full"], 1.2)


def test_exists_point_rechecked(scenes):
    for name, a in (("full", 0.7), ("mid", 0.3), ("mid", 0.0), ("point", 0.0)):
        out = classify_alpha(scenes[name], a)
        assert out.exists
        chain = scene_chain(scenes[name], a, out.beta)
        assert np.linalg.norm(compose_apply(chain, out.point) - out.point) <= 1e-9


@pytest.mark.parametrize("name, alpha", [("point", 0.3), ("full", 0.6), ("mid", 0.05), ("mid", 0.3),
                                         ("mid", 0.7), ("shrinking", 0.45), ("shrinking", 0.8)])
def test_outcome_stable_across_starts(name, alpha, scenes, rng):
    first = classify_alpha(scenes[name], alpha).status
    assert first != INCONCLUSIVE
    for _ in range(5):
        s = rng.standard_normal(3)
        s *= rng.uniform(0.0, 10.0) / np.linalg.norm(s)
        assert classify_alpha(scenes[name], alpha, start=s).status == first


def test_nonexpansive_composition(scenes, rng):
    chain = scene_chain(scenes["mid"], 0.3, 0.5)
    for _ in range(30):
        x, y = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
        assert np.linalg.norm(compose_apply(chain, x) - compose_apply(chain, y)) <= np.linalg.norm(x - y) + 1e-9
