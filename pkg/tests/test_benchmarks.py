import numpy as np
import pytest

from dgiga.benchmarks import (
    BENCHMARKS,
    CylinderSolution,
    PlanarPolynomialSolution,
    TorusSolution,
    get_benchmark,
)

from oracles import cylinder_case, max_rel, torus_case


def test_cylinder_source_matches_symbolic_bilaplacian():
    ex = CylinderSolution(3.0, 4.0)
    x, u, lap, f = cylinder_case(ex.rho)
    np.testing.assert_allclose(ex.value(x), u, rtol=1e-12, atol=1e-12)
    assert max_rel(ex.lap(x), lap) <= 1e-10
    assert max_rel(ex.source(x), f) <= 1e-8
    # the published source is the bilaplacian alone; the reaction term is added on top
    np.testing.assert_allclose(ex.source(x) - ex.bilaplacian(x), ex.value(x), atol=1e-12)


def test_torus_source_matches_symbolic_bilaplacian():
    ex = TorusSolution(2.0, 1.0)
    x, u, lap, f = torus_case()
    np.testing.assert_allclose(ex.value(x), u, atol=1e-13)
    assert max_rel(ex.lap(x), lap) <= 1e-10
    assert max_rel(ex.source(x), f) <= 1e-8


@pytest.mark.parametrize("ex,sample", [
    (CylinderSolution(), lambda t: np.stack([np.cos(t[0]), np.sin(t[0]), t[1]], 1)),
    (TorusSolution(), lambda t: np.stack([(2 + np.cos(t[1])) * np.cos(t[0]), (2 + np.cos(t[1])) * np.sin(t[0]),
                                          np.sin(t[1])], 1)),
])
def test_gradients_against_finite_differences(ex, sample):
    # directional derivatives along parameter lines equal grad . dX/dt
    rng = np.random.default_rng(2)
    t = rng.uniform(0.1, 1.4, (2, 20))
    eps = 1e-6
    for k, fn in ((0, ex.value), (1, ex.lap)):
        gfn = ex.grad if k == 0 else ex.grad_lap
        for d in range(2):
            dt = np.zeros_like(t)
            dt[d] = eps
            fd = (fn(sample(t + dt)) - fn(sample(t - dt))) / (2 * eps)
            dX = (sample(t + dt) - sample(t - dt)) / (2 * eps)
            an = np.einsum("qk,qk->q", gfn(sample(t)), dX)
            assert np.max(np.abs(fd - an)) <= 1e-6 * max(1.0, np.max(np.abs(an)))


def test_planar_polynomial_is_biharmonic_consistent():
    ex = PlanarPolynomialSolution(3, frame=np.eye(3))
    x = np.random.default_rng(3).uniform(0, 1, (10, 3))
    x[:, 2] = 0
    # a cubic has a linear Laplacian, so the source is the value itself
    np.testing.assert_allclose(ex.source(x), ex.value(x), atol=1e-12)


def test_problem_data_boundary_derivatives():
    ex = CylinderSolution()
    data = ex.problem_data()
    x = np.array([[1.0, 0.0, 0.7], [0.0, 1.0, 1.3]])
    m = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    np.testing.assert_allclose(data.g1(x, m), np.einsum("qk,qk->q", ex.grad(x), m))
    np.testing.assert_allclose(data.g3(x, m), np.einsum("qk,qk->q", ex.grad_lap(x), m))
    np.testing.assert_allclose(data.g0(x), ex.value(x))


def test_registry():
    assert set(BENCHMARKS) == {"quarter-cylinder", "torus", "flat-patch"}
    for name in BENCHMARKS:
        b = get_benchmark(name)
        assert b.name == name
    assert get_benchmark("torus").expected_rate(3) == 2.0
    assert get_benchmark("flat-patch").expected_rate(3) is None
    assert get_benchmark("flat-patch").specialize(4).params["polynomial_degree"] == 4
    with pytest.raises(KeyError):
        get_benchmark("sphere")


def test_cylinder_point_values():
    ex = CylinderSolution()
    s2 = np.sqrt(2) / 2
    x = np.array([[s2, s2, 1.0], [1.0, 0.0, 2.3], [0.0, 1.0, 0.4]])
    ref = ex.rho * (1 - s2) ** 2 * s2
    np.testing.assert_allclose(ex.value(x), [ref, 0.0, 0.0], atol=1e-15)


def test_torus_vanishes_at_origin_angles():
    assert TorusSolution().value(np.array([[3.0, 0.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)
