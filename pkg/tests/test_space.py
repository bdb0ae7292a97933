import numpy as np
import pytest

from dgiga.benchmarks import flat_unit_patch, quarter_cylinder_geometry, torus_geometry
from dgiga.quadrature import gauss_legendre
from dgiga.space import DiscreteFunction, build_space, element_batches, evaluate_element


def test_cylinder_dof_counts():
    mp = quarter_cylinder_geometry()
    # one element per patch at level 0: (p+1)^2 functions each
    assert build_space(mp, 2, 0).total_dofs == 4 * 9
    sp = build_space(mp, 3, 2)
    assert sp.total_dofs == 4 * (4 + 3) ** 2
    offs = [s.offset for s in sp.patches]
    assert offs == [k * 49 for k in range(4)]
    assert sp.patch_slice(1) == slice(49, 98)


def test_degree_below_two_rejected():
    with pytest.raises(ValueError):
        build_space(flat_unit_patch(), 1, 0)


@pytest.mark.parametrize("p,mult", [(2, 1), (3, 2), (4, 3)])
def test_torus_space_keeps_geometry_smoothness(p, mult):
    # the nine-point circle is C^1 at its double knots, so the space is C^1 there too
    sp = build_space(torus_geometry(), p, 1)
    kv = sp.patches[0].kv_u
    for b in (0.25, 0.5, 0.75):
        assert kv.multiplicity(b) == mult
    assert kv.multiplicity(0.125) == 1


def test_constant_function_on_torus():
    # partition of unity: all-ones coefficients give u = 1 with vanishing derivatives
    sp = build_space(torus_geometry(), 3, 1)
    uh = DiscreteFunction(sp, np.ones(sp.total_dofs))
    d = uh.evaluate(2, [0.37, 0.81])
    assert d["value"] == pytest.approx(1.0, abs=1e-13)
    assert np.max(np.abs(d["grad"])) < 1e-11
    assert abs(d["lap"]) < 1e-9
    assert np.max(np.abs(d["grad_lap"])) < 1e-7


def test_batches_match_single_element_evaluation():
    sp = build_space(quarter_cylinder_geometry(), 3, 1)
    rule = gauss_legendre(4)
    seen = 0
    for batch in element_batches(sp, 1, rule, max_sites=40):
        vals = batch.per_element(batch.basis.lap)
        for k, (su, sv) in enumerate(batch.elements):
            ps = sp.patches[1]
            ua, ub = ps.kv_u.span_interval(su)
            va, vb = ps.kv_v.span_interval(sv)
            ev = evaluate_element(sp, 1, su, sv, ua + (ub - ua) * rule.nodes, va + (vb - va) * rule.nodes)
            np.testing.assert_array_equal(batch.dofs[k], ev.dofs)
            np.testing.assert_allclose(vals[k], ev.basis.lap, rtol=1e-12, atol=1e-10)
            seen += 1
    assert seen == len(sp.patches[1].elements())


def test_batch_weights_integrate_area():
    sp = build_space(quarter_cylinder_geometry(), 2, 2)
    area = sum(b.weights.sum() for ip in range(4) for b in element_batches(sp, ip, gauss_legendre(5)))
    assert area == pytest.approx(2 * np.pi, rel=1e-10)


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_discrete_function_round_trip(tmp_path, suffix):
    sp = build_space(quarter_cylinder_geometry(), 2, 1)
    c = np.random.default_rng(0).normal(size=sp.total_dofs)
    path = tmp_path / f"u{suffix}"
    DiscreteFunction(sp, c).save(path)
    np.testing.assert_array_equal(DiscreteFunction.load(sp, path).coefficients, c)
    with pytest.raises(ValueError, match="signature"):
        DiscreteFunction.load(build_space(quarter_cylinder_geometry(), 2, 2), path)


def test_coefficient_length_checked():
    sp = build_space(flat_unit_patch(), 2, 0)
    with pytest.raises(ValueError):
        DiscreteFunction(sp, np.zeros(sp.total_dofs + 1))
