import json

import numpy as np
import pytest

from dgiga.benchmarks import flat_two_patch_geometry, flat_unit_patch, quarter_cylinder_geometry, torus_geometry
from dgiga.multipatch import (
    BoundaryFacet,
    Interface,
    MultipatchError,
    MultipatchSurface,
    build_multipatch,
    interface_mismatch,
    mesh_size,
    refine,
    surface_area,
    topology_report,
)


def test_quarter_cylinder_patch_areas():
    # radius 1, height 4, four patches: each covers a quarter of 2*pi*4 / 4
    for patch in quarter_cylinder_geometry().patches:
        assert surface_area(patch) == pytest.approx(np.pi / 2, rel=1e-10)


def test_torus_area():
    # total area 4 pi^2 R r
    total = sum(surface_area(p) for p in torus_geometry().patches)
    assert total == pytest.approx(8 * np.pi**2, rel=1e-10)


@pytest.mark.parametrize("make", [quarter_cylinder_geometry, torus_geometry, flat_two_patch_geometry])
def test_benchmark_geometries_validate(make):
    mp = make()
    mp.validate()
    for itf in mp.interfaces:
        gap_x, gap_m = interface_mismatch(mp, itf)
        assert gap_x <= 1e-10 and gap_m <= 1e-10


def test_torus_is_closed():
    mp = torus_geometry()
    assert not mp.boundaries
    assert len(mp.interfaces) == 2 * len(mp.patches)


def test_json_round_trip(tmp_path):
    mp = quarter_cylinder_geometry()
    path = tmp_path / "cyl.json"
    mp.save(path)
    mp2 = build_multipatch(path)
    assert mp2.interfaces == mp.interfaces and mp2.boundaries == mp.boundaries
    xs = np.linspace(0, 1, 5)
    for a, b in zip(mp.patches, mp2.patches):
        np.testing.assert_allclose(a(xs, xs), b(xs, xs), atol=1e-15)


def _single():
    return flat_unit_patch()


def test_unmatched_side_rejected():
    mp = _single()
    bad = MultipatchSurface(mp.patches, (), mp.boundaries[:3])
    with pytest.raises(MultipatchError, match="unmatched"):
        bad.validate()


def test_side_used_twice_rejected():
    mp = _single()
    extra = mp.boundaries + (BoundaryFacet(0, mp.boundaries[0].side, "neumann"),)
    with pytest.raises(MultipatchError, match="twice"):
        MultipatchSurface(mp.patches, (), extra).validate()


def test_unknown_kind_and_side_rejected():
    mp = _single()
    with pytest.raises(MultipatchError):
        MultipatchSurface(mp.patches, (), (BoundaryFacet(0, "u_min", "robin"),) + mp.boundaries[1:]).validate()
    with pytest.raises(MultipatchError):
        MultipatchSurface(mp.patches, (), (BoundaryFacet(0, "left", "dirichlet"),) + mp.boundaries[1:]).validate()


def test_geometric_mismatch_rejected():
    mp = flat_two_patch_geometry(rotate=False)
    itf = mp.interfaces[0]
    # joining the wrong orientation breaks point matching
    flipped = Interface(itf.patch_a, itf.side_a, itf.patch_b, itf.side_b, not itf.flip)
    with pytest.raises(MultipatchError, match="does not match"):
        MultipatchSurface(mp.patches, (flipped,), mp.boundaries).validate()


def test_missing_field_and_bad_json():
    with pytest.raises(MultipatchError):
        build_multipatch({"interfaces": []})
    with pytest.raises(json.JSONDecodeError):
        build_multipatch("{not json")


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_refine_element_counts(level):
    mp = quarter_cylinder_geometry()
    rep = topology_report(mp, level)
    base = topology_report(mp, 0)["elements"]
    assert rep["elements"] == [n * 4**level for n in base]


def test_refine_rejects_negative_level():
    with pytest.raises(ValueError):
        refine(flat_unit_patch(), -1)


def test_mesh_size_unit_square():
    mp = flat_unit_patch()
    bu, bv = refine(mp, 1)[0]
    assert mesh_size(mp.patches[0], bu, bv) == pytest.approx(np.sqrt(2) / 2)


@pytest.mark.parametrize("make", [quarter_cylinder_geometry, torus_geometry])
def test_mesh_size_halves_and_quasi_uniform(make):
    mp = make()
    hs = [max(topology_report(mp, lev)["h"]) for lev in range(5)]
    ratios = np.array(hs[1:]) / np.array(hs[:-1])
    assert np.all((ratios >= 0.49) & (ratios <= 0.55))
    # chords of curved elements approach dyadic halving from above
    assert ratios[-1] <= 0.505
    assert topology_report(mp, 2)["C_u"] <= 3.0


def test_interface_swap_is_consistent():
    mp = torus_geometry()
    for itf in mp.interfaces:
        sw = itf.swapped()
        assert sw.swapped() == itf
        assert interface_mismatch(mp, sw)[0] <= 1e-10
