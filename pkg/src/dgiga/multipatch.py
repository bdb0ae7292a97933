"""Multipatch topology, facet classification and dyadic patch meshes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import SIDES, GeometryError, NurbsPatch, facet_frame, frames, side_sites

__all__ = [
    "MultipatchError",
    "Interface",
    "BoundaryFacet",
    "MultipatchSurface",
    "PatchMesh",
    "build_multipatch",
    "refine",
    "patch_mesh",
    "mesh_size",
    "topology_report",
]

MATCH_SAMPLES = 33
MATCH_TOL = 1e-10
BOUNDARY_KINDS = ("dirichlet", "neumann")


class MultipatchError(ValueError):
    """Inconsistent multipatch topology."""


@dataclass(frozen=True)
class Interface:
    """Interior facet between ``side_a`` of ``patch_a`` and ``side_b`` of ``patch_b``.

    With ``flip`` the facet parameter ``t`` on side a meets ``1 - t`` on side b.
    """

    patch_a: int
    side_a: str
    patch_b: int
    side_b: str
    flip: bool = False

    def map_t(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 - t if self.flip else t

    def swapped(self) -> Interface:
        return Interface(self.patch_b, self.side_b, self.patch_a, self.side_a, self.flip)


@dataclass(frozen=True)
class BoundaryFacet:
    patch: int
    side: str
    kind: str


@dataclass(frozen=True, eq=False)
class MultipatchSurface:
    patches: tuple[NurbsPatch, ...]
    interfaces: tuple[Interface, ...] = ()
    boundaries: tuple[BoundaryFacet, ...] = ()
    name: str = ""

    @property
    def dirichlet(self) -> list[BoundaryFacet]:
        return [b for b in self.boundaries if b.kind == "dirichlet"]

    @property
    def neumann(self) -> list[BoundaryFacet]:
        return [b for b in self.boundaries if b.kind == "neumann"]

    def validate(self) -> None:
        n = len(self.patches)
        used: dict[tuple[int, str], str] = {}

        def claim(p, s, what):
            if not (0 <= p < n):
                raise MultipatchError(f"{what}: unknown patch {p}")
            if s not in SIDES:
                raise MultipatchError(f"{what}: unknown side {s!r}")
            if (p, s) in used:
                raise MultipatchError(f"side {s} of patch {p} used twice ({used[(p, s)]} and {what})")
            used[(p, s)] = what

        for k, itf in enumerate(self.interfaces):
            if itf.patch_a == itf.patch_b and itf.side_a == itf.side_b:
                raise MultipatchError(f"interface {k} joins a side to itself")
            claim(itf.patch_a, itf.side_a, f"interface {k}")
            claim(itf.patch_b, itf.side_b, f"interface {k}")
        for k, b in enumerate(self.boundaries):
            if b.kind not in BOUNDARY_KINDS:
                raise MultipatchError(f"boundary {k}: unknown kind {b.kind!r}")
            claim(b.patch, b.side, f"boundary {k}")
        missing = [(p, s) for p in range(n) for s in SIDES if (p, s) not in used]
        if missing:
            raise MultipatchError(f"unmatched patch sides: {missing}")
        for k, itf in enumerate(self.interfaces):
            err_x, err_m = interface_mismatch(self, itf)
            if err_x > MATCH_TOL or err_m > MATCH_TOL:
                raise MultipatchError(
                    f"interface {k} does not match geometrically (point gap {err_x:.2e}, co-normal gap {err_m:.2e})"
                )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "patches": [p.to_dict() for p in self.patches],
            "interfaces": [
                {"patch_a": i.patch_a, "side_a": i.side_a, "patch_b": i.patch_b, "side_b": i.side_b, "flip": i.flip}
                for i in self.interfaces
            ],
            "boundaries": [{"patch": b.patch, "side": b.side, "kind": b.kind} for b in self.boundaries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> MultipatchSurface:
        try:
            patches = tuple(NurbsPatch.from_dict(p, k) for k, p in enumerate(d["patches"]))
            itfs = tuple(
                Interface(int(i["patch_a"]), i["side_a"], int(i["patch_b"]), i["side_b"], bool(i.get("flip", False)))
                for i in d.get("interfaces", [])
            )
            bnds = tuple(BoundaryFacet(int(b["patch"]), b["side"], b["kind"]) for b in d.get("boundaries", []))
        except KeyError as exc:
            raise MultipatchError(f"missing field {exc}") from exc
        return cls(patches, itfs, bnds, d.get("name", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def interface_mismatch(mp: MultipatchSurface, itf: Interface, samples: int = MATCH_SAMPLES):
    """Max point gap and max ``|m_a + m_b|`` over sampled facet points."""
    t = np.linspace(0.0, 1.0, samples)
    pa, ma, _ = facet_frame(mp.patches[itf.patch_a], itf.side_a, t)
    pb, mb, _ = facet_frame(mp.patches[itf.patch_b], itf.side_b, itf.map_t(t))
    return float(np.max(np.abs(pa - pb))), float(np.max(np.abs(ma + mb)))


def build_multipatch(source) -> MultipatchSurface:
    """Load (path, JSON text or dict) and validate a multipatch surface."""
    if isinstance(source, MultipatchSurface):
        mp = source
    else:
        if isinstance(source, (str, Path)) and Path(source).exists():
            d = json.loads(Path(source).read_text())
        elif isinstance(source, str):
            d = json.loads(source)
        else:
            d = source
        mp = MultipatchSurface.from_dict(d)
    try:
        mp.validate()
    except GeometryError as exc:
        raise MultipatchError(str(exc)) from exc
    return mp


def _dyadic(breaks, level: int) -> np.ndarray:
    breaks = np.asarray(breaks, dtype=float)
    k = 2**level
    pieces = [a + (b - a) * np.arange(k) / k for a, b in zip(breaks[:-1], breaks[1:])]
    return np.concatenate(pieces + [breaks[-1:]])


def refine(mp: MultipatchSurface, level: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Breakpoints per patch after ``level`` dyadic subdivisions of every geometry span."""
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    return [(_dyadic(p.kv_u.breakpoints, level), _dyadic(p.kv_v.breakpoints, level)) for p in mp.patches]


@dataclass
class PatchMesh:
    elements: list[tuple[tuple[float, float], tuple[float, float]]]
    element_sizes: np.ndarray
    h: float = field(init=False)
    quasi_uniformity: float = field(init=False)

    def __post_init__(self):
        self.h = float(np.max(self.element_sizes))
        self.quasi_uniformity = float(self.h / np.min(self.element_sizes))


def _element_diameters(patch: NurbsPatch, bu, bv) -> np.ndarray:
    # corners and edge midpoints of every element, mapped
    mu = 0.5 * (bu[:-1] + bu[1:])
    mv = 0.5 * (bv[:-1] + bv[1:])
    us = np.sort(np.concatenate([bu, mu]))
    vs = np.sort(np.concatenate([bv, mv]))
    X = patch(us, vs)
    nu, nv = len(bu) - 1, len(bv) - 1
    sizes = np.empty((nu, nv))
    sel = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1), (2, 2)]
    for i in range(nu):
        for j in range(nv):
            pts = np.array([X[2 * i + a, 2 * j + b] for a, b in sel])
            d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
            sizes[i, j] = d.max()
    return sizes


def patch_mesh(patch: NurbsPatch, breaks_u, breaks_v) -> PatchMesh:
    bu, bv = np.asarray(breaks_u, dtype=float), np.asarray(breaks_v, dtype=float)
    elements = [((bu[i], bu[i + 1]), (bv[j], bv[j + 1])) for i in range(len(bu) - 1) for j in range(len(bv) - 1)]
    return PatchMesh(elements, _element_diameters(patch, bu, bv).ravel())


def mesh_size(patch: NurbsPatch, breaks_u, breaks_v) -> float:
    """Largest element diameter, each estimated by the max chord among corners and edge midpoints."""
    return patch_mesh(patch, breaks_u, breaks_v).h


def topology_report(mp: MultipatchSurface, level: int = 0) -> dict:
    parts = refine(mp, level)
    meshes = [patch_mesh(p, bu, bv) for p, (bu, bv) in zip(mp.patches, parts)]
    gaps = [interface_mismatch(mp, itf) for itf in mp.interfaces]
    return {
        "name": mp.name,
        "level": level,
        "patches": len(mp.patches),
        "interior_facets": len(mp.interfaces),
        "dirichlet_facets": len(mp.dirichlet),
        "neumann_facets": len(mp.neumann),
        "elements": [len(m.elements) for m in meshes],
        "h": [m.h for m in meshes],
        "C_u": max(m.quasi_uniformity for m in meshes),
        "max_interface_point_gap": max((g[0] for g in gaps), default=0.0),
        "max_interface_conormal_gap": max((g[1] for g in gaps), default=0.0),
    }


def surface_area(patch: NurbsPatch, n: int = 8) -> float:
    """Area of a patch by elementwise Gauss quadrature over its geometry knot spans."""
    from .quadrature import gauss_legendre

    rule = gauss_legendre(n)
    total = 0.0
    bu, bv = patch.kv_u.breakpoints, patch.kv_v.breakpoints
    for a, b in zip(bu[:-1], bu[1:]):
        for c, d in zip(bv[:-1], bv[1:]):
            us = a + (b - a) * rule.nodes
            vs = c + (d - c) * rule.nodes
            fr = frames(patch, us, vs)
            w = np.outer(rule.weights, rule.weights).ravel() * (b - a) * (d - c)
            total += float(np.sum(w * fr.g))
    return total


__all__ += ["interface_mismatch", "surface_area", "side_sites"]
