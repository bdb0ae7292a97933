"""Interior-penalty assembly of the surface biharmonic bilinear and linear forms.

Facet conventions: on an interior facet the designated side ``a`` supplies the
co-normal ``m``. Jumps are ``v_a - v_b`` and ``m . (grad v_a - grad v_b)``;
averages are ``(lap v_a + lap v_b) / 2`` and ``m . (grad lap v_a + grad lap v_b) / 2``.
On Dirichlet facets jumps and averages are the one-sided traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .multipatch import Interface
from .quadrature import gauss_legendre
from .space import DgSpace, element_batches, side_batch

__all__ = [
    "AssemblyError",
    "VARIANTS",
    "MethodConfig",
    "ProblemData",
    "AssembledSystem",
    "FacetTraces",
    "jump_average",
    "facet_segments",
    "interior_facet_traces",
    "dirichlet_facet_traces",
    "assemble",
    "dirichlet_rhs_terms",
    "default_penalty",
]

VARIANTS = {
    "SIPG": (1, 1),
    "NIPG": (-1, -1),
    "SSIPG1": (-1, 1),
    "SSIPG2": (1, -1),
}


class AssemblyError(RuntimeError):
    """Non-finite contribution or inconsistent input during assembly."""


def default_penalty(p: int) -> float:
    return (p + 1) * (p + 3) / 3.0


@dataclass(frozen=True)
class MethodConfig:
    variant: str
    delta0: float
    delta1: float

    def __post_init__(self):
        v = self.variant.upper()
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        object.__setattr__(self, "variant", v)
        if not (self.delta0 > 0 and self.delta1 > 0):
            raise ValueError("penalty parameters must be positive")

    @classmethod
    def for_degree(cls, variant: str, p: int, delta0: float | None = None, delta1: float | None = None):
        d = default_penalty(p)
        return cls(variant, d if delta0 is None else delta0, d if delta1 is None else delta1)

    @property
    def beta0(self) -> int:
        return VARIANTS[self.variant][0]

    @property
    def beta1(self) -> int:
        return VARIANTS[self.variant][1]


@dataclass
class ProblemData:
    """Source and boundary data as callbacks of physical points ``x`` (n, 3).

    ``g1`` and ``g3`` also receive the outward co-normal ``m`` (n, 3).
    """

    f: Callable
    g0: Callable | None = None
    g1: Callable | None = None
    g2: Callable | None = None
    g3: Callable | None = None


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    config: MethodConfig
    space: DgSpace
    facet_weights: list[dict] = field(default_factory=list)

    def signature(self) -> dict:
        return {**self.space.signature(), "variant": self.config.variant,
                "delta0": self.config.delta0, "delta1": self.config.delta1}

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def export(self, path) -> None:
        """Write ``row col value`` lines, a blank line, then the right-hand side."""
        r, c, v = self.triplets()
        with open(path, "w") as fh:
            fh.write(f"# {self.matrix.shape[0]} {self.matrix.shape[1]} {len(v)}\n")
            for i, j, a in zip(r, c, v):
                fh.write(f"{i} {j} {float(a)!r}\n")
            fh.write("\n")
            for b in self.rhs:
                fh.write(f"{float(b)!r}\n")


@dataclass
class FacetTraces:
    """Jump/average coefficient arrays of all active basis functions on one facet segment.

    Arrays are ``(nq, nb)`` with ``dofs`` listing the ``nb`` global indices
    (both sides concatenated on interior facets).
    """

    jump: np.ndarray
    jump_grad: np.ndarray
    avg_lap: np.ndarray
    avg_grad_lap: np.ndarray
    dofs: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    conormal: np.ndarray


def jump_average(side_a: dict, side_b: dict | None, m: np.ndarray):
    """Jumps and averages from one-sided traces.

    ``side_*`` hold ``value``, ``grad``, ``lap``, ``grad_lap`` with matching
    leading shapes; ``m`` is the outward co-normal of side a. With
    ``side_b=None`` (Dirichlet facet) the one-sided traces are returned.
    """
    def dot(g):
        return np.einsum("...k,...k->...", g, m)

    if side_b is None:
        return (side_a["value"], dot(side_a["grad"]), side_a["lap"], dot(side_a["grad_lap"]))
    return (
        side_a["value"] - side_b["value"],
        dot(side_a["grad"] - side_b["grad"]),
        0.5 * (side_a["lap"] + side_b["lap"]),
        0.5 * dot(side_a["grad_lap"] + side_b["grad_lap"]),
    )


def _tangential_breaks(space: DgSpace, ip: int, side: str) -> np.ndarray:
    ps = space.patches[ip]
    kv = ps.kv_v if side in ("u_min", "u_max") else ps.kv_u
    return kv.breakpoints


def facet_segments(space: DgSpace, itf: Interface | None, ip: int, side: str) -> np.ndarray:
    """Breakpoints along a facet in side-a parametrization; checks mesh matching."""
    ba = _tangential_breaks(space, ip, side)
    if itf is not None:
        bb = np.sort(itf.map_t(_tangential_breaks(space, itf.patch_b, itf.side_b)))
        if len(ba) != len(bb) or np.max(np.abs(ba - bb)) > 1e-12:
            raise AssemblyError(f"non-matching meshes on interface {itf}")
    return ba


def facet_nodes(breaks, nquad: int):
    """Gauss nodes ``(nseg, nq)`` and weights per tangential segment."""
    rule = gauss_legendre(nquad)
    a, b = breaks[:-1, None], breaks[1:, None]
    return a + (b - a) * rule.nodes[None, :], (b - a) * rule.weights[None, :]


def _traces(batch, sl):
    b = batch.basis
    return {"value": b.value[sl], "grad": b.grad[sl], "lap": b.lap[sl], "grad_lap": b.grad_lap[sl]}


def interior_facet_traces(space: DgSpace, itf: Interface, nquad: int):
    """Yield :class:`FacetTraces` per knot span along an interior facet."""
    breaks = facet_segments(space, itf, itf.patch_a, itf.side_a)
    t, w = facet_nodes(breaks, nquad)
    side_a = side_batch(space, itf.patch_a, itf.side_a, t)
    side_b = side_batch(space, itf.patch_b, itf.side_b, itf.map_t(t))
    for k in range(t.shape[0]):
        sl = side_a.segment(k)
        ta, tb = _traces(side_a, sl), _traces(side_b, sl)
        m = side_a.conormal[sl]
        na, nb = side_a.dofs.shape[1], side_b.dofs.shape[1]
        zero_a = {key: np.zeros_like(v) for key, v in ta.items()}
        zero_b = {key: np.zeros_like(v) for key, v in tb.items()}
        # basis functions of side a, then side b, each vanishing on the other side
        left = {key: np.concatenate([ta[key], zero_b[key]], axis=1) for key in ta}
        right = {key: np.concatenate([zero_a[key], tb[key]], axis=1) for key in tb}
        j0, j1, a2, a3 = jump_average(left, right, m[:, None, :])
        yield FacetTraces(
            jump=j0, jump_grad=j1, avg_lap=a2, avg_grad_lap=a3,
            dofs=np.concatenate([side_a.dofs[k], side_b.dofs[k]]),
            weights=w[k] * side_a.arc[sl], points=side_a.points[sl], conormal=m,
        ), (na, nb)


def dirichlet_facet_traces(space: DgSpace, ip: int, side: str, nquad: int):
    breaks = facet_segments(space, None, ip, side)
    t, w = facet_nodes(breaks, nquad)
    batch = side_batch(space, ip, side, t)
    for k in range(t.shape[0]):
        sl = batch.segment(k)
        m = batch.conormal[sl]
        j0, j1, a2, a3 = jump_average(_traces(batch, sl), None, m[:, None, :])
        yield FacetTraces(
            jump=j0, jump_grad=j1, avg_lap=a2, avg_grad_lap=a3,
            dofs=batch.dofs[k], weights=w[k] * batch.arc[sl], points=batch.points[sl], conormal=m,
        )


def facet_mesh_size(space: DgSpace, itf: Interface | None, ip: int) -> float:
    h = space.mesh_sizes
    if itf is None:
        return float(h[ip])
    return float(min(h[itf.patch_a], h[itf.patch_b]))


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, dofs_r, dofs_c, block, where: str):
        if not np.all(np.isfinite(block)):
            raise AssemblyError(f"non-finite contribution on {where}")
        self.rows.append(np.repeat(dofs_r, len(dofs_c)))
        self.cols.append(np.tile(dofs_c, len(dofs_r)))
        self.vals.append(block.ravel())

    def add_batch(self, dofs, blocks, where: str):
        """``blocks[e]`` couples ``dofs[e]`` with itself."""
        if not np.all(np.isfinite(blocks)):
            raise AssemblyError(f"non-finite contribution on {where}")
        nb = dofs.shape[1]
        self.rows.append(np.repeat(dofs, nb, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, nb)).ravel())
        self.vals.append(blocks.ravel())

    def matrix(self, n: int) -> sp.csr_matrix:
        if not self.vals:
            return sp.csr_matrix((n, n))
        r, c, v = (np.concatenate(x) for x in (self.rows, self.cols, self.vals))
        return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def _facet_block(tr: FacetTraces, beta0, beta1, pen1, pen0, parts) -> np.ndarray:
    # rows: test functions v, columns: trial functions u
    w = tr.weights[:, None]
    J0, J1, A2, A3 = tr.jump, tr.jump_grad, tr.avg_lap, tr.avg_grad_lap
    B = np.zeros((J0.shape[1], J0.shape[1]))
    if "consistency" in parts:
        B -= (J1 * w).T @ A2
        B += (J0 * w).T @ A3
    if "symmetry" in parts:
        B -= beta0 * (A2 * w).T @ J1
        B += beta1 * (A3 * w).T @ J0
    if "penalty_value" in parts:
        B += pen1 * (J0 * w).T @ J0
    if "penalty_grad" in parts:
        B += pen0 * (J1 * w).T @ J1
    return B


ALL_PARTS = frozenset({"volume", "consistency", "symmetry", "penalty_value", "penalty_grad", "rhs"})


def dirichlet_rhs_terms(tr: FacetTraces, data: ProblemData, config: MethodConfig, h: float) -> np.ndarray:
    """Load contributions of one Dirichlet facet segment.

    Mirrors the facet terms of the bilinear form with the trial traces replaced
    by ``g0`` and ``g1``, using the same ``delta/h`` scalings.
    """
    if data.g0 is None or data.g1 is None:
        raise AssemblyError("Dirichlet facet requires g0 and g1 callbacks")
    g0 = np.asarray(data.g0(tr.points), dtype=float)
    g1 = np.asarray(data.g1(tr.points, tr.conormal), dtype=float)
    w = tr.weights
    pen1, pen0 = config.delta1 / h**3, config.delta0 / h
    integrand = (
        (pen1 * tr.jump + config.beta1 * tr.avg_grad_lap) * g0[:, None]
        + (pen0 * tr.jump_grad - config.beta0 * tr.avg_lap) * g1[:, None]
    )
    return w @ integrand


def assemble(space: DgSpace, config: MethodConfig, data: ProblemData, nquad: int | None = None,
             parts=ALL_PARTS) -> AssembledSystem:
    """Assemble matrix and load vector; ``parts`` selects bilinear-form terms (for diagnostics)."""
    mp = space.mp
    p = space.degree
    nquad = p + 2 if nquad is None else nquad
    rule = gauss_legendre(nquad)
    n = space.total_dofs
    trip = _Triplets()
    rhs = np.zeros(n)
    weights = []

    for ip in range(len(space.patches)):
        for batch in element_batches(space, ip, rule):
            b = batch.basis
            w = batch.weights.ravel()
            where = f"patch {ip}"
            if "volume" in parts:
                lap = batch.per_element(b.lap)
                val = batch.per_element(b.value)
                we = batch.weights[:, :, None]
                K = np.einsum("eqi,eqj->eij", lap * we, lap) + np.einsum("eqi,eqj->eij", val * we, val)
                trip.add_batch(batch.dofs, K, where)
            if "rhs" in parts:
                fv = np.asarray(data.f(batch.points), dtype=float)
                loc = np.einsum("eq,eqi->ei", (w * fv).reshape(batch.nel, -1), batch.per_element(b.value))
                if not np.all(np.isfinite(loc)):
                    raise AssemblyError(f"non-finite load on {where}")
                np.add.at(rhs, batch.dofs.ravel(), loc.ravel())

    for k, itf in enumerate(mp.interfaces):
        h = facet_mesh_size(space, itf, itf.patch_a)
        pen1, pen0 = config.delta1 / h**3, config.delta0 / h
        weights.append({"facet": f"interface {k}", "h": h, "value_weight": pen1, "grad_weight": pen0})
        for tr, _ in interior_facet_traces(space, itf, nquad):
            B = _facet_block(tr, config.beta0, config.beta1, pen1, pen0, parts)
            trip.add(tr.dofs, tr.dofs, B, f"interface {k}")

    for k, bf in enumerate(mp.boundaries):
        if bf.kind == "dirichlet":
            h = facet_mesh_size(space, None, bf.patch)
            pen1, pen0 = config.delta1 / h**3, config.delta0 / h
            weights.append({"facet": f"boundary {k}", "h": h, "value_weight": pen1, "grad_weight": pen0})
            for tr in dirichlet_facet_traces(space, bf.patch, bf.side, nquad):
                B = _facet_block(tr, config.beta0, config.beta1, pen1, pen0, parts)
                trip.add(tr.dofs, tr.dofs, B, f"Dirichlet boundary {k}")
                if "rhs" in parts:
                    loc = dirichlet_rhs_terms(tr, data, config, h)
                    if not np.all(np.isfinite(loc)):
                        raise AssemblyError(f"non-finite load on Dirichlet boundary {k}")
                    np.add.at(rhs, tr.dofs, loc)
        elif "rhs" in parts:
            if data.g2 is None or data.g3 is None:
                raise AssemblyError("Neumann facet requires g2 and g3 callbacks")
            for tr in dirichlet_facet_traces(space, bf.patch, bf.side, nquad):
                g2 = np.asarray(data.g2(tr.points), dtype=float)
                g3 = np.asarray(data.g3(tr.points, tr.conormal), dtype=float)
                loc = tr.weights @ (tr.jump_grad * g2[:, None] - tr.jump * g3[:, None])
                if not np.all(np.isfinite(loc)):
                    raise AssemblyError(f"non-finite load on Neumann boundary {k}")
                np.add.at(rhs, tr.dofs, loc)

    return AssembledSystem(trip.matrix(n), rhs, config, space, weights)
