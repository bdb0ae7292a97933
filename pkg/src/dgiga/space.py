"""Discontinuous multipatch B-spline space and discrete functions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import (
    GeometryError,
    ShapeFunctionSurfaceData,
    SurfaceFrame,
    facet_frame,
    frames,
    shape_surface_data,
    surface_operators,
)
from .multipatch import MultipatchSurface, mesh_size, refine
from .quadrature import QuadratureRule
from .splines import KnotVector, basis_derivs_array, basis_table, find_span, find_spans

__all__ = [
    "PatchSpace",
    "DgSpace",
    "ElementEvaluation",
    "ElementBatch",
    "element_batches",
    "DiscreteFunction",
    "build_space",
    "evaluate_element",
    "evaluate_side",
    "SideBatch",
    "side_batch",
]


@dataclass(frozen=True)
class PatchSpace:
    kv_u: KnotVector
    kv_v: KnotVector
    offset: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.kv_u.n, self.kv_v.n

    @property
    def ndofs(self) -> int:
        return self.kv_u.n * self.kv_v.n

    def elements(self):
        """Pairs of span indices, u-major."""
        return [(int(su), int(sv)) for su in self.kv_u.spans for sv in self.kv_v.spans]

    def element_dofs(self, span_u: int, span_v: int) -> np.ndarray:
        pu, pv = self.kv_u.degree, self.kv_v.degree
        iu = np.arange(span_u - pu, span_u + 1)
        iv = np.arange(span_v - pv, span_v + 1)
        return self.offset + (iu[:, None] * self.kv_v.n + iv[None, :]).ravel()


def _space_knots(patch, direction: int, breaks, p: int) -> KnotVector:
    """Open knot vector of degree ``p`` on ``breaks``.

    New dyadic knots are simple. Interior geometry breakpoints keep the
    parametric smoothness the mapping actually has there (at least C^1, at
    most C^{p-1}) so that pulled-back smooth functions stay approximable.
    """
    kv_geo = patch.kv_u if direction == 0 else patch.kv_v
    geo_inner = kv_geo.breakpoints[1:-1]
    mults = []
    for b in breaks[1:-1]:
        if np.any(np.abs(geo_inner - b) < 1e-14):
            c = patch.continuity(direction, float(b))
            if c < 1:
                raise GeometryError(
                    f"patch {patch.patch_id}: mapping is only C^{c} across knot {b}; C^1 required"
                )
            mults.append(p - min(p - 1, c))
        else:
            mults.append(1)
    return KnotVector.from_breakpoints(breaks, p, mults)


@dataclass(frozen=True, eq=False)
class DgSpace:
    mp: MultipatchSurface
    degree: int
    level: int
    patches: tuple[PatchSpace, ...]

    @property
    def total_dofs(self) -> int:
        last = self.patches[-1]
        return last.offset + last.ndofs

    @cached_property
    def mesh_sizes(self) -> np.ndarray:
        return np.array(
            [mesh_size(p, s.kv_u.breakpoints, s.kv_v.breakpoints) for p, s in zip(self.mp.patches, self.patches)]
        )

    @property
    def h(self) -> float:
        return float(np.max(self.mesh_sizes))

    def signature(self) -> dict:
        return {
            "geometry": self.mp.name,
            "patches": len(self.patches),
            "degree": self.degree,
            "level": self.level,
            "dofs": [s.ndofs for s in self.patches],
            "total_dofs": self.total_dofs,
        }

    def patch_slice(self, ip: int) -> slice:
        s = self.patches[ip]
        return slice(s.offset, s.offset + s.ndofs)


def build_space(mp: MultipatchSurface, p: int, level: int) -> DgSpace:
    if p < 2:
        raise ValueError(f"solution degree must be >= 2, got {p}")
    parts = refine(mp, level)
    spaces = []
    offset = 0
    for patch, (bu, bv) in zip(mp.patches, parts):
        s = PatchSpace(_space_knots(patch, 0, bu, p), _space_knots(patch, 1, bv, p), offset)
        spaces.append(s)
        offset += s.ndofs
    return DgSpace(mp, p, level, tuple(spaces))


@dataclass(frozen=True)
class ElementEvaluation:
    """Geometry and basis surface data at a tensor grid of sites in one element."""

    frame: SurfaceFrame
    basis: ShapeFunctionSurfaceData
    dofs: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.frame.point


@dataclass(frozen=True)
class ElementBatch:
    """Evaluations for a block of elements of one patch.

    Sites are ordered ``(element, qu, qv)``; ``basis`` arrays are
    ``(nel * nq, nb)`` and ``dofs`` is ``(nel, nb)``. ``weights`` include the
    area element.
    """

    frame: SurfaceFrame
    basis: ShapeFunctionSurfaceData
    dofs: np.ndarray
    weights: np.ndarray
    elements: list

    @property
    def nel(self) -> int:
        return self.dofs.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.frame.point

    def per_element(self, arr: np.ndarray) -> np.ndarray:
        return arr.reshape(self.nel, -1, *arr.shape[1:])


def _span_nodes(kv: KnotVector, spans, rule: QuadratureRule):
    lo = kv.array[spans]
    hi = kv.array[np.asarray(spans) + 1]
    x = lo[:, None] + (hi - lo)[:, None] * rule.nodes[None, :]
    w = (hi - lo)[:, None] * rule.weights[None, :]
    return x, w


def element_batches(space: DgSpace, ip: int, rule: QuadratureRule, max_sites: int = 40000):
    """Yield :class:`ElementBatch` blocks covering every element of patch ``ip``.

    Each block holds whole rows of elements in the ``u`` direction so that the
    geometry and basis are evaluated on one tensor grid.
    """
    ps = space.patches[ip]
    patch = space.mp.patches[ip]
    n = len(rule)
    pu, pv = ps.kv_u.degree, ps.kv_v.degree
    spans_v = ps.kv_v.spans
    xv, wv = _span_nodes(ps.kv_v, spans_v, rule)
    Nv = basis_derivs_array(ps.kv_v, xv.ravel(), 3, np.repeat(spans_v, n)).reshape(len(spans_v), n, 4, pv + 1)
    rows = max(1, max_sites // (len(spans_v) * n * n))
    all_u = ps.kv_u.spans
    iv = (spans_v[:, None] - pv + np.arange(pv + 1)[None, :])  # (EV, pv+1)
    for start in range(0, len(all_u), rows):
        spans_u = all_u[start:start + rows]
        EU, EV = len(spans_u), len(spans_v)
        xu, wu = _span_nodes(ps.kv_u, spans_u, rule)
        Nu = basis_derivs_array(ps.kv_u, xu.ravel(), 3, np.repeat(spans_u, n)).reshape(EU, n, 4, pu + 1)
        fr = frames(patch, xu.ravel(), xv.ravel())
        perm = np.arange(EU * n * EV * n).reshape(EU, n, EV, n).transpose(0, 2, 1, 3).ravel()
        fr = fr.take(perm)
        dphi = [[None] * 4 for _ in range(4)]
        for a in range(4):
            for b in range(4 - a):
                dphi[a][b] = np.einsum("uis,vjt->uvijst", Nu[:, :, a], Nv[:, :, b]).reshape(
                    EU * EV * n * n, (pu + 1) * (pv + 1)
                )
        basis = surface_operators(fr, dphi)
        w = np.einsum("ui,vj->uvij", wu, wv).reshape(EU * EV, n * n) * fr.g.reshape(EU * EV, n * n)
        iu = spans_u[:, None] - pu + np.arange(pu + 1)[None, :]  # (EU, pu+1)
        dofs = ps.offset + (iu[:, None, :, None] * ps.kv_v.n + iv[None, :, None, :]).reshape(EU * EV, -1)
        elements = [(int(su), int(sv)) for su in spans_u for sv in spans_v]
        yield ElementBatch(fr, basis, dofs, w, elements)


def _geo_span(kv: KnotVector, lo: float, hi: float) -> int:
    return find_span(kv, 0.5 * (lo + hi))


def evaluate_element(space: DgSpace, ip: int, span_u: int, span_v: int, us, vs) -> ElementEvaluation:
    """Evaluate on the grid ``us x vs`` lying in the closure of element ``(span_u, span_v)``."""
    ps = space.patches[ip]
    patch = space.mp.patches[ip]
    ua, ub = ps.kv_u.span_interval(span_u)
    va, vb = ps.kv_v.span_interval(span_v)
    gsu = _geo_span(patch.kv_u, ua, ub)
    gsv = _geo_span(patch.kv_v, va, vb)
    fr = frames(patch, us, vs, gsu, gsv)
    Nu = basis_table(ps.kv_u, us, 3, span_u)
    Nv = basis_table(ps.kv_v, vs, 3, span_v)
    data = shape_surface_data(fr, Nu, Nv)
    return ElementEvaluation(fr, data, ps.element_dofs(span_u, span_v))


def _side_normal_span(kv: KnotVector, side: str) -> int:
    return int(kv.spans[-1] if side.endswith("max") else kv.spans[0])


def evaluate_side(space: DgSpace, ip: int, side: str, t):
    """Evaluate along a patch side at facet parameters ``t`` (all within one tangential span).

    Returns ``(evaluation, conormal, arc_length_factor)``.
    """
    ps = space.patches[ip]
    t = np.atleast_1d(np.asarray(t, dtype=float))
    tmid = 0.5 * (t.min() + t.max())
    if side in ("u_min", "u_max"):
        su = _side_normal_span(ps.kv_u, side)
        sv = find_span(ps.kv_v, tmid)
        us, vs = np.array([0.0 if side == "u_min" else 1.0]), t
    else:
        sv = _side_normal_span(ps.kv_v, side)
        su = find_span(ps.kv_u, tmid)
        us, vs = t, np.array([0.0 if side == "v_min" else 1.0])
    ev = evaluate_element(space, ip, su, sv, us, vs)
    _, m, arc = facet_frame(space.mp.patches[ip], side, t, frame=ev.frame)
    return ev, m, arc


@dataclass(frozen=True)
class SideBatch:
    """Evaluations along one patch side for several tangential segments at once.

    Sites are ordered ``(segment, node)``; ``dofs`` is ``(nseg, nb)``.
    """

    frame: SurfaceFrame
    basis: ShapeFunctionSurfaceData
    dofs: np.ndarray
    conormal: np.ndarray
    arc: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.frame.point

    def segment(self, k: int) -> slice:
        nq = self.points.shape[0] // self.dofs.shape[0]
        return slice(k * nq, (k + 1) * nq)


def side_batch(space: DgSpace, ip: int, side: str, t) -> SideBatch:
    """Evaluate along ``side`` at facet parameters ``t`` of shape ``(nseg, nq)``.

    Row ``k`` of ``t`` must lie inside one tangential knot span of the space.
    """
    ps = space.patches[ip]
    patch = space.mp.patches[ip]
    t = np.atleast_2d(np.asarray(t, dtype=float))
    nseg, nq = t.shape
    tangential_u = side in ("v_min", "v_max")
    kv_t, kv_n = (ps.kv_u, ps.kv_v) if tangential_u else (ps.kv_v, ps.kv_u)
    seg_spans = find_spans(kv_t, 0.5 * (t.min(axis=1) + t.max(axis=1)))
    n_span = _side_normal_span(kv_n, side)
    fixed = np.array([1.0 if side.endswith("max") else 0.0])
    Nt = basis_derivs_array(kv_t, t.ravel(), 3, np.repeat(seg_spans, nq))
    Nn = basis_derivs_array(kv_n, fixed, 3, [n_span])[0]
    if tangential_u:
        us, vs = t.ravel(), fixed
        Nu, Nv = Nt, np.broadcast_to(Nn, (nseg * nq,) + Nn.shape)
    else:
        us, vs = fixed, t.ravel()
        Nu, Nv = np.broadcast_to(Nn, (nseg * nq,) + Nn.shape), Nt
    fr = frames(patch, us, vs)
    dphi = [[None] * 4 for _ in range(4)]
    for a in range(4):
        for b in range(4 - a):
            dphi[a][b] = np.einsum("qs,qt->qst", Nu[:, a], Nv[:, b]).reshape(nseg * nq, -1)
    basis = surface_operators(fr, dphi)
    _, m, arc = facet_frame(patch, side, t.ravel(), frame=fr)
    pu, pv = ps.kv_u.degree, ps.kv_v.degree
    if tangential_u:
        iu = seg_spans[:, None] - pu + np.arange(pu + 1)[None, :]
        iv = np.broadcast_to(n_span - pv + np.arange(pv + 1), (nseg, pv + 1))
    else:
        iu = np.broadcast_to(n_span - pu + np.arange(pu + 1), (nseg, pu + 1))
        iv = seg_spans[:, None] - pv + np.arange(pv + 1)[None, :]
    dofs = ps.offset + (iu[:, :, None] * ps.kv_v.n + iv[:, None, :]).reshape(nseg, -1)
    return SideBatch(fr, basis, dofs, m, arc)


@dataclass
class DiscreteFunction:
    space: DgSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.total_dofs,):
            raise ValueError("coefficient vector length does not match the space")

    def combine(self, ev: ElementEvaluation | ElementBatch | SideBatch) -> dict:
        """Value, gradient, Laplacian and its gradient at the sites of ``ev``."""
        b = ev.basis
        c = self.coefficients[ev.dofs]
        if c.ndim == 2:  # batch: one row of coefficients per element
            c = np.repeat(c, b.value.shape[0] // c.shape[0], axis=0)
        else:
            c = np.broadcast_to(c, b.value.shape)
        return {
            "value": np.einsum("qn,qn->q", b.value, c),
            "grad": np.einsum("qnk,qn->qk", b.grad, c),
            "lap": np.einsum("qn,qn->q", b.lap, c),
            "grad_lap": np.einsum("qnk,qn->qk", b.grad_lap, c),
        }

    def evaluate(self, ip: int, xi) -> dict:
        """Value, surface gradient, Laplace-Beltrami and its gradient at ``xi`` on patch ``ip``."""
        ps = self.space.patches[ip]
        xi = np.asarray(xi, dtype=float)
        su = int(find_spans(ps.kv_u, [xi[0]])[0])
        sv = int(find_spans(ps.kv_v, [xi[1]])[0])
        ev = evaluate_element(self.space, ip, su, sv, [xi[0]], [xi[1]])
        return {k: v[0] for k, v in self.combine(ev).items()}

    def to_dict(self) -> dict:
        return {"signature": self.space.signature(), "coefficients": self.coefficients.tolist()}

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".npz":
            np.savez(path, coefficients=self.coefficients, signature=json.dumps(self.space.signature()))
        else:
            path.write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, space: DgSpace, path) -> DiscreteFunction:
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as z:
                sig, coeffs = json.loads(str(z["signature"])), z["coefficients"]
        else:
            d = json.loads(path.read_text())
            sig, coeffs = d["signature"], d["coefficients"]
        if sig != space.signature():
            raise ValueError(f"space signature mismatch: {sig} != {space.signature()}")
        return cls(space, np.asarray(coeffs))
