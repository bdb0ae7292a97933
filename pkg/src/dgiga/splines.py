"""Univariate and tensor-product B-spline / NURBS kernels.

Basis evaluation follows the triangular Cox-de Boor scheme (Piegl & Tiller,
algorithms A2.2/A2.3), vectorized over evaluation points. Rational
derivatives are recovered from the weighted sums with the generalized
Leibniz rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb, factorial

import numpy as np

__all__ = [
    "SplineError",
    "KnotVector",
    "BasisEvalResult",
    "NurbsCurveSample",
    "find_span",
    "find_spans",
    "eval_basis_derivs",
    "basis_derivs_array",
    "insert_knot",
    "nurbs_curve_derivs",
    "nurbs_surface_derivs",
    "rational_derivs_2d",
]

_KNOT_TOL = 1e-14


class SplineError(ValueError):
    """Invalid knot vector, evaluation site or refinement request."""


@dataclass(frozen=True)
class KnotVector:
    """Open (clamped) knot vector on [0, 1].

    ``knots`` is stored as a tuple so that instances are hashable and can key
    the basis-table cache.
    """

    knots: tuple[float, ...]
    degree: int

    def __post_init__(self):
        kn = tuple(float(k) for k in self.knots)
        object.__setattr__(self, "knots", kn)
        p = int(self.degree)
        object.__setattr__(self, "degree", p)
        if p < 1:
            raise SplineError(f"degree must be >= 1, got {p}")
        a = np.asarray(kn)
        if a.ndim != 1 or len(a) < 2 * p + 2:
            raise SplineError("knot vector too short for its degree")
        if np.any(np.diff(a) < 0):
            raise SplineError("knots must be non-decreasing")
        if abs(a[0]) > _KNOT_TOL or abs(a[-1] - 1.0) > _KNOT_TOL:
            raise SplineError("knot vector must span [0, 1]")
        if np.count_nonzero(a == a[0]) != p + 1 or np.count_nonzero(a == a[-1]) != p + 1:
            raise SplineError("knot vector must be open: end knots repeated exactly p+1 times")
        for b in self.breakpoints[1:-1]:
            if self.multiplicity(b) > p:
                raise SplineError(f"interior knot {b} has multiplicity > p")

    @classmethod
    def from_breakpoints(cls, breaks, degree: int, mults=None) -> KnotVector:
        """Open knot vector with the given breakpoints.

        ``mults`` gives interior multiplicities (default 1 each).
        """
        breaks = [float(b) for b in breaks]
        if mults is None:
            mults = [1] * (len(breaks) - 2)
        knots = [breaks[0]] * (degree + 1)
        for b, m in zip(breaks[1:-1], mults):
            knots += [b] * int(m)
        knots += [breaks[-1]] * (degree + 1)
        return cls(tuple(knots), degree)

    @classmethod
    def normalized(cls, knots, degree: int) -> KnotVector:
        """Affinely rescale an arbitrary open knot vector onto [0, 1]."""
        a = np.asarray(knots, dtype=float)
        if a[-1] <= a[0]:
            raise SplineError("degenerate knot range")
        a = (a - a[0]) / (a[-1] - a[0])
        a[0], a[-1] = 0.0, 1.0
        a[: degree + 1] = 0.0
        a[-degree - 1 :] = 1.0
        return cls(tuple(a), degree)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.asarray(self.knots, dtype=float)
        a.flags.writeable = False
        return a

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.array)

    @cached_property
    def spans(self) -> np.ndarray:
        """Indices ``i`` of the nonempty spans ``[knots[i], knots[i+1])``."""
        a = self.array
        idx = np.nonzero(a[1:] > a[:-1])[0]
        return idx[(idx >= self.degree) & (idx < self.n)]

    @property
    def num_elements(self) -> int:
        return len(self.spans)

    def multiplicity(self, x: float) -> int:
        return int(np.count_nonzero(np.abs(self.array - x) <= _KNOT_TOL))

    def span_interval(self, span: int) -> tuple[float, float]:
        return self.knots[span], self.knots[span + 1]

    def element_of_span(self, span: int) -> int:
        return int(np.searchsorted(self.spans, span))

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, n={self.n}, breakpoints={list(self.breakpoints)})"


@dataclass(frozen=True)
class BasisEvalResult:
    """Nonzero basis functions at one site.

    ``values[j, r]`` is the ``j``-th derivative of basis function
    ``span - p + r``.
    """

    span: int
    values: np.ndarray

    @property
    def first_index(self) -> int:
        return self.span - (self.values.shape[1] - 1)


@dataclass(frozen=True)
class NurbsCurveSample:
    point: np.ndarray
    derivatives: list[np.ndarray] = field(default_factory=list)


def find_span(kv: KnotVector, x: float) -> int:
    """Index ``i`` with ``knots[i] <= x < knots[i+1]``; ``x = 1`` maps to the last span."""
    if not (0.0 <= x <= 1.0) or not np.isfinite(x):
        raise SplineError(f"evaluation site {x!r} outside [0, 1]")
    return int(find_spans(kv, np.array([x]))[0])


def find_spans(kv: KnotVector, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if np.any(~np.isfinite(xs)) or np.any(xs < 0.0) or np.any(xs > 1.0):
        raise SplineError("evaluation sites must lie in [0, 1]")
    a = kv.array
    s = np.searchsorted(a, xs, side="right") - 1
    return np.clip(s, kv.degree, kv.n - 1)


def _safe_div(num, den):
    # 0/0 and x/0 are defined to be zero in the recursion
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0.0)
    return out


def basis_derivs_array(kv: KnotVector, xs, nder: int, spans=None) -> np.ndarray:
    """Nonzero basis functions and derivatives at many sites.

    Returns an array of shape ``(len(xs), nder + 1, p + 1)``; derivative
    orders above ``p`` are exactly zero.
    """
    p = kv.degree
    U = kv.array
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    spans = find_spans(kv, xs) if spans is None else np.broadcast_to(np.asarray(spans, dtype=int), xs.shape)
    m = len(xs)
    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xs - U[spans + 1 - j]
        right[:, j] = U[spans + j] - xs
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = _safe_div(ndu[:, r, j - 1], ndu[:, j, r])
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nder + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    kmax = min(nder, p)
    for r in range(p + 1):
        a = np.zeros((2, m, p + 1))
        a[0, :, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, kmax + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, :, 0] = _safe_div(a[s1, :, 0], ndu[:, pk + 1, rk])
                d = a[s2, :, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, :, j] = _safe_div(a[s1, :, j] - a[s1, :, j - 1], ndu[:, pk + 1, rk + j])
                d = d + a[s2, :, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[s2, :, k] = _safe_div(-a[s1, :, k - 1], ndu[:, pk + 1, r])
                d = d + a[s2, :, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    for k in range(1, kmax + 1):
        ders[:, k, :] *= factorial(p) // factorial(p - k)
    return ders


@lru_cache(maxsize=4096)
def _basis_table(kv: KnotVector, xs: tuple, nder: int, span: int) -> np.ndarray:
    out = basis_derivs_array(kv, np.asarray(xs), nder, spans=span)
    out.flags.writeable = False
    return out


def basis_table(kv: KnotVector, xs, nder: int, span: int) -> np.ndarray:
    """Cached :func:`basis_derivs_array` for sites sharing one span."""
    return _basis_table(kv, tuple(float(x) for x in np.atleast_1d(xs)), nder, int(span))


def eval_basis_derivs(kv: KnotVector, x: float, k: int) -> BasisEvalResult:
    if k < 0 or k > 3:
        raise SplineError("derivative order must be in 0..3")
    span = find_span(kv, x)
    vals = basis_derivs_array(kv, np.array([x]), k, spans=span)[0]
    return BasisEvalResult(span=span, values=vals)


def insert_knot(kv: KnotVector, control_net, x: float, axis: int = 0):
    """Boehm insertion of ``x`` once.

    ``control_net`` holds (homogeneous, for NURBS) control points with the
    basis index along ``axis``; any trailing/leading axes are carried along.
    """
    if not (0.0 < x < 1.0):
        raise SplineError("inserted knot must lie in (0, 1)")
    p = kv.degree
    if kv.multiplicity(x) + 1 > p:
        raise SplineError(f"inserting {x} would exceed multiplicity p={p}")
    P = np.moveaxis(np.asarray(control_net, dtype=float), axis, 0)
    if P.shape[0] != kv.n:
        raise SplineError("control net size does not match the knot vector")
    U = kv.array
    k = find_span(kv, x)
    Q = np.empty((P.shape[0] + 1,) + P.shape[1:])
    Q[: k - p + 1] = P[: k - p + 1]
    Q[k + 1 :] = P[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (x - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * P[i] + (1.0 - alpha) * P[i - 1]
    new_kv = KnotVector(tuple(np.insert(U, k + 1, x)), p)
    return new_kv, np.moveaxis(Q, 0, axis)


def _to_homogeneous(points, weights):
    P = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise SplineError("NURBS weights must be strictly positive")
    return np.concatenate([P * w[..., None], w[..., None]], axis=-1)


def nurbs_curve_derivs(kv: KnotVector, points, weights, x: float, k: int) -> NurbsCurveSample:
    """Point and derivatives ``1..k`` of a NURBS curve."""
    Pw = _to_homogeneous(points, weights)
    span = find_span(kv, x)
    N = basis_derivs_array(kv, np.array([x]), k, spans=span)[0]
    act = Pw[span - kv.degree : span + 1]
    Aw = N @ act
    A, w = Aw[:, :-1], Aw[:, -1]
    C = np.zeros_like(A)
    for j in range(k + 1):
        v = A[j].copy()
        for i in range(1, j + 1):
            v -= comb(j, i) * w[i] * C[j - i]
        C[j] = v / w[0]
    return NurbsCurveSample(point=C[0], derivatives=[C[j] for j in range(1, k + 1)])


def rational_derivs_2d(Aw: np.ndarray) -> np.ndarray:
    """Rational derivatives from homogeneous ones.

    ``Aw[a, b, ..., :]`` holds the ``(a, b)`` parametric derivative of the
    weighted sum; the last component is the weight function. Entries with
    ``a + b`` above the maximum order are ignored.
    """
    K = Aw.shape[0] - 1
    A = Aw[..., :-1]
    w = Aw[..., -1:]
    S = np.zeros_like(A)
    for k in range(K + 1):
        for l in range(K + 1 - k):
            v = A[k, l].copy()
            for j in range(1, l + 1):
                v -= comb(l, j) * w[0, j] * S[k, l - j]
            for i in range(1, k + 1):
                v -= comb(k, i) * w[i, 0] * S[k - i, l]
                for j in range(1, l + 1):
                    v -= comb(k, i) * comb(l, j) * w[i, j] * S[k - i, l - j]
            S[k, l] = v / w[0, 0]
    return S


def nurbs_surface_derivs(kv_u: KnotVector, kv_v: KnotVector, Pw: np.ndarray, us, vs, k: int,
                         span_u=None, span_v=None) -> np.ndarray:
    """Mixed parametric derivatives of a NURBS surface on a tensor grid.

    ``Pw`` is the homogeneous control net of shape ``(n_u, n_v, dim + 1)``.
    Returns ``S`` of shape ``(k+1, k+1, len(us), len(vs), dim)`` with
    ``S[a, b]`` the ``(a, b)`` derivative; entries with ``a + b > k`` are zero.
    """
    us = np.atleast_1d(np.asarray(us, dtype=float))
    vs = np.atleast_1d(np.asarray(vs, dtype=float))
    pu, pv = kv_u.degree, kv_v.degree
    su = find_spans(kv_u, us) if span_u is None else np.full(len(us), span_u)
    sv = find_spans(kv_v, vs) if span_v is None else np.full(len(vs), span_v)
    if span_u is None:
        Nu = basis_derivs_array(kv_u, us, k, spans=su)
    else:
        Nu = basis_table(kv_u, us, k, span_u)
    if span_v is None:
        Nv = basis_derivs_array(kv_v, vs, k, spans=sv)
    else:
        Nv = basis_table(kv_v, vs, k, span_v)
    iu = su[:, None] - pu + np.arange(pu + 1)[None, :]
    iv = sv[:, None] - pv + np.arange(pv + 1)[None, :]
    if span_u is not None and span_v is not None:
        act = Pw[iu[0][:, None], iv[0][None, :]]
        Aw = np.einsum("ias,jbt,stc->abijc", Nu, Nv, act, optimize=True)
    else:
        act = Pw[iu[:, None, :, None], iv[None, :, None, :]]
        Aw = np.einsum("ias,jbt,ijstc->abijc", Nu, Nv, act, optimize=True)
    a = np.arange(k + 1)
    Aw[(a[:, None] + a[None, :]) > k] = 0.0
    return rational_derivs_2d(Aw)
