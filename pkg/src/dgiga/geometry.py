"""NURBS surface patches and surface differential operators through the pullback.

All operators are evaluated from parametric derivatives of the mapping up to
third order. With ``G = F^{-1}`` and ``g = sqrt(det F)``::

    lap(phi)      = G : H(phi) + A . grad(phi),   A_b = d_a G_ab + (d_a log g) G_ab
    grad_s(phi)   = J G grad(phi)
    grad_s(lap)   = J G grad(lap(phi))

Derivatives of ``G`` and ``log g`` are formed analytically from the second
and third derivatives of the mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import cached_property

import numpy as np

from .splines import KnotVector, SplineError, find_spans, insert_knot, nurbs_surface_derivs

__all__ = [
    "GeometryError",
    "SIDES",
    "NurbsPatch",
    "SurfaceFrame",
    "ShapeFunctionSurfaceData",
    "frames",
    "frame_at",
    "shape_surface_data",
    "surface_operators",
    "facet_frame",
    "side_sites",
]

DEGENERACY_EPS = 1e-14
SIDES = ("u_min", "u_max", "v_min", "v_max")


class GeometryError(ValueError):
    """Degenerate or inconsistent geometry."""


def side_sites(side: str, t):
    """Parametric grid ``(us, vs)`` tracing ``side`` at facet parameters ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if side == "u_min":
        return np.array([0.0]), t
    if side == "u_max":
        return np.array([1.0]), t
    if side == "v_min":
        return t, np.array([0.0])
    if side == "v_max":
        return t, np.array([1.0])
    raise GeometryError(f"unknown side {side!r}")


@dataclass(frozen=True, eq=False)
class NurbsPatch:
    """Rational tensor-product map of the unit square into R^3."""

    kv_u: KnotVector
    kv_v: KnotVector
    control_points: np.ndarray
    weights: np.ndarray
    patch_id: int = 0

    def __post_init__(self):
        P = np.asarray(self.control_points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if P.ndim == 2:
            P = P.reshape(self.kv_u.n, self.kv_v.n, -1)
        if P.shape[-1] == 2:
            P = np.concatenate([P, np.zeros(P.shape[:-1] + (1,))], axis=-1)
        w = w.reshape(self.kv_u.n, self.kv_v.n)
        if P.shape != (self.kv_u.n, self.kv_v.n, 3):
            raise GeometryError(
                f"control grid {P.shape[:2]} does not match knot vectors ({self.kv_u.n}, {self.kv_v.n})"
            )
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(P)):
            raise GeometryError("weights must be finite and strictly positive")
        object.__setattr__(self, "control_points", P)
        object.__setattr__(self, "weights", w)

    @cached_property
    def homogeneous(self) -> np.ndarray:
        Pw = np.concatenate([self.control_points * self.weights[..., None], self.weights[..., None]], axis=-1)
        Pw.flags.writeable = False
        return Pw

    @property
    def degrees(self) -> tuple[int, int]:
        return self.kv_u.degree, self.kv_v.degree

    def derivatives(self, us, vs, order: int = 3, span_u=None, span_v=None) -> np.ndarray:
        """``D[a, b, i, j]``: ``(a, b)`` parametric derivative at ``(us[i], vs[j])``."""
        try:
            return nurbs_surface_derivs(self.kv_u, self.kv_v, self.homogeneous, us, vs, order, span_u, span_v)
        except SplineError as exc:
            raise GeometryError(str(exc)) from exc

    def __call__(self, us, vs) -> np.ndarray:
        return self.derivatives(us, vs, order=0)[0, 0]

    def insert_knot(self, direction: int, x: float) -> NurbsPatch:
        """Same surface with one more knot in ``direction`` (0 = u, 1 = v)."""
        kv = self.kv_u if direction == 0 else self.kv_v
        new_kv, Qw = insert_knot(kv, self.homogeneous, x, axis=direction)
        w = Qw[..., -1]
        pts = Qw[..., :-1] / w[..., None]
        if direction == 0:
            return NurbsPatch(new_kv, self.kv_v, pts, w, self.patch_id)
        return NurbsPatch(self.kv_u, new_kv, pts, w, self.patch_id)

    def continuity(self, direction: int, x: float, samples: int = 7, tol: float = 1e-9) -> int:
        """Parametric continuity order of the map across the knot line ``x``."""
        kv = self.kv_u if direction == 0 else self.kv_v
        order = kv.degree
        i = int(np.searchsorted(kv.array, x, side="left"))
        s_right = int(find_spans(kv, [x])[0])
        s_left = i - 1
        t = (np.arange(samples) + 0.5) / samples
        if direction == 0:
            dl = self.derivatives([x], t, order, span_u=s_left)
            dr = self.derivatives([x], t, order, span_u=s_right)
            left, right = dl[:, 0], dr[:, 0]
        else:
            dl = self.derivatives(t, [x], order, span_v=s_left)
            dr = self.derivatives(t, [x], order, span_v=s_right)
            left, right = dl[0, :], dr[0, :]
        scale = max(1.0, float(np.max(np.abs(self.control_points))))
        c = -1
        for k in range(order + 1):
            if np.max(np.abs(left[k] - right[k])) > tol * scale * (1 + k) ** 3:
                break
            c = k
        return c

    def to_dict(self) -> dict:
        return {
            "id": self.patch_id,
            "degrees": [self.kv_u.degree, self.kv_v.degree],
            "knots_u": list(self.kv_u.knots),
            "knots_v": list(self.kv_v.knots),
            "control_points": self.control_points.reshape(-1, 3).tolist(),
            "weights": self.weights.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, patch_id: int | None = None) -> NurbsPatch:
        pu, pv = d["degrees"]
        try:
            kv_u = KnotVector.normalized(d["knots_u"], pu)
            kv_v = KnotVector.normalized(d["knots_v"], pv)
        except SplineError as exc:
            raise GeometryError(f"patch {d.get('id', patch_id)}: {exc}") from exc
        pts = np.asarray(d["control_points"], dtype=float)
        w = np.asarray(d.get("weights", np.ones(len(pts))), dtype=float)
        if pts.shape[0] != kv_u.n * kv_v.n or w.shape[0] != kv_u.n * kv_v.n:
            raise GeometryError(f"patch {d.get('id', patch_id)}: control grid size mismatch")
        pid = d.get("id", patch_id if patch_id is not None else 0)
        return cls(kv_u, kv_v, pts, w, int(pid))


def _third_tensor(D):
    # T[a, b, c] from D[3 - n1, n1] where n1 counts the v-direction indices
    nq = D.shape[2:-1]
    T = np.empty(nq + (2, 2, 2, 3))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                n1 = a + b + c
                T[..., a, b, c, :] = D[3 - n1, n1]
    return T


@dataclass(frozen=True, eq=False)
class SurfaceFrame:
    """Differential geometry at a batch of parametric sites (leading axis ``q``).

    ``J`` is 3x2, ``F = J^T J`` and ``g = sqrt(det F)``; ``second`` holds
    ``d2 Phi / dxi_a dxi_b`` and ``third`` the third derivatives. The fields
    ``dG``, ``ddG``, ``A`` and ``dA`` are the metric factors needed by the
    Laplace-Beltrami operator and its surface gradient.
    """

    point: np.ndarray
    J: np.ndarray
    F: np.ndarray
    F_inv: np.ndarray
    g: np.ndarray
    second: np.ndarray
    third: np.ndarray
    normal: np.ndarray
    dG: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    dA: np.ndarray = field(repr=False)

    @property
    def JG(self) -> np.ndarray:
        return self.J @ self.F_inv

    def __len__(self):
        return self.point.shape[0]

    def take(self, idx) -> SurfaceFrame:
        """Frame restricted (or reordered) to the sites ``idx``."""
        return SurfaceFrame(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})


def _frame_from_derivs(D: np.ndarray) -> SurfaceFrame:
    # D: (4, 4, nq, 3)
    J = np.stack([D[1, 0], D[0, 1]], axis=-1)
    S = np.empty(D.shape[2:-1] + (2, 2, 3))
    S[..., 0, 0, :] = D[2, 0]
    S[..., 0, 1, :] = S[..., 1, 0, :] = D[1, 1]
    S[..., 1, 1, :] = D[0, 2]
    T = _third_tensor(D)

    F = np.einsum("qka,qkb->qab", J, J)
    det = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    if np.any(~np.isfinite(det)) or np.any(det <= DEGENERACY_EPS):
        raise GeometryError(f"degenerate parametrization: min det F = {np.nanmin(det):.3e}")
    G = np.empty_like(F)
    G[:, 0, 0] = F[:, 1, 1] / det
    G[:, 1, 1] = F[:, 0, 0] / det
    G[:, 0, 1] = G[:, 1, 0] = -F[:, 0, 1] / det
    g = np.sqrt(det)

    # dF[c]_ab = S_ac . T_b + T_a . S_bc
    X = np.einsum("qack,qkb->qcab", S, J)
    dF = X + X.transpose(0, 1, 3, 2)
    X1 = np.einsum("qacdk,qkb->qcdab", T, J)
    X2 = np.einsum("qack,qbdk->qcdab", S, S)
    ddF = X1 + X1.transpose(0, 1, 2, 4, 3) + X2 + X2.transpose(0, 2, 1, 3, 4)

    # batched matrix products over the trailing 2x2 blocks
    Gc = G[:, None]
    Gcd = G[:, None, None]
    dG = -(Gc @ dF @ Gc)
    ddG = -(
        dG[:, None] @ dF[:, :, None] @ Gcd
        + Gcd @ ddF @ Gcd
        + Gcd @ dF[:, :, None] @ dG[:, None]
    )
    lg = 0.5 * np.einsum("qab,qcba->qc", G, dF)
    dlg = 0.5 * (np.einsum("qdab,qcba->qcd", dG, dF) + np.einsum("qab,qcdba->qcd", G, ddF))
    A = np.einsum("qaab->qb", dG) + np.einsum("qa,qab->qb", lg, G)
    # dA[c, b] = d_c A_b
    dA = np.einsum("qacab->qcb", ddG) + np.einsum("qac,qab->qcb", dlg, G) + np.einsum("qa,qcab->qcb", lg, dG)

    n = np.cross(J[..., 0], J[..., 1])
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return SurfaceFrame(
        point=D[0, 0], J=J, F=F, F_inv=G, g=g, second=S, third=T, normal=n, dG=dG, A=A, dA=dA
    )


def frames(patch: NurbsPatch, us, vs, span_u=None, span_v=None) -> SurfaceFrame:
    """Frames on the tensor grid ``us x vs``, flattened with ``u`` major."""
    D = patch.derivatives(us, vs, 3, span_u, span_v)
    nu, nv = D.shape[2], D.shape[3]
    return _frame_from_derivs(D.reshape(4, 4, nu * nv, 3))


def frame_at(patch: NurbsPatch, xi) -> SurfaceFrame:
    """Frame at a single parametric point (batch of one)."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0) or np.any(xi > 1):
        raise GeometryError(f"parametric point {xi} outside [0,1]^2")
    return frames(patch, [xi[0]], [xi[1]])


@dataclass(frozen=True)
class ShapeFunctionSurfaceData:
    """Surface quantities of ``nb`` functions at ``nq`` sites."""

    value: np.ndarray  # (nq, nb)
    grad: np.ndarray  # (nq, nb, 3)
    lap: np.ndarray  # (nq, nb)
    grad_lap: np.ndarray  # (nq, nb, 3)


def surface_operators(frame: SurfaceFrame, dphi) -> ShapeFunctionSurfaceData:
    """Surface gradient, Laplace-Beltrami and its gradient from parametric derivatives.

    ``dphi[a][b]`` (or ``dphi[a, b]``) has shape ``(nq, nb)`` and holds the
    ``(a, b)`` parametric derivative, for ``a + b <= 3``.
    """
    grad = np.stack([dphi[1][0], dphi[0][1]], axis=-1)
    nq, nb = grad.shape[:2]
    H = np.empty((nq, nb, 2, 2))
    H[..., 0, 0] = dphi[2][0]
    H[..., 0, 1] = H[..., 1, 0] = dphi[1][1]
    H[..., 1, 1] = dphi[0][2]
    T = np.empty((nq, nb, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                n1 = a + b + c
                T[..., a, b, c] = dphi[3 - n1][n1]
    G, A = frame.F_inv, frame.A
    H4 = H.reshape(nq, nb, 4)
    lap = (H4 @ G.reshape(nq, 4, 1))[..., 0] + (grad @ A[:, :, None])[..., 0]
    TG = (T.reshape(nq, nb, 4, 2).transpose(0, 1, 3, 2).reshape(nq, nb * 2, 4) @ G.reshape(nq, 4, 1)).reshape(nq, nb, 2)
    dlap = (
        H4 @ frame.dG.reshape(nq, 2, 4).transpose(0, 2, 1)
        + TG
        + grad @ frame.dA.transpose(0, 2, 1)
        + (H.transpose(0, 1, 3, 2) @ A[:, None, :, None])[..., 0]
    )
    JGt = frame.JG.transpose(0, 2, 1)
    return ShapeFunctionSurfaceData(
        value=np.asarray(dphi[0][0]),
        grad=grad @ JGt,
        lap=lap,
        grad_lap=dlap @ JGt,
    )


def shape_surface_data(frame: SurfaceFrame, Nu: np.ndarray, Nv: np.ndarray) -> ShapeFunctionSurfaceData:
    """Surface data of tensor-product basis functions.

    ``Nu`` is ``(n1, 4, nbu)`` and ``Nv`` is ``(n2, 4, nbv)`` (values and
    derivatives to order 3). Sites are flattened ``u``-major and functions
    ``(s, t) -> s * nbv + t``.
    """
    n1, _, nbu = Nu.shape
    n2, _, nbv = Nv.shape
    dphi = [[None] * 4 for _ in range(4)]
    for a in range(4):
        for b in range(4 - a):
            dphi[a][b] = np.einsum("is,jt->ijst", Nu[:, a], Nv[:, b]).reshape(n1 * n2, nbu * nbv)
    return surface_operators(frame, dphi)


def facet_frame(patch: NurbsPatch, side: str, t, frame: SurfaceFrame | None = None):
    """Point, outward co-normal and arc-length factor along a patch side.

    The co-normal is the normalized surface gradient of the side's
    parametric coordinate, oriented outward; it is tangent to the surface and
    orthogonal to the side curve.
    """
    if frame is None:
        us, vs = side_sites(side, t)
        frame = frames(patch, us, vs)
    axis = 0 if side in ("u_min", "u_max") else 1
    sign = 1.0 if side.endswith("max") else -1.0
    m = sign * frame.JG[..., axis]
    norm = np.linalg.norm(m, axis=-1, keepdims=True)
    tangent = frame.J[..., 1 - axis]
    arc = np.linalg.norm(tangent, axis=-1)
    if np.any(arc <= np.sqrt(DEGENERACY_EPS)) or np.any(norm <= 0):
        raise GeometryError(f"degenerate facet {side} on patch {patch.patch_id}")
    return frame.point, m / norm, arc
