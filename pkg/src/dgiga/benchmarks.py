"""Benchmark geometries and manufactured solutions with closed-form surface derivatives."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .assembly import ProblemData
from .geometry import NurbsPatch
from .multipatch import BoundaryFacet, Interface, MultipatchSurface, build_multipatch
from .splines import KnotVector

__all__ = [
    "ExactSolution",
    "Benchmark",
    "quarter_cylinder_geometry",
    "torus_geometry",
    "flat_two_patch_geometry",
    "flat_unit_patch",
    "CylinderSolution",
    "TorusSolution",
    "PlanarPolynomialSolution",
    "benchmark_quarter_cylinder",
    "benchmark_torus",
    "benchmark_flat_patch",
    "get_benchmark",
    "BENCHMARKS",
]

S2 = np.sqrt(0.5)
QUAD_KV = KnotVector((0, 0, 0, 1, 1, 1), 2)
LIN_KV = KnotVector((0, 0, 1, 1), 1)


# ---------------------------------------------------------------------------
# geometries


def quarter_cylinder_geometry(height: float = 4.0, npatches: int = 4) -> MultipatchSurface:
    """Unit-radius quarter cylinder in the first quadrant, stacked in z."""
    arc = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    warc = np.array([1.0, S2, 1.0])
    dz = height / npatches
    patches = []
    for k in range(npatches):
        pts = np.zeros((3, 2, 3))
        for j, z in enumerate((k * dz, (k + 1) * dz)):
            pts[:, j, :2] = arc
            pts[:, j, 2] = z
        patches.append(NurbsPatch(QUAD_KV, LIN_KV, pts, np.repeat(warc[:, None], 2, axis=1), k))
    itfs = tuple(Interface(k, "v_max", k + 1, "v_min") for k in range(npatches - 1))
    bnds = [BoundaryFacet(k, s, "dirichlet") for k in range(npatches) for s in ("u_min", "u_max")]
    bnds += [BoundaryFacet(0, "v_min", "dirichlet"), BoundaryFacet(npatches - 1, "v_max", "dirichlet")]
    return build_multipatch(MultipatchSurface(tuple(patches), itfs, tuple(bnds), "quarter-cylinder"))


def _circle9():
    c = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1], [1, 0]], dtype=float)
    w = np.array([1, S2, 1, S2, 1, S2, 1, S2, 1])
    kv = KnotVector((0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1), 2)
    return kv, c, w


def torus_geometry(R: float = 2.0, r: float = 1.0, npatches: int = 4) -> MultipatchSurface:
    """Torus split into quarter arcs of the minor circle; each patch closes on itself in the major direction."""
    kv_u, circ, wu = _circle9()
    patches = []
    dth = 2 * np.pi / npatches
    for k in range(npatches):
        t0, t1 = k * dth, (k + 1) * dth
        half = 0.5 * (t1 - t0)
        mid = 0.5 * (t0 + t1)
        # minor arc (rho, z) as a rational quadratic Bezier
        prof = np.array([
            [R + r * np.cos(t0), r * np.sin(t0)],
            [R + r * np.cos(mid) / np.cos(half), r * np.sin(mid) / np.cos(half)],
            [R + r * np.cos(t1), r * np.sin(t1)],
        ])
        wv = np.array([1.0, np.cos(half), 1.0])
        pts = np.zeros((9, 3, 3))
        pts[:, :, 0] = circ[:, 0, None] * prof[None, :, 0]
        pts[:, :, 1] = circ[:, 1, None] * prof[None, :, 0]
        pts[:, :, 2] = prof[None, :, 1]
        patches.append(NurbsPatch(kv_u, QUAD_KV, pts, np.outer(wu, wv), k))
    itfs = [Interface(k, "v_max", (k + 1) % npatches, "v_min") for k in range(npatches)]
    itfs += [Interface(k, "u_max", k, "u_min") for k in range(npatches)]
    return build_multipatch(MultipatchSurface(tuple(patches), tuple(itfs), (), "torus"))


def _rotation():
    a, b = 0.3, -0.2
    Rx = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    Ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    return Ry @ Rx


FLAT_ROTATION = _rotation()


def _bilinear_patch(corners2d, pid, Q):
    pts = np.zeros((2, 2, 3))
    for (i, j), c in corners2d.items():
        pts[i, j] = Q @ np.array([c[0], c[1], 0.0])
    return NurbsPatch(LIN_KV, LIN_KV, pts, np.ones((2, 2)), pid)


def flat_two_patch_geometry(rotate: bool = True, neumann: bool = False) -> MultipatchSurface:
    """Unit square plus a sheared neighbour sharing the edge x = 1, optionally rotated in R^3."""
    Q = FLAT_ROTATION if rotate else np.eye(3)
    p0 = _bilinear_patch({(0, 0): (0, 0), (1, 0): (1, 0), (0, 1): (0, 1), (1, 1): (1, 1)}, 0, Q)
    p1 = _bilinear_patch({(0, 0): (1, 0), (1, 0): (2, 0.25), (0, 1): (1, 1), (1, 1): (2, 1.25)}, 1, Q)
    itfs = (Interface(0, "u_max", 1, "u_min"),)
    bnds = [BoundaryFacet(0, s, "dirichlet") for s in ("u_min", "v_min", "v_max")]
    kind = "neumann" if neumann else "dirichlet"
    bnds += [BoundaryFacet(1, "u_max", kind), BoundaryFacet(1, "v_min", "dirichlet"), BoundaryFacet(1, "v_max", kind)]
    mp = MultipatchSurface((p0, p1), itfs, tuple(bnds), "flat-patch")
    return build_multipatch(mp)


def flat_unit_patch(kind: str = "dirichlet", scale: float = 1.0) -> MultipatchSurface:
    p = _bilinear_patch({(0, 0): (0, 0), (1, 0): (scale, 0), (0, 1): (0, scale), (1, 1): (scale, scale)}, 0, np.eye(3))
    bnds = tuple(BoundaryFacet(0, s, kind) for s in ("u_min", "u_max", "v_min", "v_max"))
    return build_multipatch(MultipatchSurface((p,), (), bnds, "flat-unit"))


# ---------------------------------------------------------------------------
# exact solutions


class ExactSolution:
    """Closed-form solution: value, surface gradient, Laplace-Beltrami, its gradient, source."""

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def lap(self, x):
        raise NotImplementedError

    def grad_lap(self, x):
        raise NotImplementedError

    def source(self, x):
        raise NotImplementedError

    def problem_data(self) -> ProblemData:
        return ProblemData(
            f=self.source,
            g0=self.value,
            g1=lambda x, m: np.einsum("qk,qk->q", self.grad(x), m),
            g2=self.lap,
            g3=lambda x, m: np.einsum("qk,qk->q", self.grad_lap(x), m),
        )


class CylinderSolution(ExactSolution):
    """``u = rho (1 - cos psi)(1 - sin psi) sin(sigma pi z / L)`` on the unit cylinder.

    The angular profile is symmetric under ``psi -> pi/2 - psi``, so measuring
    the angle from either axis gives the same function.
    """

    def __init__(self, sigma: float = 3.0, L: float = 4.0, rho: float | None = None):
        self.sigma, self.L = sigma, L
        self.rho = 1.0 / (1.5 - np.sqrt(2.0)) if rho is None else rho
        self.k = sigma * np.pi / L

    @staticmethod
    def _coords(x):
        x = np.atleast_2d(x)
        return np.arctan2(x[:, 1], x[:, 0]), x[:, 2]

    @staticmethod
    def _profile(psi):
        c, s, s2, c2 = np.cos(psi), np.sin(psi), np.sin(2 * psi), np.cos(2 * psi)
        g = 1 - c - s + 0.5 * s2
        g1 = s - c + c2
        g2 = c + s - 2 * s2
        g3 = c - s - 4 * c2
        g4 = -c - s + 8 * s2
        return g, g1, g2, g3, g4

    def _tangents(self, psi):
        e_psi = np.stack([-np.sin(psi), np.cos(psi), np.zeros_like(psi)], axis=-1)
        e_z = np.zeros_like(e_psi)
        e_z[:, 2] = 1.0
        return e_psi, e_z

    def value(self, x):
        psi, z = self._coords(x)
        return self.rho * self._profile(psi)[0] * np.sin(self.k * z)

    def grad(self, x):
        psi, z = self._coords(x)
        g, g1 = self._profile(psi)[:2]
        e_psi, e_z = self._tangents(psi)
        Z, dZ = np.sin(self.k * z), self.k * np.cos(self.k * z)
        return self.rho * ((g1 * Z)[:, None] * e_psi + (g * dZ)[:, None] * e_z)

    def lap(self, x):
        psi, z = self._coords(x)
        g, _, g2, _, _ = self._profile(psi)
        return self.rho * (g2 - self.k**2 * g) * np.sin(self.k * z)

    def grad_lap(self, x):
        psi, z = self._coords(x)
        g, g1, g2, g3, _ = self._profile(psi)
        e_psi, e_z = self._tangents(psi)
        k = self.k
        d_psi = (g3 - k**2 * g1) * np.sin(k * z)
        d_z = (g2 - k**2 * g) * k * np.cos(k * z)
        return self.rho * (d_psi[:, None] * e_psi + d_z[:, None] * e_z)

    def bilaplacian(self, x):
        """Closed form of the bilaplacian (the published source term)."""
        psi, z = self._coords(x)
        s, L = self.sigma, self.L
        a = np.pi**2 * s**2
        return self.rho * np.sin(self.k * z) * (
            2 * a**2 + (a + 4 * L**2) ** 2 * np.sin(2 * psi) - 2 * (a + L**2) ** 2 * (np.sin(psi) + np.cos(psi))
        ) / (2 * L**4)

    def source(self, x):
        return self.bilaplacian(x) + self.value(x)


class TorusSolution(ExactSolution):
    """``u = sin(3 phi) cos(3 theta + phi)`` on the torus with radii ``R > r``.

    ``phi`` is the major and ``theta`` the minor angle. Writing
    ``u = Im[(e^{i(4 phi + 3 theta)} + e^{i(2 phi - 3 theta)}) / 2]``, each mode
    ``e^{i(k phi + l theta)}`` is an eigenfunction of ``d_phi`` and the surface
    Laplacian maps it to ``q_{kl}(theta)`` times itself, with

        q = -k^2 / rho^2 - l^2 / r^2 - i l sin(theta) / (r rho),   rho = R + r cos(theta).

    Applying the Laplacian again uses ``q'`` and ``q''`` in closed form.
    """

    MODES = ((4, 3), (2, -3))

    def __init__(self, R: float = 2.0, r: float = 1.0):
        self.R, self.r = R, r

    def _coords(self, x):
        x = np.atleast_2d(x)
        phi = np.arctan2(x[:, 1], x[:, 0])
        rho_xy = np.hypot(x[:, 0], x[:, 1])
        theta = np.arctan2(x[:, 2], rho_xy - self.R)
        return phi, theta

    def _q(self, k, l, th):
        R, r = self.R, self.r
        s, c = np.sin(th), np.cos(th)
        rho = R + r * c
        q = -(k**2) / rho**2 - l**2 / r**2 - 1j * l * s / (r * rho)
        dq = -2 * k**2 * r * s / rho**3 - 1j * l / r * (c / rho + r * s**2 / rho**2)
        ddq = -2 * k**2 * r * (c / rho**3 + 3 * r * s**2 / rho**4) - 1j * l / r * (
            -s / rho + 3 * r * s * c / rho**2 + 2 * r**2 * s**3 / rho**3
        )
        return q, dq, ddq, rho

    def _tangent_grad(self, phi, th, d_phi, d_th):
        # surface gradient from angular partials
        R, r = self.R, self.r
        rho = R + r * np.cos(th)
        e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
        e_th = np.stack([-np.sin(th) * np.cos(phi), -np.sin(th) * np.sin(phi), np.cos(th)], axis=-1)
        return (d_phi / rho)[:, None] * e_phi + (d_th / r)[:, None] * e_th

    def _modes(self, x, which):
        phi, th = self._coords(x)
        out = np.zeros(len(phi), dtype=complex)
        out_phi = np.zeros_like(out)
        out_th = np.zeros_like(out)
        for k, l in self.MODES:
            E = 0.5 * np.exp(1j * (k * phi + l * th))
            q, dq, ddq, rho = self._q(k, l, th)
            if which == "u":
                a, da = np.ones_like(q), np.zeros_like(q)
            elif which == "lap":
                a, da = q, dq
            else:  # bilaplacian multiplier M(q e^{il th}) / e^{il th}
                r = self.r
                a = (-(k**2) * q / rho**2 + (-(l**2) * q + 2j * l * dq + ddq) / r**2
                     - np.sin(th) / (rho * r) * (1j * l * q + dq))
                da = None
            out += E * a
            out_phi += 1j * k * E * a
            if da is not None:
                out_th += E * (1j * l * a + da)
        return phi, th, out.imag, out_phi.imag, out_th.imag

    def value(self, x):
        return self._modes(x, "u")[2]

    def grad(self, x):
        phi, th, _, dp, dt = self._modes(x, "u")
        return self._tangent_grad(phi, th, dp, dt)

    def lap(self, x):
        return self._modes(x, "lap")[2]

    def grad_lap(self, x):
        phi, th, _, dp, dt = self._modes(x, "lap")
        return self._tangent_grad(phi, th, dp, dt)

    def bilaplacian(self, x):
        return self._modes(x, "bilap")[2]

    def source(self, x):
        return self.bilaplacian(x) + self.value(x)

    def angles(self, x):
        return self._coords(x)


class PlanarPolynomialSolution(ExactSolution):
    """Polynomial of total degree ``degree`` in in-plane coordinates of a (rotated) plane."""

    def __init__(self, degree: int, frame=None, seed: int = 7):
        rng = np.random.default_rng(seed + degree)
        C = np.zeros((degree + 1, degree + 1))
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                C[i, j] = rng.uniform(-1, 1)
        self.degree = degree
        self.C = C
        self.Q = np.eye(3) if frame is None else np.asarray(frame)

    def _xy(self, x):
        loc = np.atleast_2d(x) @ self.Q
        return loc[:, 0], loc[:, 1]

    def _d(self, a, b):
        c = self.C
        if a:
            c = P.polyder(c, a, axis=0)
        if b:
            c = P.polyder(c, b, axis=1)
        return c

    def _ev(self, x, a, b):
        X, Y = self._xy(x)
        return P.polyval2d(X, Y, self._d(a, b))

    def _vec(self, gx, gy):
        return np.stack([gx, gy, np.zeros_like(gx)], axis=-1) @ self.Q.T

    def value(self, x):
        return self._ev(x, 0, 0)

    def grad(self, x):
        return self._vec(self._ev(x, 1, 0), self._ev(x, 0, 1))

    def lap(self, x):
        return self._ev(x, 2, 0) + self._ev(x, 0, 2)

    def grad_lap(self, x):
        return self._vec(self._ev(x, 3, 0) + self._ev(x, 1, 2), self._ev(x, 2, 1) + self._ev(x, 0, 3))

    def bilaplacian(self, x):
        return self._ev(x, 4, 0) + 2 * self._ev(x, 2, 2) + self._ev(x, 0, 4)

    def source(self, x):
        return self.bilaplacian(x) + self.value(x)


# ---------------------------------------------------------------------------
# registry


@dataclass
class Benchmark:
    name: str
    geometry: MultipatchSurface
    exact: ExactSolution
    params: dict = field(default_factory=dict)
    degree_factory: Callable[[int], Benchmark] | None = None
    reference_rate: Callable[[int], float] | None = None
    base_level: int = 0

    def problem_data(self) -> ProblemData:
        return self.exact.problem_data()

    def specialize(self, p: int) -> Benchmark:
        """Benchmark instance for solution degree ``p`` (only the flat test depends on it)."""
        return self.degree_factory(p) if self.degree_factory else self

    def expected_rate(self, p: int) -> float | None:
        return self.reference_rate(p) if self.reference_rate else None


def benchmark_quarter_cylinder(sigma: float = 3.0, L: float = 4.0) -> Benchmark:
    rho = 1.0 / (1.5 - np.sqrt(2.0))
    return Benchmark(
        "quarter-cylinder",
        quarter_cylinder_geometry(L, 4),
        CylinderSolution(sigma, L, rho),
        {"sigma": sigma, "L": L, "rho": rho},
        reference_rate=lambda p: p - 1.0,
        base_level=2,
    )


def benchmark_torus(R: float = 2.0, r: float = 1.0) -> Benchmark:
    return Benchmark(
        "torus",
        torus_geometry(R, r, 4),
        TorusSolution(R, r),
        {"R": R, "r": r},
        reference_rate=lambda p: p - 1.0,
        # the four-patch coarse torus has h > r; start where rates are asymptotic
        base_level=2,
    )


def benchmark_flat_patch(p: int = 2, neumann: bool = False) -> Benchmark:
    geo = flat_two_patch_geometry(rotate=True, neumann=neumann)
    return Benchmark(
        "flat-patch",
        geo,
        PlanarPolynomialSolution(p, frame=FLAT_ROTATION),
        {"polynomial_degree": p, "neumann": neumann},
        degree_factory=lambda q: benchmark_flat_patch(q, neumann),
    )


BENCHMARKS: dict[str, Callable[[], Benchmark]] = {
    "quarter-cylinder": benchmark_quarter_cylinder,
    "torus": benchmark_torus,
    "flat-patch": benchmark_flat_patch,
}


def get_benchmark(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]()
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
