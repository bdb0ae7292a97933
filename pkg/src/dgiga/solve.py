"""Sparse solve, discrete dG error norms and observed convergence rates."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem, facet_nodes, facet_mesh_size, facet_segments, jump_average
from .quadrature import gauss_legendre
from .space import DiscreteFunction, DgSpace, element_batches, side_batch

__all__ = ["SolverError", "SolveReport", "ErrorReport", "solve", "dg_error", "rates", "RESIDUAL_TOL"]

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class SolveReport:
    solution: DiscreteFunction
    relative_residual: float
    method: str
    stats: dict = field(default_factory=dict)


def _relres(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def _condest(A, lu) -> float:
    n = A.shape[0]
    inv = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"), dtype=float)
    try:
        return float(spla.onenormest(A) * spla.onenormest(inv))
    except Exception:  # noqa: BLE001 - diagnostic only
        return float("nan")


def solve_matrix(A, b, method: str = "auto"):
    """Solve ``A x = b``; returns ``(x, method, stats)``.

    ``lu`` is SuperLU with one step of iterative refinement; ``gmres`` is
    ILU-preconditioned GMRES; ``auto`` tries ``lu`` and falls back to ``gmres``.
    """
    if method not in ("auto", "lu", "gmres"):
        raise ValueError(f"unknown solver method {method!r}")
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    stats: dict = {"n": A.shape[0], "nnz": int(A.nnz)}
    if method in ("auto", "lu"):
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
            x = lu.solve(b)
            stats["fill"] = int(lu.L.nnz + lu.U.nnz)
            if not np.all(np.isfinite(x)):
                raise SolverError("non-finite solution")
            res = _relres(A, x, b)
            if res > RESIDUAL_TOL:
                x2 = x + lu.solve(b - A @ x)
                if _relres(A, x2, b) < res:
                    x = x2
            return x, "superlu", stats
        except (RuntimeError, SolverError) as exc:
            if method == "lu":
                raise SolverError(f"direct solve failed: {exc}") from exc
            stats["direct_failure"] = str(exc)
    try:
        ilu = spla.spilu(A, drop_tol=1e-8, fill_factor=30)
    except RuntimeError as exc:
        raise SolverError(f"matrix appears singular: {exc}") from exc
    M = spla.LinearOperator(A.shape, matvec=ilu.solve)
    x, info = spla.gmres(A, b, M=M, rtol=RESIDUAL_TOL * 0.1, atol=0.0, restart=200, maxiter=50)
    stats["gmres_info"] = int(info)
    return x, "gmres-ilu", stats


def solve(system: AssembledSystem, method: str = "auto") -> SolveReport:
    A, b = system.matrix, system.rhs
    x, used, stats = solve_matrix(A, b, method)
    res = _relres(A, x, b)
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        cond = float("nan")
        try:
            cond = _condest(sp.csc_matrix(A), spla.splu(sp.csc_matrix(A)))
        except RuntimeError:
            pass
        raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g} (cond1 estimate {cond:.3e})")
    return SolveReport(DiscreteFunction(system.space, x), res, used, stats)


@dataclass
class ErrorReport:
    """Squared contributions are stored in ``terms``; norms are square roots of sums."""

    dg_norm_error: float
    dg_star_norm_error: float
    l2_error: float
    terms: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _exact_traces(exact, x):
    return {"value": exact.value(x), "grad": exact.grad(x), "lap": exact.lap(x), "grad_lap": exact.grad_lap(x)}


def _minus(a: dict, b: dict) -> dict:
    return {k: a[k] - b[k] for k in a}


def dg_error(exact, uh: DiscreteFunction, delta0: float, delta1: float, nquad: int | None = None) -> ErrorReport:
    """Broken norms of ``exact - uh``.

    ``exact`` provides ``value``, ``grad``, ``lap`` and ``grad_lap`` of
    physical points. Facet terms run over interior and Dirichlet facets.
    """
    space: DgSpace = uh.space
    mp = space.mp
    nquad = space.degree + 3 if nquad is None else nquad
    rule = gauss_legendre(nquad)
    terms = dict.fromkeys(
        ["volume_lap", "volume_l2", "jump_value", "jump_grad", "avg_grad_lap", "avg_lap"], 0.0
    )

    for ip in range(len(space.patches)):
        for batch in element_batches(space, ip, rule):
            w = batch.weights.ravel()
            num = uh.combine(batch)
            x = batch.points
            terms["volume_l2"] += float(w @ (exact.value(x) - num["value"]) ** 2)
            terms["volume_lap"] += float(w @ (exact.lap(x) - num["lap"]) ** 2)

    def add_facet(j0, j1, a2, a3, wts, h):
        terms["jump_value"] += delta1 / h**3 * float(wts @ j0**2)
        terms["jump_grad"] += delta0 / h * float(wts @ j1**2)
        terms["avg_grad_lap"] += h**3 / delta1 * float(wts @ a3**2)
        terms["avg_lap"] += h / delta0 * float(wts @ a2**2)

    for itf in mp.interfaces:
        h = facet_mesh_size(space, itf, itf.patch_a)
        t, w = facet_nodes(facet_segments(space, itf, itf.patch_a, itf.side_a), nquad)
        sa = side_batch(space, itf.patch_a, itf.side_a, t)
        sb = side_batch(space, itf.patch_b, itf.side_b, itf.map_t(t))
        ea = _minus(_exact_traces(exact, sa.points), uh.combine(sa))
        eb = _minus(_exact_traces(exact, sb.points), uh.combine(sb))
        add_facet(*jump_average(ea, eb, sa.conormal), w.ravel() * sa.arc, h)

    for bf in mp.dirichlet:
        h = facet_mesh_size(space, None, bf.patch)
        t, w = facet_nodes(facet_segments(space, None, bf.patch, bf.side), nquad)
        sb = side_batch(space, bf.patch, bf.side, t)
        e = _minus(_exact_traces(exact, sb.points), uh.combine(sb))
        add_facet(*jump_average(e, None, sb.conormal), w.ravel() * sb.arc, h)

    base = terms["volume_lap"] + terms["volume_l2"] + terms["jump_value"] + terms["jump_grad"]
    star = base + terms["avg_grad_lap"] + terms["avg_lap"]
    return ErrorReport(
        dg_norm_error=math.sqrt(base),
        dg_star_norm_error=math.sqrt(star),
        l2_error=math.sqrt(terms["volume_l2"]),
        terms=terms,
    )


def rates(errors) -> list[float | None]:
    """``log2(e_i / e_{i+1})`` for consecutive errors; ``None`` where undefined."""
    out: list[float | None] = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a is None or b is None or not (a > 0 and b > 0) or not (np.isfinite(a) and np.isfinite(b)):
            out.append(None)
        else:
            out.append(math.log2(a / b))
    return out
