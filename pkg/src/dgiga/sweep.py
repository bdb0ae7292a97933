"""Refinement sweeps over (variant, degree, level) with CSV/JSON/SVG reporting."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .assembly import VARIANTS, MethodConfig, assemble
from .benchmarks import get_benchmark
from .solve import dg_error, rates, solve
from .space import build_space

__all__ = ["SweepRow", "SweepResult", "run_tuple", "run_sweep", "CSV_COLUMNS"]

CSV_COLUMNS = ["variant", "p", "level", "dofs", "h", "err_h", "err_hstar", "err_l2", "rate_h", "seconds"]


@dataclass
class SweepRow:
    variant: str
    p: int
    level: int
    dofs: int = 0
    h: float = math.nan
    err_h: float = math.nan
    err_hstar: float = math.nan
    err_l2: float = math.nan
    rate_h: float | None = None
    seconds: float = math.nan
    delta0: float = math.nan
    delta1: float = math.nan
    relative_residual: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    benchmark: str
    rows: list[SweepRow] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def series(self, variant: str, p: int) -> list[SweepRow]:
        return sorted((r for r in self.rows if r.variant == variant and r.p == p), key=lambda r: r.level)

    def keys(self):
        seen = []
        for r in self.rows:
            if (r.variant, r.p) not in seen:
                seen.append((r.variant, r.p))
        return seen

    def final_rate(self, variant: str, p: int) -> float | None:
        s = self.series(variant, p)
        return s[-1].rate_h if s else None

    @property
    def failures(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.ok]

    def to_csv(self, timing: bool = False) -> str:
        """CSV text; ``seconds`` is left empty unless ``timing`` (keeps output byte-stable)."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            wr.writerow([
                r.variant, r.p, r.level, r.dofs, _fmt(r.h), _fmt(r.err_h), _fmt(r.err_hstar), _fmt(r.err_l2),
                "" if r.rate_h is None else f"{r.rate_h:.6f}", _fmt(r.seconds, "{:.3f}") if timing else "",
            ])
        return buf.getvalue()

    def to_dict(self, timing: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not timing:
                d.pop("seconds")
            rows.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()})
        return {"benchmark": self.benchmark, "params": self.params, "rows": rows}

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=1)

    def write(self, out_dir, fmt: str = "csv", timing: bool = False, plot: bool = False) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / f"{self.benchmark}"
        written = []
        if fmt == "csv":
            path = stem.with_suffix(".csv")
            path.write_text(self.to_csv(timing))
        elif fmt == "json":
            path = stem.with_suffix(".json")
            path.write_text(self.to_json(timing))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(path)
        if plot:
            written.append(self.plot(stem.with_suffix(".svg")))
        return written

    def plot(self, path) -> Path:
        """Log-log ``err_h`` against ``h`` with reference slopes ``p - 1``."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "dgiga"}):
            return self._plot(plt, path)

    def _plot(self, plt, path) -> Path:
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for variant, p in self.keys():
            s = [r for r in self.series(variant, p) if r.ok and r.err_h > 0]
            if not s:
                continue
            hs = [r.h for r in s]
            es = [r.err_h for r in s]
            (line,) = ax.loglog(hs, es, "o-", label=f"{variant} p={p}")
            ref = [es[-1] * (h / hs[-1]) ** (p - 1) for h in hs]
            ax.loglog(hs, ref, ":", color=line.get_color(), alpha=0.6)
        ax.set_xlabel("h")
        ax.set_ylabel("error in dG norm")
        ax.set_title(f"{self.benchmark} (dotted: slope p-1)")
        ax.legend(fontsize="small")
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = Path(path)
        # fixed salt and metadata keep the SVG reproducible
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path


def _fmt(x: float, spec: str = "{:.10e}") -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else spec.format(x)


def run_tuple(benchmark: str, variant: str, p: int, level: int, delta0: float | None = None,
              delta1: float | None = None, nquad: int | None = None) -> SweepRow:
    """One solve; failures are captured in ``SweepRow.error`` instead of raised."""
    row = SweepRow(variant.upper(), p, level)
    t0 = time.perf_counter()
    try:
        bench = get_benchmark(benchmark).specialize(p)
        cfg = MethodConfig.for_degree(variant, p, delta0, delta1)
        row.delta0, row.delta1 = cfg.delta0, cfg.delta1
        space = build_space(bench.geometry, p, level)
        row.dofs, row.h = space.total_dofs, space.h
        rep = solve(assemble(space, cfg, bench.problem_data(), nquad))
        row.relative_residual = rep.relative_residual
        err = dg_error(bench.exact, rep.solution, cfg.delta0, cfg.delta1)
        row.err_h, row.err_hstar, row.err_l2 = err.dg_norm_error, err.dg_star_norm_error, err.l2_error
    except Exception as exc:  # noqa: BLE001 - recorded per tuple
        row.error = f"{type(exc).__name__}: {exc}"
    row.seconds = time.perf_counter() - t0
    return row


def _run_packed(args):
    return run_tuple(*args)


def run_sweep(benchmark: str, variants=("SIPG", "NIPG", "SSIPG1", "SSIPG2"), degrees=(2, 3, 4), levels: int = 4,
              base_level: int = 0, delta0: float | None = None, delta1: float | None = None,
              jobs: int = 1) -> SweepResult:
    """Solve every ``(variant, p, level)`` with ``level = base_level, ..., base_level + levels - 1``.

    Rates are ``log2(e_i / e_{i+1})`` on ``err_h``; rows are ordered by
    ``(variant, p, level)`` whatever ``jobs`` is.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    variants = [v.upper() for v in variants]
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    tasks = [(benchmark, v, p, base_level + k, delta0, delta1) for v in variants for p in degrees
             for k in range(levels)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_packed, tasks))
    else:
        rows = [run_tuple(*t) for t in tasks]
    res = SweepResult(benchmark, rows, {
        "variants": variants, "degrees": list(degrees), "levels": levels, "base_level": base_level,
        "delta0": delta0, "delta1": delta1,
    })
    if get_benchmark(benchmark).reference_rate is None:
        return res  # reproduction tests: errors sit at round-off, rates are meaningless
    for v in variants:
        for p in degrees:
            s = res.series(v, p)
            rs = rates([r.err_h if r.ok else None for r in s])
            for r, rate in zip(s[1:], rs):
                r.rate_h = rate
    return res
