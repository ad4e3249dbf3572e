"""Hyperparameter sweeps over (beta1, beta2) grids with reproducible cells.

A sweep is a pure function of its spec: cells are planned in a fixed
row-major order (beta1 outer, beta2 inner, seed innermost), each cell's
scheme seed is base_seed plus its linear index (wrapping at 64 bits),
and results are written in plan order regardless of how many worker
processes computed them. Reruns and resumed runs therefore produce
byte-identical CSV files.

The wall_ms column is reserved: the file would stop being a pure
function of the spec if per-cell timings were persisted, so the CSV
always carries 0 there. Measured timings live on the in-memory
SweepResult objects and in the CLI summary line.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .analysis import Outcome, classify_outcome
from .optimizer import (
    AdamConfig,
    SamplingScheme,
    Schedule,
    SchemeKind,
    run,
)
from .problems import make_problem

_MASK64 = (1 << 64) - 1

CSV_COLUMNS = (
    "beta1", "beta2", "n", "a", "seed", "scheme", "budget", "outcome",
    "final_gap", "final_grad_norm", "min_metric", "steps", "wall_ms",
)


@dataclass(frozen=True)
class SweepSpec:
    """Everything a sweep depends on; hashable and process-portable."""

    family: str
    n: int
    a: float | None
    scheme_kind: SchemeKind
    beta1_values: tuple[float, ...]
    beta2_values: tuple[float, ...]
    epochs: int | None = None
    iterations: int | None = None
    eta0: float = 0.1
    eps: float = 1e-8
    v_init: float | None = None
    m_init: float = 0.0
    bias_correction: bool = False
    schedule: Schedule = Schedule.INVERSE_SQRT
    x0: float = 1.0
    base_seed: int = 0
    seeds_per_cell: int = 1
    tol_converge: float = 0.5
    cutoff_diverge: float = 1e6

    def __post_init__(self) -> None:
        if not self.beta1_values or not self.beta2_values:
            raise ValueError("beta1_values and beta2_values must be nonempty")
        if self.seeds_per_cell < 1:
            raise ValueError(f"seeds_per_cell must be >= 1, got {self.seeds_per_cell}")
        if (self.epochs is None) == (self.iterations is None):
            raise ValueError("exactly one of epochs/iterations must be set")
        if self.tol_converge <= 0:
            raise ValueError(f"tol_converge must be positive, got {self.tol_converge}")

    @property
    def budget(self) -> int:
        return self.epochs if self.epochs is not None else self.iterations


@dataclass(frozen=True)
class Cell:
    """One planned run: grid indices, seed slot, and the derived seed."""

    index: int
    i1: int
    i2: int
    seed_slot: int
    beta1: float
    beta2: float
    seed: int


@dataclass
class SweepResult:
    beta1: float
    beta2: float
    n: int
    a: float | None
    seed: int
    scheme: str
    budget: int
    outcome: Outcome
    final_gap: float | None
    final_grad_norm: float | None
    min_metric: float | None
    steps: int
    wall_ms: float


def plan_grid(spec: SweepSpec) -> list[Cell]:
    """Cells in persistence order; seed = (base_seed + index) mod 2^64."""
    cells = []
    index = 0
    for i1, b1 in enumerate(spec.beta1_values):
        for i2, b2 in enumerate(spec.beta2_values):
            for s in range(spec.seeds_per_cell):
                cells.append(
                    Cell(
                        index=index, i1=i1, i2=i2, seed_slot=s,
                        beta1=float(b1), beta2=float(b2),
                        seed=(spec.base_seed + index) & _MASK64,
                    )
                )
                index += 1
    return cells


def _make_problem(spec: SweepSpec):
    if spec.family == "reddi":
        return make_problem("reddi", n=spec.n)
    if spec.family == "divpw":
        return make_problem("divpw", n=spec.n, a=spec.a if spec.a is not None else 1.0)
    if spec.family == "nonreal":
        return make_problem("nonreal", a=spec.a if spec.a is not None else 10.0)
    raise ValueError(f"family {spec.family!r} not sweepable (needs scalar params)")


def run_cell(spec: SweepSpec, cell: Cell) -> SweepResult:
    """Execute one cell; invalid hyperparameter combinations are Skipped."""
    problem = _make_problem(spec)
    start = time.perf_counter()
    try:
        config = AdamConfig(
            beta1=cell.beta1, beta2=cell.beta2, eta0=spec.eta0, eps=spec.eps,
            v_init=spec.v_init, m_init=spec.m_init,
            bias_correction=spec.bias_correction, schedule=spec.schedule,
        )
    except ValueError:
        return SweepResult(
            beta1=cell.beta1, beta2=cell.beta2, n=problem.n, a=spec.a,
            seed=cell.seed, scheme=spec.scheme_kind.value, budget=spec.budget,
            outcome=Outcome.SKIPPED, final_gap=None, final_grad_norm=None,
            min_metric=None, steps=0,
            wall_ms=(time.perf_counter() - start) * 1e3,
        )
    log = run(
        problem, config, SamplingScheme(spec.scheme_kind, cell.seed),
        epochs=spec.epochs, iterations=spec.iterations, x0=spec.x0,
        log_every=0, cutoff_diverge=spec.cutoff_diverge,
    )
    outcome = classify_outcome(log, spec.tol_converge, spec.cutoff_diverge)
    s = log.summary
    return SweepResult(
        beta1=cell.beta1, beta2=cell.beta2, n=problem.n, a=spec.a,
        seed=cell.seed, scheme=spec.scheme_kind.value, budget=spec.budget,
        outcome=outcome, final_gap=s.final_gap, final_grad_norm=s.final_grad_norm,
        min_metric=s.min_metric, steps=s.steps,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def result_line(res: SweepResult) -> str:
    """One CSV data line, newline-terminated; wall_ms pinned to 0."""
    fields = (
        _fmt(res.beta1), _fmt(res.beta2), str(res.n), _fmt(res.a),
        str(res.seed), res.scheme, str(res.budget), res.outcome.value,
        _fmt(res.final_gap), _fmt(res.final_grad_norm), _fmt(res.min_metric),
        str(res.steps), "0",
    )
    return ",".join(fields) + "\n"


_HEADER_LINE = ",".join(CSV_COLUMNS) + "\n"


def _cell_key(cell: Cell, spec: SweepSpec) -> tuple[int, int, int]:
    return (cell.i1, cell.i2, cell.seed_slot)


def _load_existing(path: str, spec: SweepSpec, cells: list[Cell]) -> dict:
    """Map cell key -> verbatim line for rows already in the file.

    Rows are matched back to plan cells by (beta1, beta2, seed); repr
    round-trips floats exactly, so the match is exact. Malformed or
    unmatchable rows are dropped (they get recomputed).
    """
    by_values = {}
    for cell in cells:
        by_values[(repr(cell.beta1), repr(cell.beta2), str(cell.seed))] = cell
    stored: dict[tuple[int, int, int], str] = {}
    with open(path, newline="") as fh:
        lines = fh.readlines()
    if not lines or lines[0] != _HEADER_LINE:
        raise ValueError(f"{path}: not a sweep CSV for this spec (bad header)")
    for line in lines[1:]:
        parts = line.rstrip("\n").split(",")
        if len(parts) != len(CSV_COLUMNS) or not line.endswith("\n"):
            continue
        key3 = (parts[0], parts[1], parts[4])
        cell = by_values.get(key3)
        if cell is not None:
            stored[_cell_key(cell, spec)] = line
    return stored


def run_sweep(
    spec: SweepSpec,
    out_path: str,
    workers: int = 1,
    resume: bool = False,
    progress=None,
) -> list[SweepResult | None]:
    """Run every planned cell and persist plan-ordered CSV rows.

    With resume=True, rows already present in out_path are kept verbatim
    and their cells are not recomputed (returned as None in the result
    list). The file is rewritten in plan order either way, so a finished
    resumed sweep is byte-identical to an uninterrupted one. Rows are
    flushed as they are computed; an interrupted file is a clean prefix.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    cells = plan_grid(spec)
    stored: dict[tuple[int, int, int], str] = {}
    if resume and os.path.exists(out_path):
        stored = _load_existing(out_path, spec, cells)
    todo = [c for c in cells if _cell_key(c, spec) not in stored]

    results: list[SweepResult | None] = [None] * len(cells)
    worker_fn = partial(run_cell, spec)
    if workers == 1 or not todo:
        computed = map(worker_fn, todo)
        _write_all(out_path, spec, cells, stored, todo, computed, results, progress)
    else:
        chunk = max(1, len(todo) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            computed = ex.map(worker_fn, todo, chunksize=chunk)
            _write_all(
                out_path, spec, cells, stored, todo, computed, results, progress
            )
    return results


def _write_all(out_path, spec, cells, stored, todo, computed, results, progress):
    todo_iter = iter(zip(todo, computed))
    with open(out_path, "w", newline="") as fh:
        fh.write(_HEADER_LINE)
        for cell in cells:
            line = stored.get(_cell_key(cell, spec))
            if line is None:
                planned, res = next(todo_iter)
                assert planned.index == cell.index
                results[cell.index] = res
                line = result_line(res)
                if progress is not None:
                    progress(cell, res)
            fh.write(line)
            fh.flush()


def gap_matrix(spec: SweepSpec, csv_path: str) -> np.ndarray:
    """Mean final gap per (beta1, beta2) cell from a persisted sweep CSV.

    Diverged or skipped cells (empty/non-finite gap) count as the
    divergence cutoff, and every entry is clamped at the cutoff, so the
    matrix is finite and heatmap-friendly.
    """
    pos1 = {repr(float(b)): i for i, b in enumerate(spec.beta1_values)}
    pos2 = {repr(float(b)): j for j, b in enumerate(spec.beta2_values)}
    total = np.zeros((len(spec.beta1_values), len(spec.beta2_values)))
    count = np.zeros_like(total)
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(CSV_COLUMNS):
            raise ValueError(f"{csv_path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            i = pos1.get(row["beta1"])
            j = pos2.get(row["beta2"])
            if i is None or j is None:
                raise ValueError(
                    f"{csv_path}: row ({row['beta1']}, {row['beta2']}) "
                    "not on the spec grid"
                )
            raw = row["final_gap"]
            gap = float(raw) if raw else math.inf
            if not math.isfinite(gap):
                gap = spec.cutoff_diverge
            total[i, j] += min(gap, spec.cutoff_diverge)
            count[i, j] += 1
    if (count == 0).any():
        raise ValueError(f"{csv_path}: grid cells missing rows")
    return total / count
