"""Command-line front end: run, sweep, region, concentration, verify.

Exit codes: 0 on success, 1 when a requested check fails, 2 on usage
errors (bad flags, malformed config files, invalid combinations).

Flags may also be supplied through --config FILE holding key=value
lines ('#' starts a comment; dashes and underscores in keys are
interchangeable). Explicit command-line flags win over the file, which
wins over built-in defaults. The base seed falls back to the
ADAM_LAB_SEED environment variable when no --seed is given.

All artifacts are plain files under --out-dir, written with stable
formatting so identical invocations produce byte-identical bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .analysis import (
    DiagnosticsConstants,
    classify_outcome,
    concentration_report,
    verify_invariants,
)
from .optimizer import (
    AdamConfig,
    SamplingScheme,
    Schedule,
    SchemeKind,
    run,
    stepsize,
)
from .problems import LeastSquares, make_problem
from .region import region_area, region_mask, region_rows
from .rng import SplitMix64
from .sweep import SweepSpec, gap_matrix, run_sweep

_SCHEME_BY_NAME = {
    "wr": SchemeKind.WITH_REPLACEMENT,
    "rr": SchemeKind.RANDOM_SHUFFLE,
    "cyclic": SchemeKind.CYCLIC,
}
_SCHEDULE_BY_NAME = {
    "inverse-sqrt": Schedule.INVERSE_SQRT,
    "constant": Schedule.CONSTANT,
}


class _UsageError(Exception):
    pass


# --- PGM emission ----------------------------------------------------------


def emit_pgm(grid, normalization=None, comment: str | None = None) -> bytes:
    """Render a 2D array as a binary (P5) graymap.

    Values map through round(255 * (x - lo) / (hi - lo)) and clamp to
    [0, 255]; (lo, hi) come from `normalization` or default to the
    matrix min/max. A degenerate range produces an all-zero payload.
    Matrix rows become image rows top to bottom. The optional comment
    is inserted as a '#' header line.
    """
    a = np.asarray(grid, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"grid must be a nonempty 2D array, got shape {a.shape}")
    if normalization is None:
        lo, hi = float(np.min(a)), float(np.max(a))
    else:
        lo, hi = float(normalization[0]), float(normalization[1])
        if hi < lo:
            raise ValueError(f"normalization must satisfy lo <= hi, got {(lo, hi)}")
    h, w = a.shape
    if hi == lo:
        payload = np.zeros((h, w), dtype=np.uint8)
    else:
        scaled = np.floor(255.0 * (a - lo) / (hi - lo) + 0.5)
        payload = np.clip(scaled, 0.0, 255.0).astype(np.uint8)
    header = b"P5\n"
    if comment is not None:
        header += b"# " + comment.encode("ascii") + b"\n"
    header += f"{w} {h}\n255\n".encode("ascii")
    return header + payload.tobytes()


# --- argument plumbing -----------------------------------------------------


class _CommandSpec:
    def __init__(self, name: str) -> None:
        self.name = name
        self.defaults: dict = {}
        self.casts: dict = {}


def _cast_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _add(
    spec: _CommandSpec, parser, *names,
    cast=float, default=None, flag=False, choices=None, help="",
):
    dest = names[0].lstrip("-").replace("-", "_")
    spec.defaults[dest] = default
    spec.casts[dest] = _cast_bool if flag else cast
    if flag:
        parser.add_argument(
            *names, dest=dest, action="store_true",
            default=argparse.SUPPRESS, help=help,
        )
    else:
        kwargs = dict(dest=dest, type=cast, default=argparse.SUPPRESS, help=help)
        if choices is not None:
            kwargs["choices"] = choices
        parser.add_argument(*names, **kwargs)


def _add_common(spec, parser) -> None:
    _add(spec, parser, "--config", cast=str, help="key=value file of defaults")
    _add(spec, parser, "--out-dir", cast=str, default=".", help="artifact directory")
    _add(spec, parser, "--seed", cast=int, help="base seed (env ADAM_LAB_SEED)")


def _add_hyper(spec, parser) -> None:
    _add(spec, parser, "--beta1", default=0.9, help="first-moment decay")
    _add(spec, parser, "--beta2", default=0.999, help="second-moment decay")
    _add(spec, parser, "--eta0", default=0.1, help="stepsize scale")
    _add(spec, parser, "--eps", default=1e-8, help="denominator offset")
    _add(spec, parser, "--v-init", help="initial v (default: 0, or 1e-12 if eps=0)")
    _add(spec, parser, "--m-init", default=0.0, help="initial m")
    _add(spec, parser, "--bias-correction", flag=True, default=False,
         help="rescale stepsize by sqrt(1-beta2^k)/(1-beta1^k)")
    _add(spec, parser, "--schedule", cast=str, default="inverse-sqrt",
         choices=sorted(_SCHEDULE_BY_NAME), help="stepsize schedule")


def _add_problem(spec, parser, default_family=None) -> None:
    _add(spec, parser, "--problem", cast=str, default=default_family,
         choices=["reddi", "divpw", "nonreal", "lsq"], help="problem family")
    _add(spec, parser, "--n", cast=int, help="number of components")
    _add(spec, parser, "--a", help="family shape parameter")
    _add(spec, parser, "--data", cast=str, help="CSV of equations for lsq")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="adamlab",
        description="desk-scale experiments on Adam's convergence/divergence boundary",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, _CommandSpec] = {}

    s = registry["run"] = _CommandSpec("run")
    p = sub.add_parser("run", help="single trajectory -> JSONL + summary CSV")
    _add_common(s, p)
    _add_problem(s, p)
    _add_hyper(s, p)
    _add(s, p, "--scheme", cast=str, default="cyclic",
         choices=sorted(_SCHEME_BY_NAME), help="batch ordering")
    _add(s, p, "--epochs", cast=int, help="budget in epochs")
    _add(s, p, "--iters", cast=int, help="budget in iterations")
    _add(s, p, "--x0", default=0.0, help="initial point (scalar broadcast)")
    _add(s, p, "--log-every", cast=int, default=1, help="record stride (0 = none)")
    _add(s, p, "--cutoff", default=1e6, help="divergence cutoff on |x|")
    _add(s, p, "--tol-converge", default=0.5, help="gap/gradient tolerance")

    s = registry["sweep"] = _CommandSpec("sweep")
    p = sub.add_parser("sweep", help="(beta1, beta2) grid sweep -> CSV (+ PGM)")
    _add_common(s, p)
    _add(s, p, "--problem", cast=str, default="divpw",
         choices=["reddi", "divpw", "nonreal"], help="problem family")
    _add(s, p, "--n", cast=int, help="number of components")
    _add(s, p, "--a", help="family shape parameter")
    _add(s, p, "--grid", cast=str, default="50x50",
         help="R1xR2: beta1 values k/R1, beta2 values k/R2")
    _add(s, p, "--beta1-list", cast=str, help="explicit beta1 values, comma-separated")
    _add(s, p, "--beta2-list", cast=str, help="explicit beta2 values, comma-separated")
    _add(s, p, "--scheme", cast=str, default="cyclic",
         choices=sorted(_SCHEME_BY_NAME), help="batch ordering")
    _add(s, p, "--epochs", cast=int, help="budget in epochs")
    _add(s, p, "--iters", cast=int, help="budget in iterations")
    _add(s, p, "--eta0", default=0.1, help="stepsize scale")
    _add(s, p, "--eps", default=1e-8, help="denominator offset")
    _add(s, p, "--x0", default=1.0, help="initial point")
    _add(s, p, "--seeds", cast=int, default=1, help="seeds per cell")
    _add(s, p, "--tol-converge", default=0.5, help="convergence tolerance on the gap")
    _add(s, p, "--cutoff", default=1e6, help="divergence cutoff on |x|")
    _add(s, p, "--workers", cast=int, default=1, help="worker processes")
    _add(s, p, "--resume", flag=True, default=False,
         help="keep rows already in the output CSV")
    _add(s, p, "--heatmap", flag=True, default=False,
         help="also render mean final gap as PGM")

    s = registry["region"] = _CommandSpec("region")
    p = sub.add_parser("region", help="closed-form divergence region -> CSV + PGM")
    _add_common(s, p)
    _add(s, p, "--n", cast=int, help="number of components (>= 3)")
    _add(s, p, "--res", cast=int, default=200, help="cells per axis")

    s = registry["concentration"] = _CommandSpec("concentration")
    p = sub.add_parser(
        "concentration",
        help="second-moment sandwich check on one with-replacement run -> JSON",
    )
    _add_common(s, p)
    _add_problem(s, p, default_family="divpw")
    _add_hyper(s, p)
    _add(s, p, "--beta2", default=0.9999, help="second-moment decay")
    _add(s, p, "--delta", help="concentration slack (default 1/(4n))")
    _add(s, p, "--iters", cast=int, default=25000, help="iterations")
    _add(s, p, "--x0", default=1.0, help="initial point")

    s = registry["verify"] = _CommandSpec("verify")
    p = sub.add_parser("verify", help="randomized structural-invariant suite")
    _add_common(s, p)
    _add(s, p, "--trials", cast=int, default=100, help="randomized configurations")
    _add(s, p, "--steps", cast=int, default=1000, help="steps per trial")
    _add(s, p, "--tol", default=1e-9, help="relative float slack")

    return parser, registry


def _read_config_file(path: str, spec: _CommandSpec) -> dict:
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise _UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key = key.strip().replace("-", "_")
        if key not in spec.defaults or key == "config":
            raise _UsageError(f"{path}:{lineno}: unknown key {key!r} for {spec.name}")
        try:
            values[key] = spec.casts[key](val.strip())
        except ValueError as exc:
            raise _UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def _merge_options(spec: _CommandSpec, ns: argparse.Namespace) -> dict:
    given = {k: v for k, v in vars(ns).items() if k != "command"}
    merged = dict(spec.defaults)
    cfg_path = given.get("config", spec.defaults.get("config"))
    if cfg_path:
        merged.update(_read_config_file(cfg_path, spec))
    merged.update(given)
    if merged.get("seed") is None:
        env = os.environ.get("ADAM_LAB_SEED", "0")
        try:
            merged["seed"] = int(env)
        except ValueError as exc:
            raise _UsageError(f"ADAM_LAB_SEED must be an integer, got {env!r}") from exc
    return merged


# --- shared builders -------------------------------------------------------


def _build_problem(vals: dict):
    family = vals["problem"]
    n, a, data = vals.get("n"), vals.get("a"), vals.get("data")
    if family != "lsq" and data is not None:
        raise _UsageError("--data applies only to --problem lsq")
    if family == "reddi":
        if n is None:
            raise _UsageError("--n is required for reddi")
        if a is not None:
            raise _UsageError("--a does not apply to reddi")
        return make_problem("reddi", n=n)
    if family == "divpw":
        if n is None:
            raise _UsageError("--n is required for divpw")
        return make_problem("divpw", n=n, a=1.0 if a is None else a)
    if family == "nonreal":
        if n not in (None, 10):
            raise _UsageError("nonreal has exactly 10 components; drop --n")
        return make_problem("nonreal", a=10.0 if a is None else a)
    if data is None:
        raise _UsageError("--data is required for lsq")
    if n is not None or a is not None:
        raise _UsageError("--n/--a do not apply to lsq (shape comes from the data)")
    try:
        return LeastSquares.from_csv(data)
    except (OSError, ValueError) as exc:
        raise _UsageError(f"cannot load lsq data: {exc}") from exc


def _build_config(vals: dict) -> AdamConfig:
    try:
        return AdamConfig(
            beta1=vals["beta1"], beta2=vals["beta2"], eta0=vals["eta0"],
            eps=vals["eps"], v_init=vals.get("v_init"), m_init=vals["m_init"],
            bias_correction=vals["bias_correction"],
            schedule=_SCHEDULE_BY_NAME[vals["schedule"]],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _budget(vals: dict) -> tuple[int | None, int | None]:
    epochs, iters = vals.get("epochs"), vals.get("iters")
    if (epochs is None) == (iters is None):
        raise _UsageError("exactly one of --epochs/--iters is required")
    return epochs, iters


def _out_path(vals: dict, name: str) -> str:
    out_dir = vals["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


# --- subcommands -----------------------------------------------------------


def _record_json(rec) -> str:
    return json.dumps(
        {
            "t": rec.t, "k": rec.k, "i": rec.i, "batch": rec.batch,
            "eta": rec.eta, "objective": rec.objective,
            "full_grad_norm": rec.full_grad_norm,
            "step_norm": rec.step_norm, "x_norm": rec.x_norm,
        },
        separators=(",", ":"),
    )


_RUN_CSV_COLUMNS = (
    "family", "n", "a", "scheme", "seed", "beta1", "beta2", "eta0", "eps",
    "steps", "epochs", "outcome", "final_gap", "final_grad_norm", "min_gap",
    "min_grad_norm", "min_metric", "final_objective", "final_x_norm",
)


def _cmd_run(vals: dict) -> int:
    problem = _build_problem(vals)
    config = _build_config(vals)
    epochs, iters = _budget(vals)
    scheme = SamplingScheme(_SCHEME_BY_NAME[vals["scheme"]], vals["seed"])
    try:
        log = run(
            problem, config, scheme, epochs=epochs, iterations=iters,
            x0=vals["x0"], log_every=vals["log_every"],
            cutoff_diverge=vals["cutoff"],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    outcome = classify_outcome(log, vals["tol_converge"], vals["cutoff"])
    s = log.summary

    jsonl_path = _out_path(vals, "run.jsonl")
    with open(jsonl_path, "w") as fh:
        for rec in log.records:
            fh.write(_record_json(rec) + "\n")
    csv_path = _out_path(vals, "run.csv")
    row = (
        vals["problem"], str(problem.n), _fmt(vals.get("a")), vals["scheme"],
        str(vals["seed"]), _fmt(config.beta1), _fmt(config.beta2),
        _fmt(config.eta0), _fmt(config.eps), str(s.steps),
        "" if s.epochs is None else str(s.epochs), outcome.value,
        _fmt(s.final_gap), _fmt(s.final_grad_norm), _fmt(s.min_gap),
        _fmt(s.min_grad_norm), _fmt(s.min_metric), _fmt(s.final_objective),
        _fmt(float(np.linalg.norm(s.final_x))),
    )
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(_RUN_CSV_COLUMNS) + "\n")
        fh.write(",".join(row) + "\n")

    print(
        f"outcome={outcome.value} steps={s.steps}"
        f" final_gap={_fmt(s.final_gap) or 'n/a'}"
        f" final_grad_norm={_fmt(s.final_grad_norm)}"
    )
    print(f"wrote {jsonl_path}")
    print(f"wrote {csv_path}")
    return 0


def _parse_grid(vals: dict) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if vals.get("beta1_list") or vals.get("beta2_list"):
        if not (vals.get("beta1_list") and vals.get("beta2_list")):
            raise _UsageError("--beta1-list and --beta2-list go together")
        try:
            b1 = tuple(float(tok) for tok in vals["beta1_list"].split(","))
            b2 = tuple(float(tok) for tok in vals["beta2_list"].split(","))
        except ValueError as exc:
            raise _UsageError(f"bad grid list: {exc}") from exc
        return b1, b2
    text = vals["grid"]
    parts = text.lower().split("x")
    try:
        r1, r2 = (int(p) for p in parts)
    except ValueError as exc:
        raise _UsageError(f"--grid must look like 50x50, got {text!r}") from exc
    if r1 < 1 or r2 < 1:
        raise _UsageError(f"--grid sides must be >= 1, got {text!r}")
    return (
        tuple(k / r1 for k in range(r1)),
        tuple(k / r2 for k in range(r2)),
    )


def _cmd_sweep(vals: dict) -> int:
    b1, b2 = _parse_grid(vals)
    family = vals["problem"]
    if family in ("reddi", "divpw") and vals.get("n") is None:
        raise _UsageError(f"--n is required for {family}")
    if family == "nonreal" and vals.get("n") not in (None, 10):
        raise _UsageError("nonreal has exactly 10 components; drop --n")
    epochs, iters = _budget(vals)
    try:
        spec = SweepSpec(
            family=family, n=vals.get("n") or 10, a=vals.get("a"),
            scheme_kind=_SCHEME_BY_NAME[vals["scheme"]],
            beta1_values=b1, beta2_values=b2, epochs=epochs, iterations=iters,
            eta0=vals["eta0"], eps=vals["eps"], x0=vals["x0"],
            base_seed=vals["seed"], seeds_per_cell=vals["seeds"],
            tol_converge=vals["tol_converge"], cutoff_diverge=vals["cutoff"],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    csv_path = _out_path(vals, "sweep.csv")
    start = time.perf_counter()
    try:
        results = run_sweep(
            spec, csv_path, workers=vals["workers"], resume=vals["resume"]
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    elapsed = time.perf_counter() - start
    computed = [r for r in results if r is not None]
    counts: dict[str, int] = {}
    for res in computed:
        counts[res.outcome.value] = counts.get(res.outcome.value, 0) + 1
    tally = " ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    print(
        f"cells={len(results)} computed={len(computed)}"
        f" reused={len(results) - len(computed)} {tally}"
        f" elapsed_s={elapsed:.1f}"
    )
    print(f"wrote {csv_path}")
    if vals["heatmap"]:
        matrix = gap_matrix(spec, csv_path)
        pgm = emit_pgm(
            matrix.T,
            comment="rows: beta2 ascending downward; cols: beta1 ascending; "
            "dark = small mean final gap",
        )
        pgm_path = _out_path(vals, "sweep.pgm")
        with open(pgm_path, "wb") as fh:
            fh.write(pgm)
        print(f"wrote {pgm_path}")
    return 0


def _cmd_region(vals: dict) -> int:
    if vals.get("n") is None:
        raise _UsageError("--n is required")
    try:
        grid = region_mask(vals["n"], resolution=vals["res"])
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    csv_path = _out_path(vals, "region.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write("beta1,beta2,in_region\n")
        for beta1, beta2, inside in region_rows(grid):
            fh.write(f"{beta1!r},{beta2!r},{int(inside)}\n")
    pgm = emit_pgm(
        grid.cells.T.astype(float),
        normalization=(0.0, 1.0),
        comment="rows: beta2 ascending downward; cols: beta1 ascending; "
        "255 = divergence conditions hold",
    )
    pgm_path = _out_path(vals, "region.pgm")
    with open(pgm_path, "wb") as fh:
        fh.write(pgm)
    print(f"n={grid.n} resolution={vals['res']} area={region_area(grid)!r}")
    print(f"wrote {csv_path}")
    print(f"wrote {pgm_path}")
    return 0


def _cmd_concentration(vals: dict) -> int:
    problem = _build_problem(vals)
    config = _build_config(vals)
    delta = vals.get("delta")
    if delta is None:
        delta = 1.0 / (4 * problem.n)
    try:
        consts = DiagnosticsConstants.from_run(problem, config, delta)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    scheme = SamplingScheme(SchemeKind.WITH_REPLACEMENT, vals["seed"])
    log = run(
        problem, config, scheme, iterations=vals["iters"], x0=vals["x0"],
        log_every=0, snapshots=True, snapshot_stride=1,
    )
    report = concentration_report(problem, log, consts)

    payload = {
        "problem": {
            "family": vals["problem"], "n": problem.n,
            "a": vals.get("a"), "L": problem.known.L,
        },
        "config": {
            "beta1": config.beta1, "beta2": config.beta2, "eta0": config.eta0,
            "eps": config.eps, "seed": vals["seed"], "iterations": vals["iters"],
            "x0": vals["x0"],
        },
        "constants": {"delta": consts.delta, "Delta1": consts.Delta1},
        "report": report.to_dict(),
    }
    json_path = _out_path(vals, "concentration.json")
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

    if not report.precondition_ok:
        print("FAIL: precondition violated; sandwich constants undefined")
        print(f"wrote {json_path}")
        return 1
    if report.qualifying_steps == 0:
        print("FAIL: no steps past burn-in; increase --iters")
        print(f"wrote {json_path}")
        return 1
    slack = 3.0 * math.sqrt(report.p_bound / report.qualifying_steps)
    ok = report.empirical_rate <= report.p_bound + slack
    print(
        f"{'PASS' if ok else 'FAIL'}:"
        f" qualifying={report.qualifying_steps}"
        f" violations={report.lower_violations + report.upper_violations}"
        f" rate={report.empirical_rate!r}"
        f" bound={report.p_bound + slack!r}"
    )
    print(f"wrote {json_path}")
    return 0 if ok else 1


# --- randomized invariant suite -------------------------------------------


def _uniform(rng: SplitMix64, lo: float, hi: float) -> float:
    return lo + (hi - lo) * (rng.next_u64() / 2.0**64)


def _random_problem(rng: SplitMix64):
    kind = rng.next_below(4)
    if kind == 0:
        return make_problem("reddi", n=3 + rng.next_below(18))
    if kind == 1:
        return make_problem(
            "divpw", n=3 + rng.next_below(18), a=_uniform(rng, 0.1, 2.0)
        )
    if kind == 2:
        return make_problem("nonreal", a=_uniform(rng, 0.5, 20.0))
    n = 2 + rng.next_below(9)
    d = 1 + rng.next_below(4)
    A = np.array([[_uniform(rng, -2.0, 2.0) for _ in range(d)] for _ in range(n)])
    b = np.array([_uniform(rng, -2.0, 2.0) for _ in range(n)])
    return make_problem("lsq", A=A, b=b)


def run_verify_suite(
    trials: int, steps: int, seed: int, tol: float = 1e-9
) -> tuple[int, list[str]]:
    """Random (problem, config, scheme) runs checked against the update's
    structural bounds, with periodic determinism replays and exact
    sign-step trials at beta1 = beta2 = 0. Returns (checks_run, failures).
    """
    rng = SplitMix64(seed)
    failures: list[str] = []
    checks = 0
    for trial in range(trials):
        problem = _random_problem(rng)
        beta2 = _uniform(rng, 0.05, 0.9999)
        beta1 = _uniform(rng, 0.0, 0.99) * math.sqrt(beta2)
        config = AdamConfig(
            beta1=beta1, beta2=beta2, eta0=_uniform(rng, 1e-3, 1.0),
            eps=(0.0, 1e-8, 1e-3)[rng.next_below(3)],
            bias_correction=rng.next_below(2) == 1,
            schedule=(Schedule.INVERSE_SQRT, Schedule.CONSTANT)[rng.next_below(2)],
        )
        scheme = SamplingScheme(
            (
                SchemeKind.WITH_REPLACEMENT,
                SchemeKind.RANDOM_SHUFFLE,
                SchemeKind.CYCLIC,
            )[rng.next_below(3)],
            rng.next_u64(),
        )
        x0 = [_uniform(rng, -5.0, 5.0) for _ in range(problem.d)]
        kwargs = dict(x0=x0, log_every=0, snapshots=True, snapshot_stride=1)
        if scheme.by_epoch():
            log = run(
                problem, config, scheme,
                epochs=-(-steps // problem.n), **kwargs,
            )
        else:
            log = run(problem, config, scheme, iterations=steps, **kwargs)
        checks += 1
        for v in verify_invariants(log, tol):
            failures.append(
                f"trial {trial}: {v.check} at t={v.t} coord={v.coord}: {v.detail}"
            )
        if trial % 10 == 0:
            if scheme.by_epoch():
                replay = run(
                    problem, config, scheme,
                    epochs=-(-steps // problem.n), **kwargs,
                )
            else:
                replay = run(problem, config, scheme, iterations=steps, **kwargs)
            checks += 1
            same = (
                np.array_equal(replay.summary.final_x, log.summary.final_x)
                and replay.summary.steps == log.summary.steps
            )
            if not same:
                failures.append(f"trial {trial}: replay mismatch")

    # sign-step reduction: beta1 = beta2 = 0 moves by exactly -eta * sign(g)
    for trial in range(10):
        problem = (
            make_problem("divpw", n=3 + rng.next_below(8), a=_uniform(rng, 0.5, 1.5))
            if rng.next_below(2)
            else make_problem("nonreal", a=_uniform(rng, 1.0, 10.0))
        )
        config = AdamConfig(
            beta1=0.0, beta2=0.0, eta0=_uniform(rng, 1e-3, 0.5),
            eps=0.0, v_init=1e-12,
        )
        scheme = SamplingScheme(SchemeKind.WITH_REPLACEMENT, rng.next_u64())
        log = run(
            problem, config, scheme, iterations=200,
            x0=[_uniform(rng, -4.0, 4.0)], log_every=0,
            snapshots=True, snapshot_stride=1,
        )
        checks += 1
        for snap in log.snapshots:
            g = float(snap.grad[0])
            sign = 0.0 if g == 0.0 else math.copysign(1.0, g)
            want = float(snap.x_before[0]) - snap.eta * sign
            if float(snap.x_after[0]) != want:
                failures.append(
                    f"sign trial {trial}: step at t={snap.t} is "
                    f"{float(snap.x_after[0]) - float(snap.x_before[0])}, "
                    f"want {-snap.eta * sign}"
                )
    return checks, failures


def _cmd_verify(vals: dict) -> int:
    if vals["trials"] < 1 or vals["steps"] < 1:
        raise _UsageError("--trials and --steps must be >= 1")
    checks, failures = run_verify_suite(
        vals["trials"], vals["steps"], vals["seed"], vals["tol"]
    )
    for line in failures[:20]:
        print(f"violation: {line}", file=sys.stderr)
    print(f"checks={checks} violations={len(failures)}")
    return 0 if not failures else 1


# --- entry point -----------------------------------------------------------


_HANDLERS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "region": _cmd_region,
    "concentration": _cmd_concentration,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser, registry = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        vals = _merge_options(registry[ns.command], ns)
        return _HANDLERS[ns.command](vals)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
