"""Adam on finite sums, with three batch orderings and instrumentation.

The update consumed at every step is

    m <- beta1 * m + (1 - beta1) * g
    v <- beta2 * v + (1 - beta2) * g^2      (elementwise)
    x <- x - eta_k * m / (sqrt(v) + eps)    (then projected to the box)

where g is one component gradient. The stepsize counter k is the
iteration index under with-replacement sampling and the epoch index
(held constant within an epoch) under shuffling or cyclic order. With
beta1 = beta2 = 0 and eps = 0 the update is exactly -eta_k * sign(g).

Runs are deterministic given (problem, config, scheme, budget, x0):
index streams come from a seeded SplitMix64 and no other randomness
exists. Scalar problems run on plain floats; the float64 operation
order matches the array path bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .analysis import theorem_metric_from_norm
from .problems import Problem
from .rng import SplitMix64

Array = np.ndarray

DEFAULT_CUTOFF = 1e6


class Schedule(Enum):
    INVERSE_SQRT = "inverse-sqrt"
    CONSTANT = "constant"


class SchemeKind(Enum):
    WITH_REPLACEMENT = "wr"
    RANDOM_SHUFFLE = "rr"
    CYCLIC = "cyclic"


@dataclass(frozen=True)
class SamplingScheme:
    """Batch-index ordering plus the seed that drives it (unused by cyclic)."""

    kind: SchemeKind
    seed: int = 0

    def by_epoch(self) -> bool:
        return self.kind is not SchemeKind.WITH_REPLACEMENT


@dataclass(frozen=True)
class AdamConfig:
    """Hyperparameters; v_init=None resolves to 0 if eps > 0, else 1e-12.

    The resolution keeps the denominator sqrt(v) + eps away from zero at
    step one without the caller having to pick a floor. Passing eps = 0
    and v_init = 0 explicitly is rejected (the update would be 0/0 on
    the first step).
    """

    beta1: float
    beta2: float
    eta0: float
    eps: float = 0.0
    v_init: float | None = None
    m_init: float = 0.0
    bias_correction: bool = False
    schedule: Schedule = Schedule.INVERSE_SQRT

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 <= 1.0:
            raise ValueError(f"beta2 must be in [0, 1], got {self.beta2}")
        if not self.eta0 > 0.0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")
        if self.eps < 0.0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.v_init is None:
            object.__setattr__(self, "v_init", 0.0 if self.eps > 0.0 else 1e-12)
        if self.v_init < 0.0:
            raise ValueError(f"v_init must be nonnegative, got {self.v_init}")
        if self.eps == 0.0 and self.v_init == 0.0:
            raise ValueError("need eps > 0 or v_init > 0 for a well-defined step")


def stepsize(config: AdamConfig, k: int) -> float:
    """Effective stepsize at counter k >= 1, including bias correction.

    Base schedule: eta0 / sqrt(k) (or constant eta0). With correction
    the base is scaled by sqrt(1 - beta2^k) / (1 - beta1^k), which stays
    within [sqrt(1 - beta2), 1 / (1 - beta1)] for every k.
    """
    if k < 1:
        raise ValueError(f"stepsize counter must be >= 1, got {k}")
    if config.schedule is Schedule.INVERSE_SQRT:
        eta = config.eta0 / math.sqrt(k)
    else:
        eta = config.eta0
    if config.bias_correction:
        eta *= math.sqrt(1.0 - config.beta2**k) / (1.0 - config.beta1**k)
    return eta


# --- index samplers -------------------------------------------------------


class _WithReplacementSampler:
    def __init__(self, n: int, seed: int) -> None:
        self.n = n
        self.rng = SplitMix64(seed)

    def begin_epoch(self) -> None:
        pass

    def next_index(self) -> int:
        return self.rng.next_below(self.n)


class _ShuffleSampler:
    def __init__(self, n: int, seed: int) -> None:
        self.n = n
        self.rng = SplitMix64(seed)
        self._perm: list[int] = []
        self._pos = 0

    def begin_epoch(self) -> None:
        self._perm = self.rng.permutation(self.n)
        self._pos = 0

    def next_index(self) -> int:
        if self._pos >= len(self._perm):
            raise RuntimeError("epoch exhausted; call begin_epoch first")
        tau = self._perm[self._pos]
        self._pos += 1
        return tau


class _CyclicSampler:
    def __init__(self, n: int) -> None:
        self.n = n
        self._count = 0

    def begin_epoch(self) -> None:
        pass

    def next_index(self) -> int:
        tau = self._count % self.n
        self._count += 1
        return tau


def make_sampler(scheme: SamplingScheme, n: int):
    """Stateful index stream for one run; deterministic in (scheme, n)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if scheme.kind is SchemeKind.WITH_REPLACEMENT:
        return _WithReplacementSampler(n, scheme.seed)
    if scheme.kind is SchemeKind.RANDOM_SHUFFLE:
        return _ShuffleSampler(n, scheme.seed)
    return _CyclicSampler(n)


# --- records and state ----------------------------------------------------


@dataclass(frozen=True, slots=True)
class StepRecord:
    """Post-step observations; objective and norms describe x_after."""

    t: int
    k: int
    i: int | None
    batch: int
    eta: float
    objective: float
    full_grad_norm: float
    step_norm: float
    x_norm: float


@dataclass(frozen=True, slots=True)
class StateSnapshot:
    """Full state around one step, for invariant and concentration checks."""

    t: int
    k: int
    i: int | None
    batch: int
    eta: float
    x_before: Array
    grad: Array
    m: Array
    v_prev: Array
    v: Array
    x_after: Array


@dataclass
class OptimizerState:
    """Mutable loop state; k is the stepsize counter, t the global step."""

    x: Array
    m: Array
    v: Array
    k: int = 1
    t: int = 0


@dataclass
class RunSummary:
    steps: int
    epochs: int | None
    final_x: Array
    final_objective: float
    final_grad_norm: float
    initial_objective: float
    initial_grad_norm: float
    min_grad_norm: float
    max_abs_x: float
    initial_gap: float | None
    final_gap: float | None
    min_gap: float | None
    min_metric: float | None
    diverged: bool


@dataclass
class TrajectoryLog:
    problem_family: str
    n: int
    config: AdamConfig
    scheme: SamplingScheme
    records: list[StepRecord]
    snapshots: list[StateSnapshot]
    summary: RunSummary


# --- single-step / single-epoch building blocks ---------------------------


def init_state(problem: Problem, config: AdamConfig, x0) -> OptimizerState:
    x = np.full(problem.d, 0.0) + np.asarray(x0, dtype=float)
    if x.shape != (problem.d,):
        raise ValueError(f"x0 shape {x.shape} incompatible with d={problem.d}")
    x = problem.project(x)
    m = np.full(problem.d, float(config.m_init))
    v = np.full(problem.d, float(config.v_init))
    return OptimizerState(x=x, m=m, v=v)


def adam_update(
    x: Array, m: Array, v: Array, g: Array, eta: float,
    beta1: float, beta2: float, eps: float,
) -> tuple[Array, Array, Array]:
    """One unprojected update. A 0/0 coordinate (m and sqrt(v) + eps both
    zero, possible only when beta2 = 0 meets a zero gradient) steps by 0,
    matching the sign-step reading; a nonzero m over a zero denominator
    propagates inf so the run gets flagged rather than masked."""
    omb1 = 1.0 - beta1
    omb2 = 1.0 - beta2
    m = beta1 * m + omb1 * g
    v = beta2 * v + omb2 * (g * g)
    denom = np.sqrt(v) + eps
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = m / denom
    if (denom == 0.0).any():
        ratio = np.where((denom == 0.0) & (m == 0.0), 0.0, ratio)
    return x - eta * ratio, m, v


def _record(problem: Problem, t, k, i, batch, eta, x, step_norm) -> StepRecord:
    return StepRecord(
        t=t, k=k, i=i, batch=batch, eta=eta,
        objective=problem.objective(x),
        full_grad_norm=float(np.linalg.norm(problem.full_grad(x))),
        step_norm=step_norm,
        x_norm=float(np.linalg.norm(x)),
    )


def step_wr(
    problem: Problem,
    config: AdamConfig,
    state: OptimizerState,
    sampler,
) -> tuple[OptimizerState, StepRecord]:
    """One with-replacement step; the counter advances after the update."""
    eta = stepsize(config, state.k)
    tau = sampler.next_index()
    g = problem.component_grad(tau, state.x)
    x, m, v = adam_update(
        state.x, state.m, state.v, g, eta, config.beta1, config.beta2, config.eps
    )
    x = problem.project(x)
    new = OptimizerState(x=x, m=m, v=v, k=state.k + 1, t=state.t + 1)
    rec = _record(
        problem, new.t, state.k, None, tau, eta,
        x, float(np.linalg.norm(x - state.x)),
    )
    return new, rec


def run_epoch_rr(
    problem: Problem,
    config: AdamConfig,
    state: OptimizerState,
    sampler,
) -> tuple[OptimizerState, list[StepRecord]]:
    """One full epoch (n steps) at the fixed stepsize of epoch k.

    The sampler supplies the within-epoch order: a fresh permutation for
    shuffling, ascending indices for cyclic. m and v carry across the
    epoch boundary unchanged.
    """
    eta = stepsize(config, state.k)
    sampler.begin_epoch()
    x, m, v = state.x, state.m, state.v
    t = state.t
    records = []
    for i in range(problem.n):
        tau = sampler.next_index()
        g = problem.component_grad(tau, x)
        x_new, m, v = adam_update(
            x, m, v, g, eta, config.beta1, config.beta2, config.eps
        )
        x_new = problem.project(x_new)
        t += 1
        records.append(
            _record(
                problem, t, state.k, i, tau, eta,
                x_new, float(np.linalg.norm(x_new - x)),
            )
        )
        x = x_new
    return OptimizerState(x=x, m=m, v=v, k=state.k + 1, t=t), records


# --- full runs ------------------------------------------------------------


class _Tracker:
    """Running summary statistics over the iterates of one run."""

    __slots__ = (
        "problem", "x_star", "D0", "D1",
        "initial_objective", "initial_grad_norm", "initial_gap",
        "min_grad_norm", "max_abs_x", "min_gap", "min_metric",
    )

    def __init__(self, problem: Problem) -> None:
        self.problem = problem
        known = problem.known
        xs = known.x_star
        self.x_star = None if xs is None else np.asarray(xs, dtype=float)
        metric_known = known.D0 is not None and known.D1 is not None
        self.D0 = known.D0 if metric_known else None
        self.D1 = known.D1 if metric_known else None
        self.initial_objective = math.nan
        self.initial_grad_norm = math.nan
        self.initial_gap = None
        self.min_grad_norm = math.inf
        self.max_abs_x = 0.0
        self.min_gap = None if self.x_star is None else math.inf
        self.min_metric = None if self.D0 is None else math.inf

    def observe_scalar(self, xf: float) -> tuple[float, float]:
        p = self.problem
        obj = p.objective_scalar(xf)
        gn = abs(p.full_grad_scalar(xf))
        if gn < self.min_grad_norm:
            self.min_grad_norm = gn
        ax = abs(xf)
        if ax > self.max_abs_x:
            self.max_abs_x = ax
        if self.x_star is not None:
            gap = abs(xf - self.x_star[0])
            if gap < self.min_gap:
                self.min_gap = gap
        if self.D0 is not None:
            metric = theorem_metric_from_norm(gn, self.D0, self.D1, 1)
            if metric < self.min_metric:
                self.min_metric = metric
        return obj, gn

    def observe_array(self, x: Array) -> tuple[float, float]:
        p = self.problem
        obj = p.objective(x)
        gn = float(np.linalg.norm(p.full_grad(x)))
        if gn < self.min_grad_norm:
            self.min_grad_norm = gn
        ax = float(np.max(np.abs(x))) if x.size else 0.0
        if ax > self.max_abs_x:
            self.max_abs_x = ax
        if self.x_star is not None:
            gap = float(np.linalg.norm(x - self.x_star))
            if gap < self.min_gap:
                self.min_gap = gap
        if self.D0 is not None:
            metric = theorem_metric_from_norm(gn, self.D0, self.D1, p.d)
            if metric < self.min_metric:
                self.min_metric = metric
        return obj, gn

    def gap_of(self, x: Array) -> float | None:
        if self.x_star is None:
            return None
        return float(np.linalg.norm(x - self.x_star))


def _resolve_budget(
    scheme: SamplingScheme, n: int, epochs: int | None, iterations: int | None
) -> tuple[int, int | None]:
    """Total step count, plus the epoch count for epoch-structured runs.

    Iteration budgets on epoch-structured schemes round up to whole
    epochs; epoch budgets on with-replacement runs mean epochs * n steps.
    """
    if (epochs is None) == (iterations is None):
        raise ValueError("exactly one of epochs/iterations must be given")
    if epochs is not None and epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if iterations is not None and iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if scheme.by_epoch():
        n_epochs = epochs if epochs is not None else -(-iterations // n)
        return n_epochs * n, n_epochs
    total = iterations if iterations is not None else epochs * n
    return total, None


def run(
    problem: Problem,
    config: AdamConfig,
    scheme: SamplingScheme,
    *,
    epochs: int | None = None,
    iterations: int | None = None,
    x0=0.0,
    log_every: int = 1,
    snapshots: bool = False,
    snapshot_stride: int = 1,
    cutoff_diverge: float = DEFAULT_CUTOFF,
) -> TrajectoryLog:
    """Execute one run and return its (possibly subsampled) trajectory.

    log_every=N keeps every N-th step record plus the final one; 0 keeps
    none. Snapshots capture full (x, g, m, v) state every snapshot_stride
    steps for the invariant and concentration machinery. The run stops
    early, with the summary flagged diverged, as soon as any coordinate
    leaves [-cutoff_diverge, cutoff_diverge] or goes non-finite.
    """
    if log_every < 0:
        raise ValueError(f"log_every must be >= 0, got {log_every}")
    if snapshot_stride < 1:
        raise ValueError(f"snapshot_stride must be >= 1, got {snapshot_stride}")
    total_steps, n_epochs = _resolve_budget(scheme, problem.n, epochs, iterations)
    sampler = make_sampler(scheme, problem.n)
    state = init_state(problem, config, x0)
    tracker = _Tracker(problem)

    use_scalar = problem.d == 1 and getattr(problem, "scalar_fast", False)
    if use_scalar:
        runner = _run_scalar
    else:
        runner = _run_array
    records, snaps, final_x, steps_done, diverged = runner(
        problem, config, scheme, sampler, state, tracker,
        total_steps, log_every, snapshots, snapshot_stride, cutoff_diverge,
    )

    final_obj, final_gn = (
        tracker.observe_scalar(float(final_x[0]))
        if use_scalar
        else tracker.observe_array(final_x)
    )
    epochs_done = None
    if scheme.by_epoch():
        epochs_done = steps_done // problem.n
    summary = RunSummary(
        steps=steps_done,
        epochs=epochs_done,
        final_x=final_x,
        final_objective=final_obj,
        final_grad_norm=final_gn,
        initial_objective=tracker.initial_objective,
        initial_grad_norm=tracker.initial_grad_norm,
        min_grad_norm=tracker.min_grad_norm,
        max_abs_x=tracker.max_abs_x,
        initial_gap=tracker.initial_gap,
        final_gap=tracker.gap_of(final_x),
        min_gap=tracker.min_gap,
        min_metric=tracker.min_metric,
        diverged=diverged,
    )
    return TrajectoryLog(
        problem_family=type(problem).__name__,
        n=problem.n,
        config=config,
        scheme=scheme,
        records=records,
        snapshots=snaps,
        summary=summary,
    )


def _run_scalar(
    problem, config, scheme, sampler, state, tracker,
    total_steps, log_every, want_snaps, snap_stride, cutoff,
):
    b1, b2, eps = config.beta1, config.beta2, config.eps
    omb1, omb2 = 1.0 - b1, 1.0 - b2
    by_epoch = scheme.by_epoch()
    n = problem.n
    grad = problem.component_grad_scalar
    project = problem.project_scalar

    xf = float(state.x[0])
    mf = float(state.m[0])
    vf = float(state.v[0])

    obj, gn = tracker.observe_scalar(xf)
    tracker.initial_objective = obj
    tracker.initial_grad_norm = gn
    if tracker.x_star is not None:
        tracker.initial_gap = abs(xf - tracker.x_star[0])

    records: list[StepRecord] = []
    snaps: list[StateSnapshot] = []
    eta = 0.0
    diverged = False
    t = 0
    for t in range(1, total_steps + 1):
        if by_epoch:
            k, i = (t - 1) // n + 1, (t - 1) % n
            if i == 0:
                eta = stepsize(config, k)
                sampler.begin_epoch()
        else:
            k, i = t, None
            eta = stepsize(config, k)
        tau = sampler.next_index()
        g = grad(tau, xf)
        mf = b1 * mf + omb1 * g
        v_prev = vf
        vf = b2 * vf + omb2 * (g * g)
        denom = math.sqrt(vf) + eps
        if denom == 0.0:
            ratio = 0.0 if mf == 0.0 else math.copysign(math.inf, mf)
        else:
            ratio = mf / denom
        x_new = project(xf - eta * ratio)

        if not (math.isfinite(x_new) and math.isfinite(mf) and math.isfinite(vf)):
            diverged = True
        elif abs(x_new) > cutoff:
            diverged = True

        if want_snaps and (t % snap_stride == 0 or diverged):
            snaps.append(
                StateSnapshot(
                    t=t, k=k, i=i, batch=tau, eta=eta,
                    x_before=np.array([xf]), grad=np.array([g]),
                    m=np.array([mf]), v_prev=np.array([v_prev]),
                    v=np.array([vf]), x_after=np.array([x_new]),
                )
            )

        step_norm = abs(x_new - xf)
        xf = x_new
        if diverged:
            if log_every:
                records.append(
                    StepRecord(
                        t=t, k=k, i=i, batch=tau, eta=eta,
                        objective=math.nan if not math.isfinite(xf)
                        else problem.objective_scalar(xf),
                        full_grad_norm=math.nan if not math.isfinite(xf)
                        else abs(problem.full_grad_scalar(xf)),
                        step_norm=step_norm, x_norm=abs(xf),
                    )
                )
            break

        obj, gn = tracker.observe_scalar(xf)
        if log_every and (t % log_every == 0 or t == total_steps):
            records.append(
                StepRecord(
                    t=t, k=k, i=i, batch=tau, eta=eta, objective=obj,
                    full_grad_norm=gn, step_norm=step_norm, x_norm=abs(xf),
                )
            )
    return records, snaps, np.array([xf]), t, diverged


def _run_array(
    problem, config, scheme, sampler, state, tracker,
    total_steps, log_every, want_snaps, snap_stride, cutoff,
):
    b1, b2, eps = config.beta1, config.beta2, config.eps
    by_epoch = scheme.by_epoch()
    n = problem.n

    x, m, v = state.x, state.m, state.v
    obj, gn = tracker.observe_array(x)
    tracker.initial_objective = obj
    tracker.initial_grad_norm = gn
    tracker.initial_gap = tracker.gap_of(x)

    records: list[StepRecord] = []
    snaps: list[StateSnapshot] = []
    eta = 0.0
    diverged = False
    t = 0
    for t in range(1, total_steps + 1):
        if by_epoch:
            k, i = (t - 1) // n + 1, (t - 1) % n
            if i == 0:
                eta = stepsize(config, k)
                sampler.begin_epoch()
        else:
            k, i = t, None
            eta = stepsize(config, k)
        tau = sampler.next_index()
        g = problem.component_grad(tau, x)
        v_prev = v
        x_new, m, v = adam_update(x, m, v, g, eta, b1, b2, eps)
        x_new = problem.project(x_new)

        finite = bool(
            np.isfinite(x_new).all() and np.isfinite(m).all() and np.isfinite(v).all()
        )
        if not finite or float(np.max(np.abs(x_new))) > cutoff:
            diverged = True

        if want_snaps and (t % snap_stride == 0 or diverged):
            snaps.append(
                StateSnapshot(
                    t=t, k=k, i=i, batch=tau, eta=eta,
                    x_before=x.copy(), grad=g.copy(), m=m.copy(),
                    v_prev=v_prev.copy(), v=v.copy(), x_after=x_new.copy(),
                )
            )

        step_norm = float(np.linalg.norm(x_new - x))
        x = x_new
        if diverged:
            if log_every:
                ok = bool(np.isfinite(x).all())
                records.append(
                    StepRecord(
                        t=t, k=k, i=i, batch=tau, eta=eta,
                        objective=problem.objective(x) if ok else math.nan,
                        full_grad_norm=float(np.linalg.norm(problem.full_grad(x)))
                        if ok else math.nan,
                        step_norm=step_norm,
                        x_norm=float(np.linalg.norm(x)),
                    )
                )
            break

        obj, gn = tracker.observe_array(x)
        if log_every and (t % log_every == 0 or t == total_steps):
            records.append(
                StepRecord(
                    t=t, k=k, i=i, batch=tau, eta=eta, objective=obj,
                    full_grad_norm=gn, step_norm=step_norm,
                    x_norm=float(np.linalg.norm(x)),
                )
            )
    return records, snaps, x, t, diverged
