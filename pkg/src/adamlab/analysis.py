"""Diagnostics: stepwise bounds, second-moment concentration, outcomes.

The quantities here are deterministic functions of a problem instance,
a hyperparameter configuration, and recorded trajectory state. Nothing
in this module runs the optimizer; it only inspects what a run stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .optimizer import TrajectoryLog
    from .problems import Problem

Array = np.ndarray


class Outcome(Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    PLATEAU = "Plateau"
    SKIPPED = "Skipped"  # sweep-only: cell rejected before running


# --- scale-free progress metric -------------------------------------------


def theorem_metric_from_norm(grad_norm: float, D0: float, D1: float, d: int) -> float:
    """min of ||g||^2 / sqrt(D0) and ||g|| / (2 sqrt(d D1)) at known norm.

    An arm whose constant is zero is treated as +inf (the constraint it
    encodes is vacuous), except that a zero gradient always yields 0.
    """
    if D0 is None or D1 is None:
        raise ValueError("variance constants unknown for this problem")
    if D0 < 0 or D1 < 0:
        raise ValueError(f"variance constants must be nonnegative, got {(D0, D1)}")
    if D0 == 0 and D1 == 0:
        raise ValueError("D0 and D1 cannot both be zero")
    if grad_norm == 0.0:
        return 0.0
    arm0 = grad_norm * grad_norm / math.sqrt(D0) if D0 > 0 else math.inf
    arm1 = grad_norm / (2.0 * math.sqrt(d * D1)) if D1 > 0 else math.inf
    return min(arm0, arm1)


def theorem_metric(g, D0: float, D1: float, d: int | None = None) -> float:
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if d is None:
        d = g.shape[0]
    return theorem_metric_from_norm(float(np.linalg.norm(g)), D0, D1, d)


# --- diagnostic constants --------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsConstants:
    """Problem/config-derived constants for step bounds and concentration.

    Delta1 = eta0 * L * sqrt(d) / sqrt(1 - beta2) * (1 - beta1) / (1 - beta1/sqrt(beta2))
    is the k=1 value of the per-step displacement bound Delta_k = Delta1 / sqrt(k).
    It is positive whenever L > 0 (and zero for problems with constant
    component gradients). delta is the concentration slack, delta <= 1/(4n).
    """

    n: int
    d: int
    L: float
    eta0: float
    beta1: float
    beta2: float
    delta: float
    Delta1: float

    @classmethod
    def from_run(cls, problem, config, delta: float) -> "DiagnosticsConstants":
        return make_constants(
            n=problem.n, d=problem.d, L=problem.known.L,
            eta0=config.eta0, beta1=config.beta1, beta2=config.beta2, delta=delta,
        )


def make_constants(
    *, n: int, d: int, L: float, eta0: float, beta1: float, beta2: float, delta: float
) -> DiagnosticsConstants:
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if L < 0:
        raise ValueError(f"L must be nonnegative, got {L}")
    if not 0.0 < beta2 < 1.0:
        raise ValueError(f"beta2 must be in (0, 1), got {beta2}")
    if not 0.0 <= beta1 < math.sqrt(beta2):
        raise ValueError(
            f"need 0 <= beta1 < sqrt(beta2), got beta1={beta1}, beta2={beta2}"
        )
    if not 0.0 < delta <= 1.0 / (4 * n):
        raise ValueError(f"delta must be in (0, 1/(4n)] = (0, {1/(4*n)}], got {delta}")
    Delta1 = (
        eta0 * L * math.sqrt(d) / math.sqrt(1.0 - beta2)
        * (1.0 - beta1) / (1.0 - beta1 / math.sqrt(beta2))
    )
    return DiagnosticsConstants(
        n=n, d=d, L=L, eta0=eta0, beta1=beta1, beta2=beta2, delta=delta, Delta1=Delta1
    )


def delta_k(consts: DiagnosticsConstants, k: int) -> float:
    """Per-step displacement bound at counter k: Delta1 / sqrt(k)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return consts.Delta1 / math.sqrt(k)


def mixing_lag(consts: DiagnosticsConstants) -> int:
    """ceil(log(n * delta) / log(beta2)): lag after which the weight a
    single squared gradient retains inside v has fallen below n*delta."""
    return math.ceil(math.log(consts.n * consts.delta) / math.log(consts.beta2))


def burn_in(consts: DiagnosticsConstants) -> int:
    """First counter k at which concentration claims apply: lag + n + 1."""
    return mixing_lag(consts) + consts.n + 1


def thresholds(consts: DiagnosticsConstants, k: int) -> tuple[float, float]:
    """Gradient floor R_k and drift allowance Q_k at counter k.

    R_k = 16 sqrt(2) * Delta_k * (ceil(log(n delta)/log(beta2)) + n)
    Q_k = 32 (n+1)   * Delta_k * (ceil(log(1/2)/log(beta2))   + n)
    """
    dk = delta_k(consts, k)
    r = 16.0 * math.sqrt(2.0) * dk * (mixing_lag(consts) + consts.n)
    half_lag = math.ceil(math.log(0.5) / math.log(consts.beta2))
    q = 32.0 * (consts.n + 1) * dk * (half_lag + consts.n)
    return r, q


# --- conditional second-moment mean and concentration ----------------------


def _mean_sq_grads(problem: Problem, x: Array) -> Array:
    s = np.zeros(problem.d)
    for i in range(problem.n):
        g = problem.component_grad(i, x)
        s += g * g
    return s / problem.n


def cond_mean_v(problem: Problem, x: Array, v_prev: Array, beta2: float) -> Array:
    """Exact one-step conditional mean of v at x over a uniform batch:
    beta2 * v_prev + (1 - beta2) * (1/n) sum_i grad f_i(x)^2, elementwise."""
    x = np.asarray(x, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    return beta2 * v_prev + (1.0 - beta2) * _mean_sq_grads(problem, x)


def concentration_bounds(
    consts: DiagnosticsConstants,
) -> tuple[float | None, float | None, float, bool]:
    """(C_lower, C_upper, p_bound, precondition_ok).

    The sandwich constants are

        C_lower = 1 - (1-beta2) * 4n / ((1 - 2n delta) * beta2^n)
        C_upper = (1 - (1-beta2) * 8n / ((1 - 2n delta) * beta2^n))^(-1/2)

    and are meaningful only under the precondition
    (1-beta2)/beta2^n < 1/(8n) - delta/4, which also keeps the C_upper
    radicand positive. When the precondition fails both constants are
    None. p_bound = n * exp(-delta^2 / ((1-beta2) * (28/(3n) + 8 delta/3)))
    caps the per-step chance that the sandwich fails.
    """
    n, b2, delta = consts.n, consts.beta2, consts.delta
    p_bound = n * math.exp(
        -delta * delta / ((1.0 - b2) * (28.0 / (3.0 * n) + 8.0 * delta / 3.0))
    )
    ok = (1.0 - b2) / b2**n < 1.0 / (8.0 * n) - delta / 4.0
    if not ok:
        return None, None, p_bound, False
    scale = (1.0 - b2) / ((1.0 - 2.0 * n * delta) * b2**n)
    c_lower = 1.0 - scale * 4.0 * n
    c_upper = (1.0 - scale * 8.0 * n) ** -0.5
    return c_lower, c_upper, p_bound, True


@dataclass
class ConcentrationReport:
    """Counts of sandwich failures over the tested portion of one run.

    qualifying_steps counts the (step, coordinate) pairs past burn-in
    where the sandwich was tested; above_threshold_steps is the subset
    whose largest component-gradient coordinate also clears the floor
    R_k (the regime the per-step probability bound is stated for; at
    desk scale R_k usually dwarfs every gradient, so this is often 0
    and is reported rather than used as a filter).
    """

    n: int
    d: int
    beta2: float
    delta: float
    burn_in: int
    qualifying_steps: int
    above_threshold_steps: int
    lower_violations: int
    upper_violations: int
    empirical_rate: float | None
    p_bound: float
    c_lower: float | None
    c_upper: float | None
    precondition_ok: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "beta2": self.beta2,
            "delta": self.delta,
            "burn_in": self.burn_in,
            "qualifying_steps": self.qualifying_steps,
            "above_threshold_steps": self.above_threshold_steps,
            "lower_violations": self.lower_violations,
            "upper_violations": self.upper_violations,
            "empirical_rate": self.empirical_rate,
            "p_bound": self.p_bound,
            "c_lower": self.c_lower,
            "c_upper": self.c_upper,
            "precondition_ok": self.precondition_ok,
        }


def concentration_report(
    problem: Problem,
    log: TrajectoryLog,
    consts: DiagnosticsConstants,
) -> ConcentrationReport:
    """Test 1/sqrt(v) against [C_lower, C_upper] / sqrt(E[v]) on snapshots.

    E[v] is the exact conditional mean given the pre-step state (see
    cond_mean_v). Only with-replacement runs are accepted, and only
    snapshots with step counter >= burn_in are tested. When the
    precondition fails, no sandwich is evaluated and the report carries
    no verdict (counts zero, empirical_rate None).
    """
    from .optimizer import SchemeKind

    if log.scheme.kind is not SchemeKind.WITH_REPLACEMENT:
        raise ValueError("concentration analysis applies to with-replacement runs")
    if not log.snapshots:
        raise ValueError("run was recorded without snapshots")
    c_lower, c_upper, p_bound, ok = concentration_bounds(consts)
    kmin = burn_in(consts)
    qualifying = 0
    above = 0
    low_viol = 0
    up_viol = 0
    if ok:
        for snap in log.snapshots:
            if snap.t < kmin:
                continue
            grads = np.array(
                [problem.component_grad(i, snap.x_before) for i in range(problem.n)]
            )
            mean_sq = np.mean(grads * grads, axis=0)
            e_v = consts.beta2 * snap.v_prev + (1.0 - consts.beta2) * mean_sq
            r_k, _ = thresholds(consts, snap.t)
            max_abs = np.max(np.abs(grads), axis=0)
            for l in range(problem.d):
                v_l = float(snap.v[l])
                e_l = float(e_v[l])
                if e_l == 0.0 and v_l == 0.0:
                    continue  # both sides degenerate; nothing to test
                qualifying += 1
                if max_abs[l] >= r_k:
                    above += 1
                inv_v = math.inf if v_l == 0.0 else 1.0 / math.sqrt(v_l)
                if e_l == 0.0:
                    continue  # sandwich walls at +inf; no finite test
                root_e = math.sqrt(e_l)
                if inv_v < c_lower / root_e:
                    low_viol += 1
                elif inv_v > c_upper / root_e:
                    up_viol += 1
    rate = (low_viol + up_viol) / qualifying if qualifying else None
    return ConcentrationReport(
        n=problem.n,
        d=problem.d,
        beta2=consts.beta2,
        delta=consts.delta,
        burn_in=kmin,
        qualifying_steps=qualifying,
        above_threshold_steps=above,
        lower_violations=low_viol,
        upper_violations=up_viol,
        empirical_rate=rate,
        p_bound=p_bound,
        c_lower=c_lower,
        c_upper=c_upper,
        precondition_ok=ok,
    )


# --- trajectory invariants --------------------------------------------------


@dataclass(frozen=True)
class Violation:
    check: str
    t: int
    coord: int
    detail: str


_GEOM_WINDOW = 128  # snapshot pairs examined per endpoint in the memory check


def verify_invariants(log: TrajectoryLog, tol: float = 1e-9) -> list[Violation]:
    """Check recorded snapshots against the update's structural bounds.

    Checks, per snapshot and coordinate:
      * v stays nonnegative;
      * v lies between min and max of (previous v, g^2);
      * v retains at least (1-beta2) * beta2^lag * g^2 from each earlier
        recorded gradient (geometric memory, window-limited);
      * the applied stepsize stays inside the bias-correction envelope
        [sqrt(1-beta2) * base, base / (1-beta1)];
      * each coordinate moves by at most
        eta * (1-beta1) / (sqrt(1-beta2) * (1-beta1/sqrt(beta2))),
        using the recorded effective eta. Requires beta1 < sqrt(beta2);
        configs with beta1 >= sqrt(beta2) are a contract error here.

    Comparisons allow relative slack tol for float noise. Returns every
    violation found (empty list = all checks passed).
    """
    from .optimizer import stepsize as eta_base_fn

    config = log.config
    b1, b2 = config.beta1, config.beta2
    if not b1 < math.sqrt(b2):
        raise ValueError(
            f"step-bound check needs beta1 < sqrt(beta2); got {b1} >= sqrt({b2})"
        )
    if not log.snapshots:
        raise ValueError("run was recorded without snapshots")
    if b2 >= 1.0:
        step_cap = math.inf
    else:
        step_cap = (1.0 - b1) / (math.sqrt(1.0 - b2) * (1.0 - b1 / math.sqrt(b2)))
    violations: list[Violation] = []

    base_cfg = config.__class__(
        beta1=b1, beta2=b2, eta0=config.eta0, eps=config.eps,
        v_init=config.v_init, m_init=config.m_init,
        bias_correction=False, schedule=config.schedule,
    )
    for idx, snap in enumerate(log.snapshots):
        for l in range(snap.v.shape[0]):
            v_l = float(snap.v[l])
            vp_l = float(snap.v_prev[l])
            g2 = float(snap.grad[l]) ** 2
            if v_l < 0.0:
                violations.append(
                    Violation("v_nonneg", snap.t, l, f"v={v_l}")
                )
            lo = min(vp_l, g2)
            hi = max(vp_l, g2)
            slack = tol * max(1.0, hi)
            if v_l < lo - slack or v_l > hi + slack:
                violations.append(
                    Violation(
                        "v_envelope", snap.t, l,
                        f"v={v_l} outside [{lo}, {hi}]",
                    )
                )
            move = abs(float(snap.x_after[l]) - float(snap.x_before[l]))
            cap = snap.eta * step_cap
            if move > cap + tol * max(1.0, cap):
                violations.append(
                    Violation(
                        "step_bound", snap.t, l,
                        f"|dx|={move} exceeds {cap}",
                    )
                )
        base = eta_base_fn(base_cfg, snap.k)
        lo_eta = math.sqrt(1.0 - b2) * base
        hi_eta = base / (1.0 - b1)
        if snap.eta < lo_eta - tol * max(1.0, lo_eta) or snap.eta > hi_eta + tol * max(
            1.0, hi_eta
        ):
            violations.append(
                Violation(
                    "eta_envelope", snap.t, -1,
                    f"eta={snap.eta} outside [{lo_eta}, {hi_eta}]",
                )
            )
        for back in range(1, min(idx, _GEOM_WINDOW) + 1):
            prev = log.snapshots[idx - back]
            lag = snap.t - prev.t
            w = (1.0 - b2) * b2**lag
            if w == 0.0:
                break
            for l in range(snap.v.shape[0]):
                floor = w * float(prev.grad[l]) ** 2
                if float(snap.v[l]) < floor * (1.0 - tol) - 1e-300:
                    violations.append(
                        Violation(
                            "geometric_memory", snap.t, l,
                            f"v={float(snap.v[l])} below {floor} (lag {lag})",
                        )
                    )
    return violations


# --- potential sequence and outcomes ---------------------------------------


def potential_z(history: Sequence, beta1: float, n: int):
    """Momentum-debiased potential z = (x_k - beta1^n x_{k-n}) / (1 - beta1^n).

    history holds iterates in time order; the last entry is x_k and the
    entry n positions earlier is x_{k-n}. With beta1 = 0 this is x_k
    itself. Adding a constant c to every iterate shifts z by exactly c.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 <= beta1 < 1.0:
        raise ValueError(f"beta1 must be in [0, 1), got {beta1}")
    if len(history) < n + 1:
        raise ValueError(f"need at least n+1={n + 1} iterates, got {len(history)}")
    w = beta1**n
    x_now = np.asarray(history[-1], dtype=float)
    x_back = np.asarray(history[-1 - n], dtype=float)
    return (x_now - w * x_back) / (1.0 - w)


def classify_outcome(
    log: TrajectoryLog,
    tol_converge: float,
    cutoff_diverge: float = 1e6,
) -> Outcome:
    """Diverged / Converged / Plateau from a run's summary statistics.

    Diverged: the run tripped its cutoff, went non-finite, or ever
    exceeded cutoff_diverge in any coordinate. Converged: the minimum
    optimality gap (when x* is known, else the minimum full-gradient
    norm) reached tol_converge. Plateau: neither.
    """
    if tol_converge <= 0:
        raise ValueError(f"tol_converge must be positive, got {tol_converge}")
    if cutoff_diverge <= 0:
        raise ValueError(f"cutoff_diverge must be positive, got {cutoff_diverge}")
    s = log.summary
    final_bad = not all(
        math.isfinite(float(c)) for c in np.atleast_1d(s.final_x)
    )
    if s.diverged or final_bad or s.max_abs_x > cutoff_diverge:
        return Outcome.DIVERGED
    basis = s.min_gap if s.min_gap is not None else s.min_grad_norm
    if basis <= tol_converge:
        return Outcome.CONVERGED
    return Outcome.PLATEAU
