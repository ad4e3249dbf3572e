"""Finite-sum problem families with known optima and variance constants.

Every problem has the form f(x) = (1/n) * sum_{i<n} f_i(x) with n
components on R^d, optionally restricted to a box. Instances carry the
constants that downstream diagnostics need: the worst component
smoothness L, an affine variance pair (D0, D1) satisfying

    sum_i ||grad f_i(x)||^2 <= D1 * ||grad f(x)||^2 + D0   for all x,

the optimal value f*, and the minimizer x* (when known in closed form).

Scalar families (d = 1) additionally expose *_scalar methods operating
on plain floats; these are exact float64 twins of the array API and
exist so hot loops can avoid per-step array allocation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class KnownConstants:
    """Per-instance constants; None marks a value with no closed form."""

    L: float
    D0: float | None
    D1: float | None
    f_star: float | None
    x_star: Array | None


class Problem:
    """Common interface: finite-sum objective with optional box constraint."""

    n: int
    d: int
    box: tuple[float, float] | None
    known: KnownConstants
    scalar_fast: bool = False

    def component_objective(self, i: int, x: Array) -> float:
        raise NotImplementedError

    def component_grad(self, i: int, x: Array) -> Array:
        raise NotImplementedError

    def objective(self, x: Array) -> float:
        return sum(self.component_objective(i, x) for i in range(self.n)) / self.n

    def full_grad(self, x: Array) -> Array:
        g = np.zeros(self.d)
        for i in range(self.n):
            g += self.component_grad(i, x)
        return g / self.n

    def project(self, x: Array) -> Array:
        if self.box is None:
            return x
        lo, hi = self.box
        return np.clip(x, lo, hi)

    def project_scalar(self, x: float) -> float:
        if self.box is None:
            return x
        lo, hi = self.box
        return lo if x < lo else hi if x > hi else x

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range for n={self.n}")


class ReddiLinear(Problem):
    """Linear tug-of-war on [-1, 1]: f_0 = n*x, f_i = -x for i >= 1.

    The average is f(x) = x/n, minimized at x* = -1 with f* = -1/n.
    Component gradients are constants, so L = 0, and the variance ratio
    sum_i ||grad f_i||^2 / ||grad f||^2 = n^2 (n^2 + n - 1) holds at
    every x, giving the tight D1 = n^4 + n^3 - n^2 with D0 = 0.
    """

    scalar_fast = True

    def __init__(self, n: int) -> None:
        if n < 2:
            raise ValueError(f"n must be >= 2, got {n}")
        self.n = n
        self.d = 1
        self.box = (-1.0, 1.0)
        self.known = KnownConstants(
            L=0.0,
            D0=0.0,
            D1=float(n**4 + n**3 - n**2),
            f_star=-1.0 / n,
            x_star=np.array([-1.0]),
        )

    def component_objective(self, i: int, x: Array) -> float:
        self._check_index(i)
        return float(self.n * x[0]) if i == 0 else float(-x[0])

    def component_grad(self, i: int, x: Array) -> Array:
        self._check_index(i)
        return np.array([float(self.n)]) if i == 0 else np.array([-1.0])

    def component_grad_scalar(self, i: int, x: float) -> float:
        return float(self.n) if i == 0 else -1.0

    def objective(self, x: Array) -> float:
        return x[0] / self.n

    def objective_scalar(self, x: float) -> float:
        return x / self.n

    def full_grad(self, x: Array) -> Array:
        return np.array([1.0 / self.n])

    def full_grad_scalar(self, x: float) -> float:
        return 1.0 / self.n


def _piecewise_kernel(x: float) -> float:
    # Linear for x >= -1, quadratic continuation below; C^1 at the kink.
    return x if x >= -1.0 else (x + 2.0) ** 2 / 2.0 - 1.5


def _piecewise_kernel_grad(x: float) -> float:
    return 1.0 if x >= -1.0 else x + 2.0


class DivergencePiecewise(Problem):
    """Piecewise family f_i = c_i * h(x) built from one scalar kernel.

    h(x) = x for x >= -1 and (x+2)^2/2 - 3/2 below, with coefficients
    c_0 = 1 + (n-1)*a and c_i = -a for i >= 1. The average is h(x)/n,
    independent of a, minimized at x* = -2 with f* = -3/(2n). Each f_i
    has |c_i| <= 1 + (n-1)*a =: L, and the variance ratio is the
    x-independent constant n^2 * ((1+(n-1)a)^2 + (n-1)a^2) =: D1.
    """

    scalar_fast = True

    def __init__(self, n: int, a: float = 1.0) -> None:
        if n < 3:
            raise ValueError(f"n must be >= 3, got {n}")
        if a <= 0:
            raise ValueError(f"a must be positive, got {a}")
        self.n = n
        self.a = float(a)
        self.d = 1
        self.box = None
        c0 = 1.0 + (n - 1) * self.a
        self.known = KnownConstants(
            L=c0,
            D0=0.0,
            D1=n * n * (c0 * c0 + (n - 1) * self.a * self.a),
            f_star=-1.5 / n,
            x_star=np.array([-2.0]),
        )

    def _coeff(self, i: int) -> float:
        return 1.0 + (self.n - 1) * self.a if i == 0 else -self.a

    def component_objective(self, i: int, x: Array) -> float:
        self._check_index(i)
        return self._coeff(i) * _piecewise_kernel(float(x[0]))

    def component_grad(self, i: int, x: Array) -> Array:
        self._check_index(i)
        return np.array([self._coeff(i) * _piecewise_kernel_grad(float(x[0]))])

    def component_grad_scalar(self, i: int, x: float) -> float:
        return self._coeff(i) * _piecewise_kernel_grad(x)

    def objective(self, x: Array) -> float:
        return _piecewise_kernel(float(x[0])) / self.n

    def objective_scalar(self, x: float) -> float:
        return _piecewise_kernel(x) / self.n

    def full_grad(self, x: Array) -> Array:
        return np.array([_piecewise_kernel_grad(float(x[0])) / self.n])

    def full_grad_scalar(self, x: float) -> float:
        return _piecewise_kernel_grad(x) / self.n


class NonRealizableQuadratic(Problem):
    """Ten quadratics whose average is flat but whose components fight.

    f_0 = (x - a)^2 and f_j = -0.1 * (x - (10/9) a)^2 for j = 1..9, so
    f(x) = x^2/100 - a^2/90 with minimizer x* = 0 and f* = -a^2/90 < 0:
    no point minimizes all components at once, and the gradient noise
    does not vanish at x*. Component smoothness L = 2. The stored
    (D0, D1) is one valid affine-variance pair (D1 doubles the
    asymptotic slope of the component sum; D0 absorbs the remainder).
    """

    scalar_fast = True

    def __init__(self, a: float) -> None:
        if a <= 0:
            raise ValueError(f"a must be positive, got {a}")
        self.n = 10
        self.a = float(a)
        self.d = 1
        self.box = None
        self.known = KnownConstants(
            L=2.0,
            D0=8716.0 * self.a * self.a / 981.0,
            D1=21800.0,
            f_star=-self.a * self.a / 90.0,
            x_star=np.array([0.0]),
        )

    def _shift(self, i: int) -> float:
        return self.a if i == 0 else 10.0 * self.a / 9.0

    def component_objective(self, i: int, x: Array) -> float:
        self._check_index(i)
        r = float(x[0]) - self._shift(i)
        return r * r if i == 0 else -0.1 * r * r

    def component_grad(self, i: int, x: Array) -> Array:
        return np.array([self.component_grad_scalar(i, float(x[0]))])

    def component_grad_scalar(self, i: int, x: float) -> float:
        self._check_index(i)
        r = x - self._shift(i)
        return 2.0 * r if i == 0 else -0.2 * r

    def objective(self, x: Array) -> float:
        return self.objective_scalar(float(x[0]))

    def objective_scalar(self, x: float) -> float:
        return x * x / 100.0 - self.a * self.a / 90.0

    def full_grad(self, x: Array) -> Array:
        return np.array([float(x[0]) / 50.0])

    def full_grad_scalar(self, x: float) -> float:
        return x / 50.0


class LeastSquares(Problem):
    """Row-sampled least squares: f_i = (1/2) (a_i . x - b_i)^2.

    The average is f(x) = ||A x - b||^2 / (2n), with the minimum-norm
    solution as x*. L = max_i ||a_i||^2. No closed-form affine variance
    pair is stored; use estimate_variance_constants with explicit
    sample points instead.
    """

    def __init__(self, A: Array, b: Array) -> None:
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise ValueError(f"incompatible shapes A{A.shape}, b{b.shape}")
        if A.shape[0] < 1:
            raise ValueError("need at least one equation")
        self.A = A
        self.b = b
        self.n, self.d = A.shape
        self.box = None
        x_star, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = A @ x_star - b
        self.known = KnownConstants(
            L=float(np.max(np.sum(A * A, axis=1))),
            D0=None,
            D1=None,
            f_star=float(resid @ resid) / (2 * self.n),
            x_star=x_star,
        )

    @classmethod
    def from_csv(cls, path: str) -> "LeastSquares":
        """Load rows of "a_1,...,a_d,b" (one equation per line)."""
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: non-numeric entry") from exc
        if not rows:
            raise ValueError(f"{path}: no data rows")
        width = len(rows[0])
        if width < 2 or any(len(r) != width for r in rows):
            raise ValueError(f"{path}: rows must all have d+1 >= 2 columns")
        data = np.array(rows)
        return cls(data[:, :-1], data[:, -1])

    def component_objective(self, i: int, x: Array) -> float:
        self._check_index(i)
        r = float(self.A[i] @ x - self.b[i])
        return 0.5 * r * r

    def component_grad(self, i: int, x: Array) -> Array:
        self._check_index(i)
        return self.A[i] * float(self.A[i] @ x - self.b[i])

    def objective(self, x: Array) -> float:
        r = self.A @ x - self.b
        return float(r @ r) / (2 * self.n)

    def full_grad(self, x: Array) -> Array:
        return self.A.T @ (self.A @ x - self.b) / self.n


FAMILY_NAMES = ("reddi", "divpw", "nonreal", "lsq")


def make_problem(family: str, **params) -> Problem:
    """Factory keyed by short family name (reddi/divpw/nonreal/lsq)."""
    if family == "reddi":
        return ReddiLinear(**params)
    if family == "divpw":
        return DivergencePiecewise(**params)
    if family == "nonreal":
        return NonRealizableQuadratic(**params)
    if family == "lsq":
        return LeastSquares(**params)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILY_NAMES}")


def fd_check(problem: Problem, i: int, x: Array, h: float = 1e-6) -> float:
    """Max abs error between component_grad and a central difference."""
    x = np.asarray(x, dtype=float)
    g = problem.component_grad(i, x)
    err = 0.0
    for l in range(problem.d):
        e = np.zeros(problem.d)
        e[l] = h
        fd = (
            problem.component_objective(i, x + e)
            - problem.component_objective(i, x - e)
        ) / (2 * h)
        err = max(err, abs(fd - g[l]))
    return err


def estimate_variance_constants(
    problem: Problem,
    sample_points: list[Array] | None = None,
    D0: float = 0.0,
) -> float:
    """Smallest D1 making the affine variance bound hold on the samples.

    Evaluates sup_x (sum_i ||grad f_i(x)||^2 - D0) / ||grad f(x)||^2
    over the sample set (512 equispaced points on [-10, 10] for scalar
    problems when none are given) and clamps at 0. A sample where the
    full gradient vanishes but the numerator is positive admits no
    finite D1 and raises.
    """
    if sample_points is None:
        if problem.d != 1:
            raise ValueError("sample_points required for d > 1 problems")
        sample_points = [np.array([t]) for t in np.linspace(-10.0, 10.0, 512)]
    if len(sample_points) == 0:
        raise ValueError("sample_points must be nonempty")
    sup = 0.0
    for x in sample_points:
        x = np.asarray(x, dtype=float)
        s = 0.0
        for i in range(problem.n):
            gi = problem.component_grad(i, x)
            s += float(gi @ gi)
        g = problem.full_grad(x)
        g2 = float(g @ g)
        num = s - D0
        if g2 == 0.0:
            if num > 0.0:
                raise ValueError(
                    f"no finite D1: full gradient vanishes at x={x} "
                    f"while component sum exceeds D0 by {num}"
                )
            continue
        sup = max(sup, num / g2)
    return sup
