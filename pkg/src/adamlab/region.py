"""Closed-form divergence-region conditions on the (beta1, beta2) square.

For the n-component piecewise family under cyclic ordering, divergence
of the iterates is implied by two momentum/variance inequalities (C1,
C2 below) together with a stepsize ceiling (C3). C1 and C2 depend only
on (beta1, beta2, n), so membership can be rasterized into a mask over
the unit square; C3 caps eta0 separately and is reported as a ceiling
rather than folded into the mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Array = np.ndarray


def _check_n(n: int) -> None:
    if n < 3:
        raise ValueError(f"conditions require n >= 3, got {n}")


def _check_beta1(beta1: float) -> None:
    if not 0.0 <= beta1 < 1.0:
        raise ValueError(f"beta1 must be in [0, 1), got {beta1}")


def cond_c1(beta1: float, beta2: float, n: int) -> bool:
    """Variance-decay inequality.

    With t = min(n - 1, log_{beta2}(1 / (10 n^2))) the condition is

        (n - 1 - t) * (1 - beta1^t) / sqrt(1 + max(0.1, beta2^(n-1) n^2))
            >= (1 - beta1) / sqrt(1 - beta2) + beta1 n / sqrt(1 - beta2).

    t is always positive, so beta1 = 0 poses no 0^0 ambiguity (0^t = 0).
    """
    _check_n(n)
    _check_beta1(beta1)
    if not 0.0 < beta2 < 1.0:
        raise ValueError(f"beta2 must be in (0, 1), got {beta2}")
    t = min(n - 1.0, math.log(1.0 / (10.0 * n * n)) / math.log(beta2))
    lhs = (n - 1.0 - t) * (1.0 - beta1**t) / math.sqrt(
        1.0 + max(0.1, beta2 ** (n - 1) * n * n)
    )
    rhs = (1.0 - beta1) / math.sqrt(1.0 - beta2) + beta1 * n / math.sqrt(1.0 - beta2)
    return lhs >= rhs


def cond_c2(beta1: float, n: int) -> bool:
    """Momentum-mass inequality: 1 - beta1^(n-1) > (1 - beta1) beta1^(n-1) n."""
    _check_n(n)
    _check_beta1(beta1)
    return 1.0 - beta1 ** (n - 1) > (1.0 - beta1) * beta1 ** (n - 1) * n


def max_eta_c3(beta2: float, n: int) -> float:
    """Stepsize ceiling 2 sqrt((1 - beta2) * beta2^n); maximal at
    beta2 = n / (n + 1). Zero at both endpoints of [0, 1]."""
    _check_n(n)
    if not 0.0 <= beta2 <= 1.0:
        raise ValueError(f"beta2 must be in [0, 1], got {beta2}")
    return 2.0 * math.sqrt((1.0 - beta2) * beta2**n)


def in_region(beta1: float, beta2: float, n: int) -> bool:
    """Mask predicate: C1 and C2 both hold (C3 is a separate ceiling)."""
    return cond_c2(beta1, n) and cond_c1(beta1, beta2, n)


@dataclass(frozen=True)
class RegionGrid:
    """Mask over a rectangular grid; cells[i, j] pairs beta1[i], beta2[j]."""

    n: int
    beta1: Array
    beta2: Array
    cells: Array  # bool, shape (len(beta1), len(beta2))


def cell_centers(resolution: int) -> Array:
    """(i + 0.5) / resolution for i < resolution; strictly inside (0, 1)."""
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    return (np.arange(resolution) + 0.5) / resolution


def region_mask(
    n: int,
    resolution: int = 200,
    beta1_values=None,
    beta2_values=None,
) -> RegionGrid:
    """Rasterize the C1-and-C2 region; default grid is cell centers.

    Explicit beta2 values must lie strictly inside (0, 1); beta1 values
    in [0, 1). Membership is evaluated pointwise at each grid value, so
    refining the grid never flips a value that both grids contain.
    """
    _check_n(n)
    b1 = cell_centers(resolution) if beta1_values is None else np.asarray(
        beta1_values, dtype=float
    )
    b2 = cell_centers(resolution) if beta2_values is None else np.asarray(
        beta2_values, dtype=float
    )
    if b1.size == 0 or b2.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(b1 < 0.0) or np.any(b1 >= 1.0):
        raise ValueError("beta1 grid values must lie in [0, 1)")
    if np.any(b2 <= 0.0) or np.any(b2 >= 1.0):
        raise ValueError("beta2 grid values must lie strictly inside (0, 1)")
    cells = np.zeros((b1.size, b2.size), dtype=bool)
    for i, beta1 in enumerate(b1):
        if not cond_c2(float(beta1), n):
            continue  # row stays False; C1 need not be evaluated
        for j, beta2 in enumerate(b2):
            cells[i, j] = cond_c1(float(beta1), float(beta2), n)
    return RegionGrid(n=n, beta1=b1, beta2=b2, cells=cells)


def region_area(grid: RegionGrid) -> float:
    """Fraction of grid cells inside the region."""
    return float(np.count_nonzero(grid.cells)) / grid.cells.size


def region_rows(grid: RegionGrid):
    """(beta1, beta2, in_region) triples, beta1-major in grid order."""
    for i, beta1 in enumerate(grid.beta1):
        for j, beta2 in enumerate(grid.beta2):
            yield float(beta1), float(beta2), bool(grid.cells[i, j])
