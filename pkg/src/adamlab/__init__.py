"""Desk-scale laboratory for Adam's convergence/divergence phase boundary."""

from .analysis import (
    ConcentrationReport,
    DiagnosticsConstants,
    Outcome,
    Violation,
    burn_in,
    classify_outcome,
    concentration_bounds,
    concentration_report,
    cond_mean_v,
    delta_k,
    make_constants,
    mixing_lag,
    potential_z,
    theorem_metric,
    theorem_metric_from_norm,
    thresholds,
    verify_invariants,
)
from .optimizer import (
    AdamConfig,
    OptimizerState,
    RunSummary,
    SamplingScheme,
    Schedule,
    SchemeKind,
    StateSnapshot,
    StepRecord,
    TrajectoryLog,
    adam_update,
    init_state,
    make_sampler,
    run,
    run_epoch_rr,
    step_wr,
    stepsize,
)
from .problems import (
    DivergencePiecewise,
    KnownConstants,
    LeastSquares,
    NonRealizableQuadratic,
    Problem,
    ReddiLinear,
    estimate_variance_constants,
    fd_check,
    make_problem,
)
from .region import (
    RegionGrid,
    cell_centers,
    cond_c1,
    cond_c2,
    in_region,
    max_eta_c3,
    region_area,
    region_mask,
    region_rows,
)
from .rng import SplitMix64
from .sweep import (
    CSV_COLUMNS,
    Cell,
    SweepResult,
    SweepSpec,
    gap_matrix,
    plan_grid,
    run_cell,
    run_sweep,
)

__version__ = "0.1.0"
