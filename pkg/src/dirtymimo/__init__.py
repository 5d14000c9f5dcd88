"""Joint equal-diagonal triangularization, dirty MIMO MAC rate bounds, two-way
relay rates and a modulo-lattice simulator."""

from .decomp import (
    GtdResult,
    JointTriangularization,
    Orientation,
    TimeExtension,
    VerificationReport,
    build_time_extension,
    extension_efficiency,
    gmd,
    gtd_feasible,
    jet_shared_left,
    jet_shared_right,
    truncated_blocks,
    verify_gtd,
    verify_joint_triangularization,
)
from .errors import (
    ConvergenceFailure,
    DiagProductNotUnit,
    DimensionMismatch,
    DirtyMimoError,
    LengthMismatch,
    NotDiagonal,
    NotProper,
    ParseError,
    PowerViolation,
    RankDeficient,
    TooFewBlocks,
    ValidationError,
    VerificationFailed,
)
from .linalg import (
    DEFAULT_TOL,
    ProperChannel,
    Tolerances,
    normalize_to_proper,
    qr_lower,
    random_proper,
    svd,
    validate_proper,
)
from .rates import (
    PowerKind,
    PowerSet,
    RateSummary,
    dmac_inner_finite_snr,
    dmac_inner_high_snr,
    dmac_outer,
    gap_report,
    high_snr_rate,
    qrd_bottleneck_rate,
    scalar_dmac_bounds,
    waterfill,
    waterfill_capacity,
    zf_dpc_rate,
)
from .sim import (
    InterferenceSpec,
    LatticeConfig,
    SimConfig,
    SimReport,
    run_single_user_zf_dpc,
    run_twrc_pnc_mac_phase,
    run_two_user_dmac,
)
from .twrc import (
    TwrcScenario,
    cut_set_mimo,
    cut_set_scalar,
    df_symmetric_rate,
    per_element_pnc,
    pnc_mimo,
    pnc_scalar,
)

__version__ = "0.1.0"
