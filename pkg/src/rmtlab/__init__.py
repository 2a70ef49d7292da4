"""rmtlab: a Monte Carlo laboratory for spectral statistics of random
symmetric matrices — shifted-spectrum singular values, essential LCDs,
compressibility, threshold functions, the semicircle local law, and
reproducible scaling-law experiments with a deterministic parallel harness.
"""
from .arithmetic import (
    TAU_GRID,
    LcdQuery,
    LcdResult,
    SparseDistance,
    SubvectorLcd,
    TauPoint,
    TauResult,
    TupleLcdQuery,
    lcd,
    lcd_batch,
    lcd_pair_combination,
    levy_concentration,
    log_plus,
    sine_angle,
    sparse_distance,
    subvector_lcd,
    threshold_tau,
    torus_norm,
    tuple_lcd,
)
from .ensemble import (
    BoxPairSpec,
    DistributionSpec,
    SymmetricMatrix,
    ZeroedSpec,
    sample_box_vector_pair,
    sample_column,
    sample_entry,
    sample_mu_subset,
    sample_sparse_block,
    sample_symmetric,
    sample_zeroed_matrix,
    zeroed_pair_image,
)
from .plans import (
    ExperimentPlan,
    HarnessError,
    NumericError,
    OutputError,
    SchemaError,
    UnknownProbeError,
    build_plan,
    execute_plan,
    load_config,
    run_plan,
)
from .probes import (
    HwTail,
    ProbeConfig,
    RigidityProfile,
    RigidityRow,
    TailRow,
    bl_distances,
    delocalization_frequency,
    gap_law,
    hanson_wright_tail,
    ilo_event_frequency,
    lcd_frequency,
    linear_statistic,
    local_law_deviation,
    rigidity_profile,
    smallball_joint,
    smallball_joint_curve,
    smallball_one,
    smallball_curve,
    smallball_statistics,
)
from .report import CSV_COLUMNS, ResultRow, data_section, emit_plot_data, render_figure, write_rows
from .rng import RngHandle
from .spectral import (
    DistanceIdentity,
    ResonantShiftError,
    ShiftedSpectrum,
    SpectralDecomposition,
    bl_distance_between_samples,
    bl_distance_to_semicircle,
    delocalization_profile,
    distance_identity,
    eig_symmetric,
    hs_norm,
    local_count,
    min_sv_gap,
    op_norm,
    rank_correspondence,
    semicircle_cdf,
    semicircle_density,
    semicircle_quantile,
    shifted_spectrum,
    sigma_min_shifted,
    singular_values,
    star_norm,
)
from .stats import (
    EstimateRecord,
    SlopeFit,
    exact_binomial_interval,
    fit_log_slope,
    make_estimate,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
