"""Exact level-set flows of planar Hamiltonian fields and their mixing behaviour."""

from .errors import (
    BudgetTooSmall, ConfigError, CuspDetected, DegenerateLevel, EmptyGoodSet, EmptyRegion, GraphOrderViolated,
    LagflowError, NoCycles, NotInvariant, NotNested, OnBoundary, OrientationMismatch, ParamsInfeasible,
    TurnBudgetImpossible, Unbalanced, ZeroArea,
)
from .field import (
    AnalyticField, GridField, HamiltonianField, RegionSpec, analytic_field, catalogue_field, differential_rotation,
    double_well, eval_hamiltonian, eval_velocity, jacobian_density, load_hamf1, load_p2_field, rigid_rotation,
    sample_field, save_hamf1, sup_speed, tv_measure, zero_field,
)
from .levelset import (
    AdmissibilityCert, Cycle, PolylineReparam, affine_interpolant, certify_admissible, check_no_cusp,
    cycle_through, degree, extract_cycles, interior_contains, inverse_lipschitz, overlap_bad_set, turn,
)
from .flow import (
    Foliation, LipschitzProfile, SampleSpec, advance_on_cycle, flow, flow_points, lusin_lipschitz_profile,
    period, same_cycle_gap_report, travel_table, travel_time,
)
from .cov import (
    CovMap, CovReport, build_cov, calibrate_folding, folding_check, period_gap, slicing_bound,
    two_point_gap_check, verify_cov,
)
from .mixing import (
    IndicatorRaster, MixingParams, MixReport, centered_disk, checkerboard, decay_certificate, functional_scale,
    geometric_scale, half_disk, mixing_series, mixing_witness, perimeter, r0_bar, sector_datum, stripes,
    transport_indicator, vitali_disjoint,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetTooSmall",
    "ConfigError",
    "CuspDetected",
    "DegenerateLevel",
    "EmptyGoodSet",
    "EmptyRegion",
    "GraphOrderViolated",
    "LagflowError",
    "NoCycles",
    "NotInvariant",
    "NotNested",
    "OnBoundary",
    "OrientationMismatch",
    "ParamsInfeasible",
    "TurnBudgetImpossible",
    "Unbalanced",
    "ZeroArea",
    "AnalyticField",
    "GridField",
    "HamiltonianField",
    "RegionSpec",
    "analytic_field",
    "catalogue_field",
    "differential_rotation",
    "double_well",
    "eval_hamiltonian",
    "eval_velocity",
    "jacobian_density",
    "load_hamf1",
    "load_p2_field",
    "rigid_rotation",
    "sample_field",
    "save_hamf1",
    "sup_speed",
    "tv_measure",
    "zero_field",
    "AdmissibilityCert",
    "Cycle",
    "PolylineReparam",
    "affine_interpolant",
    "certify_admissible",
    "check_no_cusp",
    "cycle_through",
    "degree",
    "extract_cycles",
    "interior_contains",
    "inverse_lipschitz",
    "overlap_bad_set",
    "turn",
    "Foliation",
    "LipschitzProfile",
    "SampleSpec",
    "advance_on_cycle",
    "flow",
    "flow_points",
    "lusin_lipschitz_profile",
    "period",
    "same_cycle_gap_report",
    "travel_table",
    "travel_time",
    "CovMap",
    "CovReport",
    "build_cov",
    "calibrate_folding",
    "folding_check",
    "period_gap",
    "slicing_bound",
    "two_point_gap_check",
    "verify_cov",
    "IndicatorRaster",
    "MixingParams",
    "MixReport",
    "decay_certificate",
    "functional_scale",
    "geometric_scale",
    "mixing_series",
    "mixing_witness",
    "perimeter",
    "r0_bar",
    "transport_indicator",
    "vitali_disjoint",
    "stripes",
    "sector_datum",
    "half_disk",
    "checkerboard",
    "centered_disk",
]
