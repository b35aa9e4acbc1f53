"""Carbon transition scenarios propagated through a stochastic
multisectoral economy into firm values and credit portfolio risk."""

from .calibration import (
    BarrierFit,
    DefaultHistory,
    ElasticityFit,
    EmissionsPanel,
    IntensityFit,
    IntensitySeries,
    LoadingFit,
    SectorPanel,
    estimate_elasticities,
    estimate_var,
    fit_barrier_mle,
    fit_factor_loadings,
    fit_intensity_curve,
    intensity_from_flows,
    loadings_to_theta_space,
)
from .credit import (
    Portfolio,
    RiskConfig,
    RiskEstimates,
    SensitivityEstimates,
    bump_scenario,
    conditional_loss,
    default_probability,
    expected_loss,
    gauss_affine_integral,
    loss_sensitivity,
    mc_risk_estimates,
    tail_order_statistic,
    unexpected_loss_one_year,
)
from .economy import (
    EconomyParams,
    EquilibriumCoefficients,
    EquilibriumResidual,
    GrowthLaw,
    consumption_growth,
    equilibrium_coefficients,
    equilibrium_residual,
    growth_law,
    log_consumption,
    log_output,
    output_growth,
)
from .errors import (
    BracketFailure,
    CarbonRiskError,
    CholeskyFailure,
    CoverageError,
    DomainError,
    NoDefaults,
    NonStationary,
    NotSummable,
    PriceDominance,
    RankDeficient,
    SchemaError,
    SingularEquilibrium,
    SingularSystem,
    UnitError,
    WellPosednessError,
    ZeroDenominator,
)
from .pipeline import (
    IngestedData,
    ParameterBundle,
    RiskReport,
    RunConfig,
    apply_calibrated_intensities,
    calibrate,
    emit_report,
    ingest,
    load_report,
    run_pipeline,
)
from .productivity import (
    PathEnsemble,
    ProductivityState,
    StationaryMoments,
    VarParams,
    check_stationary,
    conditional_sum_law,
    simulate_paths,
    stationary_moments,
)
from .transition import (
    CarbonPriceSchedule,
    EmissionsCostRate,
    IntensityCurve,
    IntensitySet,
    TransitionScenario,
    carbon_price,
    emissions_cost_rate,
    intensity,
    load_scenario,
    save_scenario,
)
from .valuation import (
    FirmSpec,
    ValueLaw,
    WellPosednessReport,
    check_well_posed,
    firm_value_mc_oracle,
    firm_value_proxy,
    proxy_value_ratio,
    r_factor,
    value_cond_law,
    value_forward_law,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
