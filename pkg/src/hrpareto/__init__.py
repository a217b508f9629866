"""Simulation, density evaluation and likelihood inference for Hüsler-Reiss Pareto models."""
from .core import (
    GenHrParams,
    HrParams,
    SufficientStat,
    center_project,
    embed,
    extract,
    gen_reduce,
    gen_transforms,
    inner_product,
    power_transform,
    scale_transform,
    standardize,
    sufficient_stat,
    validate_gen,
    validate_hr,
)
from .errors import HrParetoError, NumericalError, ValidationError
from .inference import (
    FitOptions,
    FitReport,
    LrtResult,
    existence_check,
    fisher_info,
    fit_gen,
    fit_hr,
    lrt_equal_alpha,
    moment_init,
    sample_stats,
)
from .measures import (
    Frechet,
    Gamma,
    Gaussian,
    LogNormal,
    MeasureModel,
    Weibull,
    breiman_sample,
    empirical_exceedance_ratio,
    ev_copula,
    lambda_density,
    tail_V,
)
from .mvn import CdfEstimate, MvnSpec, mvn_cdf, std_normal_cdf, std_normal_quantile
from .pareto import (
    face_partition,
    fractional_moment,
    from_spectral,
    log_density,
    moments,
    norm_const,
    sample,
    sample_gen,
)

__version__ = "0.1.0"
