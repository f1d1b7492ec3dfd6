"""Tools for pure death processes that come down from infinity: tail-sum
analysis, speed of descent, exact hitting-time and population sampling,
limit-law verification, and large-deviation rate functions with a tilted
importance-sampling estimator."""

__version__ = "0.1.0"

from .rate_models import (ModelKind, RateModel, custom, from_tail_means,
                          kingman, preset, PRESET_NAMES, rate, rates,
                          regularly_varying, tail_mean, tail_mean_bound,
                          triple_merge)
from .tail_analysis import (ConditionReport, MaxIndexExceeded, TailStats,
                            TailSumError, condition_diagnostics,
                            default_max_index, speed, tail_moments)
from .simulation import (DivergentMgfError, EstimateCI, PathSample, SimConfig,
                         TiltDomainError, TiltedModel, TruncationError,
                         choose_trunc_level, log_mgf, mgf, naive_estimate,
                         sample_hitting_time, sample_hitting_times,
                         sample_path, sample_Z, sample_Zs, tilted_estimate)
from .limit_laws import (CorollaryReport, FAlphaSpec, GofReport,
                         IllConditionedError, f_alpha_cdf, f_alpha_mc_cdf,
                         f_alpha_mean_var, f_alpha_sample, falpha_spec,
                         laplace_product, threshold_shift, verify_clt,
                         verify_corollary, verify_lln, verify_thm1_limit,
                         verify_thm2iii)
from .large_deviations import (ConvexityReport, ExpansionValues, LdContext,
                               LdDomainError, QuadratureError, RateEval,
                               RootBracketError, TauResult, ThmThreeReport,
                               b_of_beta, c_of_beta, convexity_margin,
                               endpoint_constant, expansions, lambda_deriv,
                               lambda_fn, power_integral,
                               power_integral_closed_form, rate_I, rate_J,
                               rate_eval, tau, tau_full, verify_thm3)

__all__ = [name for name in dir() if not name.startswith("_")]
