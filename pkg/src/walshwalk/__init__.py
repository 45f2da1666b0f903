"""Perturbed random walks on rays, their embedded excursion chains and diffusion limits."""

from .distributions import (
    CheckResult,
    DistributionError,
    IntDistribution,
    RngStream,
    StateDistribution,
    moments,
    sample,
)
from .embedded import (
    BudgetError,
    ConsistencyError,
    EmbeddingError,
    compute_gamma_membrane,
    compute_mu,
    compute_weights,
    compute_weights_spider,
    embedded_chains_from_path,
    embedded_exact,
    first_passage_overshoot,
    harvest_cycles,
    ladder_height_law,
    stationary_exact,
    stationary_mc,
)
from .models import (
    AxisChainSpec,
    CyclePath,
    Extension,
    MembraneWalkSpec,
    SpecError,
    SpiderWalkSpec,
    fold_axis_path,
    load_spec,
    dump_spec,
    membrane_exit_distribution,
    remove_membrane_time,
    simulate,
    simulate_axis,
    simulate_membrane,
    simulate_spider,
    spec_from_json,
    spider_to_axis,
    unfold_membrane,
)
from .reference import (
    OscParams,
    SbmParams,
    osc_drift_coefficient,
    psi_map,
    reflecting_local_time_oracle,
    sbm_cdf,
    sbm_density,
    sbm_sample,
    sbm_sample_origin,
    wbm_marginal_sample,
)
from .scaling import (
    EnsembleStats,
    ScaledPath,
    donsker_scale,
    ks_test,
    local_time_estimator,
    martingale_residual_check,
    occupation_fractions,
    phi_map,
    run_ensemble,
)

__version__ = "0.1.0"
