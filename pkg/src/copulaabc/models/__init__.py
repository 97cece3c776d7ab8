"""Priors, simulators and model specifications."""

from .benchmarks import (bivariate_gaussian_loglik, bivariate_gaussian_params, iid_summaries,
                         simulate_bivariate_gaussian, simulate_gaussian_location,
                         simulate_poisson_mixture)
from .ergm import build_g_prior, ergm_edge_trace, simulate_ergm, toggle_log_ratio
from .growth import duplication_step, grow_dmc, grow_dmr, grow_nlpa, grow_price
from .priors import (GammaPrior, MVNormalPrior, ParamSpace, Prior, ProductPrior,
                     TwistedGaussianPrior, UniformPrior, prior_log_density, sample_prior)
from .registry import (BUILTIN, GPrior, ModelSpec, get_model, model_from_dict, prior_from_dict,
                       prior_to_dict)


def simulate_iid(model: ModelSpec, theta, n_sim: int, rng):
    """Dataset of ``n_sim`` iid rows from a benchmark model."""
    if model.is_network:
        raise ValueError(f"{model.name} is a network model")
    return model.simulate(theta, n_sim, rng)
