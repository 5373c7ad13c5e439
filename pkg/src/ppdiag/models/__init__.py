"""Poisson, Hawkes, MMPP and MMHP intensity models."""

from .likelihood import (
    decode_latent_path,
    hawkes_compensator,
    hawkes_event_intensities,
    hawkes_intensity,
    loglik,
    loglik_hawkes,
    loglik_mmhp,
    loglik_mmpp,
    loglik_poisson,
    mat_exp_2x2,
)
from .params import (
    BlockAlphaSpec,
    NetworkBaseParams,
    GeneratorMatrix,
    HawkesParams,
    LatentPath,
    MmhpParams,
    MmppParams,
    ModelSpec,
    PoissonParams,
    is_modulated,
    model_from_dict,
    model_to_dict,
)
from .piecewise import PiecewiseIntensity, compensator, intensity_path, piecewise_intensity

__all__ = [
    "BlockAlphaSpec",
    "NetworkBaseParams",
    "GeneratorMatrix",
    "HawkesParams",
    "LatentPath",
    "MmhpParams",
    "MmppParams",
    "ModelSpec",
    "PiecewiseIntensity",
    "PoissonParams",
    "compensator",
    "decode_latent_path",
    "hawkes_compensator",
    "hawkes_event_intensities",
    "hawkes_intensity",
    "intensity_path",
    "is_modulated",
    "loglik",
    "loglik_hawkes",
    "loglik_mmhp",
    "loglik_mmpp",
    "loglik_poisson",
    "mat_exp_2x2",
    "model_from_dict",
    "model_to_dict",
    "piecewise_intensity",
]
