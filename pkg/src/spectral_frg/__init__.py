"""Spectral redundancy analysis and one-shot pruning of neural-network operators."""

__version__ = "0.1.0"

from spectral_frg.spectral_core import (  # noqa: E402
    ActivationSpec,
    AugmentedMatrix,
    SpectralSignature,
    activation,
    augment,
    equivalence_bound,
    fs_distance,
    low_rank_truncate,
    majorization_profile,
    pad_pair,
    rank_select,
    svd_spectrum,
    w2_distance,
    weighted_fs_distance,
)

__all__ = [
    "ActivationSpec",
    "AugmentedMatrix",
    "SpectralSignature",
    "__version__",
    "activation",
    "augment",
    "equivalence_bound",
    "fs_distance",
    "low_rank_truncate",
    "majorization_profile",
    "pad_pair",
    "rank_select",
    "svd_spectrum",
    "w2_distance",
    "weighted_fs_distance",
]
