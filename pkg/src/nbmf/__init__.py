"""Negative binomial matrix factorization for over-dispersed count matrices.

Two estimators share one model family: maximum likelihood by
majorization-minimization (:func:`fit_mm`) and mean-field variational
Bayes (:func:`fit_cavi`), which also covers Poisson factorization through
``Mode.PF``.
"""

__version__ = "0.1.0"

from .cavi import CAVIConfig, compute_elbo, fit_cavi, scale_transform
from .core import (
    FitTrace,
    HyperParams,
    Mode,
    NumericalError,
    SparseCountMatrix,
    VariationalState,
    predict_scores,
)
from .data import binarize, filter_dataset, load_triplets, split_train_test, write_triplets
from .divergence import kl_divergence, nb_divergence, objective
from .evaluation import RelevanceSpec, evaluate, ndcg, rank_items
from .mm import MMConfig, fit_mm
from .persist import FittedModel, load_model, save_model
from .synth import SynthSpec, generate

__all__ = [
    "CAVIConfig",
    "FitTrace",
    "FittedModel",
    "HyperParams",
    "MMConfig",
    "Mode",
    "NumericalError",
    "RelevanceSpec",
    "SparseCountMatrix",
    "SynthSpec",
    "VariationalState",
    "binarize",
    "compute_elbo",
    "evaluate",
    "filter_dataset",
    "fit_cavi",
    "fit_mm",
    "generate",
    "kl_divergence",
    "load_model",
    "load_triplets",
    "nb_divergence",
    "ndcg",
    "objective",
    "predict_scores",
    "rank_items",
    "save_model",
    "scale_transform",
    "split_train_test",
    "write_triplets",
]
