"""Constrained twin variational auto-encoders and baselines in numpy."""

__version__ = "0.1.0"

from .classify import DecisionTreeClassifier, RandomForestClassifier
from .clustering import KMeans, kmeans, relabel_majority, silhouette
from .data import BlobSpec, Dataset, MinMaxNormalizer, load_csv, make_blobs, save_csv, split
from .metrics import accuracy, precision_recall_fscore, separability
from .models import (
    AutoEncoder,
    ConstrainedTwinVAE,
    TwinVAE,
    VariationalAutoEncoder,
    extract,
    load_model,
    save_model,
    train,
)
from .priors import PCA, ClassPriors, fit_priors

__all__ = [
    "AutoEncoder",
    "BlobSpec",
    "ClassPriors",
    "ConstrainedTwinVAE",
    "Dataset",
    "DecisionTreeClassifier",
    "KMeans",
    "MinMaxNormalizer",
    "PCA",
    "RandomForestClassifier",
    "TwinVAE",
    "VariationalAutoEncoder",
    "accuracy",
    "extract",
    "fit_priors",
    "kmeans",
    "load_csv",
    "load_model",
    "make_blobs",
    "precision_recall_fscore",
    "relabel_majority",
    "save_csv",
    "save_model",
    "separability",
    "silhouette",
    "split",
    "train",
]
