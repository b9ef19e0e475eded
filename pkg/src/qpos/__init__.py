"""Simulation and analysis of entanglement-enhanced positioning under photon loss."""

__version__ = "0.1.0"

from .spectrum import GroupSpectrum, SpectrumModel, arrival_density, time_std
from .states import (
    AccuracyReport,
    Classical,
    GroupEntangled,
    MaxEntangled,
    PartialEntangled,
    Unentangled,
    classify_region,
    entangled_lossy_std_r,
    gain_lambda,
    group_lossy_std,
    group_tau,
    lossless_accuracy,
    lossy_accuracy,
    retained_group_prob,
    threshold_eta,
    unentangled_lossy_std,
)
from .montecarlo import Estimate, RunOutcome, estimate, simulate
from .estimators import ArrivalTimeEstimator, LossySource

__all__ = [
    "GroupSpectrum",
    "SpectrumModel",
    "arrival_density",
    "time_std",
    "AccuracyReport",
    "Classical",
    "GroupEntangled",
    "MaxEntangled",
    "PartialEntangled",
    "Unentangled",
    "classify_region",
    "entangled_lossy_std_r",
    "gain_lambda",
    "group_lossy_std",
    "group_tau",
    "lossless_accuracy",
    "lossy_accuracy",
    "retained_group_prob",
    "threshold_eta",
    "unentangled_lossy_std",
    "Estimate",
    "RunOutcome",
    "estimate",
    "simulate",
    "ArrivalTimeEstimator",
    "LossySource",
]
