"""Gaussian single-photon spectra and their arrival-time widths.

Times are dimensionless. For a spectral density ``|phi(w)|**2`` that is a
Gaussian of standard deviation ``sigma_omega``, the arrival-time density
``|g(t)|**2`` is a Gaussian of standard deviation ``1 / (2 * sigma_omega)``.
The carrier frequency is fixed at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive

__all__ = [
    "SpectrumModel",
    "GroupSpectrum",
    "time_std",
    "arrival_density",
    "spectral_density",
    "spectral_amplitudes",
]


@dataclass(frozen=True)
class SpectrumModel:
    """Gaussian spectrum with angular-frequency standard deviation ``sigma_omega``."""

    sigma_omega: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "sigma_omega", check_positive(self.sigma_omega, "sigma_omega"))

    @classmethod
    def from_time_std(cls, dtau: float) -> "SpectrumModel":
        return cls(1.0 / (2.0 * check_positive(dtau, "dtau")))

    @property
    def dtau(self) -> float:
        return time_std(self)


@dataclass(frozen=True)
class GroupSpectrum:
    """Two-level spectrum of a group-entangled state.

    ``delta_Omega`` is the spread of the shared group carriers and
    ``delta_omega`` the spread of each group around its carrier. A single
    photon then sees a Gaussian of variance ``delta_omega**2 + delta_Omega**2``.
    """

    delta_Omega: float = 1.0
    delta_omega: float = math.sqrt(2.0)

    def __post_init__(self):
        object.__setattr__(self, "delta_Omega", check_positive(self.delta_Omega, "delta_Omega"))
        object.__setattr__(self, "delta_omega", check_positive(self.delta_omega, "delta_omega"))

    @classmethod
    def from_ratio(cls, ratio: float, delta_Omega: float = 1.0) -> "GroupSpectrum":
        """Build from ``ratio = delta_omega**2 / delta_Omega**2``."""
        ratio = check_positive(ratio, "ratio")
        return cls(delta_Omega=delta_Omega, delta_omega=delta_Omega * math.sqrt(ratio))

    @property
    def ratio(self) -> float:
        return (self.delta_omega / self.delta_Omega) ** 2

    @property
    def variance(self) -> float:
        return self.delta_omega**2 + self.delta_Omega**2

    def collapse(self) -> SpectrumModel:
        """Single-photon spectrum with the same overall variance."""
        return SpectrumModel(math.sqrt(self.variance))


def time_std(s: SpectrumModel | GroupSpectrum) -> float:
    """Arrival-time standard deviation ``1 / (2 sigma_omega)``."""
    if isinstance(s, GroupSpectrum):
        s = s.collapse()
    return 1.0 / (2.0 * s.sigma_omega)


def arrival_density(s: SpectrumModel, t):
    """Arrival-time probability density ``|g(t)|**2`` (zero-mean Gaussian)."""
    dtau = time_std(s)
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * (t / dtau) ** 2) / (dtau * math.sqrt(2.0 * math.pi))
    return out if out.ndim else float(out)


def spectral_density(s: SpectrumModel, omega):
    """``|phi(omega)|**2``, normalized to unit integral."""
    omega = np.asarray(omega, dtype=float)
    sig = s.sigma_omega
    out = np.exp(-0.5 * (omega / sig) ** 2) / (sig * math.sqrt(2.0 * math.pi))
    return out if out.ndim else float(out)


def spectral_amplitudes(s: SpectrumModel, omega_grid) -> np.ndarray:
    """Discretized real amplitudes ``phi_j`` on a frequency grid, with sum |phi_j|^2 = 1."""
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    amp = np.sqrt(spectral_density(s, omega_grid))
    norm = np.linalg.norm(amp)
    if norm == 0.0:
        raise ValueError("frequency grid lies entirely outside the spectrum")
    return amp / norm
