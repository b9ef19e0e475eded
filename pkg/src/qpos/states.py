"""Pulse-state families and their closed-form timing accuracies under loss.

Five families are modelled, all with the same single-photon spectrum so
that comparisons are fair:

* :class:`Classical` - ``M`` coherent pulses, ``N_mean`` photons on average each;
* :class:`MaxEntangled` - ``M`` channels, ``N`` photons each, all sharing one
  random frequency;
* :class:`Unentangled` - ``M`` independent single photons;
* :class:`PartialEntangled` - ``Q`` of ``M`` single photons maximally entangled,
  the rest independent;
* :class:`GroupEntangled` - ``G`` groups of ``K`` maximally entangled photons whose
  carriers are themselves correlated through a :class:`GroupSpectrum`.

Accuracies are standard deviations of the per-run timing statistic, in the
same units as ``dtau``. ``*_r`` variants pool ``r`` independent runs and
account for the runs that must be discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, xlog1py, xlogy

from ._validation import check_count, check_eta, check_positive
from .spectrum import GroupSpectrum, time_std

__all__ = [
    "Classical",
    "MaxEntangled",
    "Unentangled",
    "PartialEntangled",
    "GroupEntangled",
    "StateFamily",
    "AccuracyReport",
    "FAMILY_CODES",
    "make_family",
    "lossless_accuracy",
    "lossy_accuracy",
    "threshold_eta",
    "unentangled_lossy_std",
    "unentangled_lossy_std_r",
    "entangled_lossy_std_r",
    "gain_lambda",
    "gain_lambda_root",
    "partial_lossy_std",
    "group_tau",
    "retained_group_prob",
    "group_lossy_std",
    "region_accuracies",
    "classify_region",
    "REGION_LABELS",
]


@dataclass(frozen=True)
class Classical:
    M: int
    N_mean: float

    def __post_init__(self):
        object.__setattr__(self, "M", check_count(self.M, "M"))
        object.__setattr__(self, "N_mean", check_positive(self.N_mean, "N_mean"))


@dataclass(frozen=True)
class MaxEntangled:
    M: int
    N: int = 1

    def __post_init__(self):
        object.__setattr__(self, "M", check_count(self.M, "M"))
        object.__setattr__(self, "N", check_count(self.N, "N"))


@dataclass(frozen=True)
class Unentangled:
    M: int

    def __post_init__(self):
        object.__setattr__(self, "M", check_count(self.M, "M"))


@dataclass(frozen=True)
class PartialEntangled:
    M: int
    Q: int

    def __post_init__(self):
        object.__setattr__(self, "M", check_count(self.M, "M"))
        object.__setattr__(self, "Q", check_count(self.Q, "Q"))
        if self.Q > self.M:
            raise ValueError(f"Q must not exceed M, got Q={self.Q}, M={self.M}")


@dataclass(frozen=True)
class GroupEntangled:
    G: int
    K: int
    spec: GroupSpectrum = field(default_factory=GroupSpectrum)

    def __post_init__(self):
        object.__setattr__(self, "G", check_count(self.G, "G"))
        object.__setattr__(self, "K", check_count(self.K, "K"))
        if not isinstance(self.spec, GroupSpectrum):
            raise TypeError("spec must be a GroupSpectrum")

    @property
    def M(self) -> int:
        return self.G * self.K


StateFamily = Union[Classical, MaxEntangled, Unentangled, PartialEntangled, GroupEntangled]

# Short codes used on the command line and in CSV output.
FAMILY_CODES = {
    "cl": Classical,
    "en": MaxEntangled,
    "un": Unentangled,
    "partial": PartialEntangled,
    "group": GroupEntangled,
}


def make_family(code: str, *, M=None, N=1, N_mean=None, Q=None, G=None, K=None,
                spec: GroupSpectrum | None = None) -> StateFamily:
    """Build a family from its short code and the relevant shape parameters."""
    if code not in FAMILY_CODES:
        raise ValueError(f"unknown family {code!r}; choose from {sorted(FAMILY_CODES)}")
    if code == "cl":
        return Classical(M, N_mean if N_mean is not None else N)
    if code == "en":
        return MaxEntangled(M, N)
    if code == "un":
        return Unentangled(M)
    if code == "partial":
        return PartialEntangled(M, Q)
    if G is None and M is not None and K is not None:
        if M % K:
            raise ValueError(f"M={M} is not divisible by K={K}")
        G = M // K
    return GroupEntangled(G, K, spec if spec is not None else GroupSpectrum())


@dataclass(frozen=True)
class AccuracyReport:
    delta_t_per_run: float
    delta_t_r_runs: float
    usable_run_fraction: float


# -- binomial helpers ------------------------------------------------------

def _log_binom_pmf(n: int, k: np.ndarray, p: float) -> np.ndarray:
    # xlogy / xlog1py give 0 for a zero exponent, so p == 1 is handled exactly
    return (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            + xlogy(k, p) + xlog1py(n - k, -p))


def _survive_any(n: int, p: float) -> float:
    """``1 - (1 - p)**n`` without cancellation for small ``p``."""
    if p >= 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p))


def _fsum(terms: np.ndarray) -> float:
    return math.fsum(sorted(terms.tolist(), key=abs, reverse=True))


# -- lossless --------------------------------------------------------------

def lossless_accuracy(f: StateFamily, dtau: float = 1.0) -> float:
    """Per-run accuracy with no loss.

    For :class:`GroupEntangled` ``dtau`` is ignored: the width follows from
    the family's own :class:`GroupSpectrum`.
    """
    if isinstance(f, GroupEntangled):
        s = f.spec
        return 1.0 / (2.0 * f.K * math.sqrt(f.G * (f.G * s.delta_Omega**2 + s.delta_omega**2)))
    dtau = check_positive(dtau, "dtau")
    if isinstance(f, Classical):
        return dtau / math.sqrt(f.M * f.N_mean)
    if isinstance(f, MaxEntangled):
        return dtau / (f.M * f.N)
    if isinstance(f, Unentangled):
        return dtau / math.sqrt(f.M)
    if isinstance(f, PartialEntangled):
        return dtau / math.sqrt(f.M) * math.sqrt((f.M - f.Q + 1) / f.M)
    raise TypeError(f"not a state family: {f!r}")


# -- maximally entangled vs unentangled ------------------------------------

def threshold_eta(M: int) -> float:
    """Efficiency above which entangled photons beat independent ones (large-M rule)."""
    M = check_count(M, "M", minimum=2)
    return (1.0 / M) ** (1.0 / (M - 1))


def _inverse_m_moment(M: int, eta: float) -> tuple[float, float]:
    """Return (E[1/m | m >= 1], P[m >= 1]) for m ~ Binomial(M, eta)."""
    m = np.arange(1, M + 1)
    usable = _survive_any(M, eta)
    terms = np.exp(_log_binom_pmf(M, m, eta)) / m
    return _fsum(terms) / usable, usable


def unentangled_lossy_std(M: int, eta: float, dtau: float = 1.0) -> float:
    """Per-run accuracy of independent photons, conditioned on at least one arriving."""
    M = check_count(M, "M")
    eta = check_eta(eta)
    inv_m, _ = _inverse_m_moment(M, eta)
    return check_positive(dtau, "dtau") * math.sqrt(inv_m)


def unentangled_lossy_std_r(M: int, eta: float, dtau: float = 1.0, r: int = 1) -> float:
    """Accuracy pooled over ``r`` runs of independent photons."""
    M = check_count(M, "M")
    eta = check_eta(eta)
    r = check_count(r, "r")
    inv_m, usable = _inverse_m_moment(M, eta)
    return check_positive(dtau, "dtau") * math.sqrt(inv_m / usable / r)


def entangled_lossy_std_r(M: int, eta: float, dtau: float = 1.0, r: int = 1) -> float:
    """Accuracy pooled over ``r`` runs of the maximally entangled one-photon-per-channel state."""
    M = check_count(M, "M")
    eta = check_eta(eta)
    r = check_count(r, "r")
    return check_positive(dtau, "dtau") / (M * math.sqrt(r * eta**M))


def gain_lambda(M: int, eta: float) -> float:
    """Ratio of unentangled to entangled pooled accuracy; above 1 entanglement wins."""
    M = check_count(M, "M")
    eta = check_eta(eta)
    m = np.arange(1, M + 1)
    usable = _survive_any(M, eta)
    log_terms = M * math.log(eta) + _log_binom_pmf(M, m, eta) - np.log(m) - 2.0 * math.log(usable)
    return M * math.sqrt(_fsum(np.exp(log_terms)))


def gain_lambda_root(M: int, xtol: float = 1e-14) -> float:
    """Efficiency at which ``gain_lambda(M, eta) == 1``."""
    M = check_count(M, "M", minimum=2)
    lo = 1e-12
    return brentq(lambda e: gain_lambda(M, e) - 1.0, lo, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps)


# -- partial entanglement --------------------------------------------------

def partial_lossy_std(M: int, Q: int, eta: float, dtau: float = 1.0,
                      weighting: str = "channel") -> float:
    """Per-run accuracy of the partially entangled state under loss.

    The entangled block of ``Q`` photons is kept only if all of them arrive.
    ``weighting="channel"`` averages every retained channel with equal weight
    (this reproduces the lossless formula); ``"inverse_variance"`` weights the
    entangled block by ``Q**2`` relative to each independent photon.
    """
    M = check_count(M, "M")
    Q = check_count(Q, "Q")
    if Q > M:
        raise ValueError("Q must not exceed M")
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    if weighting not in ("channel", "inverse_variance"):
        raise ValueError(f"unknown weighting {weighting!r}")
    U = M - Q
    m = np.arange(0, U + 1)
    p_m = np.exp(_log_binom_pmf(U, m, eta))
    p_block = eta**Q
    if weighting == "channel":
        var_with = (1.0 + m) / (Q + m) ** 2
    else:
        var_with = 1.0 / (Q**2 + m)
    var_without = np.divide(1.0, m, out=np.zeros(len(m)), where=m > 0)
    weights_without = np.where(m > 0, p_m * (1.0 - p_block), 0.0)
    usable = p_block + (1.0 - p_block) * _survive_any(U, eta) if U else p_block
    total = _fsum(np.concatenate([p_block * p_m * var_with, weights_without * var_without]))
    return dtau * math.sqrt(total / usable)


# -- group entanglement ----------------------------------------------------

def group_tau(g: int, G: int, spec: GroupSpectrum) -> float:
    """Width of the summed arrival time of ``g`` surviving groups out of ``G``."""
    G = check_count(G, "G")
    g = check_count(g, "g")
    if g > G:
        raise ValueError(f"g must not exceed G, got g={g}, G={G}")
    W2, w2 = spec.delta_Omega**2, spec.delta_omega**2
    return math.sqrt(g) / (2.0 * spec.delta_omega) * math.sqrt(((G - g) * W2 + w2) / (G * W2 + w2))


def _group_probs(G: int, K: int, eta: float) -> np.ndarray:
    g = np.arange(1, G + 1)
    p = eta**K
    # conditional probabilities are clipped so rounding never pushes one above 1
    return np.minimum(np.exp(_log_binom_pmf(G, g, p)) / _survive_any(G, p), 1.0)


def retained_group_prob(G: int, K: int, eta: float, g: int) -> float:
    """Probability that exactly ``g`` groups arrive intact, given that at least one does."""
    G = check_count(G, "G")
    K = check_count(K, "K")
    g = check_count(g, "g")
    if g > G:
        raise ValueError(f"g must not exceed G, got g={g}, G={G}")
    return float(_group_probs(G, K, check_eta(eta))[g - 1])


def group_lossy_std(G: int, K: int, eta: float, spec: GroupSpectrum, r: int | None = None) -> float:
    """Accuracy of the group-entangled state under loss.

    With ``r`` given the result is pooled over ``r`` runs, of which only the
    fraction with at least one intact group is usable.
    """
    G = check_count(G, "G")
    K = check_count(K, "K")
    eta = check_eta(eta)
    W2, w2 = spec.delta_Omega**2, spec.delta_omega**2
    g = np.arange(1, G + 1)
    terms = ((G - g) * W2 + w2) / (g * (G * W2 + w2)) * _group_probs(G, K, eta)
    dt = math.sqrt(_fsum(terms)) / (2.0 * K * spec.delta_omega)
    if r is None:
        return dt
    r = check_count(r, "r")
    return dt / math.sqrt(r * _survive_any(G, eta**K))


# -- dispatch --------------------------------------------------------------

def lossy_accuracy(f: StateFamily, eta: float, dtau: float = 1.0, r: int = 1) -> AccuracyReport:
    """Per-run and pooled accuracy for any family at efficiency ``eta``.

    ``MaxEntangled`` with ``N > 1`` uses the all-or-nothing survival rule
    ``eta**(M*N)``. ``Classical`` reports the large-photon-number bound with
    the mean photon number reduced to ``eta * N_mean``.
    """
    eta = check_eta(eta)
    r = check_count(r, "r")
    if isinstance(f, Classical):
        per_run = lossless_accuracy(Classical(f.M, eta * f.N_mean), dtau)
        usable = -math.expm1(-eta * f.M * f.N_mean)
    elif isinstance(f, MaxEntangled):
        per_run = lossless_accuracy(f, dtau)
        usable = eta ** (f.M * f.N)
    elif isinstance(f, Unentangled):
        per_run = unentangled_lossy_std(f.M, eta, dtau)
        usable = _survive_any(f.M, eta)
    elif isinstance(f, PartialEntangled):
        per_run = partial_lossy_std(f.M, f.Q, eta, dtau)
        U = f.M - f.Q
        usable = eta**f.Q + (1.0 - eta**f.Q) * _survive_any(U, eta) if U else eta**f.Q
    elif isinstance(f, GroupEntangled):
        per_run = group_lossy_std(f.G, f.K, eta, f.spec)
        usable = _survive_any(f.G, eta**f.K)
    else:
        raise TypeError(f"not a state family: {f!r}")
    return AccuracyReport(per_run, per_run / math.sqrt(r * usable), usable)


# -- region classification -------------------------------------------------

REGION_LABELS = ("en>G>un", "G>en>un", "G>un>en", "un>G>en", "en>un>G", "un>en>G")


def region_accuracies(M: int, eta: float, K: int, ratio: float) -> dict[str, float]:
    """Single-run-budget accuracies of the en, G and un states with matched spectra.

    Each value already includes the penalty for discarded runs, so the
    three numbers compare like for like at a fixed number of attempts.
    """
    M = check_count(M, "M")
    K = check_count(K, "K")
    if M % K:
        raise ValueError(f"M={M} is not divisible by K={K}")
    eta = check_eta(eta)
    spec = GroupSpectrum.from_ratio(ratio)
    dtau = time_std(spec)
    return {
        "en": entangled_lossy_std_r(M, eta, dtau, 1),
        "G": group_lossy_std(M // K, K, eta, spec, r=1),
        "un": unentangled_lossy_std_r(M, eta, dtau, 1),
    }


def classify_region(M: int, eta: float, K: int, ratio: float, rtol: float = 1e-12) -> str:
    """Ordering of the three states from best (smallest accuracy) to worst.

    Returns labels such as ``"G>en>un"``; states within ``rtol`` of each
    other are joined by ``"="`` (e.g. ``"en=G>un"`` when ``M == K``).
    """
    acc = region_accuracies(M, eta, K, ratio)
    order = sorted(acc, key=lambda k: (acc[k], ("en", "G", "un").index(k)))
    label = order[0]
    for prev, cur in zip(order, order[1:]):
        a, b = acc[prev], acc[cur]
        label += "=" if abs(a - b) <= rtol * max(abs(a), abs(b)) else ">"
        label += cur
    return label
