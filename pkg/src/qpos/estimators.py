"""scikit-learn style wrappers.

:class:`LossySource` describes a pulse source plus channel and can sample
run statistics from it; :class:`ArrivalTimeEstimator` turns run statistics
into a position estimate. Both follow the ``BaseEstimator`` parameter
conventions, so ``clone``, ``get_params`` and ``ParameterGrid`` work on them.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import check_eta, check_positive, check_statistics
from .montecarlo import analytic_std, estimate, simulate, RunBatch
from .spectrum import GroupSpectrum
from .states import AccuracyReport, lossy_accuracy, make_family


class LossySource(BaseEstimator):
    """A state family sent through a channel of efficiency ``eta``.

    Parameters
    ----------
    family : {"cl", "en", "un", "partial", "group"}
        Which pulse state is sent.
    M, N, N_mean, Q, G, K : int or float, optional
        Shape parameters; only those relevant to ``family`` are used.
    eta : float
        Joint channel and detector efficiency in (0, 1].
    dtau : float
        Single-photon arrival-time width. Ignored for ``"group"``, whose
        width follows from ``delta_Omega`` and ``delta_omega``.
    weighting : {"channel", "inverse_variance"}
        How the partially entangled sampler combines retained channels.
    random_state : int, optional
        Master seed for :meth:`sample`.
    """

    def __init__(self, family="en", M=2, N=1, N_mean=None, Q=None, G=None, K=None,
                 eta=1.0, dtau=1.0, delta_Omega=1.0, delta_omega=math.sqrt(2.0),
                 weighting="channel", random_state=None):
        self.family = family
        self.M = M
        self.N = N
        self.N_mean = N_mean
        self.Q = Q
        self.G = G
        self.K = K
        self.eta = eta
        self.dtau = dtau
        self.delta_Omega = delta_Omega
        self.delta_omega = delta_omega
        self.weighting = weighting
        self.random_state = random_state

    def fit(self, X=None, y=None):
        """Validate the parameters and build the state descriptor."""
        check_eta(self.eta)
        check_positive(self.dtau, "dtau")
        spec = GroupSpectrum(self.delta_Omega, self.delta_omega)
        self.family_ = make_family(self.family, M=self.M, N=self.N, N_mean=self.N_mean,
                                   Q=self.Q, G=self.G, K=self.K, spec=spec)
        return self

    def _kw(self):
        return {"weighting": self.weighting} if self.family == "partial" else {}

    def sample(self, n_runs: int, true_offset: float = 0.0) -> RunBatch:
        check_is_fitted(self, "family_")
        seed = 0 if self.random_state is None else int(self.random_state)
        return simulate(self.family_, self.eta, n_runs, seed, self.dtau, true_offset, **self._kw())

    def transform(self, X):
        """Map an array of true offsets to one simulated run statistic each."""
        check_is_fitted(self, "family_")
        offsets = np.asarray(X, dtype=float).reshape(-1)
        seed = 0 if self.random_state is None else int(self.random_state)
        out = np.empty(offsets.size)
        for i, off in enumerate(offsets):
            batch = simulate(self.family_, self.eta, 1, seed, self.dtau, off, key=(i,), **self._kw())
            out[i] = batch.statistic[0]
        return out.reshape(-1, 1)

    def accuracy(self, r: int = 1) -> AccuracyReport:
        check_is_fitted(self, "family_")
        return lossy_accuracy(self.family_, self.eta, self.dtau, r)

    def analytic_std(self) -> float:
        check_is_fitted(self, "family_")
        return analytic_std(self.family_, self.eta, self.dtau, self.weighting)


class ArrivalTimeEstimator(BaseEstimator):
    """Estimate the mean arrival time, and hence the distance, from run statistics.

    ``X`` is a 1-D array (or single column) of per-run statistics with NaN
    for discarded runs. ``speed`` converts time to distance.
    """

    def __init__(self, speed: float = 1.0):
        self.speed = speed

    def fit(self, X, y=None):
        X = check_statistics(X)
        est = estimate(RunBatch(np.zeros((X.size, 0)), X, np.zeros(X.size, dtype=int)))
        self.estimate_ = est
        self.offset_ = est.mean
        self.offset_std_ = est.std_of_mean
        self.n_runs_used_ = est.runs_used
        self.n_runs_total_ = est.runs_total
        self.accuracy_per_attempt_ = est.std_of_mean * math.sqrt(est.runs_total)
        self.position_ = self.speed * est.mean
        return self

    def predict(self, X=None):
        """Return the fitted position (one value per row of ``X`` if given)."""
        if not hasattr(self, "position_"):
            raise NotFittedError("ArrivalTimeEstimator is not fitted yet")
        if X is None:
            return self.position_
        n = len(np.asarray(X))
        return np.full(n, self.position_)

    def score(self, X, y):
        """Negative mean squared error of the fitted position against targets ``y``."""
        y = np.asarray(y, dtype=float).reshape(-1)
        return -float(np.mean((self.predict(X) - y) ** 2))
