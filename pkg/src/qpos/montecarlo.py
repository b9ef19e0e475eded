"""Seeded Monte Carlo of timing runs for every state family.

Every sampler draws one or many experimental runs. A run records which
channels (or groups) survived loss and, if the run is usable, the value of
the timing statistic: the mean over retained channels of the per-channel
mean arrival time.

Maximally entangled photons are never given individual arrival times. Their
joint density depends only on the sum of the times, so only the sum (and
hence the statistic) has a proper distribution; it is drawn directly.

Reproducibility: :func:`simulate` splits the runs into fixed-size blocks and
gives block ``b`` its own Philox stream keyed by ``(seed, b)``. Blocks are
independent, so the output does not depend on how many worker threads
process them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_count, check_eta, check_positive
from .spectrum import GroupSpectrum
from .states import (
    Classical,
    GroupEntangled,
    MaxEntangled,
    PartialEntangled,
    StateFamily,
    Unentangled,
    group_tau,
    lossy_accuracy,
    partial_lossy_std,
)

__all__ = [
    "RunOutcome",
    "RunBatch",
    "Estimate",
    "BLOCK_SIZE",
    "stream",
    "thread_count",
    "sample_unentangled",
    "sample_entangled",
    "sample_group",
    "sample_partial",
    "sample_classical",
    "sample_family",
    "simulate",
    "estimate",
    "analytic_std",
    "attempt_accuracy",
    "bootstrap_std_error",
    "empirical_lambda",
]

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class RunOutcome:
    """One run: survival pattern, timing statistic (None if discarded) and photon count used."""

    survivors: tuple
    statistic: float | None
    weight: int

    @property
    def usable(self) -> bool:
        return self.statistic is not None


@dataclass(frozen=True)
class RunBatch:
    """Many runs as arrays; ``statistic`` is NaN for discarded runs."""

    survivors: np.ndarray
    statistic: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return len(self.statistic)

    def __getitem__(self, i: int) -> RunOutcome:
        s = self.statistic[i]
        return RunOutcome(
            tuple(int(x) for x in np.atleast_1d(self.survivors[i])),
            None if np.isnan(s) else float(s),
            int(self.weight[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def usable(self) -> np.ndarray:
        return ~np.isnan(self.statistic)

    @classmethod
    def concatenate(cls, batches: Sequence["RunBatch"]) -> "RunBatch":
        return cls(
            np.concatenate([b.survivors for b in batches]),
            np.concatenate([b.statistic for b in batches]),
            np.concatenate([b.weight for b in batches]),
        )


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_of_mean: float
    runs_used: int
    runs_total: int

    @property
    def run_std(self) -> float:
        """Spread of the single-run statistic."""
        return self.std_of_mean * math.sqrt(self.runs_used)

    def as_dict(self) -> dict:
        """Plain-dict form; an undefined ``std_of_mean`` (one run) becomes None."""
        return {
            "mean": self.mean,
            "std_of_mean": None if math.isnan(self.std_of_mean) else self.std_of_mean,
            "runs_used": self.runs_used,
            "runs_total": self.runs_total,
        }


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the substream ``key`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("QPOS_THREADS", "1") or 1)
    return max(1, int(threads))


def _finish(survivors, statistic, weight, size):
    batch = RunBatch(np.asarray(survivors), np.asarray(statistic, dtype=float), np.asarray(weight))
    return batch[0] if size is None else batch


# -- samplers --------------------------------------------------------------

def sample_unentangled(M, eta, dtau, true_offset, rng, size=None):
    """Independent single photons: each survives with probability ``eta``."""
    M = check_count(M, "M")
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    n = 1 if size is None else size
    alive = rng.random((n, M)) < eta
    times = rng.normal(true_offset, dtau, (n, M))
    m = alive.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = np.where(m > 0, (times * alive).sum(axis=1) / m, np.nan)
    return _finish(alive.astype(np.int8), stat, m, size)


def sample_entangled(M, N, eta, dtau, true_offset, rng, size=None):
    """Maximally entangled state, ``N`` photons per channel, all-or-nothing post-selection."""
    M = check_count(M, "M")
    N = check_count(N, "N")
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    n = 1 if size is None else size
    kept = rng.binomial(N, eta, (n, M))
    ok = (kept == N).all(axis=1)
    noise = rng.normal(0.0, dtau, n) / (M * N)
    stat = np.where(ok, true_offset + noise, np.nan)
    return _finish(kept.astype(np.int16), stat, np.where(ok, M * N, 0), size)


def sample_group(G, K, eta, spec: GroupSpectrum, true_offset, rng, size=None):
    """Group-entangled state: a group is kept only if all its ``K`` photons arrive."""
    G = check_count(G, "G")
    K = check_count(K, "K")
    eta = check_eta(eta)
    n = 1 if size is None else size
    intact = rng.binomial(K, eta, (n, G)) == K
    g = intact.sum(axis=1)
    widths = np.array([np.nan] + [group_tau(k, G, spec) for k in range(1, G + 1)])
    z = rng.normal(size=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = np.where(g > 0, true_offset + z * widths[g] / (g * K), np.nan)
    return _finish(intact.astype(np.int8), stat, g * K, size)


def sample_partial(M, Q, eta, dtau, true_offset, rng, size=None, weighting: str = "channel"):
    """First ``Q`` channels maximally entangled, the other ``M - Q`` independent.

    The entangled block is discarded as a whole if any of its photons is
    lost. Retained channels are averaged with equal weight by default; see
    :func:`qpos.states.partial_lossy_std` for the alternative weighting.
    """
    M = check_count(M, "M")
    Q = check_count(Q, "Q")
    if Q > M:
        raise ValueError("Q must not exceed M")
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    if weighting not in ("channel", "inverse_variance"):
        raise ValueError(f"unknown weighting {weighting!r}")
    n = 1 if size is None else size
    alive = rng.random((n, M)) < eta
    block = alive[:, :Q].all(axis=1)
    # sum of the Q entangled arrival times, offset by Q * true_offset
    block_sum = Q * true_offset + rng.normal(0.0, dtau, n)
    times = rng.normal(true_offset, dtau, (n, M - Q))
    free = alive[:, Q:]
    m = free.sum(axis=1)
    free_sum = (times * free).sum(axis=1)
    if weighting == "channel":
        num = np.where(block, block_sum, 0.0) + free_sum
        den = np.where(block, Q, 0) + m
    else:
        num = np.where(block, Q * block_sum, 0.0) + free_sum
        den = np.where(block, Q * Q, 0) + m
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = np.where(den > 0, num / den, np.nan)
    weight = np.where(block, Q, 0) + m
    return _finish(alive.astype(np.int8), stat, weight, size)


def sample_classical(M, N_mean, eta, dtau, true_offset, rng, size=None):
    """Coherent pulses: Poisson photon counts, independent arrival times.

    The mean of ``k`` Gaussian arrival times is drawn directly as a single
    Gaussian of width ``dtau / sqrt(k)``.
    """
    M = check_count(M, "M")
    N_mean = check_positive(N_mean, "N_mean")
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    n = 1 if size is None else size
    counts = rng.poisson(eta * N_mean, (n, M))
    hit = counts > 0
    z = rng.normal(size=(n, M))
    with np.errstate(invalid="ignore", divide="ignore"):
        chan_mean = np.where(hit, true_offset + dtau * z / np.sqrt(np.maximum(counts, 1)), 0.0)
        used = hit.sum(axis=1)
        stat = np.where(used > 0, chan_mean.sum(axis=1) / used, np.nan)
    return _finish(counts.astype(np.int32), stat, counts.sum(axis=1), size)


def sample_family(f: StateFamily, eta, dtau, true_offset, rng, size=None, **kw):
    """Dispatch to the sampler for ``f``."""
    if isinstance(f, Unentangled):
        return sample_unentangled(f.M, eta, dtau, true_offset, rng, size)
    if isinstance(f, MaxEntangled):
        return sample_entangled(f.M, f.N, eta, dtau, true_offset, rng, size)
    if isinstance(f, GroupEntangled):
        return sample_group(f.G, f.K, eta, f.spec, true_offset, rng, size)
    if isinstance(f, PartialEntangled):
        return sample_partial(f.M, f.Q, eta, dtau, true_offset, rng, size, **kw)
    if isinstance(f, Classical):
        return sample_classical(f.M, f.N_mean, eta, dtau, true_offset, rng, size)
    raise TypeError(f"not a state family: {f!r}")


def simulate(f: StateFamily, eta: float, runs: int, seed: int, dtau: float = 1.0,
             true_offset: float = 0.0, threads: int | None = None,
             block_size: int = BLOCK_SIZE, key: tuple = (), **kw) -> RunBatch:
    """Draw ``runs`` runs of family ``f``; output depends only on the arguments, not on ``threads``.

    ``key`` selects an independent family of streams under the same seed.
    """
    runs = check_count(runs, "runs")
    block_size = check_count(block_size, "block_size")
    sizes = [min(block_size, runs - start) for start in range(0, runs, block_size)]

    def work(b):
        return sample_family(f, eta, dtau, true_offset, stream(seed, *key, b), size=sizes[b], **kw)

    n_threads = min(thread_count(threads), len(sizes))
    if n_threads == 1:
        parts = [work(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    return RunBatch.concatenate(parts)


# -- estimation ------------------------------------------------------------

def _statistics(runs) -> tuple[np.ndarray, int]:
    if isinstance(runs, RunBatch):
        return runs.statistic[runs.usable], len(runs)
    runs = list(runs)
    stats = np.array([r.statistic for r in runs if r.statistic is not None], dtype=float)
    return stats, len(runs)


def estimate(runs: RunBatch | Iterable[RunOutcome]) -> Estimate:
    """Mean arrival time over usable runs and its standard error."""
    x, total = _statistics(runs)
    if x.size == 0:
        raise ValueError("no usable runs")
    mean = math.fsum(x.tolist()) / x.size
    sem = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return Estimate(mean, sem, int(x.size), int(total))


def analytic_std(f: StateFamily, eta: float, dtau: float = 1.0, weighting: str = "channel") -> float:
    """Closed-form spread of the per-run statistic, matching the samplers above."""
    if isinstance(f, PartialEntangled):
        return partial_lossy_std(f.M, f.Q, eta, dtau, weighting)
    return lossy_accuracy(f, eta, dtau).delta_t_per_run


def attempt_accuracy(statistic) -> float:
    """Accuracy per attempted run: standard error times sqrt(all runs, discarded included).

    Equals the single-run spread divided by the square root of the usable
    fraction, i.e. the pooled ``r``-run accuracy scaled back to ``r = 1``.
    """
    statistic = np.asarray(statistic, dtype=float)
    x = statistic[~np.isnan(statistic)]
    return float(np.std(x, ddof=1) * math.sqrt(statistic.size / x.size))


def _run_std(x: np.ndarray) -> float:
    x = x[~np.isnan(x)]
    return float(np.std(x, ddof=1))


def bootstrap_std_error(x, n_resamples: int = 200, seed: int = 0, batch: int = 16,
                        statistic=None) -> float:
    """Bootstrap standard error of ``statistic(x)`` (default: sample std of the non-NaN entries)."""
    x = np.asarray(x, dtype=float)
    statistic = _run_std if statistic is None else statistic
    rng = stream(seed, 0xB007)
    out = []
    for start in range(0, n_resamples, batch):
        k = min(batch, n_resamples - start)
        idx = rng.integers(0, x.size, size=(k, x.size))
        out.extend(statistic(row) for row in x[idx])
    return float(np.std(out, ddof=1))


def empirical_lambda(M: int, eta: float, runs: int, seed: int, dtau: float = 1.0,
                     threads: int | None = None) -> float:
    """Simulated ratio of unentangled to entangled accuracy for the same number of attempts."""
    un = estimate(simulate(Unentangled(M), eta, runs, seed, dtau, threads=threads))
    en = estimate(simulate(MaxEntangled(M, 1), eta, runs, seed + 1, dtau, threads=threads))
    return un.std_of_mean / en.std_of_mean
