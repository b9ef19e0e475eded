"""Photon loss on truncated Fock spaces.

A lossy mode of efficiency ``eta`` is a beam splitter of transmissivity
``eta`` whose second input is vacuum and whose second output is discarded.
This module builds that channel two independent ways (Kraus operators and
an explicit two-mode unitary followed by a partial trace) and applies it to
small discretized versions of the entangled and unentangled pulse states.

Multi-channel states live in ``(d + 1) ** M`` dimensions, where each channel
holds either the vacuum (index 0) or one photon in frequency bin ``j``
(index ``j + 1``). Those matrices are kept sparse.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ._validation import check_count, check_eta
from .spectrum import SpectrumModel, spectral_amplitudes

__all__ = [
    "DensityMatrix",
    "KrausSet",
    "kraus_operators",
    "apply_loss",
    "beam_splitter_channel",
    "beam_splitter_check",
    "channel_kraus_operators",
    "apply_channel_loss",
    "pure_state",
    "fock_state",
    "random_density_matrix",
    "post_loss_entangled",
    "post_loss_unentangled",
    "sector_projector",
    "sector_weights",
    "sector_block",
    "frequency_offdiagonal_max",
    "MAX_CHANNELS",
    "MAX_GRID",
]

MAX_CHANNELS = 4
MAX_GRID = 8

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_FLOOR = -1e-10


class DensityMatrix:
    """A density operator, dense or sparse.

    Construction checks Hermiticity, unit trace and positivity; pass
    ``validate=False`` to skip (positivity is only checked by dense
    diagonalization, so large sparse operators skip that step).
    """

    def __init__(self, entries, validate: bool = True):
        if sp.issparse(entries):
            entries = sp.csr_array(entries, dtype=complex)
        else:
            entries = np.array(entries, dtype=complex)
            entries.setflags(write=False)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {entries.shape}")
        self.entries = entries
        if validate:
            self.validate()

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.entries)

    def toarray(self) -> np.ndarray:
        return self.entries.toarray() if self.is_sparse else np.asarray(self.entries)

    def trace(self) -> complex:
        return complex(self.entries.diagonal().sum())

    def hermiticity_error(self) -> float:
        diff = self.entries - self.entries.conj().T
        if sp.issparse(diff):
            return float(abs(diff).max()) if diff.nnz else 0.0
        return float(np.abs(diff).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.toarray()).min())

    def validate(self, max_dense_dim: int = 1024) -> None:
        herm = self.hermiticity_error()
        if herm > HERMITIAN_TOL:
            raise ValueError(f"not Hermitian (max deviation {herm:.3g})")
        tr = self.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {tr}, expected 1")
        if self.dim <= max_dense_dim:
            lam = self.min_eigenvalue()
            if lam < PSD_FLOOR:
                raise ValueError(f"not positive semidefinite (min eigenvalue {lam:.3g})")

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"DensityMatrix(dim={self.dim}, {kind})"


@dataclass(frozen=True)
class KrausSet:
    eta: float
    dim: int
    operators: tuple

    def completeness(self) -> np.ndarray:
        return sum(V.conj().T @ V for V in self.operators)


def pure_state(psi) -> DensityMatrix:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(np.outer(psi, psi.conj()))


def fock_state(n: int, dim: int) -> DensityMatrix:
    psi = np.zeros(dim)
    psi[n] = 1.0
    return pure_state(psi)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state from a Ginibre matrix."""
    rank = dim if rank is None else rank
    A = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = A @ A.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


# -- single-mode loss ------------------------------------------------------

def kraus_operators(eta: float, dim: int) -> KrausSet:
    """Kraus operators of a lossy mode truncated to ``dim`` Fock levels.

    ``V_n`` removes ``n`` photons: ``<m-n|V_n|m> = sqrt(C(m, n)) eta**((m-n)/2) (1-eta)**(n/2)``.
    """
    eta = check_eta(eta)
    dim = check_count(dim, "dim")
    ops = []
    for n in range(dim):
        V = np.zeros((dim, dim))
        for m in range(n, dim):
            V[m - n, m] = math.sqrt(math.comb(m, n) * eta ** (m - n) * (1.0 - eta) ** n)
        V.setflags(write=False)
        ops.append(V)
    return KrausSet(eta, dim, tuple(ops))


def apply_loss(rho: DensityMatrix, ks: KrausSet) -> DensityMatrix:
    """``rho -> sum_n V_n rho V_n^dagger``."""
    if rho.dim != ks.dim:
        raise ValueError(f"dimension mismatch: state has {rho.dim}, Kraus set has {ks.dim}")
    R = rho.toarray()
    out = sum(V @ R @ V.T for V in ks.operators)
    return DensityMatrix(0.5 * (out + out.conj().T), validate=False)


def _ladder(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


def beam_splitter_channel(eta: float, dim: int):
    """The lossy-mode channel as a function, built from the two-mode unitary.

    Mode ``a`` is the signal and mode ``b`` the vacuum port; ``b`` is traced
    out after the beam splitter ``exp[-theta (a b^dag - a^dag b)]`` with
    ``tan(theta) = sqrt((1 - eta) / eta)``.
    """
    eta = check_eta(eta)
    dim = check_count(dim, "dim", minimum=2)
    a1 = _ladder(dim)
    eye = np.eye(dim)
    a = np.kron(a1, eye)
    b = np.kron(eye, a1)
    theta = math.atan(math.sqrt((1.0 - eta) / eta))
    U = scipy.linalg.expm(-theta * (a @ b.T - a.T @ b))
    # columns of U restricted to b = |0>: U_in[(i, k), j] = <i, k| U |j, 0>
    U_in = U[:, np.arange(dim) * dim].reshape(dim, dim, dim)

    def channel(R: np.ndarray) -> np.ndarray:
        return np.einsum("ikj,jl,mkl->im", U_in, R, U_in.conj())

    return channel


def beam_splitter_check(eta: float, dim: int, max_photons: int | None = None) -> float:
    """Largest deviation between the Kraus map and the beam-splitter construction.

    Compared on every matrix unit ``|i><j|`` with ``i, j <= max_photons``
    (default ``dim - 2``, leaving one level of headroom).
    """
    dim = check_count(dim, "dim", minimum=2)
    if max_photons is None:
        max_photons = dim - 2
    if not 0 <= max_photons <= dim - 1:
        raise ValueError(f"max_photons must lie in [0, {dim - 1}]")
    channel = beam_splitter_channel(eta, dim)
    ks = kraus_operators(eta, dim)
    worst = 0.0
    for i in range(max_photons + 1):
        for j in range(max_photons + 1):
            E = np.zeros((dim, dim), dtype=complex)
            E[i, j] = 1.0
            kraus = sum(V @ E @ V.T for V in ks.operators)
            worst = max(worst, float(np.abs(channel(E) - kraus).max()))
    return worst


# -- multi-channel, discretized frequency ----------------------------------

def channel_kraus_operators(eta: float, d: int) -> list[np.ndarray]:
    """Loss on one channel restricted to {vacuum} + {one photon in bin j}.

    Built from the single-mode Kraus set applied to every frequency bin of
    the channel, then projected onto the one-excitation subspace (which the
    loss map leaves invariant).
    """
    eta = check_eta(eta)
    single = kraus_operators(eta, 2).operators
    # index of the one-excitation basis states inside the d-mode qubit register
    basis = [0] + [1 << (d - 1 - j) for j in range(d)]
    ops = []
    for choice in itertools.product(range(2), repeat=d):
        if sum(choice) > 1:
            # removing two or more photons annihilates every one-excitation state
            continue
        full = np.ones((1, 1))
        for n in choice:
            full = np.kron(full, single[n])
        ops.append(full[np.ix_(basis, basis)])
    return ops


def _embed(op: np.ndarray, k: int, M: int, d: int) -> sp.csr_array:
    left = sp.identity((d + 1) ** k, format="csr")
    right = sp.identity((d + 1) ** (M - k - 1), format="csr")
    return sp.csr_array(sp.kron(sp.kron(left, sp.csr_array(op)), right))


def apply_channel_loss(rho: DensityMatrix, M: int, d: int, eta: float) -> DensityMatrix:
    """Apply the same loss independently to each of ``M`` channels."""
    if rho.dim != (d + 1) ** M:
        raise ValueError(f"state dimension {rho.dim} does not match M={M}, d={d}")
    R = sp.csr_array(rho.entries)
    local = channel_kraus_operators(eta, d)
    for k in range(M):
        ops = [_embed(A, k, M, d) for A in local]
        R = sum(A @ R @ A.T for A in ops)
    R.eliminate_zeros()
    return DensityMatrix(R, validate=False)


def _check_sizes(M: int, omega_grid) -> np.ndarray:
    M = check_count(M, "M")
    grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if M > MAX_CHANNELS:
        raise ValueError(f"at most {MAX_CHANNELS} channels supported, got {M}")
    if not 1 <= grid.size <= MAX_GRID:
        raise ValueError(f"frequency grid must have 1..{MAX_GRID} points, got {grid.size}")
    return grid


def _flat_index(digits, d: int) -> int:
    out = 0
    for x in digits:
        out = out * (d + 1) + x
    return out


def _entangled_vector(M: int, amp: np.ndarray) -> sp.csr_array:
    d = amp.size
    idx = [_flat_index([j + 1] * M, d) for j in range(d)]
    return sp.csr_array((amp.astype(complex), (idx, [0] * d)), shape=((d + 1) ** M, 1))


def post_loss_entangled(M: int, eta: float, omega_grid, spectrum: SpectrumModel | None = None,
                        return_input: bool = False):
    """Lossy evolution of the discretized maximally entangled one-photon-per-channel state."""
    grid = _check_sizes(M, omega_grid)
    amp = spectral_amplitudes(spectrum or SpectrumModel(), grid)
    psi = _entangled_vector(M, amp)
    rho = DensityMatrix(psi @ psi.conj().T, validate=False)
    out = apply_channel_loss(rho, M, grid.size, eta)
    return (out, rho) if return_input else out


def post_loss_unentangled(M: int, eta: float, omega_grid, spectrum: SpectrumModel | None = None,
                          return_input: bool = False):
    """Lossy evolution of ``M`` independent discretized single-photon wavepackets.

    The input is a product state, so the channel is applied to one channel
    and the result tensored ``M`` times.
    """
    grid = _check_sizes(M, omega_grid)
    d = grid.size
    amp = spectral_amplitudes(spectrum or SpectrumModel(), grid)
    single = np.concatenate([[0.0], amp]).astype(complex)
    rho1 = DensityMatrix(np.outer(single, single.conj()))
    out1 = sp.csr_array(apply_channel_loss(rho1, 1, d, eta).entries)
    rho_in, rho_out = sp.csr_array(rho1.entries), out1
    for _ in range(M - 1):
        rho_in = sp.csr_array(sp.kron(rho_in, rho1.entries))
        rho_out = sp.csr_array(sp.kron(rho_out, out1))
    out = DensityMatrix(rho_out, validate=False)
    return (out, DensityMatrix(rho_in, validate=False)) if return_input else out


# -- sector analysis -------------------------------------------------------

def _sector_indices(pattern, d: int) -> np.ndarray:
    choices = [range(1, d + 1) if alive else (0,) for alive in pattern]
    return np.array([_flat_index(c, d) for c in itertools.product(*choices)], dtype=int)


def sector_projector(pattern, d: int) -> sp.csr_array:
    """Projector onto states whose surviving channels are exactly those flagged in ``pattern``."""
    n = (d + 1) ** len(pattern)
    idx = _sector_indices(pattern, d)
    return sp.csr_array((np.ones(idx.size), (idx, idx)), shape=(n, n))


def sector_block(rho: DensityMatrix, pattern, d: int) -> np.ndarray:
    """Dense block of ``rho`` on one survival sector, in frequency-tuple order."""
    idx = _sector_indices(pattern, d)
    R = sp.csr_array(rho.entries) if rho.is_sparse else rho.entries
    return np.asarray(R[idx][:, idx].toarray() if sp.issparse(R) else R[np.ix_(idx, idx)])


def sector_weights(rho: DensityMatrix, M: int, d: int) -> dict[tuple, float]:
    """Probability of every survival pattern (tuple of 0/1 per channel)."""
    diag = np.real(rho.entries.diagonal())
    return {
        pattern: float(diag[_sector_indices(pattern, d)].sum())
        for pattern in itertools.product((0, 1), repeat=M)
    }


def frequency_offdiagonal_max(rho: DensityMatrix, pattern, d: int) -> float:
    """Largest coherence between different frequency tuples inside one sector."""
    block = sector_block(rho, pattern, d)
    off = block - np.diag(np.diag(block))
    return float(np.abs(off).max()) if off.size else 0.0
