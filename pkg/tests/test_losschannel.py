import math

import numpy as np
import pytest
import scipy.sparse as sp

from qpos.losschannel import (
    DensityMatrix,
    apply_channel_loss,
    apply_loss,
    beam_splitter_channel,
    beam_splitter_check,
    channel_kraus_operators,
    fock_state,
    frequency_offdiagonal_max,
    kraus_operators,
    post_loss_entangled,
    post_loss_unentangled,
    pure_state,
    random_density_matrix,
    sector_block,
    sector_projector,
    sector_weights,
)
from qpos.spectrum import SpectrumModel, spectral_amplitudes

ETAS = [0.1, 0.36, 0.5, 0.9, 1.0]


# -- density matrices ------------------------------------------------------

def test_density_matrix_invariants_enforced():
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix([[0.5, 1j], [0.0, 0.5]])
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(np.eye(2))
    with pytest.raises(ValueError, match="positive"):
        DensityMatrix([[1.5, 0.0], [0.0, -0.5]])
    with pytest.raises(ValueError, match="square"):
        DensityMatrix(np.ones((2, 3)) / 2)


def test_density_matrix_is_immutable():
    rho = fock_state(1, 3)
    with pytest.raises(ValueError):
        rho.entries[0, 0] = 1.0


def test_sparse_density_matrix():
    rho = DensityMatrix(sp.csr_array(np.diag([0.25, 0.75])))
    assert rho.is_sparse and rho.dim == 2
    assert rho.trace() == pytest.approx(1.0)


# -- Kraus operators -------------------------------------------------------

def test_kraus_identity_at_unit_efficiency():
    ks = kraus_operators(1.0, 5)
    assert np.array_equal(ks.operators[0], np.eye(5))
    assert all(not V.any() for V in ks.operators[1:])


def test_kraus_dim_two_elements():
    eta = 0.3
    V0, V1 = kraus_operators(eta, 2).operators
    assert np.allclose(V0, np.diag([1.0, math.sqrt(eta)]), atol=0, rtol=1e-15)
    assert V1[0, 1] == pytest.approx(math.sqrt(1 - eta), rel=1e-15)
    assert V1[0, 0] == V1[1, 0] == V1[1, 1] == 0.0


def test_kraus_elements_match_operator_form():
    # V_n = ((1-eta)/eta)^(n/2) a^n / sqrt(n!) eta^(a^dag a / 2), evaluated in a larger space
    eta, dim = 0.42, 6
    big = dim + 4
    a = np.diag(np.sqrt(np.arange(1, big)), k=1)
    damp = np.diag(eta ** (np.arange(big) / 2))
    for n, V in enumerate(kraus_operators(eta, dim).operators):
        ref = ((1 - eta) / eta) ** (n / 2) * np.linalg.matrix_power(a, n) / math.sqrt(math.factorial(n)) @ damp
        assert np.allclose(V, ref[:dim, :dim], atol=1e-14)


@pytest.mark.parametrize("eta", ETAS)
def test_kraus_completeness(eta):
    ks = kraus_operators(eta, 7)
    assert np.abs(ks.completeness() - np.eye(7)).max() < 1e-12


@pytest.mark.parametrize("bad", [0.0, -0.2, 1.5, float("nan")])
def test_kraus_rejects_bad_eta(bad):
    with pytest.raises(ValueError):
        kraus_operators(bad, 3)


# -- apply_loss ------------------------------------------------------------

@pytest.mark.parametrize("eta", ETAS)
def test_single_photon_loss(eta):
    out = apply_loss(fock_state(1, 3), kraus_operators(eta, 3)).toarray()
    expected = eta * fock_state(1, 3).toarray() + (1 - eta) * fock_state(0, 3).toarray()
    assert np.abs(out - expected).max() < 1e-15


@pytest.mark.parametrize("eta", ETAS)
def test_two_photon_binomial_populations(eta):
    out = apply_loss(fock_state(2, 4), kraus_operators(eta, 4)).toarray()
    pops = np.real(np.diag(out))
    assert np.allclose(pops[[2, 1, 0]], [eta**2, 2 * eta * (1 - eta), (1 - eta) ** 2], atol=1e-15)
    assert pops[3] == 0.0


def test_vacuum_fixed_point():
    out = apply_loss(fock_state(0, 4), kraus_operators(0.2, 4))
    assert np.array_equal(out.toarray(), fock_state(0, 4).toarray())


def test_coherence_decays_with_sqrt_eta():
    eta = 0.49
    out = apply_loss(pure_state([1.0, 1.0]), kraus_operators(eta, 2)).toarray()
    assert out[0, 1] == pytest.approx(0.5 * math.sqrt(eta), rel=1e-14)


def test_apply_loss_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        apply_loss(fock_state(0, 3), kraus_operators(0.5, 4))


@pytest.mark.parametrize("seed", range(100))
def test_cptp_random_states(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 7))
    eta = float(rng.uniform(0.01, 1.0))
    rho = random_density_matrix(dim, rng)
    out = apply_loss(rho, kraus_operators(eta, dim))
    assert abs(out.trace() - 1.0) < 1e-12
    assert out.min_eigenvalue() >= -1e-10
    out.validate()


@pytest.mark.parametrize("seed", range(20))
def test_semigroup(seed):
    rng = np.random.default_rng(1000 + seed)
    dim = 6
    e1, e2 = rng.uniform(0.05, 1.0, size=2)
    rho = random_density_matrix(dim, rng)
    two_step = apply_loss(apply_loss(rho, kraus_operators(e1, dim)), kraus_operators(e2, dim))
    one_step = apply_loss(rho, kraus_operators(e1 * e2, dim))
    assert np.abs(two_step.toarray() - one_step.toarray()).max() < 1e-10


# -- beam splitter ---------------------------------------------------------

@pytest.mark.parametrize("eta", ETAS)
def test_beam_splitter_matches_kraus(eta):
    assert beam_splitter_check(eta, 6, max_photons=4) < 1e-8


def test_beam_splitter_identity_at_unit_efficiency():
    assert beam_splitter_check(1.0, 4) == 0.0


def test_beam_splitter_example_dim5():
    assert beam_splitter_check(0.36, 5, max_photons=3) < 1e-8


def test_beam_splitter_saturated_inputs():
    # with vacuum in the second port every input sector |k, n-k> fits inside the truncation,
    # so even inputs at the top level agree; the guard band is kept as the documented contract
    for eta in ETAS:
        assert beam_splitter_check(eta, 5, max_photons=4) < 1e-12


def test_beam_splitter_channel_trace_preserving_on_guarded_inputs():
    channel = beam_splitter_channel(0.7, 6)
    out = channel(fock_state(3, 6).toarray())
    assert abs(np.trace(out) - 1.0) < 1e-12


def test_beam_splitter_rejects_small_dim():
    with pytest.raises(ValueError):
        beam_splitter_check(0.5, 1)


# -- multi-channel ---------------------------------------------------------

def test_channel_kraus_single_bin_matches_mode_kraus():
    eta = 0.3
    ops = channel_kraus_operators(eta, 1)
    single = kraus_operators(eta, 2).operators
    assert len(ops) == 2
    assert all(np.allclose(a, b) for a, b in zip(ops, single))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_channel_kraus_complete(d):
    ops = channel_kraus_operators(0.6, d)
    total = sum(A.conj().T @ A for A in ops)
    assert np.abs(total - np.eye(d + 1)).max() < 1e-12


def test_entangled_unit_efficiency_is_identity():
    out, rho = post_loss_entangled(3, 1.0, [-0.5, 0.0, 0.5], return_input=True)
    assert abs(out.entries - rho.entries).max() < 1e-15


def test_entangled_M2_sector_weights():
    rho = post_loss_entangled(2, 0.5, [-0.3, 0.3])
    w = sector_weights(rho, 2, 2)
    for pattern in [(1, 1), (1, 0), (0, 1), (0, 0)]:
        assert w[pattern] == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("M,d", [(2, 2), (2, 4), (3, 3), (4, 2)])
@pytest.mark.parametrize("eta", [0.3, 0.8])
def test_entangled_structure(M, d, eta):
    grid = np.linspace(-1, 1, d)
    rho, rho_in = post_loss_entangled(M, eta, grid, return_input=True)
    assert abs(rho.trace() - 1.0) < 1e-12
    assert rho.hermiticity_error() < 1e-12
    full = tuple([1] * M)
    # the coherent block is the input scaled by eta^M
    P = sector_projector(full, d)
    assert abs(P @ rho.entries @ P - eta**M * rho_in.entries).max() < 1e-14
    for pattern, weight in sector_weights(rho, M, d).items():
        k = sum(pattern)
        assert weight == pytest.approx(eta**k * (1 - eta) ** (M - k), rel=1e-12)
        if pattern != full:
            assert frequency_offdiagonal_max(rho, pattern, d) < 1e-12
    assert frequency_offdiagonal_max(rho, full, d) > 0.01 * eta**M


def test_entangled_reduced_single_channel_is_diagonal():
    M, d = 3, 3
    rho = post_loss_entangled(M, 0.6, np.linspace(-1, 1, d)).toarray()
    reduced = np.einsum("ajbj->ab", rho.reshape(d + 1, (d + 1) ** (M - 1), d + 1, (d + 1) ** (M - 1)))
    assert np.abs(reduced - np.diag(np.diag(reduced))).max() < 1e-12


def test_entangled_no_cross_sector_coherence():
    M, d = 2, 3
    rho = post_loss_entangled(M, 0.4, np.linspace(-1, 1, d))
    P1 = sector_projector((1, 1), d)
    P0 = sector_projector((1, 0), d)
    assert abs(P1 @ rho.entries @ P0).max() < 1e-15


def test_unentangled_single_channel():
    eta, grid = 0.7, [-0.4, 0.1, 0.6]
    amp = spectral_amplitudes(SpectrumModel(), grid)
    phi = np.concatenate([[0.0], amp])
    expected = eta * np.outer(phi, phi) + (1 - eta) * np.diag([1.0, 0, 0, 0])
    out = post_loss_unentangled(1, eta, grid).toarray()
    assert np.abs(out - expected).max() < 1e-15


def test_unentangled_M2_sector_weights():
    rho = post_loss_unentangled(2, 0.5, [-0.3, 0.3])
    assert all(w == pytest.approx(0.25, abs=1e-15) for w in sector_weights(rho, 2, 2).values())


@pytest.mark.parametrize("M,d", [(2, 2), (3, 3), (2, 5)])
def test_unentangled_survivors_keep_coherence(M, d):
    eta = 0.6
    grid = np.linspace(-1, 1, d)
    amp = spectral_amplitudes(SpectrumModel(), grid)
    rho = post_loss_unentangled(M, eta, grid)
    for pattern in sector_weights(rho, M, d):
        k = sum(pattern)
        if k == 0:
            continue
        block = sector_block(rho, pattern, d)
        phi = amp
        for _ in range(k - 1):
            phi = np.kron(phi, amp)
        expected = eta**k * (1 - eta) ** (M - k) * np.outer(phi, phi)
        assert np.abs(block - expected).max() < 1e-14
        assert frequency_offdiagonal_max(rho, pattern, d) > 0


def test_unentangled_matches_direct_channel_application():
    M, d, eta = 2, 3, 0.45
    grid = np.linspace(-1, 1, d)
    out, rho_in = post_loss_unentangled(M, eta, grid, return_input=True)
    direct = apply_channel_loss(rho_in, M, d, eta)
    assert abs(out.entries - direct.entries).max() < 1e-14


@pytest.mark.parametrize("fn", [post_loss_entangled, post_loss_unentangled])
def test_size_limits(fn):
    with pytest.raises(ValueError, match="channels"):
        fn(5, 0.5, [0.0, 1.0])
    with pytest.raises(ValueError, match="grid"):
        fn(2, 0.5, np.linspace(0, 1, 9))
    with pytest.raises(ValueError):
        fn(2, 0.0, [0.0, 1.0])


def test_apply_channel_loss_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        apply_channel_loss(fock_state(0, 4), 2, 2, 0.5)
