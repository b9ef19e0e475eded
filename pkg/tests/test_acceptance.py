"""Acceptance criteria, one test each.

Every test reports a single PASS/FAIL line (collected in the pytest terminal
summary) with the measured value next to its tolerance.
"""

import csv
import io
import math
import os
import subprocess
import sys
import time

import numpy as np
from scipy.stats import ks_2samp

from oracles import unentangled_variance_by_patterns
from qpos.cli import main
from qpos.losschannel import (
    apply_loss,
    beam_splitter_check,
    frequency_offdiagonal_max,
    kraus_operators,
    post_loss_entangled,
    post_loss_unentangled,
    random_density_matrix,
    sector_block,
    sector_weights,
)
from qpos.montecarlo import attempt_accuracy, bootstrap_std_error, simulate, stream
from qpos.protocol import CLEAN, DETECTED, EveConfig, run_protocol_one, run_protocol_two, session_seed_stream
from qpos.spectrum import GroupSpectrum, SpectrumModel, spectral_amplitudes
from qpos.states import (
    GroupEntangled,
    MaxEntangled,
    PartialEntangled,
    Unentangled,
    gain_lambda,
    gain_lambda_root,
    group_lossy_std,
    retained_group_prob,
    threshold_eta,
)

DTAU = 1.0


def _run_std(batch):
    return float(np.std(batch.statistic[batch.usable], ddof=1))


def test_01_gain_at_unit_efficiency(criterion):
    errs = {M: abs(gain_lambda(M, 1.0) - math.sqrt(M)) for M in (1, 2, 4, 9, 16, 64)}
    worst = max(errs.values())
    criterion(1, worst <= 1e-12, f"max |Lambda(M,1) - sqrt(M)| = {worst:.2e} (tol 1e-12)")


def test_02_threshold_convergence(criterion):
    gaps = {M: abs(gain_lambda_root(M) - threshold_eta(M)) for M in (50, 60, 75, 100, 150, 200)}
    far = max(gaps.values())
    near = abs(gain_lambda_root(2) - threshold_eta(2))
    ok = far < 0.01 and near > 1e-3
    criterion(2, ok, f"max gap M>=50 = {far:.2e} (tol 0.01); gap at M=2 = {near:.4f} (> 1e-3)")


def test_03_entangled_monte_carlo(criterion):
    t0 = time.perf_counter()
    batch = simulate(MaxEntangled(3, 1), 1.0, 100_000, seed=3, dtau=DTAU)
    elapsed = time.perf_counter() - t0
    rel = abs(_run_std(batch) / (DTAU / 3) - 1)
    criterion(3, rel < 0.02 and elapsed < 5.0, f"relative std error {rel:.4f} (tol 0.02); runtime {elapsed:.2f} s (< 5 s)")


def test_04_lossy_unentangled(criterion):
    var, usable = unentangled_variance_by_patterns(2, 0.5, DTAU)
    target = math.sqrt(var / usable)
    oracle_ok = abs(target - math.sqrt(10 / 9) * DTAU) < 1e-14
    batch = simulate(Unentangled(2), 0.5, 100_000, seed=4, dtau=DTAU)
    value = attempt_accuracy(batch.statistic)
    err = bootstrap_std_error(batch.statistic, n_resamples=200, statistic=attempt_accuracy)
    z = (value - target) / err
    criterion(4, oracle_ok and abs(z) < 3,
              f"per-attempt std {value:.5f} vs sqrt(10/9) = {target:.5f}: {z:+.2f} bootstrap sigma (tol 3)")


def test_05_kraus_beam_splitter(criterion):
    dev = max(beam_splitter_check(eta, 6, max_photons=4) for eta in (0.1, 0.36, 0.5, 0.9, 1.0))
    rng = stream(5)
    trace_err = 0.0
    for _ in range(100):
        eta = float(rng.uniform(0.01, 1.0))
        out = apply_loss(random_density_matrix(6, rng), kraus_operators(eta, 6))
        trace_err = max(trace_err, abs(out.trace() - 1.0))
    criterion(5, dev < 1e-8 and trace_err < 1e-12,
              f"max channel deviation {dev:.2e} (tol 1e-8); max trace error {trace_err:.2e} (tol 1e-12)")


def test_06_loss_sector_structure(criterion):
    M, d, eta = 3, 4, 0.6
    grid = np.linspace(-1.5, 1.5, d)
    rho_en = post_loss_entangled(M, eta, grid)
    worst_en = max(
        frequency_offdiagonal_max(rho_en, p, d) for p in sector_weights(rho_en, M, d) if 0 < sum(p) < M
    )
    rho_un = post_loss_unentangled(M, eta, grid)
    amp = spectral_amplitudes(SpectrumModel(), grid)
    worst_un, min_coh = 0.0, np.inf
    for p in sector_weights(rho_un, M, d):
        k = sum(p)
        if k == 0:
            continue
        phi = amp
        for _ in range(k - 1):
            phi = np.kron(phi, amp)
        block = sector_block(rho_un, p, d)
        expected = eta**k * (1 - eta) ** (M - k) * np.outer(phi, phi.conj())
        worst_un = max(worst_un, float(np.abs(block - expected).max()))
        min_coh = min(min_coh, frequency_offdiagonal_max(rho_un, p, d))
    ok = worst_en < 1e-12 and worst_un < 1e-12 and min_coh > 0
    criterion(6, ok, f"entangled loss-sector coherence {worst_en:.1e} (tol 1e-12); "
                     f"unentangled survivors deviate from phi x phi* by {worst_un:.1e}, min coherence {min_coh:.3f}")


def test_07_partial_entanglement(criterion):
    rels = {}
    for M, Q in ((4, 1), (4, 2), (4, 4)):
        batch = simulate(PartialEntangled(M, Q), 1.0, 100_000, seed=7, dtau=DTAU, key=(Q,))
        target = DTAU / math.sqrt(M) * math.sqrt((M - Q + 1) / M)
        rels[(M, Q)] = abs(_run_std(batch) / target - 1)
    worst = max(rels.values())
    criterion(7, worst < 0.02, "relative std errors " + ", ".join(f"{k}: {v:.4f}" for k, v in rels.items())
              + " (tol 0.02)")


def test_08_group_formulas(criterion):
    worst_sum = 0.0
    for G in range(1, 13):
        for K in range(1, 7):
            for eta in np.linspace(0.05, 1.0, 12):
                total = math.fsum(retained_group_prob(G, K, eta, g) for g in range(1, G + 1))
                worst_sum = max(worst_sum, abs(total - 1.0))
    spec = GroupSpectrum.from_ratio(2.0)
    batch = simulate(GroupEntangled(3, 2, spec), 0.7, 100_000, seed=8)
    stat = batch.statistic[batch.usable]
    target = group_lossy_std(3, 2, 0.7, spec)
    z = (np.std(stat, ddof=1) - target) / bootstrap_std_error(stat, n_resamples=200)
    criterion(8, worst_sum < 1e-12 and abs(z) < 3,
              f"max |sum P_g - 1| = {worst_sum:.1e} (tol 1e-12); group std {z:+.2f} bootstrap sigma (tol 3)")


def test_09_region_map(criterion, capsys):
    assert main(["region-map"]) == 0
    labels = {r["region_label"] for r in csv.DictReader(io.StringIO(capsys.readouterr().out))}
    wanted = {"en>G>un", "G>en>un", "G>un>en", "un>G>en"}
    criterion(9, wanted <= labels, f"orderings found: {sorted(labels & wanted)}; missing: {sorted(wanted - labels)}")


def test_10_protocol_one(criterion):
    r = 10_000
    res = run_protocol_one(5, 1.0, DTAU, 3.0, rng=stream(10, 0), r=r)
    rel = abs(np.std(res.per_copy, ddof=1) / (DTAU / 4) - 1)
    shifted = run_protocol_one(5, 1.0, DTAU, 250.0, rng=stream(10, 1), r=r)
    # one broadcast time per copy, so each sample has r = 10^4 independent values
    pval = ks_2samp(res.bob_broadcasts[:, 0], shifted.bob_broadcasts[:, 0]).pvalue
    criterion(10, rel < 0.02 and pval > 0.01, f"per-copy std relative error {rel:.4f} (tol 0.02); KS p = {pval:.3f} (> 0.01)")


def test_11_protocol_two(criterion):
    clean = sum(
        run_protocol_two(3, 40, 1.0, DTAU, rng=session_seed_stream(11, s)).verdict == CLEAN for s in range(100)
    )
    sessions, hits, expected, var = 500, 0, 0.0, 0.0
    sigma_omega = 1.0 / (2.0 * DTAU)
    for s in range(sessions):
        t = run_protocol_two(3, 8, 1.0, DTAU, freq_bin=sigma_omega, eve=EveConfig("measure_time", 1.0),
                             rng=session_seed_stream(111, s))
        p = t.detection_probability
        hits += t.verdict == DETECTED
        expected += p
        var += p * (1 - p)
    z = (hits - expected) / math.sqrt(var)
    criterion(11, clean == 100 and abs(z) < 2.576,
              f"clean sessions {clean}/100; detections {hits} vs 1-c^n prediction {expected:.1f} "
              f"({z:+.2f} sigma, 99% CI)")


def test_12_determinism(criterion, tmp_path):
    commands = {
        "accuracy": ["accuracy", "--family", "un", "--M", "2", "4", "--eta", "0.5", "1"],
        "region-map": ["region-map"],
        "gain-surface": ["gain-surface"],
        "montecarlo": ["montecarlo", "--family", "partial", "--M", "4", "--Q", "2", "--eta", "0.7",
                       "--runs", "50000"],
        "kraus-verify": ["kraus-verify"],
        "protocol": ["protocol", "--mode", "two", "--M", "3", "--r", "16", "--sessions", "20"],
    }
    mismatched = []
    for name, argv in commands.items():
        outputs = []
        for threads in ("1", "4"):
            path = tmp_path / f"{name}-{threads}.out"
            env = dict(os.environ, QPOS_THREADS=threads)
            subprocess.run([sys.executable, "-m", "qpos", *argv, "--seed", "12", "--out", str(path)],
                           check=True, env=env)
            outputs.append(path.read_bytes())
        if outputs[0] != outputs[1] or not outputs[0]:
            mismatched.append(name)
    criterion(12, not mismatched, f"{len(commands)} commands compared at QPOS_THREADS 1 and 4; differing: {mismatched}")
