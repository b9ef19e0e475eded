"""Brute-force reference values, built by enumerating every loss pattern.

These deliberately avoid the binomial closed forms used in ``qpos.states``.
"""

import itertools
import math


def unentangled_variance_by_patterns(M, eta, dtau=1.0):
    """Return (variance given >= 1 photon, probability of >= 1 photon)."""
    acc = 0.0
    usable = 0.0
    for pattern in itertools.product((0, 1), repeat=M):
        m = sum(pattern)
        p = math.prod(eta if x else 1.0 - eta for x in pattern)
        if m:
            usable += p
            acc += p * dtau**2 / m
    return acc / usable, usable


def group_variance_by_patterns(G, K, eta, delta_Omega, delta_omega):
    """Variance of the group statistic by enumerating every photon's fate."""
    W2, w2 = delta_Omega**2, delta_omega**2
    acc = 0.0
    usable = 0.0
    probs = {}
    for pattern in itertools.product((0, 1), repeat=G * K):
        p = math.prod(eta if x else 1.0 - eta for x in pattern)
        g = sum(all(pattern[j * K:(j + 1) * K]) for j in range(G))
        if g == 0:
            continue
        usable += p
        probs[g] = probs.get(g, 0.0) + p
        tau2 = g / (4 * w2) * ((G - g) * W2 + w2) / (G * W2 + w2)
        acc += p * tau2 / (g * K) ** 2
    return acc / usable, usable, {g: v / usable for g, v in probs.items()}


def partial_variance_by_patterns(M, Q, eta, dtau=1.0):
    """Equal-weight average of retained channels, entangled block kept only whole."""
    acc = 0.0
    usable = 0.0
    for pattern in itertools.product((0, 1), repeat=M):
        p = math.prod(eta if x else 1.0 - eta for x in pattern)
        block = all(pattern[:Q])
        m = sum(pattern[Q:])
        n_chan = (Q if block else 0) + m
        if n_chan == 0:
            continue
        # the block contributes its summed time (variance dtau^2), each free photon dtau^2
        var = ((1 if block else 0) + m) * dtau**2 / n_chan**2
        usable += p
        acc += p * var
    return acc / usable, usable
