"""Discrete-event simulation of the two crypto-positioning protocols.

Both protocols share copies of the ``M``-photon maximally entangled state.
Alice keeps photon 0 and measures it locally; the other ``M - 1`` photons
travel the unknown distance to Bob.

Arrival times are recorded modulo a clock frame of length ``frame``. Inside
a copy the individual times are uniformly random over the frame, and only
their sum carries the timing information (it has the single-photon width
``dtau``). Bob's times, taken alone, are therefore uniform whatever the
distance; Alice recovers it from the sum of her time and Bob's.

Protocol one: Bob broadcasts all his times; only Alice can decode them.

Protocol two (BB84-like): each party picks a time or frequency basis per
copy. Mismatched copies are dropped, frequency-frequency copies are
compared bin by bin to reveal an eavesdropper, and the time-time copies
are split so that Alice broadcasts her times for the first half and Bob
his for the second half.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.stats import norm

from ._validation import check_count, check_eta, check_positive, check_random_state
from .montecarlo import Estimate, RunBatch, estimate, stream

__all__ = [
    "Basis",
    "EveStrategy",
    "EveConfig",
    "EntangledCopy",
    "CopyRecord",
    "ProtocolOneResult",
    "ProtocolTranscript",
    "ProtocolInconclusive",
    "CLEAN",
    "DETECTED",
    "INCONCLUSIVE",
    "default_frame",
    "make_copy",
    "eve_intercept",
    "decode_distance",
    "run_protocol_one",
    "run_protocol_two",
    "collision_probability",
    "detection_probability",
    "frequency_bin",
    "session_seed_stream",
]

CLEAN = "clean"
DETECTED = "eavesdropper_detected"
INCONCLUSIVE = "inconclusive"


class Basis(str, Enum):
    TIME = "time"
    FREQUENCY = "frequency"


class EveStrategy(str, Enum):
    NONE = "none"
    MEASURE_TIME = "measure_time"
    MEASURE_FREQUENCY = "measure_frequency"


@dataclass(frozen=True)
class EveConfig:
    """Eavesdropper acting on a random ``fraction`` of the copies."""

    strategy: EveStrategy = EveStrategy.NONE
    fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "strategy", EveStrategy(self.strategy))
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {self.fraction}")


class ProtocolInconclusive(RuntimeError):
    """No copy survived loss and sifting, so nothing can be concluded."""


@dataclass(frozen=True)
class EntangledCopy:
    """One shared copy of the entangled state.

    ``omega`` is the common frequency seen by Alice; ``bob_omega`` is what Bob
    would find, equal to ``omega`` unless the copy was disturbed. ``offsets``
    are the intrinsic per-photon times (modulo the frame) before travel.
    """

    omega: float
    offsets: tuple
    tampered: bool = False
    bob_omega: float | None = None
    eve_record: tuple | None = None

    def __post_init__(self):
        if len(self.offsets) < 2:
            raise ValueError("a copy needs at least two photons")
        if self.bob_omega is None:
            object.__setattr__(self, "bob_omega", self.omega)

    @property
    def M(self) -> int:
        return len(self.offsets)


def default_frame(dtau: float) -> float:
    return 1.0e4 * dtau


def make_copy(M: int, dtau: float, sigma_omega: float, frame: float,
              rng: np.random.Generator) -> EntangledCopy:
    """Draw one copy: a shared frequency and times whose sum has width ``dtau``."""
    M = check_count(M, "M", minimum=2)
    omega = rng.normal(0.0, sigma_omega)
    rest = rng.uniform(0.0, frame, M - 1)
    total = rng.normal(0.0, dtau)
    first = (total - rest.sum()) % frame
    return EntangledCopy(float(omega), (float(first), *map(float, rest)))


def eve_intercept(copy: EntangledCopy, strategy, rng: np.random.Generator | None = None,
                  sigma_omega: float = 0.5) -> EntangledCopy:
    """Let the eavesdropper act on the photons travelling to Bob.

    ``measure_time`` collapses the frequency correlation: Bob's frequency is
    redrawn independently of Alice's. Eve records Bob's photon times, which
    are uniform over the frame. ``measure_frequency`` leaves the correlation
    intact; Eve learns the shared frequency only.
    """
    strategy = EveStrategy(strategy)
    if strategy is EveStrategy.NONE:
        return copy
    if strategy is EveStrategy.MEASURE_FREQUENCY:
        return replace(copy, eve_record=(copy.bob_omega,))
    rng = check_random_state(rng)
    fresh = float(rng.normal(0.0, sigma_omega))
    return replace(copy, tampered=True, bob_omega=fresh, eve_record=copy.offsets[1:])


def _wrap(x, frame):
    return (np.asarray(x) + frame / 2.0) % frame - frame / 2.0


def decode_distance(alice_time, bob_times, frame: float):
    """Distance from Alice's local time and Bob's ``M - 1`` times of one copy."""
    bob_times = np.atleast_2d(bob_times)
    total = (np.asarray(alice_time) + bob_times.sum(axis=-1)) % frame
    return _wrap(total, frame) / bob_times.shape[-1]


def _check_distance(true_distance: float, M: int, frame: float) -> None:
    if abs(true_distance) * (M - 1) >= frame / 4.0:
        raise ValueError(
            f"distance {true_distance} too large for frame {frame}; use a longer frame"
        )


# -- protocol one ----------------------------------------------------------

@dataclass(frozen=True)
class ProtocolOneResult:
    """Outcome of protocol one over ``r`` copies.

    ``per_copy`` holds Alice's decoded distance for each copy (NaN when any
    photon of the copy was lost); ``bob_broadcasts`` is the public record,
    one row of ``M - 1`` times per copy (NaN rows for lost copies).
    """

    estimate: Estimate
    per_copy: np.ndarray
    bob_broadcasts: np.ndarray


def run_protocol_one(M: int, eta: float, dtau: float, true_distance: float,
                     rng=None, r: int = 1000, frame: float | None = None) -> ProtocolOneResult:
    """Alice-only positioning from Bob's public broadcast.

    Raises :class:`ProtocolInconclusive` if every copy lost a photon.
    """
    M = check_count(M, "M", minimum=2)
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    r = check_count(r, "r")
    frame = default_frame(dtau) if frame is None else check_positive(frame, "frame")
    _check_distance(true_distance, M, frame)
    rng = check_random_state(rng)

    rest = rng.uniform(0.0, frame, (r, M - 1))
    total = rng.normal(0.0, dtau, r)
    alice = (total - rest.sum(axis=1)) % frame
    bob = (rest + true_distance) % frame
    ok = (rng.random((r, M)) < eta).all(axis=1)

    per_copy = np.where(ok, decode_distance(alice, bob, frame), np.nan)
    broadcasts = np.where(ok[:, None], bob, np.nan)
    if not ok.any():
        raise ProtocolInconclusive("every copy lost at least one photon")
    return ProtocolOneResult(estimate(_as_runs(per_copy)), per_copy, broadcasts)


def _as_runs(per_copy):
    n = len(per_copy)
    return RunBatch(np.zeros((n, 0)), np.asarray(per_copy, dtype=float), np.zeros(n, dtype=int))


# -- protocol two ----------------------------------------------------------

def frequency_bin(omega: float, width: float) -> int:
    return int(math.floor(omega / width))


def collision_probability(sigma_omega: float, width: float) -> float:
    """Chance that two independent frequency draws fall into the same bin."""
    sigma_omega = check_positive(sigma_omega, "sigma_omega")
    width = check_positive(width, "width")
    reach = int(math.ceil(12.0 * sigma_omega / width)) + 1
    edges = np.arange(-reach, reach + 1) * width
    p = np.diff(norm.cdf(edges / sigma_omega))
    return float(np.sum(p * p))


def detection_probability(n_checked: int, c: float) -> float:
    """Probability that at least one of ``n_checked`` disturbed copies fails the frequency check."""
    return 1.0 - c**n_checked


@dataclass
class CopyRecord:
    index: int
    lost: bool
    tampered: bool
    alice_basis: str | None = None
    bob_basis: str | None = None
    sifted: bool = False
    alice_freq_bin: int | None = None
    bob_freq_bin: int | None = None
    freq_check_pass: bool | None = None
    alice_broadcast: float | None = None
    bob_broadcast: list | None = None
    # private measurement results, not part of the public transcript
    _alice_time: float | None = field(default=None, repr=False)
    _bob_times: tuple | None = field(default=None, repr=False)

    def public(self) -> dict:
        return {k: v for k, v in asdict(self).items() if not k.startswith("_")}


@dataclass
class ProtocolTranscript:
    copies: list
    verdict: str
    estimate: Estimate | None
    alice_estimate: Estimate | None
    bob_estimate: Estimate | None
    n_checked: int
    n_checked_tampered: int
    collision_probability: float

    @property
    def n_sifted(self) -> int:
        return sum(c.sifted for c in self.copies)

    @property
    def n_time(self) -> int:
        return sum(c.sifted and c.alice_basis == Basis.TIME.value for c in self.copies)

    @property
    def detection_probability(self) -> float:
        return detection_probability(self.n_checked_tampered, self.collision_probability)

    def summary(self) -> dict:
        def est(e):
            return None if e is None else e.as_dict()

        return {
            "verdict": self.verdict,
            "copies": len(self.copies),
            "lost": sum(c.lost for c in self.copies),
            "sifted": self.n_sifted,
            "time_time": self.n_time,
            "n_checked": self.n_checked,
            "n_checked_tampered": self.n_checked_tampered,
            "collision_probability": self.collision_probability,
            "detection_probability": self.detection_probability,
            "estimate": est(self.estimate),
            "alice_estimate": est(self.alice_estimate),
            "bob_estimate": est(self.bob_estimate),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "copy", **c.public()}, sort_keys=True) for c in self.copies]
        lines.append(json.dumps({"type": "summary", **self.summary()}, sort_keys=True))
        return "\n".join(lines) + "\n"


def _maybe_estimate(values):
    values = [v for v in values if v is not None]
    return estimate(_as_runs(np.array(values))) if values else None


def run_protocol_two(M: int, r: int, eta: float, dtau: float, freq_bin: float | None = None,
                     eve: EveConfig | None = None, rng=None, true_distance: float = 0.0,
                     frame: float | None = None) -> ProtocolTranscript:
    """BB84-style session over ``r`` copies.

    ``freq_bin`` defaults to one eighth of the single-photon frequency
    spread. The verdict is ``"inconclusive"`` when no copy survives sifting.
    """
    M = check_count(M, "M", minimum=2)
    r = check_count(r, "r", minimum=4)
    eta = check_eta(eta)
    dtau = check_positive(dtau, "dtau")
    sigma_omega = 1.0 / (2.0 * dtau)
    freq_bin = sigma_omega / 8.0 if freq_bin is None else check_positive(freq_bin, "freq_bin")
    eve = eve or EveConfig()
    frame = default_frame(dtau) if frame is None else check_positive(frame, "frame")
    _check_distance(true_distance, M, frame)
    rng = check_random_state(rng)

    records = []
    for i in range(r):
        copy = make_copy(M, dtau, sigma_omega, frame, rng)
        if eve.strategy is not EveStrategy.NONE and rng.random() < eve.fraction:
            copy = eve_intercept(copy, eve.strategy, rng, sigma_omega)
        lost = not bool((rng.random(M) < eta).all())
        rec = CopyRecord(i, lost, copy.tampered)
        records.append(rec)
        if lost:
            continue
        a = Basis.TIME if rng.random() < 0.5 else Basis.FREQUENCY
        b = Basis.TIME if rng.random() < 0.5 else Basis.FREQUENCY
        rec.alice_basis, rec.bob_basis = a.value, b.value
        rec.sifted = a is b
        if a is Basis.TIME:
            rec._alice_time = copy.offsets[0]
        if b is Basis.TIME:
            rec._bob_times = tuple((np.array(copy.offsets[1:]) + true_distance) % frame)
        if rec.sifted and a is Basis.FREQUENCY:
            rec.alice_freq_bin = frequency_bin(copy.omega, freq_bin)
            rec.bob_freq_bin = frequency_bin(copy.bob_omega, freq_bin)
            rec.freq_check_pass = rec.alice_freq_bin == rec.bob_freq_bin

    checked = [c for c in records if c.freq_check_pass is not None]
    c_prob = collision_probability(sigma_omega, freq_bin)
    n_tampered = sum(c.tampered for c in checked)
    if not any(c.sifted for c in records):
        verdict = INCONCLUSIVE
    elif all(c.freq_check_pass for c in checked):
        verdict = CLEAN
    else:
        verdict = DETECTED

    est = alice_est = bob_est = None
    if verdict == CLEAN:
        timed = [c for c in records if c.sifted and c.alice_basis == Basis.TIME.value]
        half = (len(timed) + 1) // 2
        alice_vals, bob_vals = [], []
        for k, c in enumerate(timed):
            d_hat = float(decode_distance(c._alice_time, c._bob_times, frame)[0])
            if k < half:
                # Alice announces her time; Bob decodes
                c.alice_broadcast = c._alice_time
                bob_vals.append(d_hat)
            else:
                c.bob_broadcast = list(c._bob_times)
                alice_vals.append(d_hat)
        alice_est = _maybe_estimate(alice_vals)
        bob_est = _maybe_estimate(bob_vals)
        est = _maybe_estimate(bob_vals + alice_vals)
    return ProtocolTranscript(records, verdict, est, alice_est, bob_est,
                              len(checked), n_tampered, c_prob)


def session_seed_stream(seed: int, session: int) -> np.random.Generator:
    """Generator for session ``session`` of a batch started from ``seed``."""
    return stream(seed, 0x5E55, session)
