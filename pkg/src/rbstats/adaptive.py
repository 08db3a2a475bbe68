"""Self-terminating doubling estimator with multiplicative precision in ``r = 1 - p``.

Lengths ``1, 5, 9, 17, ... (2**i + 1)`` are sampled ``t`` times each until the
estimated signal falls to a third of its value at length 1; the decay
parameter then follows from the ratio of the first and last estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import cliffsim
from .model import DecayParams, eval_difference
from .sampler import RBDataset

EPSILON_MAX = 1.0 / 16.0


class AdaptiveError(RuntimeError):
    pass


class ReplayDataError(AdaptiveError):
    """Recorded data cannot serve the requested shots."""


class ShotOracle(Protocol):
    def __call__(self, m: int, t: int) -> float:
        """Sum of ``t`` single-shot values whose mean is ``A p**m`` (offset already removed)."""


@dataclass(frozen=True)
class AdaptiveConfig:
    epsilon: float
    delta: float
    t: int | str = "auto"
    max_doublings: int = 40
    ap_lower: float = 0.25

    def __post_init__(self):
        if not 0 < self.epsilon < EPSILON_MAX:
            raise ValueError(f"epsilon must lie in (0, 1/16), got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.max_doublings < 2:
            raise ValueError("max_doublings must be at least 2")
        if not 0 < self.ap_lower <= 1:
            raise ValueError("ap_lower must lie in (0, 1]")
        if self.t != "auto" and (int(self.t) != self.t or self.t < 1):
            raise ValueError(f"t must be a positive integer or 'auto', got {self.t!r}")

    def shots(self) -> int:
        if self.t == "auto":
            return required_shots(self.epsilon, self.delta, self.max_doublings, self.ap_lower)
        return int(self.t)


@dataclass(frozen=True)
class TraceEntry:
    i: int
    m: int
    t: int
    q_hat: float


@dataclass(frozen=True)
class AdaptiveResult:
    p_hat: float
    ell: int
    m: int
    total_shots: int
    trace: tuple[TraceEntry, ...] = field(default_factory=tuple)
    flags: tuple[str, ...] = ()

    @property
    def r_hat(self) -> float:
        return 1.0 - self.p_hat

    def to_dict(self) -> dict:
        return {
            "schema": "rb-adaptive/1",
            "p_hat": self.p_hat,
            "r_hat": self.r_hat,
            "ell": self.ell,
            "m": self.m,
            "total_shots": self.total_shots,
            "trace": [{"i": e.i, "m": e.m, "t": e.t, "q_hat": e.q_hat} for e in self.trace],
            "flags": list(self.flags),
        }


def required_shots(epsilon: float, delta: float, ell_bound: int, ap_lower: float = 0.25) -> int:
    """Shots per estimate so that all ``ell_bound`` estimates land in their bands w.p. ``1 - delta``.

    Hoeffding plus a union bound over ``ell_bound`` estimates for outcomes of
    range 2, with the band ``ap_lower * epsilon``.
    """
    if epsilon <= 0 or epsilon >= 1 or delta <= 0 or ell_bound <= 0 or ap_lower <= 0:
        raise ValueError("epsilon in (0, 1), positive delta, ell_bound and ap_lower required")
    c = 2.0 / ap_lower**2
    return math.ceil(c / epsilon**2 * math.log(2.0 * ell_bound / delta))


def check_pm_window(p: float, m: int, epsilon: float) -> bool:
    pm = p**m
    return (1 - 4 * epsilon) ** 2 / 9 < pm <= (1 + 4 * epsilon) / 3


def bracket_bounds(p: float, m: int, epsilon: float) -> tuple[float, float]:
    """Worst-case ``(p_lo, p_hi)`` when every relative estimation error is at most ``epsilon``."""
    pm = p**m
    lo_ratio = max((1 - epsilon / pm) / (1 + epsilon), 0.0)
    hi_ratio = (1 + epsilon / pm) / (1 - epsilon)
    return p * lo_ratio ** (1.0 / m), p * hi_ratio ** (1.0 / m)


def run_adaptive(oracle: ShotOracle, cfg: AdaptiveConfig) -> AdaptiveResult:
    t = cfg.shots()
    trace = []
    total = 0

    def estimate(i, m):
        nonlocal total
        q = float(oracle(m, t)) / t
        total += t
        trace.append(TraceEntry(i, m, t, q))
        return q

    i = 1
    q1 = estimate(1, 1)
    if q1 <= 0:
        raise AdaptiveError(f"first estimate {q1} is not positive; no usable signal at m=1")
    qi = q1
    while qi > q1 / 3.0:
        if i >= cfg.max_doublings:
            raise AdaptiveError(
                f"no exit after {cfg.max_doublings} doublings; p is too close to 1 for the cap"
            )
        i += 1
        qi = estimate(i, 2**i + 1)
    ell = i
    m = 2**ell
    flags = ()
    ratio = qi / q1
    if ratio < 0:
        ratio = 0.0
        flags = ("clamped",)
    return AdaptiveResult(ratio ** (1.0 / m), ell, m, total, tuple(trace), flags)


# ----------------------------------------------------------------------------
# oracle adapters


class AnalyticOracle:
    """Bernoulli shots with success probability ``A p^m`` (difference-mode parameters)."""

    def __init__(self, params: DecayParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng

    def __call__(self, m: int, t: int) -> float:
        return float(self.rng.binomial(t, eval_difference(self.params, m)))


class ExactOracle:
    """Returns ``t`` times the exact mean; the infinite-shot idealization."""

    def __init__(self, params: DecayParams):
        self.params = params

    def __call__(self, m: int, t: int) -> float:
        return t * eval_difference(self.params, m)


class GateLevelOracle:
    """One fresh random sequence per shot, with the flip compiled in at random.

    A shot scores +1 when the outcome matches the one expected for its
    compiled bit and -1 otherwise, so the mean is ``q(m|0) - q(m|1)``.
    """

    def __init__(self, noise, rng: np.random.Generator, n_qubits: int = 1, batch: int = 4096):
        self.noise = noise
        self.rng = rng
        self.n_qubits = n_qubits
        self.batch = batch

    def __call__(self, m: int, t: int) -> float:
        total = 0.0
        done = 0
        while done < t:
            size = min(self.batch, t - done)
            bits = self.rng.integers(2, size=size)
            q = np.empty(size)
            for b in (0, 1):
                sel = bits == b
                if not sel.any():
                    continue
                gates, inv = cliffsim.sample_sequences(self.n_qubits, m, b, int(sel.sum()), self.rng)
                q[sel] = cliffsim.survival_probabilities(self.n_qubits, gates, inv, self.noise)
            outcome = self.rng.random(size) < np.clip(q, 0, 1)
            expected = np.where(bits == 0, outcome, ~outcome)
            total += float(np.sum(2.0 * expected - 1.0))
            done += size
        return total


class ReplayOracle:
    """Serve shots from a recorded single-shot dataset, consuming sequences in order.

    ``mode="known-B"`` returns successes minus ``B`` per shot; ``mode="difference"``
    splits the request between the two compiled-bit groups.
    """

    def __init__(self, ds: RBDataset, mode: str = "known-B", B: float = 0.0):
        if mode not in ("known-B", "difference"):
            raise ValueError(f"unknown mode {mode!r}")
        self.ds = ds
        self.mode = mode
        self.B = B
        self._cursor: dict[tuple[int, int], int] = {}

    def _take(self, m: int, b: int, count: int) -> np.ndarray:
        if not self.ds.has(m, b):
            raise ReplayDataError(f"recorded data has no group m={m}, b={b}")
        pt = self.ds.group(m, b)
        if np.any(pt.shots != 1):
            raise ReplayDataError("replay needs single-shot sequences")
        start = self._cursor.get((m, b), 0)
        if start + count > pt.k:
            raise ReplayDataError(f"only {pt.k - start} unused shots left at m={m}, b={b}; {count} requested")
        self._cursor[(m, b)] = start + count
        return pt.successes[start : start + count]

    def __call__(self, m: int, t: int) -> float:
        if self.mode == "known-B":
            return float(np.sum(self._take(m, 0, t)) - self.B * t)
        if t < 2:
            raise ReplayDataError("difference replay needs at least two shots per estimate")
        t0 = (t + 1) // 2
        s0 = self._take(m, 0, t0)
        s1 = self._take(m, 1, t - t0)
        return float(t * (s0.mean() - s1.mean()))
