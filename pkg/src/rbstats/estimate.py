"""Two-length ratio estimators for the decay parameter and amplitude.

With a known offset ``B`` (or ``B = 0`` after differencing), two sequence
lengths ``m1 < m2`` determine the model exactly:

    p = x1**(-1/dm) * x2**(1/dm),    A = x1**(m2/dm) * x2**(-m1/dm)

where ``x_j = q(m_j) - B`` and ``dm = m2 - m1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .model import UnitarityParams
from .sampler import RBDataset, difference_summary, summarize

DEFAULT_TRUNCATION = 1e-6
AUTO_BIAS_THRESHOLD = 50


@dataclass(frozen=True)
class TwoPointSummary:
    """Means ``q1, q2`` and variances of those means ``v1, v2`` at two lengths."""

    m1: int
    m2: int
    q1: float
    q2: float
    v1: float
    v2: float
    B: float = 0.0
    k1: int | None = None
    k2: int | None = None

    def __post_init__(self):
        if not self.m1 < self.m2:
            raise ValueError(f"need m1 < m2, got m1={self.m1}, m2={self.m2}")
        if self.v1 < 0 or self.v2 < 0:
            raise ValueError("variances must be non-negative")

    @property
    def dm(self) -> int:
        return self.m2 - self.m1

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("m1", "m2", "q1", "q2", "v1", "v2", "B", "k1", "k2")}


def summary_from_dataset(ds: RBDataset, m1: int, m2: int, mode: str = "known-B", B: float | None = None) -> TwoPointSummary:
    """Collapse a dataset to a two-point summary.

    ``mode="difference"`` subtracts the flipped groups (offset 0);
    ``mode="known-B"`` uses the unflipped groups with the supplied ``B``.
    """
    if mode == "difference":
        d1, d2 = difference_summary(ds, m1), difference_summary(ds, m2)
        return TwoPointSummary(
            m1, m2, d1.mean, d2.mean, d1.variance, d2.variance, 0.0,
            min(d1.k0, d1.k1), min(d2.k0, d2.k1),
        )
    if mode != "known-B":
        raise ValueError(f"unknown mode {mode!r}")
    if B is None:
        raise ValueError("known-B mode needs the offset B")
    s1, s2 = summarize(ds, m1, 0), summarize(ds, m2, 0)
    return TwoPointSummary(
        m1, m2, s1.mean, s2.mean, s1.variance_of_mean, s2.variance_of_mean, B, s1.k, s2.k
    )


@dataclass(frozen=True)
class Estimate:
    p_hat: float
    A_hat: float
    variance_p: float
    interval: tuple[float, float]
    coverage: float
    method: str
    flags: tuple[str, ...] = ()
    covariance: tuple[tuple[float, float], tuple[float, float]] | None = None
    summary: TwoPointSummary | None = field(default=None, compare=False)

    @property
    def r_hat(self) -> float:
        return 1.0 - self.p_hat

    @property
    def B(self) -> float:
        return 0.0 if self.summary is None else self.summary.B

    def to_dict(self) -> dict:
        return {
            "schema": "rb-estimate/1",
            "p_hat": self.p_hat,
            "r_hat": self.r_hat,
            "A_hat": self.A_hat,
            "variance_p": self.variance_p,
            "interval": list(self.interval),
            "coverage": self.coverage,
            "method": self.method,
            "flags": list(self.flags),
            "covariance": None if self.covariance is None else [list(r) for r in self.covariance],
            "summary": None if self.summary is None else self.summary.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Estimate":
        cov = d.get("covariance")
        summ = d.get("summary")
        return cls(
            p_hat=d["p_hat"],
            A_hat=d["A_hat"],
            variance_p=d["variance_p"],
            interval=tuple(d["interval"]),
            coverage=d["coverage"],
            method=d["method"],
            flags=tuple(d.get("flags", ())),
            covariance=None if cov is None else tuple(tuple(r) for r in cov),
            summary=None if summ is None else TwoPointSummary(**summ),
        )


def _truncate(s: TwoPointSummary, delta: float):
    if delta <= 0:
        raise ValueError("truncation floor must be positive")
    flags = []
    x1, x2 = s.q1 - s.B, s.q2 - s.B
    if x1 < delta:
        x1 = delta
        flags.append("truncated_m1")
    if x2 < delta:
        x2 = delta
        flags.append("truncated_m2")
    return x1, x2, flags


def _power_term(x: float, alpha: float, v: float, correct: bool) -> float:
    """Estimate of ``x**alpha`` from ``x_hat``; optionally minus the second-order bias."""
    val = x**alpha
    if correct:
        val -= 0.5 * alpha * (alpha - 1.0) * x ** (alpha - 2.0) * v
    return val


def ratio_core(x1, x2, m1: int, m2: int):
    """Vectorized uncorrected ``(p, A)`` from offset-subtracted means."""
    dm = m2 - m1
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    # algebraically x1**(-1/dm) * x2**(1/dm) and x1**(m2/dm) * x2**(-m1/dm);
    # the ratio form returns p = 1 exactly for equal means
    ratio = x2 / x1
    p = ratio ** (1.0 / dm)
    A = x1 * ratio ** (-m1 / dm)
    return p, A


def _resolve_bias(bias_correct, s: TwoPointSummary) -> bool:
    if bias_correct == "auto" or bias_correct is None:
        ks = [k for k in (s.k1, s.k2) if k is not None]
        return bool(ks) and min(ks) < AUTO_BIAS_THRESHOLD
    if isinstance(bias_correct, str):
        return {"on": True, "off": False}[bias_correct]
    return bool(bias_correct)


def _log_covariance(x1, x2, s: TwoPointSummary) -> np.ndarray:
    """Delta-method covariance of ``(log A, log p)``."""
    dm = s.dm
    J = np.array([[s.m2 / dm, -s.m1 / dm], [-1.0 / dm, 1.0 / dm]])
    V = np.diag([s.v1 / x1**2, s.v2 / x2**2])
    return J @ V @ J.T


def ratio_estimate(s: TwoPointSummary, delta_trunc: float = DEFAULT_TRUNCATION, bias_correct="auto", k_cheb: float = 3.0) -> Estimate:
    """Ratio estimate with optional bias correction and a Chebyshev interval."""
    if not 0 < delta_trunc <= 0.01:
        raise ValueError("delta_trunc must lie in (0, 0.01]")
    x1, x2, flags = _truncate(s, delta_trunc)
    correct = _resolve_bias(bias_correct, s)
    dm = s.dm
    if correct:
        p = _power_term(x1, -1.0 / dm, s.v1, True) * _power_term(x2, 1.0 / dm, s.v2, True)
        A = _power_term(x1, s.m2 / dm, s.v1, True) * _power_term(x2, -s.m1 / dm, s.v2, True)
        flags.append("bias_corrected")
    else:
        p, A = (float(v) for v in ratio_core(x1, x2, s.m1, s.m2))
    if p > 1.0 or p < 0.0:
        p = min(max(p, 0.0), 1.0)
        flags.append("clamped")
    var_p = propagate_variance(s, delta_trunc)
    half = chebyshev_interval(s.v1 / x1**2 + s.v2 / x2**2, dm, k_cheb)
    C = _log_covariance(x1, x2, s) * np.outer([A, p], [A, p])
    return Estimate(
        p_hat=float(p),
        A_hat=float(A),
        variance_p=float(var_p),
        interval=(max(0.0, p - half), min(1.0, p + half)),
        coverage=1.0 - 1.0 / k_cheb**2,
        method="chebyshev",
        flags=tuple(flags),
        covariance=tuple(tuple(float(c) for c in row) for row in C),
        summary=s,
    )


def propagate_variance(s: TwoPointSummary, delta_trunc: float = DEFAULT_TRUNCATION) -> float:
    """First-order variance of ``p_hat``.

    Each factor ``x_j**a_j`` has variance ``x_j**(2a_j-2) a_j**2 v_j``; the
    product rule weights it by the square of the other factor.
    """
    x1, x2, _ = _truncate(s, delta_trunc)
    a1, a2 = -1.0 / s.dm, 1.0 / s.dm
    t1 = x1 ** (2 * a1 - 2) * a1**2 * s.v1
    t2 = x2 ** (2 * a2 - 2) * a2**2 * s.v2
    return float(t1 * x2 ** (2 * a2) + t2 * x1 ** (2 * a1))


def chebyshev_interval(var_q_sum: float, dm: int, k_cheb: float = 3.0) -> float:
    """Half-width ``k_cheb / dm * sqrt(var_q_sum)``; coverage at least ``1 - 1/k_cheb**2``.

    ``var_q_sum`` is the summed variance of the relative errors of the two
    offset-subtracted means, ``v_j / x_j**2``.
    """
    if var_q_sum < 0:
        raise ValueError("variance must be non-negative")
    if dm < 1:
        raise ValueError("dm must be at least 1")
    return k_cheb / dm * math.sqrt(var_q_sum)


def lognormal_sigma2(q1, q2, k1, k2, B):
    """Variance of the log ratio of two binomial proportions above an offset."""
    return q1 * (1 - q1) / (k1 * (q1 - B) ** 2) + q2 * (1 - q2) / (k2 * (q2 - B) ** 2)


def lognormal_interval(s1: int, k1: int, s2: int, k2: int, m1: int, m2: int, B: float, coverage: float = 0.95, delta_trunc: float = DEFAULT_TRUNCATION) -> Estimate:
    """Log-normal interval for single-shot data: ``s_j`` successes out of ``k_j`` sequences."""
    if not m1 < m2:
        raise ValueError("need m1 < m2")
    if not 0 < coverage < 1:
        raise ValueError("coverage must lie in (0, 1)")
    q1, q2 = s1 / k1, s2 / k2
    summary = TwoPointSummary(m1, m2, q1, q2, q1 * (1 - q1) / k1, q2 * (1 - q2) / k2, B, k1, k2)
    x1, x2, flags = _truncate(summary, delta_trunc)
    dm = m2 - m1
    p, A = ratio_core(x1, x2, m1, m2)
    p, A = float(p), float(A)
    if flags:
        flags.append("degenerate")
        return Estimate(min(p, 1.0), A, math.inf, (0.0, 1.0), coverage, "lognormal", tuple(flags), None, summary)
    sigma = math.sqrt(q1 * (1 - q1) / (k1 * x1**2) + q2 * (1 - q2) / (k2 * x2**2))
    z = norm.ppf(0.5 + coverage / 2)
    logp = math.log(p)
    lo, hi = math.exp(logp - z * sigma / dm), math.exp(logp + z * sigma / dm)
    if p > 1.0:
        p = 1.0
        flags.append("clamped")
    C = _log_covariance(x1, x2, summary) * np.outer([A, p], [A, p])
    return Estimate(
        p_hat=p,
        A_hat=A,
        variance_p=(p * sigma / dm) ** 2,
        interval=(lo, min(hi, 1.0)),
        coverage=coverage,
        method="lognormal",
        flags=tuple(flags),
        covariance=tuple(tuple(float(c) for c in row) for row in C),
        summary=summary,
    )


@dataclass(frozen=True)
class UnitarityEstimate:
    l: float
    u: float
    A_l: float
    A_u: float
    flags: tuple[str, ...] = ()

    def params(self) -> UnitarityParams:
        return UnitarityParams(
            A_l=min(max(self.A_l, 0.0), 1.0), l=self.l, A_u=min(max(self.A_u, 0.0), 1.0), u=self.u
        )

    def to_dict(self) -> dict:
        return {"schema": "rb-unitarity-estimate/1", "l": self.l, "u": self.u,
                "A_l": self.A_l, "A_u": self.A_u, "flags": list(self.flags)}


def unitarity_estimate(a1: float, a2: float, b1: float, b2: float, m1: int, m2: int, delta_trunc: float = DEFAULT_TRUNCATION) -> UnitarityEstimate:
    """Independent ratio estimates of the leakage and unitarity decays."""
    if not m1 < m2:
        raise ValueError("need m1 < m2")
    flags = []

    def floor(v, name):
        if not np.isfinite(v):
            raise ValueError(f"{name} is not finite")
        if v < delta_trunc:
            flags.append(f"truncated_{name}")
            return delta_trunc
        return v

    a1, a2 = floor(a1, "a1"), floor(a2, "a2")
    b1, b2 = floor(b1, "b1"), floor(b2, "b2")
    l, A_l = (float(v) for v in ratio_core(a1, a2, m1, m2))
    u, A_u = (float(v) for v in ratio_core(b1, b2, m1, m2))
    if l > 1.0:
        l = 1.0
        flags.append("clamped_l")
    if u > 1.0:
        u = 1.0
        flags.append("clamped_u")
    return UnitarityEstimate(l, u, A_l, A_u, tuple(flags))
