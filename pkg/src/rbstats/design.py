"""Choosing the second sequence length, and the sampling law of the ratio estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import binom, norm

from .estimate import DEFAULT_TRUNCATION, lognormal_sigma2, ratio_core
from .model import DecayParams, eval_decay

EXACT_K_LIMIT = 2000


@dataclass(frozen=True)
class DesignInput:
    params: DecayParams
    m1: int = 4
    k1: int = 1
    k2: int = 1

    def __post_init__(self):
        if self.m1 < 1:
            raise ValueError("m1 must be at least 1")
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError("sequence counts must be positive")


def sigma2(inp: DesignInput, m2) -> float:
    """Variance of ``log[(q2 - B) / (q1 - B)]`` under binomial sampling."""
    if m2 <= inp.m1:
        raise ValueError("need m2 > m1")
    P = inp.params
    q1, q2 = eval_decay(P, inp.m1), eval_decay(P, m2)
    if q1 <= P.B or q2 <= P.B:
        raise ValueError("model mean does not exceed the offset")
    return float(lognormal_sigma2(q1, q2, inp.k1, inp.k2, P.B))


def log_variance_objective(params: DecayParams, m1: int, m2) -> float:
    """Equal-``k`` objective whose argmin over ``m2`` minimizes the variance of ``log p_hat``."""
    p = params.p
    q1, q2 = eval_decay(params, m1), eval_decay(params, m2)
    total = p ** (-2 * m1) * q1 * (1 - q1) + p ** (-2.0 * m2) * q2 * (1 - q2)
    return math.log(total) - 2.0 * math.log(m2 - m1)


def weighted_objective(inp: DesignInput, m2) -> float:
    """``log(sigma2 / dm^2)`` with the actual sequence counts."""
    return math.log(sigma2(inp, m2)) - 2.0 * math.log(m2 - inp.m1)


def _objective(inp: DesignInput, weighted: bool):
    if weighted:
        return lambda m2: weighted_objective(inp, m2)
    return lambda m2: log_variance_objective(inp.params, inp.m1, m2)


def brute_force_m2(inp: DesignInput, weighted: bool = False, upper: int | None = None) -> int:
    """Integer scan over ``[m1 + 1, upper]``; ``upper`` defaults to ``20 / (1 - p)``."""
    p = inp.params.p
    if p >= 1.0:
        raise ValueError("no finite optimum for p = 1")
    if upper is None:
        upper = math.ceil(20.0 / (1.0 - p))
    f = _objective(inp, weighted)
    ms = range(inp.m1 + 1, upper + 1)
    vals = [f(m) for m in ms]
    return ms[int(np.argmin(vals))]


def optimal_m2(inp: DesignInput, weighted: bool = False, method: str = "golden") -> int:
    """Integer ``m2`` minimizing the estimator variance.

    Golden-section search on ``u = log(m2 - m1)`` starting from
    ``m2 = -1/log p``, then the better of the two neighbouring integers.
    ``method="brute"`` scans integers instead.
    """
    p = inp.params.p
    if p >= 1.0:
        raise ValueError("no finite optimum for p = 1")
    if method == "brute":
        return brute_force_m2(inp, weighted)
    if method != "golden":
        raise ValueError(f"unknown method {method!r}")
    f = _objective(inp, weighted)
    m1 = inp.m1
    start = max(-1.0 / math.log(p), m1 + 1.0)
    u0 = math.log(start - m1)

    def g(u):
        return f(m1 + math.exp(u))

    res = minimize_scalar(g, bracket=(u0 - 0.1, u0 + 0.1), method="golden", options={"xtol": 1e-10})
    m_cont = m1 + math.exp(res.x)
    candidates = {max(m1 + 1, math.floor(m_cont)), max(m1 + 1, math.ceil(m_cont))}
    return min(sorted(candidates), key=f)


def heuristic_m2(p: float, variant: str = "half") -> int:
    """``ceil(1/(2(1-p)))``; ``variant="full"`` gives the older ``ceil(1/(1-p))``."""
    if not 0 < p < 1:
        raise ValueError("heuristic needs 0 < p < 1")
    scale = {"half": 2.0, "full": 1.0}[variant]
    return math.ceil(round(1.0 / (scale * (1.0 - p)), 9))


def variance_landscape(inp: DesignInput, m2s, weighted: bool = True) -> list[tuple[int, float]]:
    """Variance of ``log p_hat`` at each candidate ``m2``."""
    out = []
    for m2 in m2s:
        if weighted:
            v = sigma2(inp, m2) / (m2 - inp.m1) ** 2
        else:
            v = math.exp(log_variance_objective(inp.params, inp.m1, m2))
        out.append((int(m2), v))
    return out


# ----------------------------------------------------------------------------
# distribution of p_hat


@dataclass(frozen=True)
class CdfTable:
    grid: np.ndarray
    probs: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        g, pr = np.asarray(self.grid, float), np.asarray(self.probs, float)
        if g.shape != pr.shape or g.size == 0:
            raise ValueError("grid and probabilities must be non-empty and aligned")
        if np.any(np.diff(g) < 0):
            raise ValueError("grid must be ascending")
        if np.any(np.diff(pr) < -1e-15) or pr.min() < 0 or pr.max() > 1 + 1e-12:
            raise ValueError("probabilities must be a nondecreasing sequence in [0, 1]")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "probs", pr)

    def evaluate(self, x) -> np.ndarray:
        """Right-continuous step interpolation."""
        idx = np.searchsorted(self.grid, x, side="right") - 1
        return np.where(idx < 0, 0.0, self.probs[np.clip(idx, 0, None)])

    def quantile(self, level: float) -> float:
        idx = int(np.searchsorted(self.probs, level - 1e-15, side="left"))
        return float(self.grid[min(idx, self.grid.size - 1)])


def estimator_cdf_exact(params: DecayParams, m1: int, m2: int, k: int, delta_trunc: float = DEFAULT_TRUNCATION) -> CdfTable:
    """Exact law of ``p_hat`` when each length is measured once per sequence on ``k`` sequences."""
    if k > EXACT_K_LIMIT:
        raise ValueError(f"k={k} exceeds the enumeration limit {EXACT_K_LIMIT}")
    if not m1 < m2:
        raise ValueError("need m1 < m2")
    s = np.arange(k + 1)
    q1, q2 = eval_decay(params, m1), eval_decay(params, m2)
    w1, w2 = binom.pmf(s, k, q1), binom.pmf(s, k, q2)
    x = np.maximum(s / k - params.B, delta_trunc)
    p_hat, _ = ratio_core(x[:, None], x[None, :], m1, m2)
    p_hat = np.clip(p_hat, 0.0, 1.0).ravel()
    weights = np.outer(w1, w2).ravel()
    order = np.argsort(p_hat, kind="stable")
    p_sorted, w_sorted = p_hat[order], weights[order]
    grid, first = np.unique(p_sorted, return_index=True)
    cum = np.cumsum(w_sorted)
    last = np.append(first[1:], p_sorted.size) - 1
    probs = cum[last]
    mass = float(probs[-1])
    return CdfTable(grid, probs / mass, mass)


def _normal_scale(params: DecayParams, m1: int, m2: int, k: int) -> float:
    return math.sqrt(sigma2(DesignInput(params, m1, k, k), m2)) / (m2 - m1)


def estimator_cdf_normal(params: DecayParams, m1: int, m2: int, k: int, grid=None) -> CdfTable:
    """Log-normal approximation to the law of ``p_hat``."""
    s = _normal_scale(params, m1, m2, k)
    p = params.p
    if grid is None:
        sp = p * s
        grid = np.linspace(max(0.0, p - 10 * sp), min(1.0, p + 10 * sp), 2001)
    grid = np.asarray(grid, float)
    with np.errstate(divide="ignore"):
        z = (np.log(grid) - math.log(p)) / s
    return CdfTable(grid, norm.cdf(z))


def ks_distance(exact: CdfTable, params: DecayParams, m1: int, m2: int, k: int) -> float:
    """Sup distance between a step CDF and the continuous log-normal CDF."""
    F = estimator_cdf_normal(params, m1, m2, k, exact.grid).probs
    at = np.abs(exact.probs - F)
    left = np.abs(np.concatenate([[0.0], exact.probs[:-1]]) - F)
    return float(max(at.max(), left.max()))
