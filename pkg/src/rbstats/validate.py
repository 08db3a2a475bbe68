"""Checking held-out sequence lengths against a two-length fit.

Under static, Markovian noise the fitted ``A p^m + B`` predicts the mean at
every other length.  Each held-out length gets a two-sided z-test using the
data variance plus the delta-method prediction variance; the per-length
tests are combined with Fisher's method after decorrelating the shared
prediction error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, norm

from .estimate import Estimate
from .sampler import RBDataset, difference_summary, summarize

METHOD = "two-sided z per length, Fisher combination of whitened z-scores"


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


def _gradient(est: Estimate, m: int) -> np.ndarray:
    A, p = est.A_hat, est.p_hat
    dp = m * A * p ** (m - 1) if m > 0 else 0.0
    return np.array([p**m, dp])


def _parameter_cov(est: Estimate, amplitude_uncertainty: bool) -> np.ndarray:
    if est.covariance is None or not amplitude_uncertainty:
        return np.array([[0.0, 0.0], [0.0, est.variance_p]])
    return np.asarray(est.covariance, dtype=float)


def predict_at(est: Estimate, m: int, B: float | None = None, amplitude_uncertainty: bool = True) -> Prediction:
    """Forward prediction ``A p^m + B`` with first-order variance.

    ``amplitude_uncertainty=False`` propagates only the variance of ``p_hat``.
    """
    if not np.isfinite(est.variance_p):
        raise ValueError("estimate has no finite variance")
    B = est.B if B is None else B
    g = _gradient(est, m)
    C = _parameter_cov(est, amplitude_uncertainty)
    return Prediction(est.A_hat * est.p_hat**m + B, float(g @ C @ g))


@dataclass(frozen=True)
class LengthTest:
    m: int
    observed: float
    predicted: float
    se: float
    z: float
    p_value: float


@dataclass(frozen=True)
class ValidationReport:
    per_m: tuple[LengthTest, ...]
    combined_p: float
    alpha: float
    reject: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": "rb-validation/1",
            "per_m": [vars(t) for t in self.per_m],
            "overall": {"combined_p": self.combined_p, "alpha": self.alpha, "reject": self.reject},
            "meta": self.meta,
        }

    def format_table(self) -> str:
        lines = [f"{'m':>6} {'observed':>10} {'predicted':>10} {'se':>10} {'z':>8} {'p':>8}"]
        for t in self.per_m:
            lines.append(
                f"{t.m:>6d} {t.observed:>10.5f} {t.predicted:>10.5f} {t.se:>10.2e} {t.z:>8.3f} {t.p_value:>8.4f}"
            )
        verdict = "REJECT" if self.reject else "accept"
        lines.append(f"combined p = {self.combined_p:.4g} at alpha = {self.alpha}: {verdict}")
        return "\n".join(lines)


def _two_sided(z):
    return 2.0 * norm.sf(np.abs(z))


def consistency_test(
    ds: RBDataset,
    est: Estimate,
    holdout_ms,
    alpha: float = 0.05,
    mode: str = "known-B",
    B: float | None = None,
    amplitude_uncertainty: bool = True,
) -> ValidationReport:
    holdout_ms = [int(m) for m in holdout_ms]
    if not holdout_ms:
        raise ValueError("need at least one held-out length")
    if est.summary is not None:
        fit = {est.summary.m1, est.summary.m2}
        if fit & set(holdout_ms):
            raise ValueError(f"held-out lengths {sorted(fit & set(holdout_ms))} were used in the fit")
    if len(set(holdout_ms)) != len(holdout_ms):
        raise ValueError("held-out lengths must be distinct")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    B = est.B if B is None else B

    obs, obs_var = [], []
    for m in holdout_ms:
        if mode == "difference":
            d = difference_summary(ds, m)
            obs.append(d.mean)
            obs_var.append(d.variance)
        elif mode == "known-B":
            s = summarize(ds, m, 0)
            obs.append(s.mean)
            obs_var.append(s.variance_of_mean)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    obs = np.array(obs)
    G = np.array([_gradient(est, m) for m in holdout_ms])
    C = _parameter_cov(est, amplitude_uncertainty)
    pred = np.array([est.A_hat * est.p_hat**m + B for m in holdout_ms])
    cov = np.diag(obs_var) + G @ C @ G.T
    resid = obs - pred
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, resid / np.where(se > 0, se, 1.0), np.where(resid == 0, 0.0, np.inf))
    pvals = _two_sided(z)

    try:
        L = np.linalg.cholesky(cov)
        w = np.linalg.solve(L, resid)
    except np.linalg.LinAlgError:
        w = z
    pw = np.clip(_two_sided(w), 1e-300, 1.0)
    stat = -2.0 * float(np.sum(np.log(pw)))
    combined = float(chi2.sf(stat, 2 * len(pw)))

    tests = tuple(
        LengthTest(m, float(o), float(pr), float(s), float(zz), float(pv))
        for m, o, pr, s, zz, pv in zip(holdout_ms, obs, pred, se, z, pvals)
    )
    meta = {"method": METHOD, "mode": mode, "amplitude_uncertainty": amplitude_uncertainty}
    return ValidationReport(tests, combined, alpha, combined < alpha, meta)
