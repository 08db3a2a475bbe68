"""Seeded parameter-sweep studies that write plot-ready CSV files.

Every cell of a study lattice gets its own RNG stream derived from
``(seed, cell index)``, and replicate ``j`` inside a cell uses
``(seed, cell index, j)``.  Cells may run in worker processes; results are
gathered in lattice order, so output bytes do not depend on ``workers``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adaptive import AdaptiveConfig, AnalyticOracle, check_pm_window, run_adaptive
from .design import (
    DesignInput,
    estimator_cdf_exact,
    estimator_cdf_normal,
    heuristic_m2,
    ks_distance,
    optimal_m2,
    sigma2,
)
from .estimate import lognormal_interval, ratio_estimate, summary_from_dataset
from .formats import write_csv
from .model import DecayParams, eval_decay
from .sampler import AnalyticSource, DesignRow, DriftSpec, generate
from .validate import consistency_test

KINDS = ("cdf_comparison", "m2_landscape", "adaptive_scaling", "coverage", "bias", "validation_power")


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    lattice: dict
    seed: int
    replicates: int = 1
    out_dir: str = "study_out"
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown study kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not isinstance(self.seed, int):
            raise ValueError("a study needs an integer seed")
        for key, values in self.lattice.items():
            if not isinstance(values, list) or not values:
                raise ValueError(f"lattice entry {key!r} must be a non-empty list")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        if "seed" not in d:
            raise ValueError("study config needs a seed")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def cells(self) -> list[dict]:
        keys = list(self.lattice)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.lattice[k] for k in keys))]

    def digest(self) -> str:
        d = asdict(self)
        d.pop("out_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def cell_params(cell: dict) -> DecayParams:
    """Model parameters of a lattice cell; ``visibility`` stands in for ``A = visibility (1 - B)``."""
    B = float(cell.get("B", 0.0))
    p = float(cell["p"]) if "p" in cell else 1.0 - float(cell["r"])
    if "visibility" in cell:
        return DecayParams.from_visibility(float(cell["visibility"]), B, p)
    if "A" not in cell:
        raise ValueError("cell needs A or visibility")
    return DecayParams(float(cell["A"]), B, p)


def replicate_seed(seed: int, cell_index: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, cell_index, rep]).generate_state(1)[0])


def _rng(seed: int, cell_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, cell_index]))


# ----------------------------------------------------------------------------
# per-cell computations, shared with the acceptance suite


def cdf_cell(P: DecayParams, k: int, m1: int = 4, m2: int | None = None):
    m2 = heuristic_m2(P.p) if m2 is None else m2
    exact = estimator_cdf_exact(P, m1, m2, k)
    normal = estimator_cdf_normal(P, m1, m2, k, exact.grid)
    summary = {
        "m2": m2,
        "ks": ks_distance(exact, P, m1, m2, k),
        "q10": exact.quantile(0.1),
        "q90": exact.quantile(0.9),
    }
    summary["width_10_90"] = summary["q90"] - summary["q10"]
    return exact, normal, summary


def landscape_cell(P: DecayParams, m1: int = 4, k: int = 1, span: float = 5.0):
    inp = DesignInput(P, m1, k, k)
    upper = max(m1 + 2, math.ceil(span / (1.0 - P.p)))
    m_opt = optimal_m2(inp)
    m_heur = max(heuristic_m2(P.p), m1 + 1)
    rows = [(m2, sigma2(inp, m2) / (m2 - m1) ** 2) for m2 in range(m1 + 1, upper + 1)]
    v_opt = sigma2(inp, m_opt) / (m_opt - m1) ** 2
    v_heur = sigma2(inp, m_heur) / (m_heur - m1) ** 2
    return rows, {"m2_opt": m_opt, "m2_heuristic": m_heur, "excess": v_heur / v_opt - 1.0}


def adaptive_cell(r: float, epsilon: float, delta: float, replicates: int, seed: int, cell_index: int, A: float = 0.8):
    P = DecayParams(A, 0.0, 1.0 - r)
    cfg = AdaptiveConfig(epsilon, delta)
    rng = _rng(seed, cell_index)
    out = []
    for rep in range(replicates):
        res = run_adaptive(AnalyticOracle(P, rng), cfg)
        out.append({
            "replicate": rep,
            "r_hat": res.r_hat,
            "rel_err": abs(res.r_hat - r) / r,
            "ell": res.ell,
            "m": res.m,
            "total_shots": res.total_shots,
            "window_ok": check_pm_window(P.p, res.m, epsilon),
        })
    return out


def _two_length_design(m1, m2, k, n):
    return [DesignRow(m1, 0, k, n), DesignRow(m2, 0, k, n)]


def coverage_cell(P, k, n, m1, m2, method, replicates, seed, cell_index, coverage=0.9, k_cheb=3.0):
    hits = np.zeros(replicates, dtype=bool)
    widths = np.zeros(replicates)
    if method == "lognormal":
        if n != 1:
            raise ValueError("the log-normal interval needs single-shot sequences (n = 1)")
        rng = _rng(seed, cell_index)
        s1 = rng.binomial(k, eval_decay(P, m1), replicates)
        s2 = rng.binomial(k, eval_decay(P, m2), replicates)
        nominal = coverage
        for j in range(replicates):
            e = lognormal_interval(int(s1[j]), k, int(s2[j]), k, m1, m2, P.B, coverage)
            hits[j] = e.interval[0] <= P.p <= e.interval[1]
            widths[j] = e.interval[1] - e.interval[0]
    elif method == "chebyshev":
        nominal = 1.0 - 1.0 / k_cheb**2
        design = _two_length_design(m1, m2, k, n)
        for j in range(replicates):
            ds = generate(design, AnalyticSource(P), seed=replicate_seed(seed, cell_index, j))
            e = ratio_estimate(summary_from_dataset(ds, m1, m2, B=P.B), k_cheb=k_cheb)
            hits[j] = e.interval[0] <= P.p <= e.interval[1]
            widths[j] = e.interval[1] - e.interval[0]
    else:
        raise ValueError(f"unknown interval method {method!r}")
    cov = float(hits.mean())
    return {
        "coverage": cov,
        "nominal": nominal,
        "se": math.sqrt(max(cov * (1 - cov), 1e-12) / replicates),
        "mean_width": float(widths.mean()),
        "replicates": replicates,
    }


def predicted_bias(P: DecayParams, m1: int, m2: int, k: int, n: int) -> float:
    """Second-order bias of the uncorrected ratio estimate of ``p``."""
    dm = m2 - m1
    total = 0.0
    for m, a in ((m1, -1.0 / dm), (m2, 1.0 / dm)):
        q = eval_decay(P, m)
        v = q * (1 - q) / (k * n)
        total += 0.5 * a * (a - 1.0) * v / (q - P.B) ** 2
    return P.p * total


def bias_cell(P, k, n, m1, m2, replicates, seed, cell_index):
    raw = np.empty(replicates)
    corrected = np.empty(replicates)
    design = _two_length_design(m1, m2, k, n)
    for j in range(replicates):
        ds = generate(design, AnalyticSource(P), seed=replicate_seed(seed, cell_index, j))
        s = summary_from_dataset(ds, m1, m2, B=P.B)
        raw[j] = ratio_estimate(s, bias_correct="off").p_hat
        corrected[j] = ratio_estimate(s, bias_correct="on").p_hat
    return {
        "raw_bias": float(raw.mean() - P.p),
        "raw_se": float(raw.std(ddof=1) / math.sqrt(replicates)),
        "corrected_bias": float(corrected.mean() - P.p),
        "corrected_se": float(corrected.std(ddof=1) / math.sqrt(replicates)),
        "predicted_bias": predicted_bias(P, m1, m2, k, n),
        "replicates": replicates,
    }


def validation_cell(P, p_end, k, n, replicates, seed, cell_index, fit=(4, 50), holdout=(10, 25, 100), alpha=0.05):
    # fit lengths first so that drift hits the held-out lengths hardest
    design = [DesignRow(m, 0, k, n) for m in (*fit, *holdout)]
    drift = None if p_end == P.p else DriftSpec.linear(P.p, p_end, k * len(design))
    rejects = 0
    for j in range(replicates):
        ds = generate(design, AnalyticSource(P), drift=drift, seed=replicate_seed(seed, cell_index, j))
        est = ratio_estimate(summary_from_dataset(ds, *fit, B=P.B), bias_correct="off")
        rejects += consistency_test(ds, est, holdout, alpha).reject
    rate = rejects / replicates
    return {"rejection_rate": rate, "se": math.sqrt(alpha * (1 - alpha) / replicates), "replicates": replicates}


# ----------------------------------------------------------------------------
# study drivers


def _opt(cfg: StudyConfig, cell: dict, key: str, default):
    return cell.get(key, cfg.options.get(key, default))


def _run_cell(args):
    cfg, idx, cell = args
    cell = {**cfg.options, **cell}
    kind = cfg.kind
    if kind == "cdf_comparison":
        P = cell_params(cell)
        k = int(_opt(cfg, cell, "k", 200))
        exact, normal, summ = cdf_cell(P, k, int(_opt(cfg, cell, "m1", 4)), _opt(cfg, cell, "m2", None))
        head = (P.A, P.B, P.p, k)
        rows = [(*head, float(g), float(e), float(nrm)) for g, e, nrm in zip(exact.grid, exact.probs, normal.probs)]
        return rows, [(*head, summ["m2"], summ["ks"], summ["q10"], summ["q90"], summ["width_10_90"])]
    if kind == "m2_landscape":
        P = cell_params(cell)
        land, summ = landscape_cell(P, int(_opt(cfg, cell, "m1", 4)), int(_opt(cfg, cell, "k", 1)))
        head = (P.A, P.B, P.p)
        rows = [(*head, m2, v, m2 == summ["m2_opt"]) for m2, v in land]
        return rows, [(*head, summ["m2_opt"], summ["m2_heuristic"], summ["excess"])]
    if kind == "adaptive_scaling":
        r, eps, delta = float(cell["r"]), float(_opt(cfg, cell, "epsilon", 0.05)), float(_opt(cfg, cell, "delta", 0.1))
        out = adaptive_cell(r, eps, delta, cfg.replicates, cfg.seed, idx, float(_opt(cfg, cell, "A", 0.8)))
        head = (r, eps, delta)
        rows = [(*head, o["replicate"], o["r_hat"], o["rel_err"], o["ell"], o["m"], o["total_shots"], o["window_ok"]) for o in out]
        summ = (
            *head,
            float(np.median([o["rel_err"] for o in out])),
            float(np.mean([o["window_ok"] for o in out])),
            float(np.mean([o["total_shots"] for o in out])),
        )
        return rows, [summ]
    P = cell_params(cell)
    k, n = int(_opt(cfg, cell, "k", 100)), int(_opt(cfg, cell, "n", 1))
    m1, m2 = int(_opt(cfg, cell, "m1", 4)), int(_opt(cfg, cell, "m2", heuristic_m2(P.p)))
    head = (P.A, P.B, P.p, k, n, m1, m2)
    if kind == "coverage":
        method = _opt(cfg, cell, "method", "chebyshev")
        res = coverage_cell(P, k, n, m1, m2, method, cfg.replicates, cfg.seed, idx,
                            float(_opt(cfg, cell, "coverage", 0.9)))
        return [], [(*head, method, res["coverage"], res["nominal"], res["se"], res["mean_width"])]
    if kind == "bias":
        res = bias_cell(P, k, n, m1, m2, cfg.replicates, cfg.seed, idx)
        return [], [(*head, res["raw_bias"], res["raw_se"], res["corrected_bias"], res["corrected_se"], res["predicted_bias"])]
    p_end = float(_opt(cfg, cell, "p_end", P.p))
    res = validation_cell(P, p_end, k, n, cfg.replicates, cfg.seed, idx, alpha=float(_opt(cfg, cell, "alpha", 0.05)))
    return [], [(P.A, P.B, P.p, p_end, k, n, res["rejection_rate"], res["se"])]


HEADERS = {
    "cdf_comparison": (
        ("A", "B", "p", "k", "p_hat", "cdf_exact", "cdf_normal"),
        ("A", "B", "p", "k", "m2", "ks", "q10", "q90", "width_10_90"),
    ),
    "m2_landscape": (
        ("A", "B", "p", "m2", "variance", "is_optimal"),
        ("A", "B", "p", "m2_opt", "m2_heuristic", "excess_variance"),
    ),
    "adaptive_scaling": (
        ("r", "epsilon", "delta", "replicate", "r_hat", "rel_err", "ell", "m", "total_shots", "window_ok"),
        ("r", "epsilon", "delta", "median_rel_err", "window_fraction", "mean_shots"),
    ),
    "coverage": (None, ("A", "B", "p", "k", "n", "m1", "m2", "method", "coverage", "nominal", "se", "mean_width")),
    "bias": (None, ("A", "B", "p", "k", "n", "m1", "m2", "raw_bias", "raw_se", "corrected_bias", "corrected_se", "predicted_bias")),
    "validation_power": (None, ("A", "B", "p", "p_end", "k", "n", "rejection_rate", "se")),
}


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list
    summary: list
    files: list = field(default_factory=list)


def run_study(cfg: StudyConfig, write: bool = True) -> StudyResult:
    jobs = [(cfg, i, cell) for i, cell in enumerate(cfg.cells())]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    rows = [r for res in results for r in res[0]]
    summary = [s for res in results for s in res[1]]
    out = StudyResult(cfg, rows, summary)
    if write:
        _write(out)
    return out


def _write(res: StudyResult) -> None:
    cfg = res.config
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    row_header, summary_header = HEADERS[cfg.kind]
    if row_header is not None:
        write_csv(res.rows, row_header, out / f"{cfg.kind}.csv")
        res.files.append(f"{cfg.kind}.csv")
    write_csv(res.summary, summary_header, out / f"{cfg.kind}_summary.csv")
    res.files.append(f"{cfg.kind}_summary.csv")
    manifest = {
        "kind": cfg.kind,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out_dir", "workers")},
        "config_sha256": cfg.digest(),
        "files": res.files,
        "versions": {
            "rbstats": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
