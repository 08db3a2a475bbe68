"""Finite-shot RB datasets from the analytic model or the gate-level simulator."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import cliffsim
from .model import DecayParams, eval_decay


@dataclass(frozen=True)
class DesignRow:
    m: int
    b: int
    k: int
    n: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"sequence length must be >= 1, got {self.m}")
        if self.b not in (0, 1):
            raise ValueError(f"compiled bit must be 0 or 1, got {self.b}")
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be positive")

    @classmethod
    def parse(cls, text: str) -> "DesignRow":
        """Parse ``m:b:k:n``."""
        try:
            m, b, k, n = (int(x) for x in text.split(":"))
        except ValueError:
            raise ValueError(f"design row must look like m:b:k:n, got {text!r}") from None
        return cls(m, b, k, n)


@dataclass
class Point:
    m: int
    b: int
    shots: np.ndarray
    successes: np.ndarray

    def __post_init__(self):
        self.shots = np.asarray(self.shots, dtype=np.int64)
        self.successes = np.asarray(self.successes, dtype=np.int64)
        if self.shots.shape != self.successes.shape or self.shots.size == 0:
            raise ValueError(f"group (m={self.m}, b={self.b}) needs at least one sequence")
        if np.any(self.shots < 1) or np.any(self.successes < 0) or np.any(self.successes > self.shots):
            raise ValueError(f"invalid counts in group (m={self.m}, b={self.b})")

    @property
    def k(self) -> int:
        return int(self.shots.size)

    @property
    def fractions(self) -> np.ndarray:
        return self.successes / self.shots


@dataclass
class RBDataset:
    meta: dict
    points: list[Point]

    def group(self, m: int, b: int = 0) -> Point:
        for pt in self.points:
            if pt.m == m and pt.b == b:
                return pt
        raise KeyError(f"no group with m={m}, b={b}")

    def has(self, m: int, b: int = 0) -> bool:
        return any(pt.m == m and pt.b == b for pt in self.points)

    @property
    def lengths(self) -> list[int]:
        return sorted({pt.m for pt in self.points})

    @property
    def is_arb(self) -> bool:
        return all(np.all(pt.shots == 1) for pt in self.points)

    @property
    def mixed_shots(self) -> bool:
        """True for single-shot data that also contains multi-shot sequences."""
        ones = [bool(np.any(pt.shots == 1)) for pt in self.points]
        many = [bool(np.any(pt.shots > 1)) for pt in self.points]
        return any(ones) and any(many)

    def to_dict(self) -> dict:
        return {
            "schema": "rb-dataset/1",
            "meta": self.meta,
            "points": [
                {
                    "m": int(pt.m),
                    "b": int(pt.b),
                    "sequences": [
                        {"n": int(n), "successes": int(s)} for n, s in zip(pt.shots, pt.successes)
                    ],
                }
                for pt in self.points
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RBDataset":
        points = [
            Point(
                p["m"],
                p["b"],
                [s["n"] for s in p["sequences"]],
                [s["successes"] for s in p["sequences"]],
            )
            for p in d["points"]
        ]
        return cls(dict(d.get("meta", {})), points)


@dataclass(frozen=True)
class DriftSpec:
    """Decay parameter per global sequence index; unscheduled indices keep the source's p."""

    schedule: dict

    def __post_init__(self):
        for idx, p in self.schedule.items():
            if not 0.0 < p <= 1.0:
                raise ValueError(f"scheduled p={p} at sequence {idx} outside (0, 1]")

    @classmethod
    def linear(cls, p_start: float, p_end: float, n_sequences: int) -> "DriftSpec":
        ps = np.linspace(p_start, p_end, n_sequences)
        return cls({i: float(p) for i, p in enumerate(ps)})

    def p_for(self, indices: np.ndarray, default: float) -> np.ndarray:
        return np.array([self.schedule.get(int(i), default) for i in indices])

    def to_dict(self) -> dict:
        return {str(k): v for k, v in sorted(self.schedule.items())}


@dataclass(frozen=True)
class AnalyticSource:
    """Sample from ``A p^m + B``; the flipped sequences succeed with ``B - A p^m``.

    ``spread`` is an optional Beta concentration for sequence-to-sequence
    variation of the success probability around its mean.
    """

    params: DecayParams
    spread: float | None = None

    def probabilities(self, m: int, b: int, p: np.ndarray | float) -> np.ndarray:
        A, B = self.params.A, self.params.B
        decay = A * np.asarray(p) ** m
        if b == 0:
            return decay + B
        if np.any(decay > B + 1e-12):
            raise ValueError(
                f"flipped sequences need A p^m <= B (A={A}, B={B}, m={m}); "
                "the orthogonal-outcome probability would be negative"
            )
        return np.clip(B - decay, 0.0, 1.0)

    def meta(self) -> dict:
        d = {"backend": "analytic", "params": self.params.to_dict()}
        if self.spread is not None:
            d["spread"] = self.spread
        return d


@dataclass(frozen=True)
class GateLevelSource:
    noise: object = None
    n_qubits: int = 1
    rho: np.ndarray | None = field(default=None, compare=False)
    E: np.ndarray | None = field(default=None, compare=False)

    def meta(self) -> dict:
        noise = "none" if self.noise is None else self.noise.to_string()
        d = {"backend": "gate-level", "noise": noise, "n_qubits": self.n_qubits}
        if self.rho is not None or self.E is not None:
            d["custom_state"] = True
        return d


def _row_rng(seed: int, row: int, m: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(row), int(m), int(b)]))


def generate(design: Iterable[DesignRow], source, drift: DriftSpec | None = None, seed: int = 0) -> RBDataset:
    design = [r if isinstance(r, DesignRow) else DesignRow(*r) for r in design]
    if not design:
        raise ValueError("design is empty")
    if drift is not None and not isinstance(source, AnalyticSource):
        raise ValueError("drift is only supported for the analytic source")
    points = []
    offset = 0
    for row_idx, row in enumerate(design):
        rng = _row_rng(seed, row_idx, row.m, row.b)
        if isinstance(source, AnalyticSource):
            p = source.params.p
            if drift is not None:
                p = drift.p_for(np.arange(offset, offset + row.k), p)
            q = np.broadcast_to(source.probabilities(row.m, row.b, p), (row.k,)).astype(float)
            if source.spread is not None:
                q = _beta_spread(rng, q, source.spread)
        elif isinstance(source, GateLevelSource):
            gates, inv = cliffsim.sample_sequences(source.n_qubits, row.m, row.b, row.k, rng)
            q = cliffsim.survival_probabilities(
                source.n_qubits, gates, inv, source.noise, source.rho, source.E
            )
            q = np.clip(q, 0.0, 1.0)
        else:
            raise TypeError(f"unsupported source {type(source).__name__}")
        successes = rng.binomial(row.n, q)
        points.append(Point(row.m, row.b, np.full(row.k, row.n), successes))
        offset += row.k
    meta = {"seed": int(seed), **source.meta()}
    if drift is not None:
        meta["drift"] = drift.to_dict()
    return RBDataset(meta, points)


def _beta_spread(rng, q: np.ndarray, concentration: float) -> np.ndarray:
    out = q.copy()
    inner = (q > 0) & (q < 1)
    out[inner] = rng.beta(concentration * q[inner], concentration * (1 - q[inner]))
    return out


# ----------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class GroupSummary:
    m: int
    b: int
    mean: float
    variance: float
    k: int
    n_total: int
    flags: tuple[str, ...] = ()

    @property
    def variance_of_mean(self) -> float:
        return self.variance / self.k


def summarize(ds: RBDataset, m: int, b: int = 0) -> GroupSummary:
    """Mean and unbiased sample variance of the per-sequence success fractions."""
    pt = ds.group(m, b)
    f = pt.fractions
    flags = []
    if pt.k < 2:
        var = 0.0
        flags.append("insufficient_replicates")
    else:
        var = float(np.var(f, ddof=1))
    if np.any(pt.shots == 1) and np.any(pt.shots > 1):
        flags.append("mixed_shots")
    return GroupSummary(m, b, float(f.mean()), var, pt.k, int(pt.shots.sum()), tuple(flags))


@dataclass(frozen=True)
class DifferenceSummary:
    m: int
    mean: float
    variance: float
    k0: int
    k1: int


def difference_summary(ds: RBDataset, m: int) -> DifferenceSummary:
    """``q(m|0) - q(m|1)`` and the variance of that difference of means."""
    s0, s1 = summarize(ds, m, 0), summarize(ds, m, 1)
    return DifferenceSummary(
        m, s0.mean - s1.mean, s0.variance_of_mean + s1.variance_of_mean, s0.k, s1.k
    )


def export_summary_csv(ds: RBDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "b", "k", "shots", "mean", "variance"])
        for pt in sorted(ds.points, key=lambda p: (p.m, p.b)):
            s = summarize(ds, pt.m, pt.b)
            w.writerow([s.m, s.b, s.k, s.n_total, repr(s.mean), repr(s.variance)])


# ----------------------------------------------------------------------------
# unitarity data


@dataclass
class UnitarityPoint:
    m: int
    values: np.ndarray
    identity: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.abs(self.values) > 1 + 1e-9):
            raise ValueError("Pauli expectation values must lie in [-1, 1]")
        if self.identity is not None:
            self.identity = np.asarray(self.identity, dtype=float)

    @property
    def k(self) -> int:
        return self.values.shape[0]


@dataclass
class UnitarityDataset:
    meta: dict
    points: list[UnitarityPoint]

    def group(self, m: int) -> UnitarityPoint:
        for pt in self.points:
            if pt.m == m:
                return pt
        raise KeyError(f"no unitarity group with m={m}")

    def to_dict(self) -> dict:
        pts = []
        for pt in self.points:
            seqs = []
            for i, row in enumerate(pt.values):
                s = {"pauli_values": [float(v) for v in row]}
                if pt.identity is not None:
                    s["identity_value"] = float(pt.identity[i])
                seqs.append(s)
            pts.append({"m": int(pt.m), "sequences": seqs})
        return {"schema": "rb-unitarity/1", "meta": self.meta, "points": pts}

    @classmethod
    def from_dict(cls, d: dict) -> "UnitarityDataset":
        points = []
        for p in d["points"]:
            seqs = p["sequences"]
            ident = None
            if all("identity_value" in s for s in seqs):
                ident = [s["identity_value"] for s in seqs]
            points.append(UnitarityPoint(p["m"], [s["pauli_values"] for s in seqs], ident))
        return cls(dict(d.get("meta", {})), points)


def generate_unitarity(lengths, k: int, source: GateLevelSource, seed: int = 0, shots: int | None = None) -> UnitarityDataset:
    """Pauli expectations after raw random sequences.

    With ``shots=None`` the exact expectations are recorded; otherwise each
    Pauli is estimated from ``shots`` single-shot +-1 outcomes.
    """
    if k < 1:
        raise ValueError("k must be positive")
    points = []
    for idx, m in enumerate(lengths):
        if m < 1:
            raise ValueError("sequence length must be at least 1")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), idx, int(m)]))
        group = cliffsim.clifford_group(source.n_qubits)
        gates = rng.integers(len(group), size=(k, m))
        vals = cliffsim.pauli_expectations_batch(source.n_qubits, gates, source.noise, source.rho)
        ident = cliffsim.trace_batch(source.n_qubits, gates, source.noise, source.rho)
        vals = np.clip(vals, -1.0, 1.0)
        if shots is not None:
            vals = 2.0 * rng.binomial(shots, (1.0 + vals) / 2.0) / shots - 1.0
        points.append(UnitarityPoint(int(m), vals, ident))
    meta = {"seed": int(seed), "shots": shots, **source.meta()}
    return UnitarityDataset(meta, points)


@dataclass(frozen=True)
class UnitaritySummary:
    m: int
    a_per_pauli: np.ndarray
    a: float
    b: float
    k: int


def unitarity_summaries(uds: UnitarityDataset, m: int, normalization: str = "printed", leakage: str = "trace") -> UnitaritySummary:
    """Per-Pauli means, the leakage statistic ``a`` and the shifted purity ``b``.

    ``b = (1/k) sum_{P,s} q(P,s)^2 - sum_P a(P)^2``.  ``normalization="pauli_average"``
    divides it by the number of non-identity Paulis.  ``leakage="trace"``
    takes ``a`` as the mean output trace (1 when nothing leaks);
    ``leakage="pauli_mean"`` averages the per-Pauli means instead.
    """
    pt = uds.group(m)
    if pt.k < 2:
        raise ValueError(f"need at least two sequences at m={m}, got {pt.k}")
    vals = pt.values
    a_p = vals.mean(axis=0)
    b = float(np.sum(vals**2) / pt.k - np.sum(a_p**2))
    if normalization == "pauli_average":
        b /= vals.shape[1]
    elif normalization != "printed":
        raise ValueError(f"unknown normalization {normalization!r}")
    if leakage == "trace":
        a = 1.0 if pt.identity is None else float(pt.identity.mean())
    elif leakage == "pauli_mean":
        a = float(a_p.mean())
    else:
        raise ValueError(f"unknown leakage statistic {leakage!r}")
    return UnitaritySummary(m, a_p, a, b, pt.k)
