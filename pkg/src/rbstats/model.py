"""Decay models for randomized benchmarking data.

The standard model for the sequence-averaged survival probability is
``q(m) = A * p**m + B``.  Compiling an orthogonal-state flip into half of
the sequences and subtracting removes ``B`` entirely, leaving ``A * p**m``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class DecayParams:
    """Amplitude ``A``, offset ``B`` and decay parameter ``p``."""

    A: float
    B: float
    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"decay parameter p must lie in (0, 1], got {self.p}")
        if self.A < 0.0 or self.B < 0.0:
            raise ValueError("A and B must be non-negative")
        if self.A + self.B > 1.0 + 1e-12:
            raise ValueError(f"A + B = {self.A + self.B} exceeds 1")

    @property
    def r(self) -> float:
        return 1.0 - self.p

    @classmethod
    def from_visibility(cls, visibility: float, B: float, p: float) -> "DecayParams":
        """Build parameters whose amplitude is a fraction of the available range.

        ``A = visibility * (1 - B)``, so ``visibility = 1`` means ideal
        state preparation and measurement on top of a known offset ``B``
        (for example ``B = 1/2`` from pooling a two-outcome measurement).
        """
        if not 0.0 <= visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")
        return cls(A=visibility * (1.0 - B), B=B, p=p)

    def difference(self) -> "DecayParams":
        """Offset-free parameters of ``q(m|0) - q(m|1)`` when the flip maps ``A p^m + B`` to ``B - A p^m``."""
        return DecayParams(A=2.0 * self.A, B=0.0, p=self.p)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class UnitarityParams:
    A_l: float
    l: float
    A_u: float
    u: float

    def __post_init__(self):
        for name in ("l", "u"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        for name in ("A_l", "A_u"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


def eval_decay(params: DecayParams, m):
    """``A p^m + B``; accepts a scalar or an array of lengths."""
    m = np.asarray(m)
    if np.any(m < 0):
        raise ValueError("sequence length must be non-negative")
    out = params.A * params.p ** m + params.B
    return float(out) if out.ndim == 0 else out


def eval_difference(params: DecayParams, m):
    """Offset-free difference ``q(m|0) - q(m|1)`` model, ``A p^m``."""
    m = np.asarray(m)
    if np.any(m < 0):
        raise ValueError("sequence length must be non-negative")
    out = params.A * params.p ** m
    return float(out) if out.ndim == 0 else out


def eval_unitarity_pair(params: UnitarityParams, m: int) -> tuple[float, float]:
    if m < 0:
        raise ValueError("sequence length must be non-negative")
    return params.A_l * params.l ** m, params.A_u * params.u ** m


def povm_offset(k: int) -> float:
    """Offset left after averaging over a ``k``-outcome POVM with compiled relabelling gates."""
    if int(k) != k or k < 1:
        raise ValueError(f"number of POVM outcomes must be a positive integer, got {k}")
    return 1.0 / k
