"""Estimation and detection quality measures.

NMSE is aggregated as a ratio of expectations: numerators and denominators
are summed separately over trials and divided once at the end, so the
aggregate is permutation-invariant and accumulators merge associatively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NmseAccumulator", "srr", "detect_support"]


@dataclass
class NmseAccumulator:
    """Running sums of ||X - X_hat||_F^2 (num) and ||X||_F^2 (den)."""

    num: float = 0.0
    den: float = 0.0

    def accumulate(self, x_true: np.ndarray, x_hat: np.ndarray) -> "NmseAccumulator":
        if x_true.shape != x_hat.shape:
            raise ValueError("shapes of truth and estimate must match")
        self.num += float(np.linalg.norm(x_true - x_hat) ** 2)
        self.den += float(np.linalg.norm(x_true) ** 2)
        return self

    def add(self, num: float, den: float) -> "NmseAccumulator":
        self.num += num
        self.den += den
        return self

    def merge(self, other: "NmseAccumulator") -> "NmseAccumulator":
        self.num += other.num
        self.den += other.den
        return self

    def value(self) -> float:
        """Ratio-of-sums NMSE; NaN when nothing with energy was accumulated."""
        return self.num / self.den if self.den > 0 else float("nan")


def srr(s_true, s_hat, k_active: int, mode: str = "symmetric") -> float:
    """Support recovery rate |S ∩ Ŝ| / (|S Δ Ŝ| + K).

    ``mode="symmetric"`` (default) penalizes both misses and false alarms
    through the symmetric difference; ``mode="one_sided"`` counts only
    misses (|S - Ŝ|) in the denominator. By convention the score of an
    empty true support is 1 when the detected set is also empty.
    """
    s_true = set(int(i) for i in s_true)
    s_hat = set(int(i) for i in s_hat)
    if k_active != len(s_true):
        raise ValueError("k_active must equal the true support size")
    if k_active == 0:
        return 1.0 if not s_hat else 0.0
    if mode == "symmetric":
        diff = len(s_true ^ s_hat)
    elif mode == "one_sided":
        diff = len(s_true - s_hat)
    else:
        raise ValueError(f"unknown srr mode {mode!r}")
    return len(s_true & s_hat) / (diff + k_active)


def detect_support(x_hat: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of columns with Euclidean norm above the threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return np.flatnonzero(np.linalg.norm(x_hat, axis=0) > threshold)
