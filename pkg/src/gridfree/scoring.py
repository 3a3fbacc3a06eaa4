"""Greedy tolerance-radius matching of estimated to true sources, and F-scores.

True and estimated locations are joined by an edge whenever their distance is
strictly below the tolerance radius; edges are then selected greedily in
ascending (distance, true index, estimate index) order under the constraint
that no location is used twice.  Matched estimates are true positives.
Precision is TP / (TP + FP) and recall is TP / (TP + FN); the F-score is
their harmonic mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MatchResult", "UndefinedScoreError", "greedy_match", "f_score"]

# Deterministic edge ordering used by the greedy pass; recorded in run
# metadata because results can depend on it when distances tie.
TIE_BREAK = "distance_ascending_then_true_index_then_est_index"


class UndefinedScoreError(ValueError):
    """Raised when an F-score is requested but both point sets are empty."""


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching: selected (true index, est index, distance) pairs."""

    pairs: tuple[tuple[int, int, float], ...]
    n_true: int
    n_est: int

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fn(self) -> int:
        return self.n_true - self.tp

    @property
    def fp(self) -> int:
        return self.n_est - self.tp

    @property
    def precision(self) -> float:
        if self.n_true == 0 and self.n_est == 0:
            raise UndefinedScoreError("no true and no estimated sources")
        return self.tp / self.n_est if self.n_est else 0.0

    @property
    def recall(self) -> float:
        if self.n_true == 0 and self.n_est == 0:
            raise UndefinedScoreError("no true and no estimated sources")
        return self.tp / self.n_true if self.n_true else 0.0

    @property
    def fscore(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def _distances(truth: np.ndarray, est: np.ndarray) -> np.ndarray:
    if truth.ndim == 1:
        return np.abs(truth[:, None] - est[None, :])
    diff = truth[:, None, :] - est[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def greedy_match(truth, est, radius: float) -> MatchResult:
    """Greedily pair true and estimated locations closer than ``radius``.

    Empty inputs give an empty match.  The pairing is deterministic: edges
    are processed in ascending (distance, true index, est index) order.
    """
    if radius <= 0:
        raise ValueError("tolerance radius must be positive")
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    est = np.atleast_1d(np.asarray(est, dtype=float))
    m = len(truth) if truth.size else 0
    n = len(est) if est.size else 0
    if m == 0 or n == 0:
        return MatchResult((), m, n)
    dist = _distances(truth, est)
    ti, ei = np.nonzero(dist < radius)
    order = np.lexsort((ei, ti, dist[ti, ei]))
    used_t = np.zeros(m, dtype=bool)
    used_e = np.zeros(n, dtype=bool)
    pairs = []
    for k in order:
        i, j = int(ti[k]), int(ei[k])
        if used_t[i] or used_e[j]:
            continue
        used_t[i] = used_e[j] = True
        pairs.append((i, j, float(dist[i, j])))
    return MatchResult(tuple(pairs), m, n)


def f_score(match: MatchResult) -> tuple[float, float, float]:
    """(precision, recall, F) of a match; errors when both sets were empty."""
    return match.precision, match.recall, match.fscore
