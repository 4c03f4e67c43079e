"""Box-set matching: greedy IoU assignment and optimal bipartite assignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou_matrix


@dataclass(frozen=True)
class Assignment:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_left: list[int] = field(default_factory=list)
    unmatched_right: list[int] = field(default_factory=list)

    @property
    def left_to_right(self) -> dict[int, int]:
        return {i: j for i, j, _ in self.pairs}


def greedy_from_matrix(scores: np.ndarray, min_score: float) -> Assignment:
    """Greedy one-to-one matching on a precomputed IoU (or similarity) matrix.

    The globally highest remaining entry at or above ``min_score`` is matched
    first; ties go to the smaller ``(left, right)`` index pair.
    """
    scores = np.asarray(scores, dtype=float)
    n, m = scores.shape
    pairs = []
    if n and m:
        li, ri = np.nonzero(scores >= min_score)
        vals = scores[li, ri]
        order = np.lexsort((ri, li, -vals))
        used_l = np.zeros(n, dtype=bool)
        used_r = np.zeros(m, dtype=bool)
        # Stop once every row or every column that has a candidate is used.
        limit = min(len(np.unique(li)), len(np.unique(ri)))
        for k in order:
            i, j = li[k], ri[k]
            if used_l[i] or used_r[j]:
                continue
            used_l[i] = used_r[j] = True
            pairs.append((int(i), int(j), float(vals[k])))
            if len(pairs) >= limit:
                break
    matched_l = {p[0] for p in pairs}
    matched_r = {p[1] for p in pairs}
    return Assignment(
        pairs,
        [i for i in range(n) if i not in matched_l],
        [j for j in range(m) if j not in matched_r],
    )


def greedy_iou_assign(left, right, min_iou: float = 0.3) -> Assignment:
    if not 0.0 <= min_iou <= 1.0:
        raise ValueError(f"min_iou must lie in [0, 1], got {min_iou}")
    return greedy_from_matrix(iou_matrix(left, right), min_iou)


def optimal_assign(cost) -> tuple[list[tuple[int, int]], float]:
    """Minimum-total-cost pairing of rows to columns.

    Rectangular matrices pair ``min(rows, cols)`` entries; the surplus side
    stays unmatched. Returns the sorted ``(row, col)`` pairs and their total.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if cost.size == 0:
        return [], 0.0
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, float(cost[rows, cols].sum())


def gated_optimal_match(similarity: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximum-cardinality, then minimum (1 - similarity) matching with a gate.

    Pairs below ``threshold`` are forbidden. Used by the tracking metrics.
    """
    similarity = np.asarray(similarity, dtype=float)
    if similarity.size == 0:
        return []
    allowed = similarity >= threshold
    if not allowed.any():
        return []
    # Forbidden entries cost more than any full set of allowed ones.
    big = 2.0 * (min(similarity.shape) + 1)
    cost = np.where(allowed, 1.0 - similarity, big)
    pairs, _ = optimal_assign(cost)
    return [(r, c) for r, c in pairs if allowed[r, c]]
