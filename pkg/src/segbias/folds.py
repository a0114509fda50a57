"""Group-stratified K-fold assignment shared by the audit and the probe."""

from __future__ import annotations

import numpy as np


def stratified_fold_indices(groups, k: int, seed: int = 0) -> np.ndarray:
    """Assign each index a fold in [0, k) by seeded round-robin within groups.

    Fold sizes differ by at most one overall, and each group's members are
    spread across folds as evenly as possible.
    """
    groups = np.asarray(groups)
    n = len(groups)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError("more folds than samples")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    cursor = 0
    for g in sorted(set(groups.tolist())):
        idx = np.flatnonzero(groups == g)
        idx = idx[rng.permutation(len(idx))]
        for i in idx:
            assignment[i] = cursor % k
            cursor += 1
    return assignment
