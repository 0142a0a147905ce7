"""Per-step stability measurements of a gradient system.

Condition number (dominance + conflict in one number), pairwise gradient
magnitude similarity, pairwise cosine similarity (negative = conflict) and
the maximum pairwise norm ratio. Infinite condition numbers are kept as the
float +inf sentinel internally and serialized as the string "inf".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import condition_number
from .validation import check_matrix


def gms(gi, gj) -> float:
    """Gradient magnitude similarity: 2*|gi|*|gj| / (|gi|^2 + |gj|^2).

    Lives in (0, 1]; equals 1 iff the norms match. Zero vectors are
    rejected.
    """
    gi = np.asarray(gi, dtype=np.float64).ravel()
    gj = np.asarray(gj, dtype=np.float64).ravel()
    ni = float(np.linalg.norm(gi))
    nj = float(np.linalg.norm(gj))
    if ni == 0.0 or nj == 0.0:
        raise ValueError("gradient magnitude similarity is undefined for zero vectors")
    return 2.0 * ni * nj / (ni * ni + nj * nj)


@dataclass(frozen=True)
class StabilityReport:
    """Stability measurements of one gradient matrix.

    ``kappa`` is >= 1 or +inf when the system is rank deficient;
    ``gms_min``, ``cos_min`` and ``norm_ratio_max`` are extremes over all
    unordered task pairs. ``per_pair`` optionally records
    (i, j, gms, cosine) per pair.
    """

    kappa: float
    gms_min: float
    cos_min: float
    norm_ratio_max: float
    per_pair: tuple[tuple[int, int, float, float], ...] | None = field(default=None)

    def to_dict(self, include_pairs: bool = False) -> dict:
        d = {
            "kappa": self.kappa,
            "gms_min": self.gms_min,
            "cos_min": self.cos_min,
            "norm_ratio_max": self.norm_ratio_max,
        }
        if include_pairs and self.per_pair is not None:
            d["per_pair"] = [list(p) for p in self.per_pair]
        return d


def stability_report(G, *, with_pairs: bool = False) -> StabilityReport:
    """Measure dominance and conflict across all task pairs of ``G``."""
    G = check_matrix(G)
    T = G.shape[1]
    norms = np.linalg.norm(G, axis=0)
    for t in range(T):
        if norms[t] == 0.0:
            raise ValueError(f"task {t} has a zero gradient column")

    kappa = condition_number(G)
    if T == 1:
        return StabilityReport(kappa=kappa, gms_min=1.0, cos_min=1.0, norm_ratio_max=1.0,
                               per_pair=() if with_pairs else None)

    dots = G.T @ G
    gms_min = math.inf
    cos_min = math.inf
    ratio_max = 0.0
    pairs = [] if with_pairs else None
    for i in range(T - 1):
        for j in range(i + 1, T):
            ni, nj = norms[i], norms[j]
            g = 2.0 * ni * nj / (ni * ni + nj * nj)
            cos = float(dots[i, j]) / (ni * nj)
            cos = max(-1.0, min(1.0, cos))
            ratio = max(ni / nj, nj / ni)
            gms_min = min(gms_min, g)
            cos_min = min(cos_min, cos)
            ratio_max = max(ratio_max, ratio)
            if pairs is not None:
                pairs.append((i, j, g, cos))
    return StabilityReport(
        kappa=kappa,
        gms_min=float(gms_min),
        cos_min=float(cos_min),
        norm_ratio_max=float(ratio_max),
        per_pair=tuple(pairs) if pairs is not None else None,
    )
