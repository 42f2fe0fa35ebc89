"""Association degree measures over per-level trace overlaps.

All measures map a :class:`LevelOverlap` (per-level overlap duration and
per-entity totals) to a score in [0, 1] and satisfy the monotonicity
contract the search relies on: growing the other entity's trace with
non-shared cells never raises the score, and converting a non-shared
cell into a shared one never lowers it.

The reference measure combines per-level duration ratios with a level
weight ``l**u`` and a duration exponent ``v``::

    d = sum_l l^u * (|overlap_l| / (|a_l| + |b_l|))^v / max,
    max = sum_l l^u * (1/2)^v

which is computed in the algebraically identical form
``sum_l w_l * (2*ratio_l)^v`` with normalized weights ``w_l = l^u / sum
l^u``.  With ``v = 1`` this is bit-for-bit the weighted Dice score with
weights proportional to ``l^u``.  Weighted Jaccard and Cosine variants
are provided alongside.  The normalizer makes the self-score exactly 1.

Everything here is a pure function; callers may evaluate in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .traces import CellSequence, TraceError

__all__ = [
    "LevelOverlap",
    "MeasureParams",
    "VARIANTS",
    "level_overlaps",
    "adm_score",
    "set_similarity_score",
    "score",
    "score_from_counts",
    "partial_score",
    "level_weights_from_exponent",
]

VARIANTS = ("adm", "dice", "jaccard", "cosine")


@dataclass(frozen=True)
class LevelOverlap:
    """Per-level overlap durations and totals (index 0 = level 1)."""

    overlap: np.ndarray
    total_a: np.ndarray
    total_b: np.ndarray

    @property
    def m(self) -> int:
        return len(self.overlap)


@dataclass(frozen=True)
class MeasureParams:
    """Measure selection and parameters.

    For `variant="adm"` the level weighting comes from `level_exponent`
    (u) and the duration exponent `v`; for the set-similarity variants
    explicit `level_weights` (summing to 1) are required.
    """

    variant: str = "adm"
    level_exponent: float = 1.0
    duration_exponent: float = 1.0
    level_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown measure variant: {self.variant!r}")
        if self.variant == "adm":
            if self.level_exponent <= 0 or self.duration_exponent <= 0:
                raise ValueError("level and duration exponents must be > 0")
        else:
            if self.level_weights is None:
                raise ValueError(f"{self.variant} requires level_weights")
            w = np.asarray(self.level_weights, dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("level_weights must be nonnegative and sum to 1")

    def weights(self, m: int) -> np.ndarray:
        if self.variant == "adm":
            return level_weights_from_exponent(self.level_exponent, m)
        w = np.asarray(self.level_weights, dtype=float)
        if len(w) != m:
            raise ValueError(f"expected {m} level weights, got {len(w)}")
        return w


def level_weights_from_exponent(u: float, m: int) -> np.ndarray:
    """Normalized level weights proportional to ``l**u``."""
    w = np.arange(1, m + 1, dtype=float) ** u
    return w / w.sum()


def level_overlaps(a: CellSequence, b: CellSequence) -> LevelOverlap:
    """Per-level intersection sizes and set sizes of two cell sequences."""
    if a.m != b.m:
        raise TraceError(f"mismatched level counts: {a.m} vs {b.m}")
    ov = np.array([len(a.level(l) & b.level(l)) for l in range(1, a.m + 1)], dtype=np.int64)
    ta = np.array([len(a.level(l)) for l in range(1, a.m + 1)], dtype=np.int64)
    tb = np.array([len(b.level(l)) for l in range(1, b.m + 1)], dtype=np.int64)
    return LevelOverlap(ov, ta, tb)


def _per_level_similarity(variant, v, ov, ta, tb):
    ov = np.asarray(ov, dtype=float)
    ta = np.asarray(ta, dtype=float)
    tb = np.asarray(tb, dtype=float)
    if variant in ("adm", "dice"):
        denom = ta + tb
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = np.where(denom > 0, 2.0 * ov / np.where(denom > 0, denom, 1.0), 0.0)
        if variant == "adm" and v != 1.0:
            sim = sim ** v
        return sim
    if variant == "jaccard":
        denom = ta + tb - ov
        return np.where(denom > 0, ov / np.where(denom > 0, denom, 1.0), 0.0)
    if variant == "cosine":
        denom = np.sqrt(ta * tb)
        return np.where(denom > 0, ov / np.where(denom > 0, denom, 1.0), 0.0)
    raise ValueError(variant)


def score(params: MeasureParams, o: LevelOverlap) -> float:
    """Association degree in [0, 1] for any supported variant."""
    return score_from_counts(params, o.overlap, o.total_a, o.total_b)


def score_from_counts(params: MeasureParams, overlap, total_a, total_b) -> float:
    m = len(overlap)
    w = params.weights(m)
    sim = _per_level_similarity(params.variant, params.duration_exponent, overlap, total_a, total_b)
    return float(np.dot(w, sim))


def adm_score(params: MeasureParams, o: LevelOverlap) -> float:
    """The reference measure; requires ``variant="adm"``."""
    if params.variant != "adm":
        raise ValueError("adm_score requires the adm variant")
    return score(params, o)


def set_similarity_score(params: MeasureParams, o: LevelOverlap) -> float:
    """Weighted Dice/Jaccard/Cosine score; requires a set-similarity variant."""
    if params.variant == "adm":
        raise ValueError("set_similarity_score requires dice, jaccard, or cosine")
    return score(params, o)


def partial_score(params: MeasureParams, surviving, query_counts) -> float:
    """Score of the best entity still compatible with per-level survivor counts.

    Given that at most ``surviving[l]`` of the query's level-l cells can
    be shared, the score is maximized by an entity holding exactly those
    cells and nothing else, i.e. overlap = total_a = surviving.
    """
    return score_from_counts(params, surviving, surviving, query_counts)
