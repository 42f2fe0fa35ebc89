"""Presence traces and their per-level ST-cell set sequences.

A raw record says an entity was at a base spatial unit over a time
interval.  Discretization turns intervals into base ST-cells (one cell
per temporal unit x unit).  Lifting replaces every cell's unit by its
ancestor to produce one cell set per hierarchy level; co-occurrences of
two entities are read off those per-level sets.

All transformations here are pure; they can safely run per-entity in
parallel.  `TraceDataset` packs a whole corpus into sorted integer code
arrays (one per level) for the query and indexing layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hierarchy import HierarchyError, SpIndex

__all__ = [
    "TraceError",
    "STCell",
    "PresenceInstance",
    "DigitalTrace",
    "CellSequence",
    "AjPI",
    "discretize_trace",
    "lift_sequence",
    "ajpis",
    "level_overlap_from_ajpis",
    "TraceDataset",
]


class TraceError(ValueError):
    """Raised for malformed trace records."""


@dataclass(frozen=True)
class STCell:
    """A (temporal unit, spatial unit) pair; level-m cells are atomic."""

    time: int
    unit: str
    level: int


@dataclass(frozen=True)
class PresenceInstance:
    """An entity's presence at one unit over a half-open period of temporal units."""

    entity: str
    tid: str
    level: int
    path: tuple[str, ...]
    period: tuple[int, int]

    def __post_init__(self):
        if len(self.path) != self.level:
            raise TraceError("path length must equal level")
        if self.period[1] <= self.period[0]:
            raise TraceError("period must be nonempty")


@dataclass(frozen=True)
class DigitalTrace:
    """All base-level presence instances of one entity."""

    entity: str
    instances: frozenset[PresenceInstance]

    def cells(self) -> frozenset[tuple[int, str]]:
        """Base ST-cells covered by the trace, as (time, unit) pairs."""
        out = set()
        for p in self.instances:
            for t in range(p.period[0], p.period[1]):
                out.add((t, p.path[-1]))
        return frozenset(out)


@dataclass(frozen=True)
class CellSequence:
    """Per-level ST-cell sets of one entity; ``sets[i]`` is level i+1."""

    entity: str
    tid: str
    sets: tuple[frozenset[tuple[int, str]], ...]

    @property
    def m(self) -> int:
        return len(self.sets)

    def level(self, l: int) -> frozenset[tuple[int, str]]:
        return self.sets[l - 1]


@dataclass(frozen=True)
class AjPI:
    """A maximal co-occurrence of two entities at their deepest shared unit."""

    entities: frozenset[str]
    tid: str
    level: int
    path: tuple[str, ...]
    period: tuple[int, int]


def discretize_trace(records, index: SpIndex, unit_seconds: int = 3600):
    """Discretize raw ``(entity, base_unit, start, end)`` records.

    Times are epoch seconds with half-open ``[start, end)`` semantics: a
    presence ending exactly on a temporal-unit boundary does not occupy
    the following unit, and a zero-length record yields the single unit
    containing its timestamp.

    Returns a dict entity -> :class:`DigitalTrace`.
    """
    per_entity: dict[str, set[PresenceInstance]] = {}
    for rec in records:
        entity, unit, start, end = rec
        if unit not in index:
            raise TraceError(f"unknown location id: {unit!r}")
        if index.level(unit) != index.m:
            raise TraceError(f"location {unit!r} is not a base unit")
        if end < start:
            raise TraceError(f"record for {entity!r} has end < start")
        t0 = int(start) // unit_seconds
        if end == start:
            t1 = t0 + 1
        else:
            t1 = (int(end) + unit_seconds - 1) // unit_seconds
        path = index.path_to(unit)
        pi = PresenceInstance(entity, index.tid, index.m, path, (t0, t1))
        per_entity.setdefault(entity, set()).add(pi)
    return {e: DigitalTrace(e, frozenset(ps)) for e, ps in per_entity.items()}


def lift_sequence(base_cells, index: SpIndex, entity: str = "") -> CellSequence:
    """Build the per-level cell set sequence from base cells.

    ``sets[m]`` is the input; each coarser set replaces every unit by its
    parent (deduplicating siblings that share one).
    """
    m = index.m
    sets = [set() for _ in range(m)]
    for t, unit in base_cells:
        if unit not in index:
            raise HierarchyError(f"unknown unit id: {unit!r}")
        if index.level(unit) != m:
            raise TraceError(f"cell unit {unit!r} is not at level {m}")
        sets[m - 1].add((t, unit))
    for l in range(m - 1, 0, -1):
        parents = {(t, index.parent(u)) for t, u in sets[l]}
        sets[l - 1] = parents
    return CellSequence(entity, index.tid, tuple(frozenset(s) for s in sets))


def ajpis(a: CellSequence, b: CellSequence, index: SpIndex) -> set[AjPI]:
    """Maximal co-occurrences between two entities.

    For each time where both entities occupy a unit with no deeper
    co-occupied unit below it, one AjPI is emitted; runs of consecutive
    times at the same unit merge into a single AjPI with a longer period.
    """
    if a.tid != b.tid:
        raise TraceError(f"mismatched hierarchy ids: {a.tid!r} vs {b.tid!r}")
    m = index.m
    shared = [a.level(l) & b.level(l) for l in range(1, m + 1)]
    deepest: dict[str, list[int]] = {}
    for l in range(1, m + 1):
        finer = shared[l] if l < m else frozenset()
        covered = {(t, index.parent(u)) for t, u in finer}
        for t, u in shared[l - 1]:
            if (t, u) not in covered:
                deepest.setdefault(u, []).append(t)

    pair = frozenset({a.entity, b.entity})
    out = set()
    for u, times in deepest.items():
        times.sort()
        path = index.path_to(u)
        level = index.level(u)
        run_start = prev = times[0]
        for t in times[1:]:
            if t == prev + 1:
                prev = t
                continue
            out.add(AjPI(pair, a.tid, level, path, (run_start, prev + 1)))
            run_start = prev = t
        out.add(AjPI(pair, a.tid, level, path, (run_start, prev + 1)))
    return out


def level_overlap_from_ajpis(ajpi_set, index: SpIndex, m: int):
    """Per-level overlap durations implied by a set of AjPIs.

    The duration at level l counts distinct (time, level-l ancestor)
    pairs across all AjPIs of level >= l; it equals the size of the
    level-l cell set intersection.
    """
    per_level = [set() for _ in range(m)]
    for p in ajpi_set:
        for l in range(1, p.level + 1):
            anc = p.path[l - 1]
            for t in range(p.period[0], p.period[1]):
                per_level[l - 1].add((t, anc))
    return np.array([len(s) for s in per_level], dtype=np.int64)


class TraceDataset:
    """A corpus of cell sequences packed into per-level sorted code arrays.

    Level-l cells are encoded as ``time_index * W_l + unit_index`` where
    time indexes are rebased to ``0..n_times-1``.  Per entity and level,
    codes are sorted and unique, which makes overlap counting a merge.
    """

    def __init__(self, index: SpIndex, entity_ids, level_codes, level_offsets, t_base, n_times, unit_seconds):
        self.index = index
        self.entity_ids = list(entity_ids)
        self.entity_pos = {e: i for i, e in enumerate(self.entity_ids)}
        self._codes = level_codes      # level -> int64 array of all entities' codes
        self._offsets = level_offsets  # level -> int64 array (n_entities + 1)
        self.t_base = int(t_base)
        self.n_times = int(n_times)
        self.unit_seconds = int(unit_seconds)

    # -- construction ----------------------------------------------------

    @classmethod
    def from_cells(cls, cells_by_entity, index: SpIndex, unit_seconds=3600):
        """Build from dict entity -> iterable of (time, base unit id) cells."""
        entities = sorted(cells_by_entity)
        times_all = []
        units_all = []
        counts = []
        for e in entities:
            cells = cells_by_entity[e]
            ts = np.array([c[0] for c in cells], dtype=np.int64)
            us = np.array([index.base_pos(c[1]) for c in cells], dtype=np.int64)
            times_all.append(ts)
            units_all.append(us)
            counts.append(len(ts))
        if entities:
            times = np.concatenate(times_all) if times_all else np.array([], dtype=np.int64)
        else:
            times = np.array([], dtype=np.int64)
        units = np.concatenate(units_all) if entities else np.array([], dtype=np.int64)
        t_base = int(times.min()) if len(times) else 0
        n_times = int(times.max()) - t_base + 1 if len(times) else 0
        ent_idx = np.repeat(np.arange(len(entities), dtype=np.int64), counts)
        return cls._pack(index, entities, ent_idx, times - t_base, units, t_base, n_times, unit_seconds)

    @classmethod
    def from_traces(cls, traces, index: SpIndex, unit_seconds=3600):
        """Build from dict entity -> DigitalTrace (deduplicates cells)."""
        return cls.from_cells({e: tr.cells() for e, tr in traces.items()}, index, unit_seconds)

    @classmethod
    def _pack(cls, index, entities, ent_idx, times, base_units, t_base, n_times, unit_seconds):
        m = index.m
        n_e = len(entities)
        level_codes = {}
        level_offsets = {}
        for l in range(1, m + 1):
            w = index.level_width[l]
            anc = index.base_ancestor_index(l)
            codes = times * w + anc[base_units]
            order = np.lexsort((codes, ent_idx))
            ent_sorted = ent_idx[order]
            code_sorted = codes[order]
            keep = np.ones(len(code_sorted), dtype=bool)
            if len(code_sorted):
                keep[1:] = (code_sorted[1:] != code_sorted[:-1]) | (ent_sorted[1:] != ent_sorted[:-1])
            ent_sorted = ent_sorted[keep]
            code_sorted = code_sorted[keep]
            offs = np.zeros(n_e + 1, dtype=np.int64)
            np.add.at(offs, ent_sorted + 1, 1)
            offs = np.cumsum(offs)
            level_codes[l] = code_sorted
            level_offsets[l] = offs
        return cls(index, entities, level_codes, level_offsets, t_base, n_times, unit_seconds)

    # -- access ------------------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def m(self) -> int:
        return self.index.m

    def level_cells(self, entity, level) -> np.ndarray:
        """Sorted unique level codes of one entity (view into the pool)."""
        i = self.entity_pos[entity]
        offs = self._offsets[level]
        return self._codes[level][offs[i]:offs[i + 1]]

    def level_counts(self, level) -> np.ndarray:
        """Per-entity set sizes at one level."""
        return np.diff(self._offsets[level])

    def base_cells_arrays(self, entity):
        """(times, base unit positions) of one entity, rebased times."""
        codes = self.level_cells(entity, self.m)
        w = self.index.level_width[self.m]
        return codes // w, codes % w

    def sequence(self, entity) -> CellSequence:
        """Materialize the CellSequence of one entity (for oracles / reports)."""
        m = self.m
        sets = []
        for l in range(1, m + 1):
            w = self.index.level_width[l]
            ids = self.index.level_units[l]
            cells = self.level_cells(entity, l)
            sets.append(frozenset((int(c // w) + self.t_base, ids[int(c % w)]) for c in cells))
        return CellSequence(entity, self.index.tid, tuple(sets))

    def encode_sequence(self, seq: CellSequence):
        """Per-level sorted code arrays for an ad-hoc cell sequence.

        The sequence must use this dataset's hierarchy; times outside the
        dataset's window are allowed (codes simply extend past it).
        """
        if seq.m != self.m:
            raise TraceError("sequence level count does not match dataset")
        out = {}
        for l in range(1, self.m + 1):
            w = self.index.level_width[l]
            codes = []
            for t, u in seq.level(l):
                pos = self.index.level_pos(u)
                codes.append((t - self.t_base) * w + pos)
            out[l] = np.array(sorted(codes), dtype=np.int64)
        return out

    def total_cells(self) -> int:
        return int(len(self._codes[self.m]))
