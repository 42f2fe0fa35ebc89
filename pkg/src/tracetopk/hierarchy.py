"""Spatial hierarchies (sp-index trees) over base spatial units.

A hierarchy is a fixed tree of spatial units: level 1 holds the coarsest
units and level m the base units where entities can actually be present.
An optional virtual root (level 0) sits above level 1 so that a level can
contain more than one unit.  Instances are immutable after construction
and safe for unrestricted concurrent reads.

Besides loading declared hierarchies from edge lists / CSV files, this
module generates synthetic grid hierarchies: a square area divided into
base cells, with per-level unit counts following ``W_l = Q * l**a`` and
relative unit sizes following ``i**b``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HierarchyError",
    "SpatialUnit",
    "SpIndex",
    "GridHierarchyConfig",
    "load_sp_index",
    "generate_grid_hierarchy",
    "base_descendants",
    "read_hierarchy_csv",
    "write_hierarchy_csv",
]


class HierarchyError(ValueError):
    """Raised for malformed hierarchy input (cycles, forests, ragged depth)."""


@dataclass(frozen=True)
class SpatialUnit:
    """One node of an sp-index: a spatial unit at a given level."""

    id: str
    level: int
    parent: str | None
    tid: str


class SpIndex:
    """Immutable spatial hierarchy with fast base-descendant lookups.

    Base units are kept in a depth-first traversal order, so every unit
    (at any level) covers a contiguous span ``[lo, hi)`` of that order.
    All per-level lookups used by the hashing and query layers are
    precomputed as numpy arrays.

    Parameters
    ----------
    tid : str
        Identifier of this hierarchy tree.
    parents : dict
        Maps each unit id to its parent id (the root maps to ``None``).
    children_order : dict
        Ordered child lists; determines the base traversal order.
    root_id : str
        The unique top unit.
    virtual_root : bool
        When true the root is a level-0 placeholder excluded from the m
        counted levels; its children form level 1.  When false the root
        itself is level 1.
    meta : dict, optional
        Free-form metadata (e.g. grid geometry for generated hierarchies).
    """

    def __init__(self, tid, parents, children_order, root_id, virtual_root=False, meta=None):
        self.tid = tid
        self.root_id = root_id
        self.virtual_root = bool(virtual_root)
        self.meta = dict(meta or {})
        self._parent = dict(parents)
        self._children = {u: tuple(cs) for u, cs in children_order.items()}

        depth = {root_id: 0}
        order = []
        stack = [root_id]
        while stack:
            u = stack.pop()
            order.append(u)
            for c in reversed(self._children.get(u, ())):
                depth[c] = depth[u] + 1
                stack.append(c)
        if len(depth) != len(self._parent):
            raise HierarchyError("hierarchy is not connected")

        leaf_depths = {depth[u] for u in self._parent if not self._children.get(u)}
        if len(leaf_depths) != 1:
            raise HierarchyError(f"ragged leaf depth: leaves at depths {sorted(leaf_depths)}")
        leaf_depth = leaf_depths.pop()

        # level(u) = depth(u) when the root is virtual, else depth(u) + 1;
        # m is the level of the leaves.
        offset = 0 if self.virtual_root else 1
        self._level = {u: depth[u] + offset for u in depth}
        self.m = leaf_depth + offset
        if self.m < 1:
            raise HierarchyError("hierarchy must contain at least one counted level")

        self.units: dict[str, SpatialUnit] = {
            u: SpatialUnit(u, self._level[u], self._parent[u], tid) for u in self._parent
        }

        # Base traversal order: leaves in DFS order; spans per unit.
        base = [u for u in order if not self._children.get(u)]
        self.base_units = tuple(base)
        self.n_base = len(base)
        self._base_pos = {u: i for i, u in enumerate(base)}
        self._span = {}

        def _span_of(u):
            if u in self._span:
                return self._span[u]
            kids = self._children.get(u)
            if not kids:
                p = self._base_pos[u]
                s = (p, p + 1)
            else:
                first = _span_of(kids[0])
                last = _span_of(kids[-1])
                s = (first[0], last[1])
            self._span[u] = s
            return s

        for u in order:
            _span_of(u)

        # Per-level unit tables and base->ancestor index arrays.
        self.level_units: dict[int, tuple[str, ...]] = {}
        self._level_pos: dict[str, int] = {}
        for u in order:
            lvl = self._level[u]
            if 1 <= lvl <= self.m:
                self.level_units.setdefault(lvl, [])
                self._level_pos[u] = len(self.level_units[lvl])
                self.level_units[lvl].append(u)
        self.level_units = {l: tuple(us) for l, us in self.level_units.items()}
        self.level_width = {l: len(us) for l, us in self.level_units.items()}

        self._anc_idx = {}
        self._anc_id = {}
        for l in range(1, self.m + 1):
            arr = np.empty(self.n_base, dtype=np.int64)
            ids = np.empty(self.n_base, dtype=object)
            for j, u in enumerate(self.level_units[l]):
                lo, hi = self._span[u]
                arr[lo:hi] = j
                ids[lo:hi] = u
            self._anc_idx[l] = arr
            self._anc_id[l] = ids

        # Level-l unit -> base span arrays (contiguous in base order).
        self.level_span_starts = {
            l: np.array([self._span[u][0] for u in self.level_units[l]], dtype=np.int64)
            for l in range(1, self.m + 1)
        }

    # -- basic lookups -------------------------------------------------

    def parent(self, unit_id):
        self._check(unit_id)
        return self._parent[unit_id]

    def children(self, unit_id):
        self._check(unit_id)
        return self._children.get(unit_id, ())

    def level(self, unit_id):
        self._check(unit_id)
        return self._level[unit_id]

    def span(self, unit_id):
        """Contiguous ``[lo, hi)`` range of base traversal positions under a unit."""
        self._check(unit_id)
        return self._span[unit_id]

    def base_pos(self, unit_id):
        if unit_id not in self._base_pos:
            raise HierarchyError(f"not a base unit: {unit_id!r}")
        return self._base_pos[unit_id]

    def level_pos(self, unit_id):
        """Index of a unit within its level's unit tuple."""
        if unit_id not in self._level_pos:
            raise HierarchyError(f"unknown or virtual unit id: {unit_id!r}")
        return self._level_pos[unit_id]

    def ancestor_at(self, unit_id, level):
        """Ancestor of `unit_id` at the requested level (may be the unit itself)."""
        self._check(unit_id)
        u = unit_id
        while self._level[u] > level:
            u = self._parent[u]
        if self._level[u] != level:
            raise HierarchyError(f"{unit_id!r} has no ancestor at level {level}")
        return u

    def base_ancestor_index(self, level):
        """Array mapping base position -> index of its level-`level` ancestor."""
        return self._anc_idx[level]

    def base_ancestor_ids(self, level):
        return self._anc_id[level]

    def path_to(self, unit_id):
        """Unit ids from level 1 down to `unit_id` (virtual root excluded)."""
        self._check(unit_id)
        path = []
        u = unit_id
        while u is not None and self._level[u] >= 1:
            path.append(u)
            u = self._parent[u]
        return tuple(reversed(path))

    def _check(self, unit_id):
        if unit_id not in self._parent:
            raise HierarchyError(f"unknown unit id: {unit_id!r}")

    def __contains__(self, unit_id):
        return unit_id in self._parent

    def __repr__(self):
        return f"SpIndex(tid={self.tid!r}, m={self.m}, base_units={self.n_base})"


def load_sp_index(edges, tid="0", virtual_root=False, meta=None):
    """Build an SpIndex from ``(child_id, parent_id)`` edges.

    The edges must form a single rooted tree whose leaves all sit at the
    same depth.  Levels are assigned root=1 .. leaves=m; with
    ``virtual_root=True`` the root is instead treated as a level-0
    placeholder and its children become level 1.
    """
    parents = {}
    for child, parent in edges:
        if child == parent:
            raise HierarchyError(f"self-loop at {child!r}")
        if child in parents:
            raise HierarchyError(f"duplicate child {child!r}")
        parents[child] = parent

    all_ids = set(parents) | {p for p in parents.values() if p is not None}
    roots = [u for u in all_ids if parents.get(u) is None]
    if len(roots) != 1:
        raise HierarchyError(f"expected exactly one root, found {sorted(map(str, roots))}")
    root = roots[0]
    parents[root] = None

    # Cycle check: walking up from any node must terminate at the root.
    for u in all_ids:
        seen = set()
        v = u
        while v is not None:
            if v in seen:
                raise HierarchyError(f"cycle detected through {v!r}")
            seen.add(v)
            v = parents[v]

    children: dict[str, list[str]] = {u: [] for u in all_ids}
    for child, parent in edges:
        if parent is not None:
            children[parent].append(child)

    return SpIndex(tid, parents, children, root, virtual_root=virtual_root, meta=meta)


def base_descendants(index: SpIndex, unit_id: str) -> set[str]:
    """All base (level-m) units under `unit_id`; a base unit returns itself."""
    lo, hi = index.span(unit_id)
    return set(index.base_units[lo:hi])


# -- synthetic grid hierarchies -----------------------------------------


@dataclass(frozen=True)
class GridHierarchyConfig:
    """Square-grid hierarchy parameters.

    ``side_length`` and ``base_side`` fix the number of base cells,
    ``(side_length/base_side)**2``.  Level l in [1, m] holds
    ``W_l = round(Q * l**a)`` units (Q normalizes so level m has one unit
    per base cell) whose sizes are proportional to ``i**b`` for unit index
    i in [1, W_l].
    """

    side_length: float
    base_side: float
    levels: int
    width_exponent: float = 2.0
    density_exponent: float = 2.0

    def __post_init__(self):
        ratio = self.side_length / self.base_side
        if abs(ratio - round(ratio)) > 1e-9:
            raise HierarchyError("side_length must be divisible by base_side")
        if self.levels < 1:
            raise HierarchyError("levels must be >= 1")
        if not (math.isfinite(self.width_exponent) and math.isfinite(self.density_exponent)):
            raise HierarchyError("exponents must be finite")

    @property
    def grid_side(self) -> int:
        return int(round(self.side_length / self.base_side))

    @property
    def n_base(self) -> int:
        return self.grid_side ** 2


def level_widths(config: GridHierarchyConfig) -> np.ndarray:
    """Per-level unit counts ``W_l`` (rounded, clipped to [1, n_base])."""
    n = config.n_base
    m = config.levels
    q = n / (m ** config.width_exponent)
    w = np.array([round(q * l ** config.width_exponent) for l in range(1, m + 1)], dtype=np.int64)
    w = np.maximum(w, 1)
    w[-1] = n  # level m is the base level by definition
    if np.any(np.diff(w) < 0) or np.any(w > n):
        raise HierarchyError(f"infeasible nesting: widths {w.tolist()} are not nondecreasing within [1, {n}]")
    return w


def _largest_remainder(weights, total, minimum=1):
    """Integer sizes proportional to `weights` summing exactly to `total`.

    Largest-remainder rounding followed by a repair pass that lifts every
    size to at least `minimum`, taking the excess back from the largest
    entries.
    """
    w = np.asarray(weights, dtype=float)
    if minimum * len(w) > total:
        raise HierarchyError("cannot honor minimum unit size")
    target = w / w.sum() * total
    out = np.floor(target).astype(np.int64)
    frac = target - out
    short = int(total - out.sum())
    if short:
        order = np.argsort(-frac, kind="stable")
        out[order[:short]] += 1
    deficit = np.maximum(minimum - out, 0)
    need = int(deficit.sum())
    if need:
        out += deficit
        # Take the excess back one cell at a time from the largest units so
        # no single unit absorbs the whole repair.
        while need > 0:
            for i in np.argsort(-out, kind="stable"):
                if need == 0:
                    break
                if out[i] > minimum:
                    out[i] -= 1
                    need -= 1
    return out


def level_unit_sizes(config: GridHierarchyConfig, level: int) -> np.ndarray:
    """Rounded base-cell counts of the units at one level (sum = n_base)."""
    w = int(level_widths(config)[level - 1])
    weights = np.arange(1, w + 1, dtype=float) ** config.density_exponent
    return _largest_remainder(weights, config.n_base, minimum=1)


def _snap_cuts(ideal_cuts, required, n):
    """Move the nearest free cut onto each required coarser-level boundary."""
    cuts = sorted(set(int(c) for c in ideal_cuts))
    required = sorted(set(int(b) for b in required))
    cutset = set(cuts)
    movable = sorted(cutset - set(required))
    for b in required:
        if b in cutset:
            continue
        i = bisect.bisect_left(movable, b)
        cands = []
        if i < len(movable):
            cands.append(movable[i])
        if i > 0:
            cands.append(movable[i - 1])
        nearest = min(cands, key=lambda c: (abs(c - b), c))
        movable.remove(nearest)
        cutset.remove(nearest)
        cutset.add(b)
    return sorted(cutset)


def generate_grid_hierarchy(config: GridHierarchyConfig, seed: int = 0) -> SpIndex:
    """Generate the synthetic grid hierarchy as a virtual-rooted SpIndex.

    Base cells are ordered row-major; each level cuts that traversal into
    ``W_l`` contiguous segments with lengths proportional to ``i**b``
    (largest-remainder rounded), and the cuts are snapped onto the nearest
    coarser-level boundary so that every level-(l+1) unit nests in exactly
    one level-l unit.  The construction is deterministic; `seed` is
    accepted for interface stability and recorded in the metadata.
    """
    n = config.n_base
    m = config.levels
    widths = level_widths(config)

    boundaries: dict[int, list[int]] = {}
    prev_interior: list[int] = []
    for l in range(1, m + 1):
        sizes = level_unit_sizes(config, l)
        ideal = np.cumsum(sizes)[:-1]
        interior = _snap_cuts(ideal, prev_interior, n)
        if len(interior) != widths[l - 1] - 1:
            raise HierarchyError("cut snapping lost a boundary")
        boundaries[l] = [0] + interior + [n]
        prev_interior = interior

    parents: dict[str, str | None] = {"root": None}
    children: dict[str, list[str]] = {"root": []}
    side = config.grid_side

    def unit_name(level, i):
        if level == m:
            return f"b{i}"
        return f"u{level}_{i}"

    for l in range(1, m + 1):
        bl = boundaries[l]
        up = boundaries[l - 1] if l > 1 else [0, n]
        for i in range(len(bl) - 1):
            uid = unit_name(l, i)
            if l == 1:
                parent = "root"
            else:
                j = bisect.bisect_right(up, bl[i]) - 1
                parent = unit_name(l - 1, j)
            parents[uid] = parent
            children.setdefault(parent, []).append(uid)
            children.setdefault(uid, [])

    meta = {
        "grid_side": side,
        "base_side": config.base_side,
        "levels": m,
        "width_exponent": config.width_exponent,
        "density_exponent": config.density_exponent,
        "seed": int(seed),
    }
    return SpIndex("grid", parents, children, "root", virtual_root=True, meta=meta)


# -- file format ---------------------------------------------------------


def write_hierarchy_csv(index: SpIndex, path):
    """Write `child_id,parent_id` rows with a `# tid=` header (root row uses '-')."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# tid={index.tid}\n")
        fh.write(f"{index.root_id},-\n")
        stack = [index.root_id]
        while stack:
            u = stack.pop()
            for c in index.children(u):
                fh.write(f"{c},{u}\n")
                stack.append(c)


def read_hierarchy_csv(path, virtual_root=False) -> SpIndex:
    """Load a hierarchy CSV written by :func:`write_hierarchy_csv`."""
    tid = "0"
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("tid="):
                    tid = body[len("tid="):]
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise HierarchyError(f"{path}:{lineno}: expected 'child,parent'")
            child, parent = parts[0].strip(), parts[1].strip()
            edges.append((child, None if parent == "-" else parent))
    return load_sp_index(edges, tid=tid, virtual_root=virtual_root)
