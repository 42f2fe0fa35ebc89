import numpy as np
import pytest

from tracetopk.hierarchy import load_sp_index
from tracetopk.traces import (
    AjPI,
    CellSequence,
    TraceDataset,
    TraceError,
    ajpis,
    discretize_trace,
    level_overlap_from_ajpis,
    lift_sequence,
)

EDGES = [
    ("L1", "L5"),
    ("L2", "L5"),
    ("L3", "L6"),
    ("L4", "L6"),
    ("L5", "ROOT"),
    ("L6", "ROOT"),
]

HOUR = 3600


@pytest.fixture
def idx():
    return load_sp_index(EDGES, tid="t", virtual_root=True)


class TestDiscretize:
    def test_two_whole_hours(self, idx):
        traces = discretize_trace([("e", "L1", 10 * HOUR, 12 * HOUR)], idx)
        assert traces["e"].cells() == {(10, "L1"), (11, "L1")}

    def test_point_presence(self, idx):
        traces = discretize_trace([("e", "L1", 10 * HOUR, 10 * HOUR)], idx)
        assert traces["e"].cells() == {(10, "L1")}

    def test_boundary_end_excluded(self, idx):
        traces = discretize_trace([("e", "L1", 10 * HOUR, 11 * HOUR)], idx)
        assert traces["e"].cells() == {(10, "L1")}

    def test_partial_hours(self, idx):
        traces = discretize_trace([("e", "L1", 10 * HOUR + 1800, 11 * HOUR + 900)], idx)
        assert traces["e"].cells() == {(10, "L1"), (11, "L1")}

    def test_unknown_location(self, idx):
        with pytest.raises(TraceError):
            discretize_trace([("e", "L9", 0, HOUR)], idx)

    def test_non_base_location(self, idx):
        with pytest.raises(TraceError):
            discretize_trace([("e", "L5", 0, HOUR)], idx)

    def test_reversed_interval(self, idx):
        with pytest.raises(TraceError):
            discretize_trace([("e", "L1", HOUR, 0)], idx)


class TestLiftSequence:
    def test_worked_lift(self, idx):
        seq = lift_sequence({(1, "L1"), (2, "L3")}, idx, "e")
        assert seq.level(2) == {(1, "L1"), (2, "L3")}
        assert seq.level(1) == {(1, "L5"), (2, "L6")}

    def test_empty(self, idx):
        seq = lift_sequence(set(), idx, "e")
        assert all(len(seq.level(l)) == 0 for l in (1, 2))

    def test_siblings_deduplicate(self, idx):
        seq = lift_sequence({(1, "L1"), (1, "L2")}, idx, "e")
        assert seq.level(1) == {(1, "L5")}

    def test_relift_idempotent(self, idx):
        seq = lift_sequence({(1, "L1"), (2, "L3"), (2, "L4")}, idx, "e")
        again = lift_sequence(seq.level(2), idx, "e")
        assert again.sets == seq.sets


class TestAjpis:
    def test_sibling_units_meet_at_parent(self, idx):
        a = lift_sequence({(1, "L1")}, idx, "a")
        b = lift_sequence({(1, "L2")}, idx, "b")
        got = ajpis(a, b, idx)
        assert got == {AjPI(frozenset({"a", "b"}), "t", 1, ("L5",), (1, 2))}

    def test_identical_sequences_cover_every_cell(self, idx):
        cells = {(1, "L1"), (2, "L3"), (3, "L3")}
        a = lift_sequence(cells, idx, "a")
        b = lift_sequence(cells, idx, "b")
        got = ajpis(a, b, idx)
        deepest = {p for p in got if p.level == 2}
        covered = set()
        for p in deepest:
            covered |= {(t, p.path[-1]) for t in range(*p.period)}
        assert covered == cells
        # contiguous times at L3 merge into one run
        assert AjPI(frozenset({"a", "b"}), "t", 2, ("L6", "L3"), (2, 4)) in got

    def test_disjoint_times_empty(self, idx):
        a = lift_sequence({(1, "L1")}, idx, "a")
        b = lift_sequence({(2, "L1")}, idx, "b")
        assert ajpis(a, b, idx) == set()

    def test_mismatched_tid(self, idx):
        a = lift_sequence({(1, "L1")}, idx, "a")
        b = CellSequence("b", "other", a.sets)
        with pytest.raises(TraceError):
            ajpis(a, b, idx)

    def test_intersection_implies_ajpi_at_level(self, idx):
        # If the level-l sets intersect there is an AjPI of level >= l.
        rng = np.random.default_rng(5)
        bases = ["L1", "L2", "L3", "L4"]
        for _ in range(50):
            ca = {(int(t), bases[int(u)]) for t, u in zip(rng.integers(0, 5, 6), rng.integers(0, 4, 6))}
            cb = {(int(t), bases[int(u)]) for t, u in zip(rng.integers(0, 5, 6), rng.integers(0, 4, 6))}
            a = lift_sequence(ca, idx, "a")
            b = lift_sequence(cb, idx, "b")
            got = ajpis(a, b, idx)
            for l in (1, 2):
                if a.level(l) & b.level(l):
                    assert any(p.level >= l for p in got)

    def test_overlap_durations_match_set_intersections(self, idx):
        rng = np.random.default_rng(11)
        bases = ["L1", "L2", "L3", "L4"]
        for _ in range(50):
            ca = {(int(t), bases[int(u)]) for t, u in zip(rng.integers(0, 6, 8), rng.integers(0, 4, 8))}
            cb = {(int(t), bases[int(u)]) for t, u in zip(rng.integers(0, 6, 8), rng.integers(0, 4, 8))}
            a = lift_sequence(ca, idx, "a")
            b = lift_sequence(cb, idx, "b")
            got = level_overlap_from_ajpis(ajpis(a, b, idx), idx, idx.m)
            want = [len(a.level(l) & b.level(l)) for l in (1, 2)]
            assert got.tolist() == want


class TestTraceDataset:
    def test_round_trip_sequences(self, idx):
        cells = {
            "a": {(1, "L2"), (2, "L1")},
            "b": {(1, "L1"), (2, "L2")},
            "c": {(1, "L3"), (2, "L1")},
        }
        ds = TraceDataset.from_cells(cells, idx)
        assert ds.n_entities == 3
        for e, cs in cells.items():
            seq = ds.sequence(e)
            assert seq.level(2) == cs
            assert seq.level(1) == {(t, idx.parent(u)) for t, u in cs}

    def test_level_counts(self, idx):
        ds = TraceDataset.from_cells({"a": {(1, "L1"), (1, "L2")}}, idx)
        assert ds.level_counts(2).tolist() == [2]
        assert ds.level_counts(1).tolist() == [1]

    def test_encode_matches_internal(self, idx):
        cells = {"a": {(3, "L2"), (5, "L1"), (4, "L4")}}
        ds = TraceDataset.from_cells(cells, idx)
        seq = ds.sequence("a")
        enc = ds.encode_sequence(seq)
        for l in (1, 2):
            assert enc[l].tolist() == ds.level_cells("a", l).tolist()
