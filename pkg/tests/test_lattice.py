import numpy as np
import pytest

from src.tools.lattice import (
    BallWindow,
    CellIndex,
    CellKey,
    CellWindow,
    UnionWindow,
    aggregate,
    closed_cube_meets_ball,
    digit_table,
    digits_to_index,
    keys_to_coords,
    ones_index,
    pack,
    sort_cells,
    unpack,
)
from src.utils.errors import DomainError


class TestCellKey:
    def test_child_and_prefix(self):
        cell = CellKey.origin(2, 3).child((1, 2)).child((0, 2))
        assert cell == CellKey(2, (3, 8), 3)
        assert cell.prefix(1) == CellKey(1, (1, 2), 3)
        assert cell.prefix(0) == CellKey.origin(2, 3)

    def test_digits_round_trip(self):
        cell = CellKey(3, (5, 2), 2)
        assert cell.digits() == ((1, 0), (0, 1), (1, 0))
        assert CellKey.from_digits(cell.digits(), 2) == cell

    def test_lower_corner(self):
        assert CellKey(2, (1, 3), 2).lower_corner() == (0.25, 0.75)

    @pytest.mark.parametrize("level, coords", [(-1, (0,)), (1, (2, 0)), (2, (-1, 0))])
    def test_out_of_range(self, level, coords):
        with pytest.raises(DomainError):
            CellKey(level, coords, 2)

    def test_bad_digits(self):
        with pytest.raises(DomainError):
            CellKey.origin(2, 2).child((2, 0))
        with pytest.raises(DomainError):
            CellKey.origin(2, 2).prefix(1)


class TestDigitTables:
    def test_lexicographic_table(self):
        table = digit_table(2, 2)
        assert table.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
        assert not table.flags.writeable

    def test_index_encoding(self):
        table = digit_table(3, 2)
        assert digits_to_index(table, 3).tolist() == list(range(9))
        assert table[ones_index(3, 2)].tolist() == [1, 1]


class TestArrays:
    def test_aggregate_merges_and_sorts(self):
        coords = np.array([[3, 1], [0, 2], [3, 1], [0, 0]])
        out, counts = aggregate(coords, np.array([1, 2, 4, 1]), 2, 2)
        assert out.tolist() == [[0, 0], [0, 2], [3, 1]]
        assert counts.tolist() == [1, 2, 5]

    def test_aggregate_empty(self):
        out, counts = aggregate(np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64), 4, 2)
        assert out.shape == (0, 3)
        assert counts.size == 0

    def test_aggregate_beyond_int64(self):
        # 2^40 per axis in d = 2 no longer packs into one int64
        level = 40
        big = 2**level - 1
        coords = np.array([[big, 0], [0, big], [big, 0]], dtype=object)
        out, counts = aggregate(coords, np.ones(3, dtype=np.int64), level, 2)
        assert [tuple(r) for r in out.tolist()] == [(0, big), (big, 0)]
        assert counts.tolist() == [1, 2]

    def test_pack_unpack(self):
        coords = np.array([[0, 7], [5, 3], [7, 7]])
        assert np.array_equal(unpack(pack(coords, 3, 2), 3, 2, 2), coords)

    def test_sort_cells(self):
        coords = np.array([[1, 0], [0, 1], [0, 0]])
        assert coords[sort_cells(coords, 1, 2)].tolist() == [[0, 0], [0, 1], [1, 0]]

    def test_cell_index(self):
        coords = np.array([[0, 0], [1, 2], [3, 3]])
        index = CellIndex(coords, 2, 2)
        found = index.find(np.array([[1, 2], [2, 2], [4, 0], [-1, 0], [3, 3]]))
        assert found.tolist() == [1, -1, -1, -1, 2]
        assert index.contains(np.array([[0, 0]])).tolist() == [True]

    def test_keys_to_coords(self):
        cells = [CellKey(1, (1, 0)), CellKey(1, (0, 1)), CellKey(1, (1, 0))]
        coords, level, base = keys_to_coords(cells)
        assert coords.tolist() == [[0, 1], [1, 0]]
        assert (level, base) == (1, 2)
        with pytest.raises(DomainError):
            keys_to_coords([CellKey(1, (0, 0)), CellKey(2, (0, 0))])


class TestWindows:
    def test_cell_window_keeps_ancestors_and_descendants(self):
        window = CellWindow(CellKey(2, (1, 3), 2))
        assert window.keep(np.array([[0, 1], [1, 1]]), 1, 2).tolist() == [True, False]
        assert window.keep(np.array([[2, 6], [2, 7], [3, 7], [4, 6]]), 3, 2).tolist() == [True, True, True, False]

    def test_ball_window_uses_closed_cubes(self):
        window = BallWindow((0.5, 0.5), 0.1)
        coords = np.array([[0, 0], [1, 1], [3, 3]])
        # cell (1,1) at level 2 is [0.25,0.5]^2 and touches the centre
        assert window.keep(coords, 2, 2).tolist() == [False, True, False]
        assert closed_cube_meets_ball(CellKey(1, (1, 1)), (0.5, 0.5), 0.01)

    def test_union_window(self):
        window = UnionWindow([CellWindow(CellKey(1, (0, 0))), CellWindow(CellKey(1, (1, 1)))])
        assert window.keep(np.array([[0, 0], [0, 1], [1, 1]]), 1, 2).tolist() == [True, False, True]
