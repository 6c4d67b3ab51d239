"""
Sparse B-adic lattice primitives.

Cells of the level-m grid are identified by d integer coordinates in
[0, B^m). Collections of cells are kept as lexicographically sorted
``(n, d)`` coordinate arrays. While ``(B^m)^d`` fits in a signed 64-bit
integer, cells are packed into a single int64 key so that aggregation and
membership are plain numpy sort/search operations; deeper levels fall back to
tuple keys in Python dicts.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np

from src.utils.errors import DomainError

_INT64_LIMIT = 2**62


@dataclass(frozen=True, order=True)
class CellKey:
    """A level-m cell of the B-adic grid."""
    level: int
    coords: Tuple[int, ...]
    base: int = 2

    def __post_init__(self):
        if self.level < 0:
            raise DomainError(f"Cell level must be >= 0, got {self.level}")
        side = self.base**self.level
        if any(c < 0 or c >= side for c in self.coords):
            raise DomainError(f"Cell coords {self.coords} outside [0, {side}) at level {self.level}")

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def side(self) -> int:
        return self.base**self.level

    def prefix(self, m: int) -> "CellKey":
        """Ancestor cell at level m <= self.level."""
        if m < 0 or m > self.level:
            raise DomainError(f"prefix level {m} outside [0, {self.level}]")
        shift = self.base ** (self.level - m)
        return CellKey(m, tuple(c // shift for c in self.coords), self.base)

    def child(self, digits: Sequence[int]) -> "CellKey":
        if len(digits) != self.d or any(x < 0 or x >= self.base for x in digits):
            raise DomainError(f"digit vector {tuple(digits)} invalid for B={self.base}, d={self.d}")
        return CellKey(self.level + 1, tuple(self.base * c + int(x) for c, x in zip(self.coords, digits)), self.base)

    def digits(self) -> Tuple[Tuple[int, ...], ...]:
        """Digit expansion x_1..x_m (one vector per level)."""
        out = []
        for k in range(1, self.level + 1):
            upper = self.prefix(k).coords
            lower = self.prefix(k - 1).coords
            out.append(tuple(u - self.base * l for u, l in zip(upper, lower)))
        return tuple(out)

    def lower_corner(self) -> Tuple[float, ...]:
        return tuple(c / self.side for c in self.coords)

    @classmethod
    def origin(cls, d: int, base: int) -> "CellKey":
        return cls(0, (0,) * d, base)

    @classmethod
    def from_digits(cls, digits: Sequence[Sequence[int]], base: int) -> "CellKey":
        d = len(digits[0]) if digits else 0
        key = cls.origin(d, base)
        for x in digits:
            key = key.child(x)
        return key


# ---------------------------------------------------------------------------
# Array helpers
# ---------------------------------------------------------------------------

def coord_dtype(level: int, base: int):
    """int64 while coordinates fit, Python objects beyond."""
    return np.int64 if base**level < _INT64_LIMIT else object


def packable(level: int, base: int, d: int) -> bool:
    return (base**level) ** d < _INT64_LIMIT


@lru_cache(maxsize=64)
def digit_table(base: int, d: int) -> np.ndarray:
    """All B^d digit vectors in lexicographic order, shape (B^d, d)."""
    grids = np.meshgrid(*[np.arange(base)] * d, indexing="ij")
    table = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    table.flags.writeable = False
    return table


def digits_to_index(digits: np.ndarray, base: int) -> np.ndarray:
    """Encode digit vectors (n, d) as integers in [0, B^d)."""
    d = digits.shape[1]
    weights = base ** np.arange(d - 1, -1, -1, dtype=np.int64)
    return digits.astype(np.int64) @ weights


def ones_index(base: int, d: int) -> int:
    """Index of the digit vector (1, ..., 1)."""
    return int(sum(base**i for i in range(d)))


def pack(coords: np.ndarray, level: int, base: int) -> np.ndarray:
    """Pack (n, d) coords into int64 keys preserving lexicographic order."""
    side = base**level
    keys = np.zeros(coords.shape[0], dtype=np.int64)
    for i in range(coords.shape[1]):
        keys = keys * side + coords[:, i].astype(np.int64)
    return keys


def unpack(keys: np.ndarray, level: int, base: int, d: int) -> np.ndarray:
    side = base**level
    coords = np.empty((keys.shape[0], d), dtype=np.int64)
    rest = keys.copy()
    for i in range(d - 1, -1, -1):
        coords[:, i] = rest % side
        rest //= side
    return coords


def empty_coords(d: int, level: int, base: int) -> np.ndarray:
    return np.zeros((0, d), dtype=coord_dtype(level, base))


def aggregate(coords: np.ndarray, counts: np.ndarray, level: int, base: int) -> Tuple[np.ndarray, np.ndarray]:
    """Merge duplicate cells, summing counts; output sorted lexicographically."""
    d = coords.shape[1]
    if coords.shape[0] == 0:
        return empty_coords(d, level, base), np.zeros(0, dtype=np.int64)
    if packable(level, base, d):
        keys = pack(coords, level, base)
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.bincount(inverse, weights=counts, minlength=uniq.shape[0]).astype(np.int64)
        return unpack(uniq, level, base, d), summed
    merged: Dict[Tuple[int, ...], int] = {}
    for row, n in zip(map(tuple, coords.tolist()), counts.tolist()):
        merged[row] = merged.get(row, 0) + int(n)
    rows = sorted(merged)
    out = np.array(rows, dtype=coord_dtype(level, base)).reshape(len(rows), d)
    return out, np.array([merged[r] for r in rows], dtype=np.int64)


def sort_cells(coords: np.ndarray, level: int, base: int) -> np.ndarray:
    """Permutation putting coords into lexicographic order."""
    if coords.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if packable(level, base, coords.shape[1]):
        return np.argsort(pack(coords, level, base), kind="stable")
    rows = list(map(tuple, coords.tolist()))
    return np.array(sorted(range(len(rows)), key=rows.__getitem__), dtype=np.int64)


class CellIndex:
    """Lookup table from cell coordinates to row positions in a sorted coords array."""

    def __init__(self, coords: np.ndarray, level: int, base: int):
        self.level = level
        self.base = base
        self.d = coords.shape[1]
        self.size = coords.shape[0]
        self.side = base**level
        self._packed = packable(level, base, self.d)
        if self._packed:
            self._keys = pack(coords, level, base)
        else:
            self._rows = {row: i for i, row in enumerate(map(tuple, coords.tolist()))}

    def find(self, query: np.ndarray) -> np.ndarray:
        """Row index of each query cell, -1 when absent or outside the grid."""
        out = np.full(query.shape[0], -1, dtype=np.int64)
        if query.shape[0] == 0 or self.size == 0:
            return out
        inside = np.all((query >= 0) & (query < self.side), axis=1)
        if not np.any(inside):
            return out
        if self._packed:
            q = pack(query[inside], self.level, self.base)
            pos = np.searchsorted(self._keys, q)
            pos = np.minimum(pos, self.size - 1)
            hit = self._keys[pos] == q
            found = np.where(hit, pos, -1)
            out[np.flatnonzero(inside)] = found
            return out
        for i in np.flatnonzero(inside):
            out[i] = self._rows.get(tuple(int(v) for v in query[i]), -1)
        return out

    def contains(self, query: np.ndarray) -> np.ndarray:
        return self.find(query) >= 0


def keys_to_coords(cells: Iterable[CellKey]) -> Tuple[np.ndarray, int, int]:
    """Sorted unique coords array from CellKeys that share one level."""
    cells = list(cells)
    if not cells:
        raise DomainError("empty cell collection has no level")
    level, base, d = cells[0].level, cells[0].base, cells[0].d
    if any(c.level != level or c.base != base for c in cells):
        raise DomainError("all cells must share one level and base")
    coords = np.array([c.coords for c in cells], dtype=coord_dtype(level, base)).reshape(len(cells), d)
    ones = np.ones(coords.shape[0], dtype=np.int64)
    coords, _ = aggregate(coords, ones, level, base)
    return coords, level, base


# ---------------------------------------------------------------------------
# Windows: exact pruning of cells whose closed cube misses a target region
# ---------------------------------------------------------------------------

class CellWindow:
    """Keep ancestors of ``target`` above its level and its descendants below."""

    def __init__(self, target: CellKey):
        self.target = target

    def keep(self, coords: np.ndarray, level: int, base: int) -> np.ndarray:
        t = self.target
        target = np.array(t.coords, dtype=object if coords.dtype == object else np.int64)
        if level <= t.level:
            ref = target // (base ** (t.level - level))
            return np.all(coords == ref, axis=1)
        return np.all(coords // (base ** (level - t.level)) == target, axis=1)


class UnionWindow:
    """Keep cells retained by any of several windows."""

    def __init__(self, windows: Sequence):
        self.windows = list(windows)

    def keep(self, coords: np.ndarray, level: int, base: int) -> np.ndarray:
        mask = np.zeros(coords.shape[0], dtype=bool)
        for w in self.windows:
            mask |= w.keep(coords, level, base)
        return mask


class BallWindow:
    """Keep cells whose closed cube meets the Euclidean ball B(center, radius)."""

    def __init__(self, center: Sequence[float], radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def keep(self, coords: np.ndarray, level: int, base: int) -> np.ndarray:
        if coords.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        h = float(base) ** (-level)
        lo = coords.astype(float) * h
        nearest = np.clip(self.center, lo, lo + h)
        dist2 = np.sum((nearest - self.center) ** 2, axis=1)
        return dist2 <= self.radius**2


def closed_cube_meets_ball(cell: CellKey, center: Sequence[float], radius: float) -> bool:
    coords = np.array([cell.coords], dtype=np.int64)
    return bool(BallWindow(center, radius).keep(coords, cell.level, cell.base)[0])

