"""
Grid Dynamics

Sparse evolution of the B-ary occupancy process, fractal percolation and
the two pathwise couplings between them.

States are immutable snapshots: a lexicographically sorted ``(n, d)`` array of
occupied cell coordinates plus (for the particle process) a parallel array of
particle counts. Every level draws from its own substream
``stream.child(tag, level)`` and consumes it in sorted cell order, so a run is
reproducible from (seed, path) alone.

Features:
- step / run: generic per-particle path and the Poisson per-cell fast path
- DistinctSites displacement (fractal percolation as a particle process)
- optional exact window pruning (target cell or Euclidean ball)
- fractal_step / fractal_run
- coupled_run (fractal inside the particle process) and monotone_coupled_run
- CSV snapshot export and JSON run manifest
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.tools.lattice import (
    CellIndex,
    CellKey,
    aggregate,
    coord_dtype,
    digit_table,
    empty_coords,
)
from src.tools.laws import DisplacementKind, ModelMode, ModelParams, OffspringKind, OffspringLaw
from src.utils.errors import ConfigError, DomainError, InvariantViolation, ResourceLimitError
from src.utils.rng import TAG_COUPLING, TAG_FRACTAL, TAG_GRID, Stream
from src.utils.settings import get_settings


# =============================================================================
# STATES
# =============================================================================

@dataclass(frozen=True, eq=False)
class GenerationState:
    """Occupied cells at one level with their particle counts N_m^x."""
    level: int
    base: int
    coords: np.ndarray
    counts: np.ndarray

    @classmethod
    def origin(cls, d: int, base: int) -> "GenerationState":
        return cls(0, base, np.zeros((1, d), dtype=np.int64), np.ones(1, dtype=np.int64))

    @classmethod
    def empty(cls, d: int, level: int, base: int) -> "GenerationState":
        return cls(level, base, empty_coords(d, level, base), np.zeros(0, dtype=np.int64))

    @property
    def d(self) -> int:
        return int(self.coords.shape[1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def occupied(self) -> int:
        return int(self.counts.shape[0])

    @property
    def is_extinct(self) -> bool:
        return self.occupied == 0

    def weights(self, mu: float) -> np.ndarray:
        """Mass mu^-m N_m^x carried by each occupied cell."""
        return self.counts * float(mu) ** (-self.level)

    def total_weight(self, mu: float) -> float:
        return self.total * float(mu) ** (-self.level)

    def count_at(self, cell: CellKey) -> int:
        if cell.level != self.level or cell.base != self.base:
            raise DomainError(f"cell {cell} is not a level-{self.level} cell of base {self.base}")
        row = CellIndex(self.coords, self.level, self.base).find(np.array([cell.coords], dtype=np.int64))[0]
        return int(self.counts[row]) if row >= 0 else 0

    def cells(self) -> List[CellKey]:
        return [CellKey(self.level, tuple(int(v) for v in row), self.base) for row in self.coords]

    def as_dict(self) -> Dict[Tuple[int, ...], int]:
        return {tuple(int(v) for v in row): int(n) for row, n in zip(self.coords, self.counts)}

    def restrict(self, mask: np.ndarray) -> "GenerationState":
        return GenerationState(self.level, self.base, self.coords[mask], self.counts[mask])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.coords.astype(object), columns=[f"coord_{i + 1}" for i in range(self.d)])
        frame.insert(0, "level", self.level)
        frame["count"] = self.counts
        return frame

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GenerationState):
            return NotImplemented
        return (
            self.level == other.level
            and self.base == other.base
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class FractalState:
    """Occupied cells A_m of fractal percolation at one level."""
    level: int
    base: int
    coords: np.ndarray

    @classmethod
    def origin(cls, d: int, base: int) -> "FractalState":
        return cls(0, base, np.zeros((1, d), dtype=np.int64))

    @property
    def d(self) -> int:
        return int(self.coords.shape[1])

    @property
    def occupied(self) -> int:
        return int(self.coords.shape[0])

    @property
    def is_extinct(self) -> bool:
        return self.occupied == 0

    def cells(self) -> List[CellKey]:
        return [CellKey(self.level, tuple(int(v) for v in row), self.base) for row in self.coords]

    def restrict(self, mask: np.ndarray) -> "FractalState":
        return FractalState(self.level, self.base, self.coords[mask])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FractalState):
            return NotImplemented
        return self.level == other.level and self.base == other.base and np.array_equal(self.coords, other.coords)

    __hash__ = None  # type: ignore[assignment]


# =============================================================================
# HELPERS
# =============================================================================

def _resolve_cap(cap: Optional[int]) -> int:
    return get_settings().population_cap if cap is None else int(cap)


def _check_cap(size: int, cap: int, what: str) -> None:
    if size > cap:
        raise ResourceLimitError(what, size, cap)


def _children_of_cells(coords: np.ndarray, level: int, base: int) -> np.ndarray:
    """All B^d children of every cell, shape (n * B^d, d), parent-major order."""
    d = coords.shape[1]
    parents = coords.astype(coord_dtype(level + 1, base))
    table = digit_table(base, d)
    return (parents[:, None, :] * base + table[None, :, :]).reshape(-1, d)


def draw_children(
    parent_coords: np.ndarray,
    law: OffspringLaw,
    displacement,
    level: int,
    base: int,
    gen: np.random.Generator,
    cap: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw offspring for particles listed one per row (in the given order).

    Returns (z, child_coords) where child_coords has z.sum() rows ordered by
    parent. Shared by the grid step and the explicit forest so both consume
    a substream identically.
    """
    d = parent_coords.shape[1]
    z = law.sample(gen, size=parent_coords.shape[0])
    total = int(z.sum())
    _check_cap(total, cap, f"population at level {level + 1}")
    digits = displacement.sample_children_digits(z, d, base, gen)
    parents = np.repeat(parent_coords.astype(coord_dtype(level + 1, base)), z, axis=0)
    return z, parents * base + digits


def _apply_window(coords: np.ndarray, counts: np.ndarray, level: int, base: int, window):
    if window is None or coords.shape[0] == 0:
        return coords, counts
    mask = window.keep(coords, level, base)
    return coords[mask], counts[mask]


def _uses_fast_path(params: ModelParams, fast_path: bool) -> bool:
    return (
        fast_path
        and params.offspring.kind == OffspringKind.POISSON
        and params.displacement.kind == DisplacementKind.UNIFORM_DIGITS
    )


# =============================================================================
# PARTICLE PROCESS
# =============================================================================

def step(
    state: GenerationState,
    params: ModelParams,
    stream: Stream,
    cap: Optional[int] = None,
    fast_path: bool = True,
    window=None,
) -> GenerationState:
    """
    Advance one level.

    Generic path: every particle draws Z children and each child a digit
    vector. Poisson fast path: the B^d child-cell counts of a cell holding n
    particles are independent Poisson(c n).
    """
    if params.mode != ModelMode.GRID:
        raise ConfigError("step needs grid-mode parameters")
    if state.base != params.B or state.d != params.d:
        raise DomainError(f"state (B={state.base}, d={state.d}) does not match params (B={params.B}, d={params.d})")
    cap = _resolve_cap(cap)
    level = state.level + 1
    if state.is_extinct:
        return GenerationState.empty(params.d, level, params.B)

    gen = stream.child(TAG_GRID, level).generator()
    if _uses_fast_path(params, fast_path):
        sites = params.sites
        _check_cap(state.occupied * sites, cap, f"child cells at level {level}")
        child_counts = gen.poisson(params.c * state.counts[:, None], size=(state.occupied, sites)).ravel()
        _check_cap(int(child_counts.sum()), cap, f"population at level {level}")
        keep = child_counts > 0
        coords = _children_of_cells(state.coords, state.level, params.B)[keep]
        counts = child_counts[keep].astype(np.int64)
    else:
        _check_cap(state.total, cap, f"population at level {state.level}")
        particles = np.repeat(state.coords, state.counts, axis=0)
        _, children = draw_children(particles, params.offspring, params.displacement, state.level, params.B, gen, cap)
        coords, counts = aggregate(children, np.ones(children.shape[0], dtype=np.int64), level, params.B)

    coords, counts = _apply_window(coords, counts, level, params.B, window)
    return GenerationState(level, params.B, coords, counts)


def run(
    params: ModelParams,
    levels: int,
    stream: Stream,
    cap: Optional[int] = None,
    fast_path: bool = True,
    window=None,
) -> List[GenerationState]:
    """States for levels 0..levels, starting from one particle in the origin cell."""
    if levels < 0:
        raise DomainError(f"levels must be >= 0, got {levels}")
    state = GenerationState.origin(params.d, params.B)
    if window is not None:
        coords, counts = _apply_window(state.coords, state.counts, 0, params.B, window)
        state = GenerationState(0, params.B, coords, counts)
    states = [state]
    for _ in range(levels):
        state = step(state, params, stream, cap=cap, fast_path=fast_path, window=window)
        states.append(state)
    return states


# =============================================================================
# FRACTAL PERCOLATION
# =============================================================================

def fractal_step(state: FractalState, p: float, B: int, d: int, stream: Stream, window=None) -> FractalState:
    """Keep each child of each occupied cell independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"retention probability must lie in [0, 1], got {p}")
    level = state.level + 1
    if state.is_extinct:
        return FractalState(level, B, empty_coords(d, level, B))
    gen = stream.child(TAG_FRACTAL, level).generator()
    keep = (gen.random((state.occupied, B**d)) < p).ravel()
    coords = _children_of_cells(state.coords, state.level, B)[keep]
    if window is not None:
        coords = coords[window.keep(coords, level, B)]
    return FractalState(level, B, coords)


def fractal_run(
    p: float,
    B: int,
    d: int,
    levels: int,
    stream: Stream,
    stop_above: Optional[int] = None,
    window=None,
) -> List[FractalState]:
    """
    Fractal percolation states for levels 0..levels.

    With ``stop_above`` the run ends early once more than that many cells are
    occupied; callers use this to declare survival once extinction has become
    numerically impossible.
    """
    if levels < 0:
        raise DomainError(f"levels must be >= 0, got {levels}")
    state = FractalState.origin(d, B)
    states = [state]
    for _ in range(levels):
        state = fractal_step(state, p, B, d, stream, window=window)
        states.append(state)
        if state.is_extinct or (stop_above is not None and state.occupied > stop_above):
            break
    return states


# =============================================================================
# COUPLINGS
# =============================================================================

def coupled_run(
    B: int,
    d: int,
    c: float,
    levels: int,
    stream: Stream,
    cap: Optional[int] = None,
    track: str = "all",
) -> List[Tuple[GenerationState, FractalState]]:
    """
    Poisson(c B^d) particle process with fractal percolation(1 - e^-c) inside it.

    In every cell the first particle contributes Poisson(c) to each child
    cell and the others Poisson(c (N-1)); a fractal child is kept iff its
    parent is fractal-occupied and the first particle's contribution is
    positive. ``track="fractal"`` evolves only fractal-occupied cells of the
    particle process, which is exact for the containment question.
    """
    if c <= float(B) ** (-d):
        raise ConfigError(f"c must exceed B^-d = {float(B) ** (-d):g}, got {c}")
    if track not in ("all", "fractal"):
        raise ConfigError(f"track must be 'all' or 'fractal', got {track!r}")
    cap = _resolve_cap(cap)
    sites = B**d
    grid = GenerationState.origin(d, B)
    frac = FractalState.origin(d, B)
    out = [(grid, frac)]
    for level in range(1, levels + 1):
        rows = CellIndex(grid.coords, grid.level, B).find(frac.coords)
        if np.any(rows < 0):
            raise InvariantViolation(f"fractal cell outside the particle process at level {grid.level}")
        parent_frac = np.zeros(grid.occupied, dtype=bool)
        parent_frac[rows] = True
        if track == "fractal":
            grid = grid.restrict(parent_frac)
            parent_frac = np.ones(grid.occupied, dtype=bool)
        if grid.is_extinct:
            grid = GenerationState.empty(d, level, B)
            frac = FractalState(level, B, empty_coords(d, level, B))
            out.append((grid, frac))
            continue
        _check_cap(grid.occupied * sites, cap, f"child cells at level {level}")
        gen = stream.child(TAG_COUPLING, level).generator()
        first = gen.poisson(c, size=(grid.occupied, sites))
        rest = gen.poisson(c * (grid.counts - 1)[:, None], size=(grid.occupied, sites))
        child = (first + rest).ravel()
        _check_cap(int(child.sum()), cap, f"population at level {level}")
        frac_child = (parent_frac[:, None] & (first > 0)).ravel()
        children = _children_of_cells(grid.coords, grid.level, B)
        keep = child > 0
        grid = GenerationState(level, B, children[keep], child[keep].astype(np.int64))
        frac = FractalState(level, B, children[frac_child])
        out.append((grid, frac))
    return out


def monotone_coupled_run(
    B: int,
    d: int,
    c1: float,
    c2: float,
    levels: int,
    stream: Stream,
    cap: Optional[int] = None,
    track: str = "all",
) -> List[Tuple[GenerationState, GenerationState]]:
    """
    Two Poisson particle processes with means c1 B^d <= c2 B^d, run 1 inside run 2.

    Per child cell: run-1 count ~ Poisson(c1 N1); run-2 count adds an
    independent Poisson((c2 - c1) N1 + c2 (N2 - N1)). ``track="inner"``
    evolves run 2 only on run-1 cells.
    """
    lower = float(B) ** (-d)
    if not lower < c1 <= c2:
        raise ConfigError(f"need B^-d < c1 <= c2, got c1={c1}, c2={c2}")
    if track not in ("all", "inner"):
        raise ConfigError(f"track must be 'all' or 'inner', got {track!r}")
    cap = _resolve_cap(cap)
    sites = B**d
    first = GenerationState.origin(d, B)
    second = GenerationState.origin(d, B)
    out = [(first, second)]
    for level in range(1, levels + 1):
        rows = CellIndex(second.coords, second.level, B).find(first.coords)
        if np.any(rows < 0):
            raise InvariantViolation(f"run-1 cell outside run 2 at level {second.level}")
        n1 = np.zeros(second.occupied, dtype=np.int64)
        n1[rows] = first.counts
        if track == "inner":
            inner = n1 > 0
            second = second.restrict(inner)
            n1 = n1[inner]
        if second.is_extinct:
            first = GenerationState.empty(d, level, B)
            second = GenerationState.empty(d, level, B)
            out.append((first, second))
            continue
        _check_cap(second.occupied * sites, cap, f"child cells at level {level}")
        gen = stream.child(TAG_COUPLING, "monotone", level).generator()
        base_counts = gen.poisson(c1 * n1[:, None], size=(second.occupied, sites)).ravel()
        extra_rate = (c2 - c1) * n1 + c2 * (second.counts - n1)
        extra = gen.poisson(extra_rate[:, None], size=(second.occupied, sites)).ravel()
        both = base_counts + extra
        _check_cap(int(both.sum()), cap, f"population at level {level}")
        children = _children_of_cells(second.coords, second.level, B)
        keep1 = base_counts > 0
        keep2 = both > 0
        first = GenerationState(level, B, children[keep1], base_counts[keep1].astype(np.int64))
        second = GenerationState(level, B, children[keep2], both[keep2].astype(np.int64))
        out.append((first, second))
    return out


def containment_violations(
    inner: Sequence[Union[GenerationState, FractalState]],
    outer: Sequence[GenerationState],
) -> int:
    """Number of (level, cell) pairs occupied in ``inner`` but empty in ``outer``."""
    violations = 0
    for a, b in zip(inner, outer):
        if a.is_extinct:
            continue
        rows = CellIndex(b.coords, b.level, b.base).find(a.coords)
        found = rows >= 0
        violations += int(np.sum(~found))
        violations += int(np.sum(b.counts[rows[found]] < 1))
    return violations


# =============================================================================
# EXPORT
# =============================================================================

def states_to_frame(states: Sequence[GenerationState]) -> pd.DataFrame:
    frames = [s.to_frame() for s in states if not s.is_extinct]
    if not frames:
        d = states[0].d if states else 1
        return pd.DataFrame(columns=["level"] + [f"coord_{i + 1}" for i in range(d)] + ["count"])
    return pd.concat(frames, ignore_index=True)


def export_snapshot_csv(states: Sequence[GenerationState], path: Union[str, Path]) -> Path:
    """Write level,coord_1..coord_d,count rows for every occupied cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    states_to_frame(states).to_csv(path, index=False)
    return path


def run_manifest(
    params: ModelParams,
    seed: int,
    levels: int,
    cap: Optional[int] = None,
    stream: Optional[Stream] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """JSON-ready description sufficient to regenerate a run."""
    manifest: Dict[str, Any] = {
        "params": params.to_dict(),
        "seed": int(seed),
        "levels": int(levels),
        "cap": _resolve_cap(cap),
        "fast_path": _uses_fast_path(params, True),
    }
    if stream is not None:
        manifest["stream"] = stream.describe()
    if extra:
        manifest.update(extra)
    return manifest
