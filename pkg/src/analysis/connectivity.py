"""
Connectivity Analysis

Cube geometry and graph questions over occupied cells:
- classify_pair: same cell, not adjacent, or l-neighbours (closures share an
  l-dimensional face)
- crossing: cluster-labelling percolation test between the faces x_axis = 0 and 1
- td_certify / certify_disconnection: first level at which the descendants of
  distinct level-m cells stop touching
- support_stats / growth_exponent: covering-sum and box-count diagnostics
- ball_hit_estimate: Monte Carlo probability that the support meets a ball

Finite-level semantics: no crossing at level m certifies that the support
does not percolate (the support sits inside the occupied cube union);
a crossing up to level M is evidence only.
"""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from itertools import product
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse, stats
from scipy.sparse import csgraph

from src.analysis.statistics import Frequency, wilson_interval
from src.tools.grid_dynamics import FractalState, GenerationState, run, step
from src.tools.lattice import BallWindow, CellIndex, CellKey, keys_to_coords
from src.tools.laws import ModelParams
from src.utils.errors import ConfigError, DomainError, InvariantViolation
from src.utils.normalizer import normalize_adjacency, suggest
from src.utils.parallel import map_replicates
from src.utils.rng import Stream


# =============================================================================
# ADJACENCY
# =============================================================================

class AdjacencyMode(str, Enum):
    FACE = "face"
    PAPER_L = "paper_l"
    CLOSED_CUBE = "closed_cube"

    @classmethod
    def parse(cls, value: Union[str, "AdjacencyMode"]) -> "AdjacencyMode":
        if isinstance(value, AdjacencyMode):
            return value
        canonical = normalize_adjacency(str(value))
        if canonical is None:
            hint = suggest(str(value), [m.value for m in cls])
            raise ConfigError(
                f"Unknown adjacency mode '{value}'" + (f" (did you mean {', '.join(hint)}?)" if hint else ""),
                {"valid": [m.value for m in cls]},
            )
        return cls(canonical)


def offsets(mode: AdjacencyMode, d: int) -> np.ndarray:
    """Neighbour offsets of a cell under ``mode``."""
    out = []
    for delta in product((-1, 0, 1), repeat=d):
        nonzero = sum(1 for x in delta if x)
        if nonzero == 0:
            continue
        if mode == AdjacencyMode.FACE and nonzero != 1:
            continue
        if mode == AdjacencyMode.PAPER_L and nonzero == d:
            continue
        out.append(delta)
    return np.array(out, dtype=np.int64).reshape(len(out), d)


def half_offsets(mode: AdjacencyMode, d: int) -> np.ndarray:
    """One offset per undirected edge: first non-zero component positive."""
    full = offsets(mode, d)
    keep = [row for row in full if row[np.flatnonzero(row)[0]] > 0]
    return np.array(keep, dtype=np.int64).reshape(len(keep), d)


class PairKind(str, Enum):
    SAME = "same"
    NOT_ADJACENT = "not_adjacent"
    NEIGHBOUR = "neighbour"


@dataclass(frozen=True)
class PairRelation:
    kind: PairKind
    ell: Optional[int] = None

    def __str__(self) -> str:
        return f"Neighbour({self.ell})" if self.kind == PairKind.NEIGHBOUR else self.kind.value


SAME = PairRelation(PairKind.SAME)
NOT_ADJACENT = PairRelation(PairKind.NOT_ADJACENT)


def neighbour(ell: int) -> PairRelation:
    return PairRelation(PairKind.NEIGHBOUR, ell)


def classify_pair(a: CellKey, b: CellKey) -> PairRelation:
    """Same cell, not adjacent, or l-neighbours with l = number of equal coordinates."""
    if a.level != b.level or a.base != b.base or a.d != b.d:
        raise DomainError(f"cannot compare {a} with {b}: level, base and dimension must agree")
    deltas = [abs(x - y) for x, y in zip(a.coords, b.coords)]
    if max(deltas, default=0) == 0:
        return SAME
    if max(deltas) >= 2:
        return NOT_ADJACENT
    return neighbour(sum(1 for x in deltas if x == 0))


# =============================================================================
# CLUSTERS
# =============================================================================

def cluster_labels(size: int, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Component label of each of 0..size-1 under the undirected edges (src, dst)."""
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    graph = sparse.coo_matrix((np.ones(src.size, dtype=np.int8), (src, dst)), shape=(size, size))
    _, labels = csgraph.connected_components(graph, directed=False)
    return labels.astype(np.int64)


# =============================================================================
# CROSSING
# =============================================================================

@dataclass(frozen=True)
class CrossReport:
    level: int
    mode: AdjacencyMode
    axis: int
    crossed: bool
    spanning_cluster_size: int
    component_count: int
    largest_component: int

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["mode"] = self.mode.value
        return out


CellsLike = Union[GenerationState, FractalState, Iterable[CellKey]]


def _as_cells(cells: CellsLike) -> Tuple[np.ndarray, int, int, int]:
    if isinstance(cells, (GenerationState, FractalState)):
        return cells.coords, cells.level, cells.base, cells.d
    cells = list(cells)
    if not cells:
        return np.zeros((0, 1), dtype=np.int64), 0, 2, 1
    coords, level, base = keys_to_coords(cells)
    return coords, level, base, coords.shape[1]


def _edges(coords: np.ndarray, index: CellIndex, mode: AdjacencyMode) -> Tuple[np.ndarray, np.ndarray]:
    src_all, dst_all = [], []
    for off in half_offsets(mode, coords.shape[1]):
        nb = index.find(coords + off)
        src = np.flatnonzero(nb >= 0)
        src_all.append(src)
        dst_all.append(nb[src])
    if not src_all:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(src_all), np.concatenate(dst_all)


def crossing(cells: CellsLike, mode: Union[str, AdjacencyMode] = AdjacencyMode.PAPER_L, axis: int = 0) -> CrossReport:
    """
    Does the occupied cube union connect the faces x_axis = 0 and x_axis = 1?

    Connected components of the occupied cells under ``mode`` edges; the
    union crosses iff one component holds a cell of the layer coord_axis = 0
    and a cell of the layer coord_axis = B^m - 1.
    """
    mode = AdjacencyMode.parse(mode)
    coords, level, base, d = _as_cells(cells)
    if not 0 <= axis < d:
        raise DomainError(f"axis must lie in [0, {d}), got {axis}")
    n = coords.shape[0]
    if n == 0:
        return CrossReport(level, mode, axis, False, 0, 0, 0)

    src, dst = _edges(coords, CellIndex(coords, level, base), mode)
    labels = cluster_labels(n, src, dst)
    sizes = np.bincount(labels)

    side = base**level
    low = labels[coords[:, axis] == 0]
    high = labels[coords[:, axis] == side - 1]
    spanning = np.intersect1d(low, high)
    spanning_size = int(sizes[spanning].max()) if spanning.size else 0

    return CrossReport(level, mode, axis, bool(spanning.size), spanning_size, int(sizes.size), int(sizes.max()))


def crossing_all_modes(cells: CellsLike, axis: int = 0) -> Dict[str, CrossReport]:
    """Crossing reports for every adjacency mode, side by side."""
    return {m.value: crossing(cells, m, axis) for m in AdjacencyMode}


# =============================================================================
# TOTAL DISCONNECTION
# =============================================================================

@dataclass(frozen=True)
class TdReport:
    base_level: int
    found: bool
    separation_level: Optional[int]
    horizon: int
    groups: int
    truncated: bool = False
    max_frontier: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _cross_group_pairs(coords: np.ndarray, level: int, m: int, base: int) -> Tuple[bool, np.ndarray]:
    """
    Separation test at one level.

    Returns (separated, frontier mask). Every closed-cube adjacent pair with
    distinct m-prefixes is checked for prefix transitivity: the prefixes
    must be l'-neighbours with l' >= l.
    """
    n = coords.shape[0]
    if n == 0:
        return True, np.zeros(0, dtype=bool)
    shift = base ** (level - m)
    groups = coords // shift
    index = CellIndex(coords, level, base)
    frontier = np.zeros(n, dtype=bool)
    for off in half_offsets(AdjacencyMode.CLOSED_CUBE, coords.shape[1]):
        nb = index.find(coords + off)
        src = np.flatnonzero(nb >= 0)
        if src.size == 0:
            continue
        dst = nb[src]
        g_src, g_dst = groups[src], groups[dst]
        differs = np.any(g_src != g_dst, axis=1)
        if not np.any(differs):
            continue
        src, dst = src[differs], dst[differs]
        gap = np.abs((g_src[differs] - g_dst[differs]).astype(np.int64))
        if np.any(gap > 1):
            raise InvariantViolation(f"adjacent level-{level} cells have non-adjacent level-{m} prefixes")
        ell = np.sum(off == 0)
        ell_prefix = np.sum(gap == 0, axis=1)
        if np.any(ell_prefix < ell):
            raise InvariantViolation(f"prefix neighbour order dropped below {ell} at level {level}")
        frontier[src] = True
        frontier[dst] = True
    return not np.any(frontier), frontier


def td_certify(run_states: Sequence[GenerationState], m: int, horizon: int) -> TdReport:
    """First level n in [m, horizon] at which no two occupied cells with distinct m-prefixes touch."""
    if horizon < m or m < 0:
        raise DomainError(f"need 0 <= m <= horizon, got m={m}, horizon={horizon}")
    if len(run_states) <= horizon:
        raise DomainError(f"run has {len(run_states)} levels, horizon {horizon} needs {horizon + 1}")
    groups = run_states[m].occupied
    for n in range(m, horizon + 1):
        state = run_states[n]
        separated, _ = _cross_group_pairs(state.coords, n, m, state.base)
        if separated:
            return TdReport(m, True, n, horizon, groups)
    return TdReport(m, False, None, horizon, groups)


def certify_disconnection(
    params: ModelParams,
    m: int,
    horizon: int,
    stream: Stream,
    cap: Optional[int] = None,
    frontier_cap: Optional[int] = None,
) -> TdReport:
    """
    Streaming td_certify that evolves only the cross-group frontier.

    Cells with no closed-cube neighbour of another group can never produce
    a cross-group contact again (descendants stay in their ancestor's closed
    cube), so they are dropped after each level.
    """
    if horizon < m or m < 0:
        raise DomainError(f"need 0 <= m <= horizon, got m={m}, horizon={horizon}")
    state = run(params, m, stream, cap=cap)[-1]
    groups = state.occupied
    max_frontier = 0
    for n in range(m, horizon + 1):
        if n > m:
            state = step(state, params, stream, cap=cap)
        separated, frontier = _cross_group_pairs(state.coords, n, m, state.base)
        if separated:
            return TdReport(m, True, n, horizon, groups, max_frontier=max_frontier)
        state = state.restrict(frontier)
        max_frontier = max(max_frontier, state.occupied)
        if frontier_cap is not None and state.occupied > frontier_cap:
            return TdReport(m, False, None, horizon, groups, truncated=True, max_frontier=max_frontier)
    return TdReport(m, False, None, horizon, groups, max_frontier=max_frontier)


# =============================================================================
# SUPPORT SIZE
# =============================================================================

@dataclass(frozen=True)
class SupportStats:
    level: int
    occupied_count: int
    h_statistic: float
    box_slope_input: Tuple[int, Optional[float]]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def h_statistic(occupied: float, level: int, B: int, d: int) -> float:
    """Covering sum occupied * diam^d * m ln B, diam = sqrt(d) B^-m."""
    diam = math.sqrt(d) * float(B) ** (-level)
    return occupied * diam**d * level * math.log(B)


def support_stats(state: Union[GenerationState, FractalState], params: Optional[ModelParams] = None) -> SupportStats:
    """Occupied count, covering sum diam^d log(1/diam) and the (m, ln count) box-count point."""
    if params is not None and (params.B != state.base or params.d != state.d):
        raise DomainError("state and params disagree on B or d")
    m, B, d = state.level, state.base, state.d
    occ = state.occupied
    return SupportStats(m, occ, h_statistic(occ, m, B, d), (m, math.log(occ) if occ > 0 else None))


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    std_error: float
    r_value: float
    points: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def growth_exponent(levels: Sequence[int], mean_occupied: Sequence[float], B: int) -> GrowthFit:
    """Slope of ln E[occupied] against m ln B (the box-counting exponent)."""
    x = np.asarray(levels, dtype=float) * math.log(B)
    y = np.asarray(mean_occupied, dtype=float)
    ok = y > 0
    if np.sum(ok) < 2:
        raise DomainError("growth fit needs at least two levels with positive occupancy")
    res = stats.linregress(x[ok], np.log(y[ok]))
    return GrowthFit(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue), int(np.sum(ok)))


def strm_dimension(params: ModelParams) -> float:
    """Predicted support dimension min(2/beta, d)."""
    return min(2.0 / params.beta, float(params.d))


def fractal_dimension(B: int, d: int, p: float) -> float:
    """Box-counting prediction ln(B^d p) / ln B for surviving fractal percolation."""
    return math.log(B**d * p) / math.log(B)


# =============================================================================
# BALL HITTING
# =============================================================================

@dataclass(frozen=True)
class HitEstimate:
    center: Tuple[float, ...]
    radius: float
    level: int
    frequency: Frequency
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "level": self.level,
            "frequency": self.frequency.to_dict(),
            "warnings": list(self.warnings),
        }


def ball_hit_estimate(
    params: ModelParams,
    y: Sequence[float],
    r: float,
    level: int,
    replicates: int,
    stream: Stream,
    threads: int = 1,
    cap: Optional[int] = None,
) -> HitEstimate:
    """
    Frequency of runs whose level-``level`` occupied cube union meets B(y, r).

    Radii up to sqrt(d) are accepted, past the usual r <= 1/2, so the ball
    covering the whole cube can be checked against the survival curve; such
    runs carry a warning.
    """
    center = tuple(float(v) for v in y)
    if len(center) != params.d or any(not 0.0 <= v <= 1.0 for v in center):
        raise DomainError(f"center must be a point of [0,1]^{params.d}, got {center}")
    if not 0.0 < r <= math.sqrt(params.d):
        raise DomainError(f"radius must lie in (0, sqrt(d)], got {r}")
    if float(params.B) ** (-level) > r / 4.0:
        raise ConfigError(f"level {level} is too coarse for radius {r}: need B^-level <= r/4")
    window = BallWindow(center, r)

    def one(i: int) -> bool:
        states = run(params, level, stream.child(i), cap=cap, window=window)
        return not states[-1].is_extinct

    hits = map_replicates(one, replicates, threads)
    warnings = []
    if r > 0.5:
        warnings.append("radius above 1/2: the ball reaches past the unit cube")
    return HitEstimate(center, float(r), level, wilson_interval(sum(hits), len(hits)), warnings)


def coarsest_level(B: int, r: float) -> int:
    """Smallest level with B^-level <= r/4."""
    level = 0
    while float(B) ** (-level) > r / 4.0:
        level += 1
    return level
