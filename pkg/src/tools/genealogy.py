"""
Genealogy

Particle-level views of the grid process:
- Forest: explicit genealogy (id, parent, generation, digit history). It
  draws from the same substreams as the grid generic path, so its census
  equals a grid run exactly.
- gamma_process: the count M_n of l-neighbour descendant pairs of a fixed
  base pair, stored compressed by shared L-coordinates.
- spine_run: the size-biased spine as a scalar Galton-Watson chain with
  immigration, plus the two-generation events E_m.
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.analysis.connectivity import classify_pair, neighbour
from src.analysis.statistics import Frequency, wilson_interval
from src.tools.grid_dynamics import GenerationState, _check_cap, _resolve_cap, draw_children
from src.tools.lattice import CellIndex, CellKey, aggregate, digit_table, ones_index, sort_cells
from src.tools.laws import DisplacementKind, ModelMode, ModelParams, OffspringLaw
from src.utils.errors import ConfigError, DomainError, InvariantViolation
from src.utils.parallel import map_replicates
from src.utils.rng import TAG_GAMMA, TAG_GRID, TAG_SPINE, Stream


# =============================================================================
# FOREST
# =============================================================================

@dataclass(frozen=True)
class Particle:
    id: int
    parent: Optional[int]
    generation: int
    digits: Tuple[Tuple[int, ...], ...]

    def cell(self, base: int, d: int) -> CellKey:
        """Cell with coords sum_k digit_k B^(n-k)."""
        if not self.digits:
            return CellKey.origin(d, base)
        return CellKey.from_digits(self.digits, base)


@dataclass(frozen=True, eq=False)
class ForestLayer:
    """All particles of one generation, sorted by cell (then birth order)."""
    generation: int
    first_id: int
    ids: np.ndarray
    parents: np.ndarray
    coords: np.ndarray
    digits: np.ndarray
    position: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ids.shape[0])


@dataclass
class Forest:
    base: int
    d: int
    layers: List[ForestLayer]
    offspring: List[np.ndarray] = field(default_factory=list)

    @property
    def generations(self) -> int:
        return len(self.layers) - 1

    @property
    def total_particles(self) -> int:
        return sum(layer.size for layer in self.layers)

    def offspring_counts(self) -> np.ndarray:
        """Offspring numbers of every particle that has reproduced."""
        if not self.offspring:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.offspring)

    def _locate(self, pid: int) -> Tuple[ForestLayer, int]:
        for layer in self.layers:
            if layer.first_id <= pid < layer.first_id + layer.size:
                return layer, int(layer.position[pid - layer.first_id])
        raise DomainError(f"no particle with id {pid}")

    def particle(self, pid: int) -> Particle:
        layer, pos = self._locate(pid)
        parent = int(layer.parents[pos])
        history = []
        cur_layer, cur_pos = layer, pos
        while cur_layer.generation > 0:
            history.append(tuple(int(v) for v in cur_layer.digits[cur_pos]))
            cur_layer, cur_pos = self._locate(int(cur_layer.parents[cur_pos]))
        return Particle(pid, parent if parent >= 0 else None, layer.generation, tuple(reversed(history)))


def grow_forest(params: ModelParams, generations: int, stream: Stream, cap: Optional[int] = None) -> Forest:
    """Explicit genealogy for generations 0..generations."""
    if params.mode != ModelMode.GRID:
        raise ConfigError("grow_forest needs grid-mode parameters")
    if generations < 0:
        raise DomainError(f"generations must be >= 0, got {generations}")
    cap = _resolve_cap(cap)
    B, d = params.B, params.d
    zeros = np.zeros((1, d), dtype=np.int64)
    root = ForestLayer(0, 0, np.zeros(1, dtype=np.int64), np.full(1, -1, dtype=np.int64), zeros, zeros, np.zeros(1, dtype=np.int64))
    forest = Forest(B, d, [root])
    next_id = 1
    for g in range(1, generations + 1):
        prev = forest.layers[-1]
        if prev.size == 0:
            empty = np.zeros((0, d), dtype=np.int64)
            none = np.zeros(0, dtype=np.int64)
            forest.layers.append(ForestLayer(g, next_id, none, none, empty, empty, none))
            forest.offspring.append(none)
            continue
        gen = stream.child(TAG_GRID, g).generator()
        z, children = draw_children(prev.coords, params.offspring, params.displacement, g - 1, B, gen, cap)
        forest.offspring.append(z)
        total = int(z.sum())
        _check_cap(next_id + total, cap, "forest particles")
        ids = np.arange(next_id, next_id + total, dtype=np.int64)
        parents = np.repeat(prev.ids, z)
        digits = children - np.repeat(prev.coords, z, axis=0) * B
        order = sort_cells(children, g, B)
        position = np.empty(total, dtype=np.int64)
        position[order] = np.arange(total)
        # position maps (id - first_id) to the sorted row
        layer = ForestLayer(g, next_id, ids[order], parents[order], children[order], digits[order].astype(np.int64), position)
        forest.layers.append(layer)
        next_id += total
    return forest


def census(forest: Forest, generation: int) -> GenerationState:
    """Project a forest generation onto cell counts."""
    if not 0 <= generation <= forest.generations:
        raise DomainError(f"generation must lie in [0, {forest.generations}], got {generation}")
    layer = forest.layers[generation]
    if layer.size == 0:
        return GenerationState.empty(forest.d, generation, forest.base)
    coords, counts = aggregate(layer.coords, np.ones(layer.size, dtype=np.int64), generation, forest.base)
    return GenerationState(generation, forest.base, coords, counts)


# =============================================================================
# GAMMA PAIR PROCESS
# =============================================================================

BASE_GENERATION = 2


@dataclass
class GammaTrace:
    ell: int
    base_generation: int
    values: List[int]
    absorbed: bool
    L: Tuple[int, ...]
    L_fg: Tuple[int, ...]
    L_gf: Tuple[int, ...]
    audited_pairs: int = 0

    @property
    def steps(self) -> int:
        return len(self.values) - 1

    def transitions(self) -> List[Tuple[int, int]]:
        return list(zip(self.values[:-1], self.values[1:]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "generation": np.arange(self.base_generation, self.base_generation + len(self.values)),
            "value": self.values,
        })

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _base_pair(ell: int, d: int) -> Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]:
    """Index sets and the two sibling cells at generation 2 (parent cell = origin)."""
    L = tuple(range(ell))
    rest = tuple(range(ell, d))
    L_fg = rest[0::2]
    L_gf = rest[1::2]
    f = tuple(1 if i in L_fg else 0 for i in range(d))
    g = tuple(1 if i in L_gf else 0 for i in range(d))
    return L, L_fg, L_gf, f, g


def _evolve_side(keys, counts, law, B, d, ell, fixed, gen, cap, level):
    """One generation of Gamma-eligible candidates on one side."""
    total = int(counts.sum())
    _check_cap(total, cap, f"Gamma candidates at generation {level}")
    particles = np.repeat(keys, counts, axis=0)
    z = law.sample(gen, size=particles.shape[0])
    born = int(z.sum())
    _check_cap(born, cap, f"Gamma children at generation {level + 1}")
    digits = gen.integers(0, B, size=(born, d), dtype=np.int64)
    ok = np.ones(born, dtype=bool)
    for axis, value in fixed:
        ok &= digits[:, axis] == value
    if ell == 0:
        kept = int(ok.sum())
        return np.zeros((1 if kept else 0, 0), dtype=np.int64), np.array([kept] if kept else [], dtype=np.int64)
    child_keys = np.repeat(particles, z, axis=0) * B + digits[:, :ell]
    child_keys = child_keys[ok]
    return aggregate(child_keys, np.ones(child_keys.shape[0], dtype=np.int64), level + 1, B)


def _shared_keys(keys_f, counts_f, keys_g, counts_g, level, B):
    """Keep only L-keys present on both sides, aligned row by row."""
    if keys_f.shape[1] == 0:
        if keys_f.shape[0] and keys_g.shape[0]:
            return keys_f, counts_f, keys_g, counts_g
        empty = np.zeros((0, 0), dtype=np.int64)
        none = np.zeros(0, dtype=np.int64)
        return empty, none, empty, none
    rows = CellIndex(keys_g, level, B).find(keys_f)
    shared = rows >= 0
    return keys_f[shared], counts_f[shared], keys_g[rows[shared]], counts_g[rows[shared]]


def gamma_process(
    params: ModelParams,
    ell: int,
    n_max: int,
    stream: Stream,
    cap: Optional[int] = None,
    allow_supercritical_candidates: bool = False,
    audit_fraction: float = 0.01,
) -> GammaTrace:
    """
    Evolve the l-neighbour pair count from a forced base pair at generation 2.

    f-side candidates must post digit 0 on L'(f,g) and B-1 on L'(g,f); g-side
    candidates the reverse. Candidates are grouped by their L-coordinates and
    M_n = sum over shared keys of count_f * count_g. Keys present on only one
    side can never pair again and are pruned. ``n_max`` counts steps after
    the base generation.
    """
    d, B = params.d, params.B
    if not 0 <= ell <= d - 1:
        raise DomainError(f"ell must lie in [0, {d - 1}], got {ell}")
    if n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")
    growth = params.mu * float(B) ** (-(d - ell))
    if growth > 1.0 and not allow_supercritical_candidates:
        raise ConfigError(
            f"candidate growth rate {growth:g} per side is supercritical; pass allow_supercritical_candidates=True",
            {"growth": growth},
        )
    cap = _resolve_cap(cap)
    L, L_fg, L_gf, f_cell, g_cell = _base_pair(ell, d)
    f_key = CellKey(BASE_GENERATION, f_cell, B)
    g_key = CellKey(BASE_GENERATION, g_cell, B)
    if classify_pair(f_key, g_key) != neighbour(ell):
        raise InvariantViolation(f"base pair {f_cell}, {g_cell} is not an {ell}-neighbour pair")

    fixed_f = [(a, 0) for a in L_fg] + [(a, B - 1) for a in L_gf]
    fixed_g = [(a, B - 1) for a in L_fg] + [(a, 0) for a in L_gf]
    keys_f = np.zeros((1, ell), dtype=np.int64)
    keys_g = np.zeros((1, ell), dtype=np.int64)
    counts_f = np.ones(1, dtype=np.int64)
    counts_g = np.ones(1, dtype=np.int64)
    trace = GammaTrace(ell, BASE_GENERATION, [1], False, L, L_fg, L_gf)

    for t in range(n_max):
        level = BASE_GENERATION + t
        gen = stream.child(TAG_GAMMA, level + 1).generator()
        keys_f, counts_f = _evolve_side(keys_f, counts_f, params.offspring, B, d, ell, fixed_f, gen, cap, level)
        keys_g, counts_g = _evolve_side(keys_g, counts_g, params.offspring, B, d, ell, fixed_g, gen, cap, level)
        keys_f, counts_f, keys_g, counts_g = _shared_keys(keys_f, counts_f, keys_g, counts_g, level + 1, B)
        value = int(sum(int(a) * int(b) for a, b in zip(counts_f.tolist(), counts_g.tolist())))
        trace.values.append(value)
        if value and audit_fraction > 0:
            trace.audited_pairs += _audit(keys_f, level + 1, B, d, L, L_fg, L_gf, f_cell, g_cell, ell,
                                          stream.child(TAG_GAMMA, "audit", level + 1), audit_fraction)
        if value == 0:
            trace.absorbed = True
            break
    return trace


def _audit(keys, level, B, d, L, L_fg, L_gf, f_cell, g_cell, ell, stream, fraction) -> int:
    """Rebuild full cells for a sample of shared keys and re-check the neighbour relation."""
    pick = np.flatnonzero(stream.generator().random(keys.shape[0]) < fraction)
    span = B ** (level - BASE_GENERATION)
    for row in pick.tolist():
        f_coords, g_coords = [0] * d, [0] * d
        for pos, axis in enumerate(L):
            f_coords[axis] = g_coords[axis] = int(keys[row, pos])
        for axis in L_fg:
            f_coords[axis] = f_cell[axis] * span
            g_coords[axis] = g_cell[axis] * span + span - 1
        for axis in L_gf:
            f_coords[axis] = f_cell[axis] * span + span - 1
            g_coords[axis] = g_cell[axis] * span
        relation = classify_pair(CellKey(level, tuple(f_coords), B), CellKey(level, tuple(g_coords), B))
        if relation != neighbour(ell):
            raise InvariantViolation(f"Gamma pair at generation {level} is {relation}, expected Neighbour({ell})")
    return int(pick.size)


# =============================================================================
# SPINE
# =============================================================================

@dataclass(frozen=True)
class SpineState:
    generation: int
    excess: int
    spine_digits: Tuple[int, ...]
    alone: bool
    # transition out of this generation
    spine_children: int = 0
    children_all_ones: bool = False
    children_all_zero: bool = False
    followers_stay: bool = False
    event: Optional[bool] = None


def _check_spine_params(params: ModelParams) -> None:
    if params.mode != ModelMode.GRID or params.displacement.kind != DisplacementKind.UNIFORM_DIGITS:
        raise ConfigError("the spine chain needs grid mode with uniform digit displacements")


def spine_run(params: ModelParams, generations: int, stream: Stream) -> List[SpineState]:
    """
    Excess count C_m along the size-biased spine for m = 0..generations.

    Each non-spine particle contributes Binomial(Z, B^-d) particles to the
    spine's next cell; the spine's own Z* children contribute the siblings
    sharing its child's digit.
    """
    _check_spine_params(params)
    if generations < 0:
        raise DomainError(f"generations must be >= 0, got {generations}")
    law = params.offspring
    star = law.size_biased()
    sites, p = params.sites, params.p
    ones = ones_index(params.B, params.d)
    table = _digit_rows(params.B, params.d)

    states: List[SpineState] = []
    excess, digits = 0, (0,) * params.d
    for m in range(generations):
        gen = stream.child(TAG_SPINE, m + 1).generator()
        z = law.sample(gen, size=excess)
        r = gen.binomial(z, p)
        zs = int(star.sample(gen))
        codes = gen.integers(0, sites, size=zs)
        j = int(gen.integers(zs))
        chosen = int(codes[j])
        siblings = int(np.sum(codes == chosen)) - 1
        states.append(SpineState(
            generation=m,
            excess=excess,
            spine_digits=digits,
            alone=excess == 0,
            spine_children=zs,
            children_all_ones=bool(np.all(codes == ones)),
            children_all_zero=bool(np.all(codes == 0)),
            followers_stay=bool(np.all(r == z)),
        ))
        excess = int(r.sum()) + siblings
        digits = table[chosen]
    states.append(SpineState(generations, excess, digits, excess == 0))
    return _mark_events(states)


def _digit_rows(B: int, d: int) -> List[Tuple[int, ...]]:
    return [tuple(int(v) for v in row) for row in digit_table(B, d)]


def _mark_events(states: List[SpineState]) -> List[SpineState]:
    """E_m: alone at m, all spine children at 1...1, then all grandchildren at 0 with every follower staying."""
    out = []
    for m, state in enumerate(states):
        event = None
        if m + 2 < len(states) and state.alone:
            nxt = states[m + 1]
            event = state.children_all_ones and nxt.children_all_zero and nxt.followers_stay
        out.append(SpineState(**{**asdict(state), "event": event}))
    return out


def spine_stationary_mean(law: OffspringLaw, p: float) -> float:
    """E[R~] / (1 - E[R]) with R ~ Bin(Z, p) and R~ ~ Bin(Z* - 1, p)."""
    mean_r = law.mean * p
    if mean_r >= 1.0:
        raise DomainError(f"the immigration chain has no stationary mean when E[R] = {mean_r:g} >= 1")
    mean_rt = (law.size_biased().mean - 1.0) * p
    return mean_rt / (1.0 - mean_r)


def spine_event_closed_form(law: OffspringLaw, p: float) -> float:
    """(h*(p) / h(p)) h*(p h(p)) with h, h* the pgfs of Z and Z*."""
    star = law.size_biased()
    h = float(law.pgf(p))
    if h == 0.0:
        return 0.0
    return float(star.pgf(p)) / h * float(star.pgf(p * h))


@dataclass(frozen=True)
class SpineEventReport:
    frequency: Frequency
    closed_form: float
    at_generation: Optional[int]
    undefined: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frequency": self.frequency.to_dict(),
            "closed_form": self.closed_form,
            "at_generation": self.at_generation,
            "undefined": self.undefined,
        }


def spine_event_frequency(
    params: ModelParams,
    generations: int,
    stream: Stream,
    replicates: int = 1,
    at_generation: Optional[int] = None,
    threads: int = 1,
) -> SpineEventReport:
    """
    Frequency of E_m among generations where the spine is alone.

    Pooled over m (each replicate contributes every evaluable generation)
    unless ``at_generation`` selects a single m.
    """
    _check_spine_params(params)
    if at_generation is not None:
        if at_generation < 0:
            raise DomainError(f"at_generation must be >= 0, got {at_generation}")
        generations = max(generations, at_generation + 2)

    def one(i: int) -> Tuple[int, int]:
        states = spine_run(params, generations, stream.child(i))
        if at_generation is not None:
            s = states[at_generation]
            return (int(bool(s.event)), 1) if s.alone else (0, 0)
        evaluated = [s.event for s in states if s.event is not None]
        return sum(1 for e in evaluated if e), len(evaluated)

    results = map_replicates(one, replicates, threads)
    successes = sum(r[0] for r in results)
    trials = sum(r[1] for r in results)
    freq = wilson_interval(successes, trials)
    return SpineEventReport(freq, spine_event_closed_form(params.offspring, params.p), at_generation, freq.undefined)


def spine_to_frame(states: List[SpineState]) -> pd.DataFrame:
    return pd.DataFrame({"generation": [s.generation for s in states], "value": [s.excess for s in states]})
