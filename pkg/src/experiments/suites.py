"""
Experiment Suites

One function per named experiment. Each takes a SuiteContext and returns a
SuiteResult holding:
- records: per case / sweep point aggregates (frequencies always carry their
  Wilson 95% interval)
- checks: named acceptance checks (statistical ones use 3-sigma bands or
  alpha = 0.01)
- tables: per-replicate or per-level frames written out as CSV

Replicate i of a suite draws from root.child(suite, *keys, i), where the keys
name the case or sweep point, so results do not depend on thread count.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from rich.console import Console

from src.analysis.connectivity import (
    AdjacencyMode,
    ball_hit_estimate,
    certify_disconnection,
    coarsest_level,
    crossing_all_modes,
    growth_exponent,
    h_statistic,
    strm_dimension,
)
from src.analysis.gw_exact import asymptotic_report, compose, extinction_prob, survival_curve
from src.analysis.statistics import (
    ACCEPTANCE_ALPHA,
    chi_square_binned,
    chi_square_gof,
    histogram,
    ks_normal,
    ks_two_sample,
    mean_interval,
    ratio_interval,
    trend_test,
    wilson_interval,
)
from src.experiments.config import ExperimentConfig
from src.tools.genealogy import (
    gamma_process,
    spine_event_frequency,
    spine_run,
    spine_stationary_mean,
    spine_to_frame,
)
from src.tools.grid_dynamics import (
    containment_violations,
    coupled_run,
    fractal_run,
    monotone_coupled_run,
    run,
    step,
)
from src.tools.lattice import CellIndex, CellKey, CellWindow
from src.tools.laws import ModelParams, OffspringLaw, Regime
from src.tools.sbm_bridge import (
    free_run_variance,
    sample_qk_batch,
    strm_free_run,
    uniform_particle,
    validate_branch_times,
    validate_offspring_geometric,
)
from src.utils.errors import ConfigError
from src.utils.parallel import map_replicates
from src.utils.rng import Stream

CHECK_Z = 3.0
# q^N below this counts as certain survival of N independent families
SURVIVAL_EPSILON = 1e-12
FAMILY_MAX_GENERATIONS = 1000


# =============================================================================
# PLUMBING
# =============================================================================

@dataclass
class Check:
    name: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SuiteResult:
    records: List[Dict[str, Any]] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def check(self, name: str, passed: bool, /, **detail: Any) -> Check:
        """Record a named check; ``detail`` may reuse the keys ``name`` and ``passed``."""
        entry = Check(name, bool(passed), detail)
        self.checks.append(entry)
        return entry

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_checks(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]


@dataclass
class SuiteContext:
    """Everything a suite needs: validated config, substreams, thread pool and console."""
    config: ExperimentConfig
    suite_id: str
    threads: int = 1
    cap: Optional[int] = None
    console: Optional[Console] = None

    @property
    def root(self) -> Stream:
        return Stream(self.config.seed).child(self.suite_id)

    def stream(self, *keys) -> Stream:
        return self.root.child(*keys)

    def replicate(self, i: int, *keys) -> Stream:
        return self.root.child(*keys, i)

    def map(self, fn: Callable[[int], Any], count: Optional[int] = None) -> List[Any]:
        return map_replicates(fn, self.config.replicates if count is None else count, self.threads)

    def cases(self) -> List[Tuple[str, ModelParams, int]]:
        config = self.config
        if not config.cases:
            return [("default", config.params(), config.levels)]
        return [(c.label, config.case_params(c), config.case_levels(c)) for c in config.cases]

    def sweep(self, *axes: str) -> List[float]:
        config = self.config
        if not config.sweep:
            raise ConfigError(f"'{self.suite_id}' needs a non-empty sweep")
        if config.sweep_axis not in axes:
            raise ConfigError(f"'{self.suite_id}' sweeps over {' or '.join(axes)}, got {config.sweep_axis!r}")
        return list(config.sweep)

    def log(self, message: str) -> None:
        if self.console is not None:
            self.console.print(f"[dim][{self.suite_id}] {message}[/dim]")


def _freq(successes: int, trials: int) -> Dict[str, Any]:
    return wilson_interval(successes, trials).to_dict()


def _band(successes: int, trials: int, target: float) -> bool:
    return wilson_interval(successes, trials, z=CHECK_Z).contains(target)


def _sweep_params(config: ExperimentConfig, axis: str, value: float) -> Optional[ModelParams]:
    """Model for one sweep point; None means fractal percolation with p = value."""
    if axis == "p":
        return None
    if axis == "c":
        return ModelParams.from_c(config.B, config.d, value)
    if axis == "beta":
        return ModelParams.from_beta(config.B, config.d, value)
    return ModelParams(d=config.d, B=config.B, offspring=OffspringLaw.poisson(value))


def _survival_threshold(q: float) -> int:
    if q <= 0.0:
        return 1
    return max(1, math.ceil(math.log(SURVIVAL_EPSILON) / math.log(q)))


def _family_survives(law: OffspringLaw, start: int, threshold: int, gen: np.random.Generator) -> bool:
    """Run a non-spatial GW population from ``start`` until it dies or reaches ``threshold``."""
    size = start
    for _ in range(FAMILY_MAX_GENERATIONS):
        if size == 0:
            return False
        if size >= threshold:
            return True
        size = int(law.sample(gen, size=size).sum())
    return size > 0


def _anchored_occupancy(
    params: ModelParams,
    levels: int,
    anchor: int,
    stream: Stream,
    gen: np.random.Generator,
    cap: Optional[int],
) -> np.ndarray:
    """
    Unbiased occupied-cell counts for levels 0..levels.

    Up to ``anchor`` the run is complete. Beyond it only one uniformly chosen
    occupied anchor cell is followed and its count is scaled by the number of
    anchor cells.
    """
    states = run(params, min(anchor, levels), stream, cap=cap)
    occ = np.zeros(levels + 1)
    occ[: len(states)] = [s.occupied for s in states]
    last = states[-1]
    if levels <= anchor or last.is_extinct:
        return occ
    mask = np.zeros(last.occupied, dtype=bool)
    mask[int(gen.integers(last.occupied))] = True
    state = last.restrict(mask)
    for m in range(anchor + 1, levels + 1):
        state = step(state, params, stream, cap=cap)
        occ[m] = last.occupied * state.occupied
    return occ


# =============================================================================
# ORACLE SUITES
# =============================================================================

def gw_exact_tables(ctx: SuiteContext) -> SuiteResult:
    """Exact curves per case with their asymptotic checks."""
    result = SuiteResult()
    horizon = int(ctx.config.option("horizon", 1000))
    decay_window = tuple(ctx.config.option("decay_window", [40, 80]))
    for label, params, _ in ctx.cases():
        law, p = params.offspring, params.p
        curve = survival_curve(law, p, horizon)
        window = decay_window if curve.regime == Regime.SUBCRITICAL else None
        report = asymptotic_report(curve, window=window)
        result.tables[f"curve_{label}"] = curve.to_frame()
        result.records.append({"case": label, "params": params.to_dict(), "curve": curve.to_dict(), "asymptotics": report.to_dict()})
        result.warnings.extend(f"{label}: {w}" for w in report.warnings)
        s = curve.survival

        first = 1.0 - float(law.thinned_pgf(p, 0.0))
        result.check(f"{label}: survival[1] = 1 - f_R(0)", abs(s[1] - first) <= 1e-12, value=float(s[1]), exact=first)
        result.check(f"{label}: survival nonincreasing", bool(np.all(np.diff(s) <= 1e-15)))
        if curve.hitting is not None:
            result.check(f"{label}: hitting <= survival", bool(np.all(curve.hitting <= s + 1e-15)))
        probes = sorted({1, min(10, horizon), horizon // 2})
        gaps = [abs((1.0 - compose(law, p, m, 0.0)) - s[m]) for m in probes]
        result.check(f"{label}: composition matches curve", max(gaps) <= 1e-12, levels=probes, max_gap=max(gaps))

        if curve.regime == Regime.CRITICAL:
            exact = report.kolmogorov_constant_exact
            scaled = report.scaled_survival_at_horizon
            result.check(
                f"{label}: M * survival[M] near 2 / Var(R)",
                exact is not None and abs(scaled - exact) <= 0.05 * exact,
                scaled=scaled,
                exact=exact,
                reference_constant=report.reference_constant,
            )
            if report.hitting_ratio_at_horizon is not None:
                ratio = report.hitting_ratio_at_horizon
                result.check(f"{label}: hitting / survival -> 1", abs(ratio - 1.0) <= 0.05, ratio=ratio)
        elif curve.regime == Regime.SUBCRITICAL:
            est, exact = report.decay_rate_est, report.decay_rate_exact
            result.check(
                f"{label}: decay rate = ln E[R]",
                est is not None and abs(est - exact) <= 1e-3,
                estimate=est,
                exact=exact,
                window=list(report.fit_window),
            )
            lo, hi = decay_window
            errors = [abs(s[m + 1] / s[m] - curve.thinned_mean) for m in (lo + (hi - lo) // 2, hi - 1)]
            result.check(f"{label}: successive ratios converge", errors[1] <= errors[0], errors=errors)
    return result


def survival(ctx: SuiteContext) -> SuiteResult:
    """P(N_m^x > 0) at the origin cell against survival[m], every m <= levels."""
    result = SuiteResult()
    n = ctx.config.replicates
    for label, params, levels in ctx.cases():
        curve = survival_curve(params.offspring, params.p, levels)
        window = CellWindow(CellKey(levels, (0,) * params.d, params.B))

        def one(i: int, params=params, levels=levels, window=window, label=label) -> List[bool]:
            states = run(params, levels, ctx.replicate(i, label), cap=ctx.cap, window=window)
            return [not s.is_extinct for s in states]

        ctx.log(f"{label}: {n} runs to level {levels}")
        occupied = np.array(ctx.map(one), dtype=bool).reshape(n, levels + 1)
        hits = occupied.sum(axis=0)
        rows = []
        for m in range(levels + 1):
            exact = float(curve.survival[m])
            rows.append({"case": label, "m": m, **_freq(int(hits[m]), n), "exact": exact})
            result.check(f"{label}: survival at m={m}", _band(int(hits[m]), n, exact), successes=int(hits[m]), trials=n, exact=exact)
        result.records.extend(rows)
        result.tables[f"survival_{label}"] = pd.DataFrame(rows)
    return result


def hitting(ctx: SuiteContext) -> SuiteResult:
    """
    P(origin cell at level m meets the limit support) against 1 - f_R^m(q).

    Each particle count N_m is followed by a non-spatial GW population: the
    cell meets the support iff one of its N_m families never dies out.
    """
    result = SuiteResult()
    n = ctx.config.replicates
    for label, params, levels in ctx.cases():
        curve = survival_curve(params.offspring, params.p, levels)
        if curve.hitting is None:
            raise ConfigError(f"case '{label}': hitting needs a supercritical offspring law")
        threshold = _survival_threshold(curve.q)
        window = CellWindow(CellKey(levels, (0,) * params.d, params.B))

        def one(i: int, params=params, levels=levels, window=window, label=label) -> List[Tuple[bool, bool]]:
            stream = ctx.replicate(i, label)
            states = run(params, levels, stream, cap=ctx.cap, window=window)
            out = []
            for m, state in enumerate(states):
                gen = stream.child("family", m).generator()
                out.append((state.total > 0, state.total > 0 and _family_survives(params.offspring, state.total, threshold, gen)))
            return out

        ctx.log(f"{label}: {n} runs to level {levels}, family threshold {threshold}")
        flags = np.array(ctx.map(one), dtype=bool).reshape(n, levels + 1, 2)
        occupied, hit = flags[:, :, 0], flags[:, :, 1]
        rows = []
        for m in range(levels + 1):
            exact = float(curve.hitting[m])
            h = int(hit[:, m].sum())
            rows.append({"case": label, "m": m, **_freq(h, n), "exact": exact, "exact_survival": float(curve.survival[m])})
            result.check(f"{label}: hitting at m={m}", _band(h, n, exact), successes=h, trials=n, exact=exact)
        result.check(f"{label}: hit implies occupied", not bool(np.any(hit & ~occupied)))
        result.check(f"{label}: exact hitting <= survival", bool(np.all(curve.hitting <= curve.survival + 1e-15)))
        result.records.extend(rows)
        result.tables[f"hitting_{label}"] = pd.DataFrame(rows)
    return result


# =============================================================================
# GRID SUITES
# =============================================================================

def mean_measure(ctx: SuiteContext) -> SuiteResult:
    """E[mu^-m N_m^x] = B^-dm on random cells, E[W_m] = 1, and fast path vs generic path."""
    result = SuiteResult()
    config = ctx.config
    params, levels, n = config.params(), config.levels, config.replicates
    mu, B, d = params.mu, params.B, params.d
    cell_count = int(config.option("cells", 20))
    compare_level = min(int(config.option("compare_level", 3)), levels)
    cells = ctx.stream("cells").generator().integers(0, B**levels, size=(cell_count, d), dtype=np.int64)

    def one(i: int) -> Tuple[np.ndarray, float]:
        last = run(params, levels, ctx.replicate(i), cap=ctx.cap)[-1]
        if last.is_extinct:
            return np.zeros(cell_count), 0.0
        rows = CellIndex(last.coords, levels, B).find(cells)
        counts = np.where(rows >= 0, last.counts[np.maximum(rows, 0)], 0)
        return counts.astype(float), last.total_weight(mu)

    def generic(i: int) -> Tuple[int, int]:
        last = run(params, compare_level, ctx.replicate(i, "generic"), cap=ctx.cap, fast_path=False)[-1]
        return last.total, last.occupied

    def fast(i: int) -> Tuple[int, int]:
        last = run(params, compare_level, ctx.replicate(i, "fast"), cap=ctx.cap)[-1]
        return last.total, last.occupied

    ctx.log(f"{n} runs to level {levels}")
    out = ctx.map(one)
    counts = np.array([o[0] for o in out]).reshape(n, cell_count)
    weights = np.array([o[1] for o in out])
    target = float(B) ** (-d * levels)
    rows = []
    for j in range(cell_count):
        est = mean_interval(counts[:, j] * mu ** (-levels), z=CHECK_Z)
        row = {"cell": [int(v) for v in cells[j]], "level": levels, **est.to_dict(), "target": target}
        rows.append(row)
        result.check(f"cell {tuple(row['cell'])}: mean mass = B^-dm", est.contains(target), mean=est.mean, target=target)
    result.records.extend(rows)
    result.tables["cell_means"] = pd.DataFrame([{**r, "cell": " ".join(map(str, r["cell"]))} for r in rows])

    w = mean_interval(weights, z=CHECK_Z)
    result.records.append({"quantity": f"W_{levels}", **w.to_dict()})
    result.check(f"E[W_{levels}] = 1", w.contains(1.0), mean=w.mean, std_error=w.std_error)

    ctx.log(f"fast path vs generic path at level {compare_level}")
    slow = np.array(ctx.map(generic), dtype=float).reshape(n, 2)
    quick = np.array(ctx.map(fast), dtype=float).reshape(n, 2)
    for col, name in ((0, "total"), (1, "occupied")):
        fit = chi_square_binned(quick[:, col], slow[:, col], name=f"fast_vs_generic_{name}")
        result.records.append(fit.to_dict())
        result.check(f"fast and generic {name} agree at level {compare_level}", fit.passed(ACCEPTANCE_ALPHA), **fit.to_dict())
    result.tables["weights"] = pd.DataFrame({"replicate": np.arange(n), "W": weights})
    return result


def fractal_survival(ctx: SuiteContext) -> SuiteResult:
    """
    Survival of fractal percolation over a p sweep.

    Runs stop early once more than N cells are occupied with q^N below
    SURVIVAL_EPSILON. For p <= B^-d extinction is certain in the limit and the
    extinction frequency is compared with f^levels(0); above it the survival
    frequency is compared with 1 - q.
    """
    result = SuiteResult()
    config = ctx.config
    B, d, levels, n = config.B, config.d, config.levels, config.replicates
    rows = []
    for p in ctx.sweep("p"):
        law = OffspringLaw.binomial(B**d, p)
        q = extinction_prob(law) if law.mean > 1.0 else 1.0
        stop = _survival_threshold(q) if q < 1.0 else None

        def one(i: int, p=p, stop=stop) -> Tuple[bool, int]:
            states = fractal_run(p, B, d, levels, ctx.replicate(i, f"p={p:g}"), stop_above=stop)
            return states[-1].is_extinct, states[-1].level

        ctx.log(f"p={p:g}: {n} runs, stop above {stop}")
        out = ctx.map(one)
        extinct = sum(1 for o in out if o[0])
        row = {"p": p, "mean_children": law.mean, "q": q, "extinction": _freq(extinct, n), "survival": _freq(n - extinct, n)}
        if p <= float(B) ** (-d):
            exact = compose(law, 1.0, levels, 0.0)
            row["exact_extinction"] = exact
            result.check(f"p={p:g}: extinction by level {levels}", _band(extinct, n, exact), extinct=extinct, trials=n, exact=exact)
            if extinct < 0.99 * n:
                result.warnings.append(f"p={p:g}: extinction frequency {extinct / n:.3f} is below 0.99 (exact {exact:.4f})")
        else:
            result.check(f"p={p:g}: survival = 1 - q", _band(n - extinct, n, 1.0 - q), survived=n - extinct, trials=n, target=1.0 - q)
        rows.append(row)
    result.records.extend(rows)
    result.tables["fractal_survival"] = pd.DataFrame(
        [{"p": r["p"], "q": r["q"], "extinction": r["extinction"]["estimate"], "lo": r["extinction"]["lo"], "hi": r["extinction"]["hi"]} for r in rows]
    )
    return result


def coupling_containment(ctx: SuiteContext) -> SuiteResult:
    """Fractal percolation(1 - e^-c) stays inside the Poisson(c B^d) process on every path."""
    result = SuiteResult()
    config = ctx.config
    B, d, levels, n = config.B, config.d, config.levels, config.replicates
    sites = B**d
    per_replicate = []
    for c in ctx.sweep("c"):
        def one(i: int, c=c) -> Dict[str, Any]:
            out = coupled_run(B, d, c, levels, ctx.replicate(i, f"c={c:g}"), cap=ctx.cap, track="fractal")
            grids = [g for g, _ in out]
            fracs = [f for _, f in out]
            return {
                "c": c,
                "replicate": i,
                "violations": containment_violations(fracs, grids),
                "kept_level_1": fracs[1].occupied if levels >= 1 else 0,
                "fractal_occupied": fracs[-1].occupied,
                "strm_occupied": grids[-1].occupied,
            }

        ctx.log(f"c={c:g}: {n} coupled runs to level {levels}")
        rows = ctx.map(one)
        per_replicate.extend(rows)
        violations = sum(r["violations"] for r in rows)
        kept = sum(r["kept_level_1"] for r in rows)
        target = -math.expm1(-c)
        result.records.append({"c": c, "violations": violations, "level_1_keep": _freq(kept, n * sites), "target_keep": target})
        result.check(f"c={c:g}: no containment violations", violations == 0, violations=violations)
        if levels >= 1 and n:
            result.check(f"c={c:g}: level-1 keep rate = 1 - e^-c", _band(kept, n * sites, target), kept=kept, trials=n * sites, target=target)
    result.tables["containment"] = pd.DataFrame(per_replicate)
    return result


def monotone_coupling(ctx: SuiteContext) -> SuiteResult:
    """The c1 process stays inside the c2 process; c1 = c2 reproduces one process twice."""
    result = SuiteResult()
    config = ctx.config
    B, d, levels, n = config.B, config.d, config.levels, config.replicates
    pairs = [tuple(float(v) for v in pair) for pair in config.option("pairs", [[0.6, 1.0]])]
    if any(len(pair) != 2 for pair in pairs):
        raise ConfigError(f"pairs must hold [c1, c2] entries, got {pairs}")
    per_replicate = []
    for c1, c2 in pairs:
        key = f"c1={c1:g},c2={c2:g}"

        def one(i: int, c1=c1, c2=c2, key=key) -> Dict[str, Any]:
            out = monotone_coupled_run(B, d, c1, c2, levels, ctx.replicate(i, key), cap=ctx.cap, track="inner")
            inner = [a for a, _ in out]
            outer = [b for _, b in out]
            return {
                "pair": key,
                "replicate": i,
                "violations": containment_violations(inner, outer),
                "total_violations": sum(1 for a, b in out if b.total < a.total),
                "inner_occupied": inner[-1].occupied,
            }

        ctx.log(f"{key}: {n} coupled runs to level {levels}")
        rows = ctx.map(one)
        per_replicate.extend(rows)
        violations = sum(r["violations"] for r in rows)
        totals = sum(r["total_violations"] for r in rows)
        result.records.append({"c1": c1, "c2": c2, "violations": violations, "total_violations": totals})
        result.check(f"{key}: no containment violations", violations == 0, violations=violations)
        result.check(f"{key}: outer mass >= inner mass", totals == 0, levels_violated=totals)

    identical = int(config.option("identical_replicates", 20))
    if pairs and identical > 0:
        c = pairs[0][0]

        def same(i: int) -> bool:
            out = monotone_coupled_run(B, d, c, c, levels, ctx.replicate(i, "identical"), cap=ctx.cap, track="all")
            return all(a == b for a, b in out)

        equal = sum(ctx.map(same, identical))
        result.check(f"c1 = c2 = {c:g} gives identical processes", equal == identical, identical=equal, runs=identical)
    result.tables["monotone"] = pd.DataFrame(per_replicate)
    return result


# =============================================================================
# CONNECTIVITY SUITES
# =============================================================================

MODE_ORDER = [AdjacencyMode.FACE.value, AdjacencyMode.PAPER_L.value, AdjacencyMode.CLOSED_CUBE.value]


def _crossing_runs(ctx: SuiteContext, axis: str, value: float) -> List[Dict[str, Any]]:
    config = ctx.config
    params = _sweep_params(config, axis, value)
    key = f"{axis}={value:g}"

    def one(i: int) -> Dict[str, Any]:
        stream = ctx.replicate(i, key)
        if params is None:
            cells = fractal_run(value, config.B, config.d, config.levels, stream)[-1]
        else:
            cells = run(params, config.levels, stream, cap=ctx.cap)[-1]
        reports = crossing_all_modes(cells, axis=config.axis)
        return {axis: value, "replicate": i, "occupied": cells.occupied, **{m: reports[m].crossed for m in MODE_ORDER}}

    ctx.log(f"{key}: {config.replicates} runs to level {config.levels}")
    return ctx.map(one)


def _nesting_violations(rows: Sequence[Dict[str, Any]]) -> int:
    """face => paper_l => closed_cube must hold on every run."""
    return sum(
        1 for r in rows
        if (r["face"] and not r["paper_l"]) or (r["paper_l"] and not r["closed_cube"])
    )


def crossing_sweep(ctx: SuiteContext) -> SuiteResult:
    """Crossing frequency along a p (fractal) or c / mu (STRM) sweep, all adjacency modes."""
    result = SuiteResult()
    config = ctx.config
    axis = config.sweep_axis
    values = sorted(ctx.sweep("p", "c", "mu"))
    mode = AdjacencyMode.parse(config.adjacency).value
    n = config.replicates
    per_replicate, bands = [], []
    for value in values:
        rows = _crossing_runs(ctx, axis, value)
        per_replicate.extend(rows)
        record = {axis: value, "level": config.levels}
        for m in MODE_ORDER:
            record[m] = _freq(sum(1 for r in rows if r[m]), n)
        result.records.append(record)
        bands.append(wilson_interval(sum(1 for r in rows if r[mode]), n, z=CHECK_Z))
        nested = _nesting_violations(rows)
        result.check(f"{axis}={value:g}: face => paper_l => closed_cube", nested == 0, violations=nested)

    drops = [
        (values[i], values[j])
        for i in range(len(values))
        for j in range(i + 1, len(values))
        if bands[j].estimate < bands[i].estimate and bands[j].hi < bands[i].lo
    ]
    result.check(f"{mode} crossing frequency monotone in {axis}", not drops, drops=[list(x) for x in drops])

    bound_p = config.option("bound_p", 0.5)
    if axis == "p" and bound_p in values:
        freq = bands[values.index(bound_p)]
        limit = float(config.option("bound_frequency", 0.05))
        result.check(f"crossing at p={bound_p:g} stays below {limit:g}", freq.estimate <= limit, frequency=freq.estimate)
    result.tables["crossings"] = pd.DataFrame(per_replicate)
    return result


def beta_bracket(ctx: SuiteContext) -> SuiteResult:
    """STRM crossing frequency against beta; it should fall across (2/d, 4/(d+1)]."""
    result = SuiteResult()
    config = ctx.config
    values = sorted(ctx.sweep("beta"))
    mode = AdjacencyMode.parse(config.adjacency).value
    d, n = config.d, config.replicates
    bracket = (2.0 / d, 4.0 / (d + 1))
    per_replicate, bands = [], []
    for beta in values:
        rows = _crossing_runs(ctx, "beta", beta)
        per_replicate.extend(rows)
        params = ModelParams.from_beta(config.B, d, beta)
        crossed = sum(1 for r in rows if r[mode])
        result.records.append({
            "beta": beta,
            "mu": params.mu,
            "regime": params.regime.value,
            "in_bracket": bracket[0] < beta <= bracket[1],
            **{m: _freq(sum(1 for r in rows if r[m]), n) for m in MODE_ORDER},
        })
        bands.append(wilson_interval(crossed, n, z=CHECK_Z))
    rises = [
        (values[i], values[j])
        for i in range(len(values))
        for j in range(i + 1, len(values))
        if bands[j].estimate > bands[i].estimate and bands[j].lo > bands[i].hi
    ]
    result.records.append({"bracket_lo": bracket[0], "bracket_hi": bracket[1], "mode": mode})
    result.check(f"{mode} crossing frequency nonincreasing in beta", not rises, rises=[list(x) for x in rises])
    result.tables["beta_crossings"] = pd.DataFrame(per_replicate)
    return result


def td_certify_suite(ctx: SuiteContext) -> SuiteResult:
    """Success rate of the separation certificate among runs occupied at level m."""
    result = SuiteResult()
    config = ctx.config
    m = int(config.option("m", 2))
    horizon = int(config.option("horizon", 3 * m + 20))
    frontier_cap = config.option("frontier_cap", 200_000)
    target = float(config.option("target", 0.95))
    rates: Dict[str, float] = {}
    per_replicate = []
    for label, params, _ in ctx.cases():
        def one(i: int, params=params, label=label) -> Dict[str, Any]:
            report = certify_disconnection(params, m, horizon, ctx.replicate(i, label), cap=ctx.cap, frontier_cap=frontier_cap)
            return {"case": label, "replicate": i, **report.to_dict()}

        ctx.log(f"{label}: {config.replicates} certifications, m={m}, horizon={horizon}")
        rows = ctx.map(one)
        per_replicate.extend(rows)
        alive = [r for r in rows if r["groups"] > 0]
        found = sum(1 for r in alive if r["found"])
        truncated = sum(1 for r in alive if r["truncated"])
        freq = wilson_interval(found, len(alive))
        rates[label] = freq.estimate
        result.records.append({
            "case": label,
            "params": params.to_dict(),
            "m": m,
            "horizon": horizon,
            "surviving": len(alive),
            "truncated": truncated,
            "success": freq.to_dict(),
        })
        if truncated:
            result.warnings.append(f"{label}: {truncated} runs hit the frontier cap of {frontier_cap}")

    labels = list(rates)
    if labels:
        lead = labels[0]
        result.check(f"{lead}: certificate found in >= {target:g} of surviving runs", rates[lead] >= target, rate=rates[lead])
        for other in labels[1:]:
            result.check(f"{other}: success rate below {lead}", rates[other] < rates[lead], rate=rates[other], reference=rates[lead])
    result.tables["td_certify"] = pd.DataFrame(per_replicate)
    return result


def _anchored_table(ctx: SuiteContext, params: ModelParams, levels: int) -> np.ndarray:
    anchor = int(ctx.config.option("anchor_level", 6))

    def one(i: int) -> np.ndarray:
        return _anchored_occupancy(params, levels, anchor, ctx.replicate(i), ctx.replicate(i, "anchor").generator(), ctx.cap)

    ctx.log(f"{ctx.config.replicates} anchored runs to level {levels} (anchor {anchor})")
    return np.array(ctx.map(one)).reshape(ctx.config.replicates, levels + 1)


def growth_exponent_suite(ctx: SuiteContext) -> SuiteResult:
    """Slope of ln E[occupied] vs m ln B over the fit window against min(2/beta, d)."""
    result = SuiteResult()
    config = ctx.config
    params, levels = config.params(), config.levels
    fit_from = int(config.option("fit_from", 6))
    tolerance = float(config.option("tolerance", 0.2))
    occ = _anchored_table(ctx, params, levels)
    curve = survival_curve(params.offspring, params.p, levels)
    ms = list(range(fit_from, levels + 1))
    means = [float(occ[:, m].mean()) for m in ms]
    for m, mean in zip(ms, means):
        est = mean_interval(occ[:, m])
        exact = float(params.sites) ** m * float(curve.survival[m])
        result.records.append({"m": m, **est.to_dict(), "exact": exact})
    fit = growth_exponent(ms, means, params.B)
    target = strm_dimension(params)
    result.records.append({"fit": fit.to_dict(), "target": target})
    result.check(f"growth slope within {tolerance:g} of {target:g}", abs(fit.slope - target) <= tolerance, slope=fit.slope, target=target)
    result.tables["occupancy"] = pd.DataFrame(occ, columns=[f"m_{m}" for m in range(levels + 1)])
    return result


def h_statistic_suite(ctx: SuiteContext) -> SuiteResult:
    """Per-run covering sums over the fit window show no significant upward trend."""
    result = SuiteResult()
    config = ctx.config
    params, levels = config.params(), config.levels
    B, d = params.B, params.d
    fit_from = int(config.option("fit_from", 6))
    occ = _anchored_table(ctx, params, levels)
    curve = survival_curve(params.offspring, params.p, levels)
    ms = np.arange(fit_from, levels + 1)
    # h is linear in the occupied count
    scale = np.array([h_statistic(1.0, int(m), B, d) for m in ms])
    h = occ[:, fit_from:] * scale
    for j, m in enumerate(ms):
        exact = h_statistic(float(params.sites) ** int(m) * float(curve.survival[m]), int(m), B, d)
        result.records.append({"m": int(m), **mean_interval(h[:, j]).to_dict(), "exact": exact})
    trend = trend_test(np.tile(ms, h.shape[0]), h.ravel())
    result.records.append({"trend": trend.to_dict(), "regime": params.regime.value})
    result.check("no significant positive trend in h", not trend.significant_positive(0.05), **trend.to_dict())
    result.tables["h_statistic"] = pd.DataFrame(h, columns=[f"m_{m}" for m in ms])
    return result


def ball_hitting(ctx: SuiteContext) -> SuiteResult:
    """
    Hit-probability ratio P(r) / P(r') for each case.

    Critical: r' = r^2 and the ratio tends to 2 (logarithmic rate).
    Subcritical: r' = r / 2 and the ratio tends to 2^(d - 2/beta).
    A covering ball of radius sqrt(d) must reproduce the survival frequency.
    """
    result = SuiteResult()
    config = ctx.config
    n = config.replicates
    r = float(config.option("radius", 0.25))
    tolerance = float(config.option("tolerance", 0.25))
    covering = int(config.option("covering_replicates", 500))
    for label, params, _ in ctx.cases():
        d = params.d
        center = config.option("center", [0.5] * d)
        if params.regime == Regime.CRITICAL:
            small, target = r * r, 2.0
        elif params.regime == Regime.SUBCRITICAL:
            small, target = r / 2.0, 2.0 ** (d - 2.0 / params.beta)
        else:
            small, target = r / 2.0, 1.0
        level = coarsest_level(params.B, small)
        stream = ctx.stream(label)
        ctx.log(f"{label}: {n} runs to level {level}, radii {r:g} and {small:g}")
        big = ball_hit_estimate(params, center, r, level, n, stream, threads=ctx.threads, cap=ctx.cap)
        little = ball_hit_estimate(params, center, small, level, n, stream, threads=ctx.threads, cap=ctx.cap)
        ratio = ratio_interval(big.frequency, little.frequency, z=CHECK_Z)
        lo, hi = target * (1.0 - tolerance), target * (1.0 + tolerance)
        result.records.append({
            "case": label,
            "regime": params.regime.value,
            "level": level,
            "radii": [r, small],
            "hit_large": big.to_dict(),
            "hit_small": little.to_dict(),
            "ratio": ratio.to_dict(),
            "target": target,
        })
        result.warnings.extend(f"{label}: {w}" for w in big.warnings + little.warnings)
        overlaps = not math.isnan(ratio.mean) and ratio.hi >= lo and ratio.lo <= hi
        result.check(f"{label}: hit ratio near {target:g}", overlaps, ratio=ratio.mean, lo=ratio.lo, hi=ratio.hi, target=target)

        if covering > 0:
            cover_stream = ctx.stream(label, "cover")
            cover = ball_hit_estimate(params, center, math.sqrt(d), level, covering, cover_stream, threads=ctx.threads, cap=ctx.cap)

            def alive(i: int, params=params, level=level, cover_stream=cover_stream) -> bool:
                return not run(params, level, cover_stream.child(i), cap=ctx.cap)[-1].is_extinct

            survived = sum(ctx.map(alive, covering))
            result.check(
                f"{label}: covering ball reproduces survival",
                cover.frequency.successes == survived,
                hits=cover.frequency.successes,
                survived=survived,
            )
    return result


# =============================================================================
# GENEALOGY SUITES
# =============================================================================

def gamma_supermartingale(ctx: SuiteContext) -> SuiteResult:
    """E[M_{n+1} | M_n = k] <= k (3-sigma) and absorption at 0, per l."""
    result = SuiteResult()
    config = ctx.config
    params, n = config.params(), config.replicates
    n_max = int(config.option("n_max", 40))
    max_k = int(config.option("max_k", 20))
    absorption_target = float(config.option("absorption_target", 0.99))
    allow = bool(config.option("allow_supercritical_candidates", False))
    traces_out, drift_rows = [], []
    for ell in config.option("ells", list(range(params.d))):
        ell = int(ell)

        def one(i: int, ell=ell):
            return gamma_process(params, ell, n_max, ctx.replicate(i, f"ell={ell}"), cap=ctx.cap,
                                 allow_supercritical_candidates=allow)

        ctx.log(f"l={ell}: {n} traces of up to {n_max} steps")
        traces = ctx.map(one)
        pairs = np.array([t for trace in traces for t in trace.transitions()], dtype=float).reshape(-1, 2)
        worst = []
        for k in range(1, max_k + 1):
            nxt = pairs[pairs[:, 0] == k, 1]
            if nxt.size < 2:
                continue
            est = mean_interval(nxt)
            bound = k + CHECK_Z * est.std_error
            drift_rows.append({"ell": ell, "k": k, "n": int(nxt.size), "mean_next": est.mean, "std_error": est.std_error, "bound": bound})
            if est.mean > bound:
                worst.append(k)
        absorbed = sum(1 for t in traces if t.absorbed)
        audited = sum(t.audited_pairs for t in traces)
        result.records.append({"ell": ell, "absorbed": _freq(absorbed, n), "audited_pairs": audited})
        result.check(f"l={ell}: E[M_n+1 | M_n = k] <= k + 3 se", not worst, exceeded=worst)
        result.check(f"l={ell}: absorbed within {n_max} steps", n > 0 and absorbed >= absorption_target * n, absorbed=absorbed, traces=n)
        traces_out.extend({"ell": ell, "replicate": i, "steps": t.steps, "absorbed": t.absorbed, "max_value": max(t.values)} for i, t in enumerate(traces))
    result.tables["gamma_drift"] = pd.DataFrame(drift_rows)
    result.tables["gamma_traces"] = pd.DataFrame(traces_out)
    return result


def spine(ctx: SuiteContext) -> SuiteResult:
    """Stationary mean, E_m frequencies, spine offspring law and the critical contrast."""
    result = SuiteResult()
    config = ctx.config
    params, n = config.params(), config.replicates
    law, p = params.offspring, params.p
    long_run = int(config.option("long_run", 100_000))
    event_generations = [int(m) for m in config.option("event_generations", [5, 10, 20])]
    tolerance = float(config.option("tolerance", 0.1))

    ctx.log(f"long chain of {long_run} steps")
    states = spine_run(params, long_run, ctx.stream("long"))
    excess = np.array([s.excess for s in states], dtype=float)
    target = spine_stationary_mean(law, p)
    result.records.append({"long_run": long_run, "mean_excess": float(excess.mean()), "stationary_mean": target})
    result.check("long-run mean of C_m", abs(excess.mean() - target) <= tolerance * target, mean=float(excess.mean()), target=target)

    children = np.array([s.spine_children for s in states[:-1]], dtype=np.int64)
    counts = histogram(children)
    fit = chi_square_gof(counts, law.size_biased().pmf_table(max(counts.size - 1, 1)), name="spine_offspring")
    result.records.append(fit.to_dict())
    result.check("spine offspring follow the size-biased law", fit.passed(ACCEPTANCE_ALPHA), **fit.to_dict())
    result.tables["spine_long"] = spine_to_frame(states)

    events = ctx.stream("events")
    horizon = max(event_generations) + 2
    ctx.log(f"{n} event chains of {horizon} generations")
    pooled = spine_event_frequency(params, horizon, events, replicates=n, threads=ctx.threads)
    closed = pooled.closed_form
    result.records.append({"pooled": pooled.to_dict()})
    result.check(
        "pooled E_m frequency = closed form",
        _band(pooled.frequency.successes, pooled.frequency.trials, closed),
        estimate=pooled.frequency.estimate,
        closed_form=closed,
    )
    bands = {}
    for m in event_generations:
        report = spine_event_frequency(params, horizon, events, replicates=n, at_generation=m, threads=ctx.threads)
        result.records.append({"at_generation": m, **report.to_dict()})
        bands[m] = wilson_interval(report.frequency.successes, report.frequency.trials, z=CHECK_Z)
    apart = [
        (a, b) for i, a in enumerate(event_generations) for b in event_generations[i + 1:]
        if bands[a].hi < bands[b].lo or bands[b].hi < bands[a].lo
    ]
    result.check("E_m frequency constant across m", not apart, separated=[list(x) for x in apart])

    steps = int(config.option("transience_steps", 10_000))
    reps = int(config.option("transience_replicates", 20))
    crit_d = int(config.option("transience_d", 2))
    critical = ModelParams(d=crit_d, B=params.B, offspring=law)

    def running_max(i: int, model: ModelParams, key: str) -> int:
        return max(s.excess for s in spine_run(model, steps, ctx.replicate(i, key)))

    ctx.log(f"transience contrast: {reps} chains of {steps} steps at d={crit_d} and d={params.d}")
    crit_max = ctx.map(lambda i: running_max(i, critical, "critical"), reps)
    base_max = ctx.map(lambda i: running_max(i, params, "base"), reps)
    result.records.append({
        "transience": {
            "critical": critical.to_dict(),
            "median_max_critical": float(np.median(crit_max)),
            "median_max_base": float(np.median(base_max)),
        }
    })
    if critical.regime == Regime.CRITICAL and params.regime == Regime.SUBCRITICAL:
        result.check(
            "critical chain climbs higher than the subcritical one",
            np.median(crit_max) > np.median(base_max),
            critical=float(np.median(crit_max)),
            subcritical=float(np.median(base_max)),
        )
    return result


# =============================================================================
# SBM SUITE
# =============================================================================

def sbm_validate(ctx: SuiteContext) -> SuiteResult:
    """Q_k marginals, exchangeability, branch times, offspring law and free-run positions."""
    result = SuiteResult()
    config = ctx.config
    d, n = config.d, config.replicates
    mu = float(config.option("mu", 4.0))
    samples = int(config.option("samples", 10_000))
    ks = [int(k) for k in config.option("ks", [1, 2, 5])]

    def record(fit, label: str) -> None:
        result.records.append({"check": label, **fit.to_dict()})
        if fit.warning:
            result.warnings.append(f"{label}: {fit.warning}")
        result.check(label, fit.passed(ACCEPTANCE_ALPHA), **fit.to_dict())

    times = np.zeros(0)
    for k in ks:
        points, branch = sample_qk_batch(k, mu, d, samples, ctx.stream("qk", k).generator())
        record(ks_normal(points[:, 0, :].ravel(), mu - 1.0), f"Q_{k} marginal ~ N(0, mu - 1)")
        if branch.size > times.size:
            times = branch.ravel()

    points, _ = sample_qk_batch(3, mu, d, samples, ctx.stream("qk", "exchange").generator())
    slot_fits = [ks_two_sample(points[:, a, 0], points[:, b, 0]) for a, b in ((0, 1), (0, 2), (1, 2))]
    worst = min(slot_fits, key=lambda f: f.p_value)
    result.records.append({"check": "Q_3 exchangeable", "pairs": [f.to_dict() for f in slot_fits]})
    result.check("Q_3 exchangeable", all(f.passed(ACCEPTANCE_ALPHA) for f in slot_fits), worst_p_value=worst.p_value)

    if times.size == 0:
        times = sample_qk_batch(2, mu, d, samples, ctx.stream("qk", "times").generator())[1].ravel()
    record(validate_branch_times(times, mu), "branch times")
    offspring = OffspringLaw.geometric(mu).sample(ctx.stream("offspring").generator(), size=samples)
    record(validate_offspring_geometric(offspring, mu), "offspring ~ Geometric")

    free_mu = float(config.option("free_mu", 1.5))
    generations = int(config.option("generations", 20))

    def one(i: int) -> Tuple[np.ndarray, float]:
        clouds = strm_free_run(free_mu, d, generations, ctx.replicate(i), cap=ctx.cap)
        picked = uniform_particle(clouds, ctx.replicate(i, "pick").generator())
        return picked, clouds[-1].total_mass

    ctx.log(f"{n} free runs of {generations} generations at mu={free_mu:g}")
    out = ctx.map(one)
    if out:
        positions = np.array([o[0] for o in out])
        masses = np.array([o[1] for o in out])
        variance = free_run_variance(free_mu, generations)
        record(ks_normal(positions.ravel(), variance), f"generation-{generations} positions ~ N(0, {variance:.4f})")
        mass = mean_interval(masses, z=CHECK_Z)
        result.records.append({"check": "total mass", **mass.to_dict()})
        result.check("mean total mass = 1", mass.contains(1.0), mean=mass.mean, std_error=mass.std_error)
        result.tables["free_run"] = pd.DataFrame(
            {"replicate": np.arange(len(out)), "mass": masses, **{f"x_{j + 1}": positions[:, j] for j in range(d)}}
        )
    return result


SUITE_FUNCTIONS: Dict[str, Callable[[SuiteContext], SuiteResult]] = {
    fn.__name__: fn
    for fn in (
        gw_exact_tables,
        survival,
        hitting,
        mean_measure,
        fractal_survival,
        coupling_containment,
        monotone_coupling,
        crossing_sweep,
        beta_bracket,
        td_certify_suite,
        growth_exponent_suite,
        h_statistic_suite,
        ball_hitting,
        gamma_supermartingale,
        spine,
        sbm_validate,
    )
}
