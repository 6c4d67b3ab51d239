"""
strmlab Experiment Registry

Central list of the named experiment suites. Each entry carries its
category, a one-line description, the suite function it binds to and the
desk-scale defaults that reproduce its acceptance check.

Categories:
- oracle: exact generating-function numerics and their Monte Carlo mirrors
- grid: the B-ary occupancy process and its couplings
- connectivity: crossings, total disconnection, support size
- genealogy: pair process and spine
- sbm: the super-Brownian bridge
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List

from src.utils.errors import ConfigError
from src.utils.normalizer import normalize_experiment, suggest


class SuiteCategory(str, Enum):
    ORACLE = "oracle"
    GRID = "grid"
    CONNECTIVITY = "connectivity"
    GENEALOGY = "genealogy"
    SBM = "sbm"


@dataclass
class Suite:
    """A named experiment and its defaults."""
    id: str
    name: str
    description: str
    category: SuiteCategory
    function_name: str
    defaults: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "category": self.category.value,
            "function_name": self.function_name,
            "defaults": self.defaults,
        }


CRITICAL_2D = {"label": "critical", "d": 2, "offspring": {"kind": "poisson", "mean": 4.0}}
SUBCRITICAL_3D = {"label": "subcritical", "d": 3, "offspring": {"kind": "poisson", "mean": 4.0}}


# =============================================================================
# SUITE DEFINITIONS
# =============================================================================

SUITES: Dict[str, Suite] = {
    # -------------------------------------------------------------------------
    # ORACLE
    # -------------------------------------------------------------------------
    "gw-exact-tables": Suite(
        id="gw-exact-tables",
        name="Exact survival tables",
        description="Iterated thinned pgf: survival / hitting curves, asymptotic constants and decay rates.",
        category=SuiteCategory.ORACLE,
        function_name="gw_exact_tables",
        defaults={"replicates": 1, "cases": [CRITICAL_2D, SUBCRITICAL_3D], "options": {"horizon": 1000}},
    ),
    "survival": Suite(
        id="survival",
        name="Cell survival vs oracle",
        description="Monte Carlo P(N_m^x > 0) at the origin cell against the exact survival curve.",
        category=SuiteCategory.ORACLE,
        function_name="survival",
        defaults={"replicates": 10_000, "levels": 8, "cases": [CRITICAL_2D, SUBCRITICAL_3D]},
    ),
    "hitting": Suite(
        id="hitting",
        name="Cell hitting vs oracle",
        description="Monte Carlo probability that a surviving family sits in the origin cell, against 1 - f_R^m(q).",
        category=SuiteCategory.ORACLE,
        function_name="hitting",
        defaults={"replicates": 10_000, "levels": 6, "cases": [CRITICAL_2D, SUBCRITICAL_3D]},
    ),
    # -------------------------------------------------------------------------
    # GRID
    # -------------------------------------------------------------------------
    "mean-measure": Suite(
        id="mean-measure",
        name="Mean measure is Lebesgue",
        description="E[mu^-m N_m^x] = B^-dm on random cells, the W martingale, and fast path vs generic path.",
        category=SuiteCategory.GRID,
        function_name="mean_measure",
        defaults={"replicates": 10_000, "levels": 5, "d": 2, "options": {"cells": 20, "compare_level": 3}},
    ),
    "fractal-survival": Suite(
        id="fractal-survival",
        name="Fractal percolation survival",
        description="Extinction below p = B^-d and survival frequency 1 - q(Binomial(B^d, p)) above it.",
        category=SuiteCategory.GRID,
        function_name="fractal_survival",
        defaults={"replicates": 1000, "levels": 50, "d": 2, "sweep_axis": "p", "sweep": [0.24, 0.5]},
    ),
    "coupling-containment": Suite(
        id="coupling-containment",
        name="Fractal inside STRM",
        description="Pathwise containment of fractal percolation(1 - e^-c) in the Poisson(c B^d) process.",
        category=SuiteCategory.GRID,
        function_name="coupling_containment",
        defaults={"replicates": 1000, "levels": 12, "d": 2, "sweep_axis": "c", "sweep": [0.6, 1.0]},
    ),
    "monotone-coupling": Suite(
        id="monotone-coupling",
        name="Monotone mean coupling",
        description="Pathwise containment of the c1 process in the c2 process for c1 <= c2.",
        category=SuiteCategory.GRID,
        function_name="monotone_coupling",
        defaults={
            "replicates": 1000,
            "levels": 12,
            "d": 2,
            "options": {"pairs": [[0.6, 1.0]], "identical_replicates": 20},
        },
    ),
    # -------------------------------------------------------------------------
    # CONNECTIVITY
    # -------------------------------------------------------------------------
    "crossing-sweep": Suite(
        id="crossing-sweep",
        name="Crossing sweep",
        description="Crossing frequency of finite-level cube unions along a p (fractal) or c (STRM) sweep.",
        category=SuiteCategory.CONNECTIVITY,
        function_name="crossing_sweep",
        defaults={
            "replicates": 1000,
            "levels": 8,
            "d": 2,
            "sweep_axis": "p",
            "sweep": [0.4, 0.5, 0.55, 0.7, 0.85, 0.95],
            "options": {"bound_p": 0.5, "bound_frequency": 0.05},
        },
    ),
    "beta-bracket": Suite(
        id="beta-bracket",
        name="Beta bracket",
        description="STRM crossing frequency against beta around the bracket (2/d, 4/(d+1)].",
        category=SuiteCategory.CONNECTIVITY,
        function_name="beta_bracket",
        defaults={
            "replicates": 200,
            "levels": 7,
            "d": 2,
            "sweep_axis": "beta",
            "sweep": [0.8, 0.9, 1.0, 1.1, 1.2, 4.0 / 3.0, 1.5],
        },
    ),
    "td-certify": Suite(
        id="td-certify",
        name="Total disconnection certificate",
        description="First level at which descendants of distinct level-m cells stop touching.",
        category=SuiteCategory.CONNECTIVITY,
        function_name="td_certify_suite",
        defaults={
            "replicates": 1000,
            "cases": [
                {"label": "boundary", "d": 3, "offspring": {"kind": "poisson", "mean": 4.0}},
                {"label": "contrast", "d": 2, "offspring": {"kind": "poisson", "mean": 4.0}},
            ],
            "options": {"m": 2, "frontier_cap": 200_000, "target": 0.95},
        },
    ),
    "growth-exponent": Suite(
        id="growth-exponent",
        name="Growth exponent",
        description="Slope of ln E[occupied cells] against m ln B, compared with min(2/beta, d).",
        category=SuiteCategory.CONNECTIVITY,
        function_name="growth_exponent_suite",
        defaults={
            "replicates": 1000,
            "levels": 12,
            "d": 3,
            "options": {"anchor_level": 6, "fit_from": 6, "tolerance": 0.2},
        },
    ),
    "h-statistic": Suite(
        id="h-statistic",
        name="Covering-sum trend",
        description="Mean covering sum over levels at criticality; no significant upward trend expected.",
        category=SuiteCategory.CONNECTIVITY,
        function_name="h_statistic_suite",
        defaults={"replicates": 1000, "levels": 12, "d": 2, "options": {"anchor_level": 6, "fit_from": 6}},
    ),
    "ball-hitting": Suite(
        id="ball-hitting",
        name="Ball hitting rates",
        description="P(support meets B(y, r)) at two radii: log rate at criticality, power rate below it.",
        category=SuiteCategory.CONNECTIVITY,
        function_name="ball_hitting",
        defaults={
            "replicates": 10_000,
            "cases": [CRITICAL_2D, SUBCRITICAL_3D],
            "options": {"radius": 0.25, "tolerance": 0.25, "covering_replicates": 500},
        },
    ),
    # -------------------------------------------------------------------------
    # GENEALOGY
    # -------------------------------------------------------------------------
    "gamma-supermartingale": Suite(
        id="gamma-supermartingale",
        name="Gamma pair supermartingale",
        description="Drift and absorption of the l-neighbour pair count M_n.",
        category=SuiteCategory.GENEALOGY,
        function_name="gamma_supermartingale",
        defaults={
            "replicates": 10_000,
            "d": 3,
            "options": {
                "ells": [0, 1, 2],
                "n_max": 40,
                "max_k": 20,
                "absorption_target": 0.99,
                "allow_supercritical_candidates": True,
            },
        },
    ),
    "spine": Suite(
        id="spine",
        name="Spine immigration chain",
        description="Stationary mean of the excess count, E_m frequencies and spine offspring law.",
        category=SuiteCategory.GENEALOGY,
        function_name="spine",
        defaults={
            "replicates": 10_000,
            "d": 3,
            "options": {
                "long_run": 100_000,
                "event_generations": [5, 10, 20],
                "transience_d": 2,
                "transience_steps": 10_000,
                "transience_replicates": 20,
                "tolerance": 0.1,
            },
        },
    ),
    # -------------------------------------------------------------------------
    # SBM
    # -------------------------------------------------------------------------
    "sbm-validate": Suite(
        id="sbm-validate",
        name="Super-Brownian bridge",
        description="Q_k marginals and exchangeability, branch times, offspring law and free-run positions.",
        category=SuiteCategory.SBM,
        function_name="sbm_validate",
        defaults={
            "replicates": 400,
            "d": 2,
            "options": {
                "mu": 4.0,
                "samples": 10_000,
                "ks": [1, 2, 5],
                "free_mu": 1.5,
                "generations": 20,
            },
        },
    ),
}


class SuiteRegistry:
    """
    Registry for looking up suites.

    Provides methods to:
    - resolve a typed name (aliases, partial names) to a suite id
    - list suites, optionally by category
    """

    def __init__(self):
        self._suites = SUITES.copy()

    def get_all_suites(self) -> List[Suite]:
        return list(self._suites.values())

    def get_suites_by_category(self, category: SuiteCategory) -> List[Suite]:
        return [s for s in self._suites.values() if s.category == category]

    def ids(self) -> List[str]:
        return list(self._suites)

    def resolve(self, name: str) -> Suite:
        """Suite for a user-typed name; unknown names raise ConfigError with suggestions."""
        suite_id = normalize_experiment(name, self._suites)
        if suite_id is None:
            hints = suggest(name, self._suites)
            hint = f" Did you mean: {', '.join(hints)}?" if hints else ""
            raise ConfigError(f"unknown experiment '{name}'.{hint}", {"known": self.ids()})
        return self._suites[suite_id]


registry = SuiteRegistry()


def get_registry() -> SuiteRegistry:
    """Get the global suite registry instance."""
    return registry
