"""
Name Normalization Utilities

Maps the many ways people type experiment names, adjacency modes and law
kinds onto the canonical identifiers used internally.
Handles case, separators ("-", "_", " "), short forms and typos.
"""
import difflib
from typing import Dict, Iterable, List, Optional


# =============================================================================
# ADJACENCY MODES
# =============================================================================

ADJACENCY_MODES = {
    "face": ["face", "faces", "nn", "nearest", "von neumann"],
    "paper_l": ["paperl", "paper_l", "l", "ld", "l^d", "lattice"],
    "closed_cube": ["closedcube", "closed_cube", "cube", "corner", "moore", "closed"],
}


def _build_aliases(table: Dict[str, List[str]]) -> Dict[str, str]:
    aliases = {}
    for canonical, variants in table.items():
        aliases[_squash(canonical)] = canonical
        for v in variants:
            aliases[_squash(v)] = canonical
    return aliases


def _squash(name: str) -> str:
    """Lowercase and drop separators: 'Closed-Cube' -> 'closedcube'."""
    return "".join(ch for ch in name.strip().lower() if ch not in "-_ ")


ADJACENCY_ALIASES = _build_aliases(ADJACENCY_MODES)


# =============================================================================
# OFFSPRING LAW KINDS
# =============================================================================

LAW_KINDS = {
    "poisson": ["poi", "pois"],
    "geometric": ["geom", "geo", "geometricmean", "geometric_mean"],
    "binomial": ["binom", "bin"],
    "deterministic": ["det", "const", "constant", "fixed"],
    "table": ["finitetable", "finite_table", "finite", "pmf"],
}

LAW_KIND_ALIASES = _build_aliases(LAW_KINDS)


# =============================================================================
# NORMALIZATION FUNCTIONS
# =============================================================================

def normalize_adjacency(mode: str) -> Optional[str]:
    """
    Convert any adjacency reference to 'face', 'paper_l' or 'closed_cube'.

    Examples:
        normalize_adjacency("paperl") -> "paper_l"
        normalize_adjacency("Closed-Cube") -> "closed_cube"
    """
    if not mode:
        return None
    return ADJACENCY_ALIASES.get(_squash(mode))


def normalize_law_kind(kind: str) -> Optional[str]:
    """Convert a law kind alias ('geom', 'det', ...) to its canonical name."""
    if not kind:
        return None
    return LAW_KIND_ALIASES.get(_squash(kind))


def normalize_experiment(name: str, known: Iterable[str]) -> Optional[str]:
    """
    Match an experiment name against the known ids.

    Exact and separator-insensitive matches win; otherwise a unique
    substring match is accepted (e.g. "gamma" -> "gamma-supermartingale").
    """
    if not name:
        return None
    known = list(known)
    by_squash = {_squash(k): k for k in known}
    key = _squash(name)
    if key in by_squash:
        return by_squash[key]
    partial = [k for s, k in by_squash.items() if key and key in s]
    if len(partial) == 1:
        return partial[0]
    return None


def suggest(name: str, known: Iterable[str], limit: int = 3) -> List[str]:
    """Closest known names for an error message."""
    known = list(known)
    squashed = {_squash(k): k for k in known}
    hits = difflib.get_close_matches(_squash(name or ""), list(squashed), n=limit, cutoff=0.5)
    return [squashed[h] for h in hits]


if __name__ == "__main__":
    print(normalize_adjacency("closed-cube"))
    print(normalize_law_kind("Geom"))
    print(suggest("survivl", ["survival", "spine", "hitting"]))
