# Deterministic analysis over simulator output
from .gw_exact import asymptotic_report, hitting_curve, survival_curve
from .statistics import wilson_interval

__all__ = ["asymptotic_report", "hitting_curve", "survival_curve", "wilson_interval"]
