"""Simulation and analysis of fractal percolation on n x m rectangle subdivisions."""

from .analytic import (
    AnalyticReport,
    analytic_report,
    crossing_upper_bound,
    dimensions,
    exact_level1_crossing,
    extinction_prob,
    full_row_prob,
    jfull_limit,
    jfull_map,
    tau_lower_bound,
)
from .carpet import GridParams, RectAddr, Realization, force_prefix, generate, rect_uniform, survives
from .connectivity import (
    Adjacency,
    ComponentCensus,
    Direction,
    Layout,
    census,
    crossing,
    crossing_domain,
    label_components,
)
from .errors import CapExceededError, DomainError, ParseError, UnsupportedError
from .estimator import (
    CriticalBracket,
    CrossingEstimate,
    SweepResult,
    compare_hv,
    estimate_crossing,
    estimate_survival,
    find_critical,
    sweep,
)

__version__ = "0.1.0"
