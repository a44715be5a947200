"""Global log analyzer: per-run reports and cross-run comparison tables."""

from .compare import ComparisonTable, compare
from .report import Report, analyze, analyze_repeat, breakdown, load_report, pair_durations, write_report

__all__ = [
    "ComparisonTable", "Report", "analyze", "analyze_repeat", "breakdown", "compare", "load_report",
    "pair_durations", "write_report",
]
