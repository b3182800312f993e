"""Knowledge-grounded dialogue engine with topic selection and evaluation statistics."""

from ._core import (
    Engine,
    KgdialogError,
    ParseError,
    Session,
    StatsError,
    TransportError,
    ValidationError,
    compare_groups,
    compile_kb,
    cronbach_alpha,
    invert_likert,
    mann_whitney_u,
    mann_whitney_u_critical,
    moments_normality,
    pad_to_min_tokens,
    pearson_r,
    sassi_scores,
    tree_dump,
    welch_t,
)

__all__ = [
    "Engine",
    "KgdialogError",
    "ParseError",
    "Session",
    "StatsError",
    "TransportError",
    "ValidationError",
    "compare_groups",
    "compile_kb",
    "cronbach_alpha",
    "invert_likert",
    "mann_whitney_u",
    "mann_whitney_u_critical",
    "moments_normality",
    "pad_to_min_tokens",
    "pearson_r",
    "sassi_scores",
    "tree_dump",
    "welch_t",
]
