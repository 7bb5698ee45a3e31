"""Scheduling and flow-level performance of hierarchical beam codebooks."""
from .alloc import AllocationResult, alpha_fair, draw_activation, mt_closed_form, pf_closed_form
from .codebook import CodebookTree, FlowPopulation, GainModel, Region, associate, load_codebook, validate_tree
from .elastic import (BusyPeriodStats, PerformanceReport, TrafficModel, critical_load_factor, mt_line_performance,
                      mt_saturation_factor, mt_tree_performance, mt_void_and_busy, pf_performance,
                      pf_stationary_prob, stability_check)
from .errors import ConfigError, HierBeamError, ModelError
from .streaming import BlockingReport, StreamingModel, blocking_enumeration, blocking_probabilities

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "alpha_fair", "draw_activation", "mt_closed_form", "pf_closed_form",
    "CodebookTree", "FlowPopulation", "GainModel", "Region", "associate", "load_codebook", "validate_tree",
    "BusyPeriodStats", "PerformanceReport", "TrafficModel", "critical_load_factor", "mt_line_performance",
    "mt_saturation_factor", "mt_tree_performance", "mt_void_and_busy", "pf_performance", "pf_stationary_prob",
    "stability_check", "ConfigError", "HierBeamError", "ModelError", "BlockingReport", "StreamingModel",
    "blocking_enumeration", "blocking_probabilities",
]
