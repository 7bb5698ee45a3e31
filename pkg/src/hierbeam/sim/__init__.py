"""Simulation and exact truncated-chain oracles."""
from .ctmc import CtmcSolution, lattice, solve_to_tolerance, solve_truncated_ctmc
from .engine import (BusyMomentEstimate, FlowSizes, SimConfig, SimEstimate, estimate_busy_moments,
                     simulate_elastic, simulate_streaming, simulated_busy_stats)

__all__ = ["CtmcSolution", "lattice", "solve_to_tolerance", "solve_truncated_ctmc", "BusyMomentEstimate",
           "FlowSizes", "SimConfig", "SimEstimate", "estimate_busy_moments", "simulate_elastic",
           "simulate_streaming", "simulated_busy_stats"]
