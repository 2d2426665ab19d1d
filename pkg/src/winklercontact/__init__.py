"""Unilateral contact of elastic bodies through nonlinear Winkler covers.

Plane-strain P1 finite elements, a parallel Robin-Robin domain
decomposition solver and a monolithic semismooth Newton reference solver.
"""
from .contact import ACTIVE_SET, FULL_ROBIN, NEUMANN, STRATEGIES
from .dd_solver import (
    CONVERGED,
    DIVERGED,
    MAX_ITERATIONS,
    IterationReport,
    SolverConfig,
    SolverState,
    ddm_solve,
    ddm_step,
    monolithic_newton,
)
from .fem2d import assemble_load, assemble_stiffness, apply_dirichlet, total_energy
from .iteration import abstract_iterate, estimate_theorem3
from .model import (
    Body,
    BodyMesh,
    IsotropicMaterial,
    LoadSpec,
    PairSpec,
    Problem,
    WinklerLaw,
    groove,
    power_law,
)
from .scenario import ScenarioConfig, generate_scenario
from .system import Discretization, discretize

__all__ = [
    "ACTIVE_SET", "FULL_ROBIN", "NEUMANN", "STRATEGIES",
    "CONVERGED", "DIVERGED", "MAX_ITERATIONS",
    "IterationReport", "SolverConfig", "SolverState",
    "ddm_solve", "ddm_step", "monolithic_newton",
    "assemble_load", "assemble_stiffness", "apply_dirichlet", "total_energy",
    "abstract_iterate", "estimate_theorem3",
    "Body", "BodyMesh", "IsotropicMaterial", "LoadSpec", "PairSpec", "Problem",
    "WinklerLaw", "groove", "power_law",
    "ScenarioConfig", "generate_scenario",
    "Discretization", "discretize",
]
