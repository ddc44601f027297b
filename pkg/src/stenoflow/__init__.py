"""Extended 1D (A, Q) blood-flow model for stenotic arteries, solved by DG."""
from .dg import BoundarySpec, DGSolver, Mesh1D, SolutionRecord, SolverConfig, StateField, project_initial
from .geometry import VesselGeometry, make_stenosis_profile, straight_vessel, tabulated_profile
from .model import C0Variant, Correction, PhysicalParams

__all__ = [
    "BoundarySpec",
    "C0Variant",
    "Correction",
    "DGSolver",
    "Mesh1D",
    "PhysicalParams",
    "SolutionRecord",
    "SolverConfig",
    "StateField",
    "VesselGeometry",
    "make_stenosis_profile",
    "project_initial",
    "straight_vessel",
    "tabulated_profile",
]
