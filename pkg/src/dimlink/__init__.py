"""Mixed-dimensional diffusion: 2D Poisson fields linked to 1D wires through region averages."""
from .estimator import AverageFieldInference, ScenarioSolver
from .mesh import Circle, Ellipse, Rect, build_rect_mesh, build_wire_mesh, select_region
from .scenario import (
    DirichletSide,
    FieldResult,
    FixedAverage,
    MeshSpec,
    Scenario,
    Wire,
    dirichlet_energy,
    region_average,
    rmse_vs_reference,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "AverageFieldInference",
    "Circle",
    "DirichletSide",
    "Ellipse",
    "FieldResult",
    "FixedAverage",
    "MeshSpec",
    "Rect",
    "Scenario",
    "ScenarioSolver",
    "Wire",
    "build_rect_mesh",
    "build_wire_mesh",
    "dirichlet_energy",
    "region_average",
    "rmse_vs_reference",
    "run",
    "select_region",
]
