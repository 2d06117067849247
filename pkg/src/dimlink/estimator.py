"""scikit-learn style front ends.

:class:`AverageFieldInference` treats region averages as training data:
``X`` holds axis-aligned boxes ``[xmin, ymin, xmax, ymax]`` and ``y`` the
known mean temperature in each box.  Fitting finds the minimum-energy field
that honours the boundary data and every average; ``predict`` returns the
field's mean over new boxes, so ``score`` is the usual R^2 on held-out
regions.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .mesh import Rect, select_region
from .scenario import (
    DirichletSide,
    FixedAverage,
    MeshSpec,
    NoSource,
    Scenario,
    region_average,
    run,
)


def _boxes(X) -> list[Rect]:
    if X.shape[1] != 4:
        raise ValueError(f"expected boxes with 4 columns [xmin, ymin, xmax, ymax], got {X.shape[1]}")
    return [Rect((float(a), float(b)), (float(c), float(d))) for a, b, c, d in X]


class AverageFieldInference(RegressorMixin, BaseEstimator):
    """Minimum Dirichlet-energy field from partial boundary data and box averages.

    Parameters
    ----------
    origin, size : pair of float
        Lower-left corner and extent of the rectangular domain.
    nx, ny : int
        Elements per direction of the bilinear mesh.
    kappa : float
        Conductivity.  Scales the energy and multipliers, not the field.
    dirichlet : sequence of DirichletSide
        Known boundary temperatures.  May be empty if at least one average
        is supplied.
    source : source object or None
        Known heat supply; ``None`` means no supply.
    tol : float
        Relative residual tolerance of the saddle-point solve.
    method : {"auto", "direct", "minres"}
        Linear solver.
    """

    def __init__(self, origin=(0.0, 0.0), size=(1.0, 1.0), nx=32, ny=32, kappa=1.0,
                 dirichlet=(), source=None, tol=1e-10, method="auto"):
        self.origin = origin
        self.size = size
        self.nx = nx
        self.ny = ny
        self.kappa = kappa
        self.dirichlet = dirichlet
        self.source = source
        self.tol = tol
        self.method = method

    def _scenario(self, boxes, y) -> Scenario:
        sides = tuple(d if isinstance(d, DirichletSide) else DirichletSide(**d) for d in self.dirichlet)
        return Scenario(
            mesh=MeshSpec(tuple(self.origin), tuple(self.size), self.nx, self.ny),
            kappa=self.kappa,
            dirichlet=sides,
            source=self.source if self.source is not None else NoSource(),
            fixed_averages=tuple(FixedAverage(b, float(v)) for b, v in zip(boxes, y)),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.scenario_ = self._scenario(_boxes(X), y)
        self.result_ = run(self.scenario_, tol=self.tol, method=self.method)
        self.energy_ = self.result_.energy
        self.multipliers_ = self.result_.average_lambdas
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X)
        mesh = self.result_.mesh
        centers = mesh.element_centers()
        return np.array([region_average(self.result_, select_region(mesh, b, centers)) for b in _boxes(X)])

    def field_at(self, points):
        """Temperature of the fitted field at ``points`` of shape ``(n, 2)``."""
        check_is_fitted(self, "result_")
        return self.result_.interpolate(check_array(points))


class ScenarioSolver(BaseEstimator):
    """Solve a full :class:`Scenario` and evaluate the bulk field at points."""

    def __init__(self, tol=1e-10, method="auto"):
        self.tol = tol
        self.method = method

    def fit(self, scenario, y=None):
        self.result_ = run(scenario, tol=self.tol, method=self.method)
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.result_.interpolate(check_array(X))
