"""Declarative problem description and the solve pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from . import assembly
from .assembly import DirichletBC, WireLink
from .mesh import (
    SIDES,
    Circle,
    Ellipse,
    EmptyRegionError,
    QuadMesh,
    Rect,
    Region,
    RegionPredicate,
    boundary_nodes,
    build_broken_mesh,
    build_rect_mesh,
    build_wire_mesh,
    select_region,
)
from .saddle import SaddleSystem, SingularSystemError, SolverError, assemble_kkt, solve_saddle


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class MeshSpec:
    origin: tuple[float, float]
    size: tuple[float, float]
    nx: int
    ny: int
    broken: bool = False

    def build(self) -> QuadMesh:
        make = build_broken_mesh if self.broken else build_rect_mesh
        return make(self.origin, self.size, self.nx, self.ny)


@dataclass(frozen=True)
class DirichletSide:
    """Prescribed temperature on one side of the rectangle.

    ``profile="parabola"`` gives ``value * 4 t (1 - t)`` with ``t`` the
    normalised position along the side (left to right, bottom to top): zero
    at both vertices and ``value`` at the midpoint.  ``profile="tabulated"``
    interpolates ``values``, sampled uniformly over ``t`` in [0, 1],
    piecewise linearly; ``value`` is then ignored.
    """

    side: str
    value: float = 0.0
    profile: str = "constant"
    values: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise ScenarioError(f"unknown side {self.side!r}")
        if self.profile not in ("constant", "parabola", "tabulated"):
            raise ScenarioError(f"unknown Dirichlet profile {self.profile!r}")
        if not np.isfinite(self.value):
            raise ScenarioError("Dirichlet value must be finite")
        if self.profile == "tabulated":
            if self.values is None or len(self.values) < 2:
                raise ScenarioError("tabulated Dirichlet data needs at least two values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not np.all(np.isfinite(self.values)):
                raise ScenarioError("tabulated Dirichlet values must be finite")
        elif self.values is not None:
            raise ScenarioError(f"'values' only applies to tabulated profiles, not {self.profile!r}")

    def function(self, mesh: QuadMesh):
        if self.profile == "constant":
            return self.value
        (ox, oy), (lx, ly) = mesh.origin, mesh.size
        horizontal = self.side in ("bottom", "top")

        def t(x, y):
            return (x - ox) / lx if horizontal else (y - oy) / ly

        if self.profile == "parabola":
            peak = self.value
            return lambda x, y: peak * 4.0 * t(x, y) * (1.0 - t(x, y))
        samples = np.asarray(self.values)
        grid = np.linspace(0.0, 1.0, len(samples))
        return lambda x, y: np.interp(t(x, y), grid, samples)


# Heat sources -----------------------------------------------------------

@dataclass(frozen=True)
class NoSource:
    def function(self, mesh, kappa):
        return None


@dataclass(frozen=True)
class ConstantSource:
    value: float

    def function(self, mesh, kappa):
        return self.value


@dataclass(frozen=True)
class SineModeSource:
    """Source whose exact solution with zero boundary data is
    ``amplitude * sin(pi s) sin(pi t)`` in normalised coordinates."""

    amplitude: float = 1.0

    def exact(self, mesh):
        (ox, oy), (lx, ly) = mesh.origin, mesh.size
        a = self.amplitude
        return lambda x, y: a * np.sin(np.pi * (x - ox) / lx) * np.sin(np.pi * (y - oy) / ly)

    def function(self, mesh, kappa):
        (lx, ly) = mesh.size
        c = kappa * np.pi**2 * (1.0 / lx**2 + 1.0 / ly**2)
        u = self.exact(mesh)
        return lambda x, y: c * u(x, y)


@dataclass(frozen=True)
class WavySource:
    """``sin(4 pi |x - c|^2 / r^2)`` outside the disc ``|x - c| <= r``, zero inside."""

    center: tuple[float, float]
    radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ScenarioError("wavy source radius must be positive")

    def function(self, mesh, kappa):
        xc, yc = self.center
        r2 = self.radius**2
        a = self.amplitude

        def h(x, y):
            d2 = (x - xc) ** 2 + (y - yc) ** 2
            return np.where(d2 <= r2, 0.0, a * np.sin(4.0 * np.pi * d2 / r2))

        return h


@dataclass(frozen=True)
class TabulatedSource:
    """Nodal source values, interpolated bilinearly."""

    values: tuple[float, ...]

    def function(self, mesh, kappa):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (mesh.n_nodes,):
            raise ScenarioError(f"tabulated source has {vals.size} values, mesh has {mesh.n_nodes} nodes")
        return lambda x, y: mesh.interpolate(vals, np.column_stack([np.ravel(x), np.ravel(y)])).reshape(np.shape(x))


Source = Union[NoSource, ConstantSource, SineModeSource, WavySource, TabulatedSource]


@dataclass(frozen=True)
class Wire:
    kappa: float
    start: RegionPredicate
    end: RegionPredicate
    length: Union[float, str] = "auto"
    n_seg: int = 8
    source: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ScenarioError(f"wire conductivity must be positive, got {self.kappa}")
        if self.length != "auto" and not (np.isfinite(self.length) and self.length > 0):
            raise ScenarioError(f"wire length must be positive or 'auto', got {self.length!r}")
        if int(self.n_seg) != self.n_seg or self.n_seg < 1:
            raise ScenarioError(f"wire segment count must be a positive integer, got {self.n_seg}")


@dataclass(frozen=True)
class FixedAverage:
    region: RegionPredicate
    value: float


@dataclass(frozen=True)
class Scenario:
    """Bulk mesh, material, boundary data, wires and fixed averages.

    When two Dirichlet sides share a corner node the side listed first
    owns it.
    """

    mesh: MeshSpec
    kappa: float
    dirichlet: tuple[DirichletSide, ...] = ()
    source: Source = field(default_factory=NoSource)
    wires: tuple[Wire, ...] = ()
    fixed_averages: tuple[FixedAverage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", tuple(self.dirichlet))
        object.__setattr__(self, "wires", tuple(self.wires))
        object.__setattr__(self, "fixed_averages", tuple(self.fixed_averages))
        if not self.kappa > 0:
            raise ScenarioError(f"bulk conductivity must be positive, got {self.kappa}")
        if not self.dirichlet and not self.fixed_averages:
            raise ScenarioError(
                "scenario needs at least one Dirichlet side or fixed average; "
                "otherwise the bulk temperature is only defined up to a constant"
            )


@dataclass(frozen=True)
class ResolvedRegions:
    wire_regions: list[tuple[Region, Region]]
    average_regions: list[Region]
    wire_lengths: list[float]


def resolve_regions(scenario: Scenario, mesh: QuadMesh) -> ResolvedRegions:
    """Select every region of the scenario, naming the culprit on failure."""
    centers = mesh.element_centers()
    cache: dict = {}

    def pick(pred, what):
        if pred not in cache:
            try:
                cache[pred] = select_region(mesh, pred, centers)
            except EmptyRegionError as exc:
                raise EmptyRegionError(f"{what}: {exc}") from exc
        return cache[pred]

    wire_regions, lengths = [], []
    for k, w in enumerate(scenario.wires):
        a = pick(w.start, f"wire {k} start region")
        b = pick(w.end, f"wire {k} end region")
        wire_regions.append((a, b))
        if w.length == "auto":
            L = float(np.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1]))
            if not L > 0:
                raise ScenarioError(f"wire {k}: region centroids coincide, give an explicit length")
        else:
            L = float(w.length)
        lengths.append(L)
    averages = [pick(fa.region, f"fixed average {i}") for i, fa in enumerate(scenario.fixed_averages)]
    return ResolvedRegions(wire_regions, averages, lengths)


def dirichlet_bcs(scenario: Scenario, mesh: QuadMesh) -> list[DirichletBC]:
    taken = np.zeros(mesh.n_nodes, dtype=bool)
    bcs = []
    for d in scenario.dirichlet:
        nodes = boundary_nodes(mesh, d.side)
        nodes = nodes[~taken[nodes]]
        taken[nodes] = True
        if nodes.size:
            bcs.append(DirichletBC(nodes, d.function(mesh)))
    return bcs


@dataclass(frozen=True, eq=False)
class FieldResult:
    scenario: Scenario
    mesh: QuadMesh
    phi: np.ndarray
    thetas: list[np.ndarray]
    lam: np.ndarray
    regions: ResolvedRegions
    stiffness: sp.csr_matrix
    B: sp.csr_matrix
    g: np.ndarray
    diagnostics: dict
    system: Optional[SaddleSystem] = None

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.phi, *self.thetas])

    @property
    def wire_lambdas(self) -> np.ndarray:
        """Multipliers of the wire ends, shape ``(n_wires, 2)``."""
        nw = len(self.thetas)
        return self.lam[: 2 * nw].reshape(nw, 2)

    @property
    def average_lambdas(self) -> np.ndarray:
        return self.lam[2 * len(self.thetas):]

    def wire_end_averages(self) -> np.ndarray:
        """Region averages at both ends of every wire, shape ``(n_wires, 2)``."""
        return np.array([[region_average(self, a), region_average(self, b)] for a, b in self.regions.wire_regions]).reshape(-1, 2)

    def interpolate(self, points) -> np.ndarray:
        return self.mesh.interpolate(self.phi, points)

    def element_center_values(self) -> np.ndarray:
        return self.phi[self.mesh.elements].mean(axis=1)

    @property
    def energy(self) -> float:
        return dirichlet_energy(self)


def check_scenario(scenario: Scenario) -> ResolvedRegions:
    """Mesh-dependent checks without solving: non-empty regions, disjoint wire ends."""
    mesh = scenario.mesh.build()
    regions = resolve_regions(scenario, mesh)
    links, offset = [], mesh.n_nodes
    for k, (w, (ra, rb)) in enumerate(zip(scenario.wires, regions.wire_regions)):
        links.append(WireLink(ra, rb, offset, w.n_seg + 1, f"wire {k}"))
        offset += w.n_seg + 1
    try:
        assembly.build_constraints(mesh, links)
    except assembly.AssemblyError as exc:
        raise ScenarioError(str(exc)) from exc
    return regions


def run(scenario: Scenario, tol: float = 1e-10, method: str = "auto") -> FieldResult:
    mesh = scenario.mesh.build()
    regions = resolve_regions(scenario, mesh)

    A_bulk = assembly.assemble_bulk(mesh, scenario.kappa)
    f_bulk = assembly.assemble_load(mesh, scenario.source.function(mesh, scenario.kappa))

    coo = A_bulk.tocoo()
    trip = [(coo.row, coo.col, coo.data)]
    loads, links = [f_bulk], []
    offset = mesh.n_nodes
    for k, (w, (ra, rb), L) in enumerate(zip(scenario.wires, regions.wire_regions, regions.wire_lengths)):
        wm = build_wire_mesh(L, w.n_seg)
        trip.append(assembly.wire_triplets(wm, w.kappa, offset))
        loads.append(assembly.wire_load(wm, w.source if w.source else None))
        links.append(WireLink(ra, rb, offset, wm.n_nodes, f"wire {k}"))
        offset += wm.n_nodes
    n = offset
    rows, cols, vals = (np.concatenate(t) for t in zip(*trip))
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    f = np.concatenate(loads)

    fixed = [(reg, fa.value) for reg, fa in zip(regions.average_regions, scenario.fixed_averages)]
    try:
        rows = assembly.build_constraints(mesh, links, fixed)
    except assembly.AssemblyError as exc:
        raise ScenarioError(str(exc)) from exc
    B, g = assembly.constraint_matrix(rows, n)

    reduced = assembly.apply_dirichlet(A, f, dirichlet_bcs(scenario, mesh), mesh.nodes, B, g)
    system = assemble_kkt(reduced.A, reduced.B, reduced.f, reduced.g)
    try:
        sol = solve_saddle(system, tol=tol, method=method)
    except SingularSystemError as exc:
        raise SingularSystemError(_explain(exc, rows, reduced.free, links, mesh.n_nodes), exc.kind, exc.indices) from exc
    except SolverError as exc:
        raise SolverError(f"scenario solve failed: {exc}") from exc

    u = reduced.expand(sol.u)
    phi = u[: mesh.n_nodes]
    thetas = [u[lk.offset: lk.offset + lk.n_nodes] for lk in links]
    diagnostics = {
        "residual_primal": sol.residual_primal,
        "residual_constraint": sol.residual_constraint,
        "constraint_violation": float(np.abs(B @ u - g).max(initial=0.0)),
        "method": sol.method,
        "n_unknowns": int(system.n),
        "n_constraints": int(system.m),
    }
    return FieldResult(scenario, mesh, phi, thetas, sol.lam, regions, A_bulk, B, g, diagnostics, system)


def _explain(exc: SingularSystemError, rows, free, links, n_bulk) -> str:
    if exc.kind == "rank_deficient_constraints":
        names = [rows[i].label for i in exc.indices[:5]]
        return f"{exc} (constraints: {', '.join(names)})"
    first = int(free[exc.indices[0]]) if exc.indices else -1
    for lk in links:
        if lk.offset <= first < lk.offset + lk.n_nodes:
            return f"{exc} (unknowns belong to {lk.label})"
    if 0 <= first < n_bulk:
        return f"{exc} (unknowns belong to the bulk mesh)"
    return str(exc)


def region_average(result: FieldResult, region: Region | RegionPredicate) -> float:
    if not isinstance(region, Region):
        region = select_region(result.mesh, region)
    return float((assembly.average_row(result.mesh, region) @ result.phi)[0])


def dirichlet_energy(result: FieldResult) -> float:
    """``1/2 phi^T A phi`` with the bulk stiffness before boundary elimination."""
    phi = result.phi
    return max(0.0, 0.5 * float(phi @ (result.stiffness @ phi)))


def rmse(values, reference_values) -> float:
    a = np.asarray(values, dtype=float)
    b = np.asarray(reference_values, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"mismatched point sets: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def rmse_vs_reference(result: FieldResult, reference: FieldResult, points=None) -> float:
    """Root-mean-square difference at ``points`` (default: element centers of ``result``)."""
    if points is None:
        points = result.mesh.element_centers()
        values = result.element_center_values()
    else:
        values = result.interpolate(points)
    return rmse(values, reference.interpolate(points))


__all__ = [
    "Circle",
    "ConstantSource",
    "DirichletSide",
    "Ellipse",
    "FieldResult",
    "FixedAverage",
    "MeshSpec",
    "NoSource",
    "Rect",
    "Scenario",
    "ScenarioError",
    "SineModeSource",
    "TabulatedSource",
    "WavySource",
    "Wire",
    "check_scenario",
    "dirichlet_energy",
    "region_average",
    "rmse",
    "rmse_vs_reference",
    "run",
]
