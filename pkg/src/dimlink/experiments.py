"""Drivers for the three linked-diffusion studies and the manufactured-solution check.

* ``dissimilar_regions``: circle and ellipse in a 2x2 block joined by one
  highly conductive wire, solved on a sequence of meshes.
* ``region_grid``: unit square cut into N x N independent one-element bodies
  coupled to their neighbours by wires, compared against a monolithic
  finite element solution.
* ``inference``: minimum-energy reconstruction of a field on a 2x1 block
  from left-edge data plus a growing random set of region averages.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import AverageFieldInference
from .mesh import Circle, Ellipse, EmptyRegionError, Rect, boundary_nodes, q1_shape
from .scenario import (
    DirichletSide,
    FieldResult,
    MeshSpec,
    Scenario,
    SineModeSource,
    WavySource,
    Wire,
    region_average,
    rmse_vs_reference,
    run,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20230901
DISSIMILAR_RESOLUTIONS = (8, 16, 32, 64, 128, 256)
GRID_SIZES = (2, 4, 8, 16, 32, 64)
GRID_PEAKS = {"bottom": 100.0, "right": 200.0, "top": 300.0, "left": 400.0}


@dataclass
class ConvergenceTable:
    name: str
    rows: list[tuple[int, str, float]] = field(default_factory=list)

    def add(self, resolution: int, quantity: str, value: float):
        self.rows.append((int(resolution), quantity, float(value)))

    def column(self, quantity: str) -> tuple[np.ndarray, np.ndarray]:
        sel = sorted((r, v) for r, q, v in self.rows if q == quantity)
        return np.array([r for r, _ in sel], dtype=int), np.array([v for _, v in sel])

    def value(self, resolution: int, quantity: str) -> float:
        for r, q, v in self.rows:
            if r == resolution and q == quantity:
                return v
        raise KeyError((resolution, quantity))

    def sorted_rows(self) -> list[tuple[int, str, float]]:
        order = {q: i for i, q in enumerate(dict.fromkeys(q for _, q, _ in self.rows))}
        return sorted(self.rows, key=lambda row: (row[0], order[row[1]]))


@dataclass
class InferenceSequence:
    seed: int
    order: list[int]
    energies: list[float]
    errors: list[float]
    reference_energy: float

    def rows(self) -> list[tuple[int, str, float]]:
        out = []
        for k, (reg, e, eps) in enumerate(zip(self.order, self.energies, self.errors), start=1):
            out += [(k, "region", float(reg)), (k, "energy", e), (k, "energy_error", eps)]
        return out


def log_slope(n, err) -> float:
    """Least-squares slope of ``log(err)`` against ``log(1/n)``."""
    return float(np.polyfit(np.log(1.0 / np.asarray(n, float)), np.log(np.asarray(err, float)), 1)[0])


# Dissimilar regions ---------------------------------------------------------

def dissimilar_regions_scenario(resolution: int, kappa=100.0, kappa_bar=1e4, n_seg=8, length="auto") -> Scenario:
    wire = Wire(
        kappa=kappa_bar,
        start=Circle((-0.625, -0.5625), 0.5),
        end=Ellipse((0.375, 0.4375), (0.175, 0.3)),
        length=length,
        n_seg=n_seg,
    )
    return Scenario(
        mesh=MeshSpec((-1.0, -1.0), (2.0, 2.0), resolution, resolution),
        kappa=kappa,
        dirichlet=(DirichletSide("top", 500.0), DirichletSide("bottom", 300.0)),
        wires=(wire,),
    )


def run_dissimilar_regions(resolutions=DISSIMILAR_RESOLUTIONS, kappa_bar=1e4, tol=1e-10, results=None) -> ConvergenceTable:
    """Region averages, multipliers and wire end temperatures per mesh.

    A mesh too coarse to place an element center inside a region yields a
    single ``skipped`` row.  Pass a dict as ``results`` to collect the
    :class:`FieldResult` objects by resolution.
    """
    table = ConvergenceTable("example1")
    for res in sorted(set(int(r) for r in resolutions)):
        try:
            r = run(dissimilar_regions_scenario(res, kappa_bar=kappa_bar), tol=tol)
        except EmptyRegionError as exc:
            logger.warning("resolution %d skipped: %s", res, exc)
            table.add(res, "skipped", 1.0)
            continue
        if results is not None:
            results[res] = r
        (a1, a2), (l1, l2) = r.wire_end_averages()[0], r.wire_lambdas[0]
        th = r.thetas[0]
        table.add(res, "avg_B1", a1)
        table.add(res, "avg_B2", a2)
        table.add(res, "lambda_1", l1)
        table.add(res, "lambda_2", l2)
        table.add(res, "lambda_sum", l1 + l2)
        table.add(res, "theta_0", th[0])
        table.add(res, "theta_L", th[-1])
        table.add(res, "energy", r.energy)
    return table


# Region grid ----------------------------------------------------------------

def grid_dirichlet(peaks=None) -> tuple[DirichletSide, ...]:
    peaks = GRID_PEAKS if peaks is None else peaks
    return tuple(DirichletSide(side, float(peaks[side]), "parabola") for side in ("bottom", "right", "top", "left"))


def region_grid_scenario(n: int, kappa=100.0, peaks=None, n_seg=1) -> Scenario:
    """``n`` x ``n`` independent one-element regions joined by neighbour wires.

    Horizontal wires have conductivity ``kappa * dy`` and vertical ones
    ``kappa * dx``; lengths default to the center distance.
    """
    dx = dy = 1.0 / n

    def box(i, j):
        return Rect((i * dx, j * dy), ((i + 1) * dx, (j + 1) * dy))

    wires = []
    for j in range(n):
        for i in range(n):
            if i + 1 < n:
                wires.append(Wire(kappa * dy, box(i, j), box(i + 1, j), n_seg=n_seg))
            if j + 1 < n:
                wires.append(Wire(kappa * dx, box(i, j), box(i, j + 1), n_seg=n_seg))
    return Scenario(
        mesh=MeshSpec((0.0, 0.0), (1.0, 1.0), n, n, broken=True),
        kappa=kappa,
        dirichlet=grid_dirichlet(peaks),
        wires=tuple(wires),
    )


def reference_solution(scenario: Scenario, resolution, tol=1e-10) -> FieldResult:
    """Monolithic finite element solve of ``scenario`` without wires.

    ``resolution`` is ``nx`` (``ny`` follows the aspect ratio) or a pair.
    """
    if np.ndim(resolution) == 0:
        nx = int(resolution)
        ny = max(1, int(round(nx * scenario.mesh.size[1] / scenario.mesh.size[0])))
    else:
        nx, ny = (int(v) for v in resolution)
    mesh = replace(scenario.mesh, nx=nx, ny=ny, broken=False)
    return run(replace(scenario, mesh=mesh, wires=()), tol=tol)


def run_region_grid(sizes=GRID_SIZES, reference=256, kappa=100.0, peaks=None, tol=1e-10, results=None) -> ConvergenceTable:
    table = ConvergenceTable("example2")
    ref = reference_solution(region_grid_scenario(2, kappa, peaks), reference, tol=tol)
    for n in sorted(set(int(s) for s in sizes)):
        r = run(region_grid_scenario(n, kappa, peaks), tol=tol)
        if results is not None:
            results[n] = r
        table.add(n, "rmse", rmse_vs_reference(r, ref))
    return table


# Inference ------------------------------------------------------------------

def inference_reference_scenario(nx=128, ny=64, kappa=100.0) -> Scenario:
    # the top edge owns the shared corner (0, 1)
    return Scenario(
        mesh=MeshSpec((0.0, 0.0), (2.0, 1.0), nx, ny),
        kappa=kappa,
        dirichlet=(DirichletSide("top", 200.0), DirichletSide("left", 400.0)),
        source=WavySource((1.5, 0.25), 0.25),
    )


def inference_boxes(n_x=8, n_y=8, size=(2.0, 1.0)) -> np.ndarray:
    """Boxes of an ``n_x`` x ``n_y`` grid, row-major from the lower left."""
    hx, hy = size[0] / n_x, size[1] / n_y
    return np.array([[i * hx, j * hy, (i + 1) * hx, (j + 1) * hy] for j in range(n_y) for i in range(n_x)])


def run_inference(seed=DEFAULT_SEED, reference=128, kappa=100.0, tol=1e-10, steps=None) -> InferenceSequence:
    """Add random region averages of the reference one at a time and refit.

    The only boundary data is the reference temperature on the left edge.
    ``order`` holds 1-based region numbers in row-major order.
    """
    ref = reference_solution(inference_reference_scenario(kappa=kappa), reference, tol=tol)
    mesh = ref.mesh
    e_ref = ref.energy

    left = boundary_nodes(mesh, "left")
    left = left[np.argsort(mesh.nodes[left, 1])]
    left_data = DirichletSide("left", profile="tabulated", values=tuple(ref.phi[left]))

    boxes = inference_boxes(size=mesh.size)
    targets = np.array([region_average(ref, Rect(tuple(b[:2]), tuple(b[2:]))) for b in boxes])

    order = np.random.default_rng(seed).permutation(len(boxes))
    if steps is not None:
        order = order[:steps]
    model = AverageFieldInference(
        origin=mesh.origin, size=mesh.size, nx=mesh.nx, ny=mesh.ny, kappa=kappa,
        dirichlet=(left_data,), tol=tol,
    )
    energies, errors = [], []
    for k in range(1, len(order) + 1):
        idx = order[:k]
        model.fit(boxes[idx], targets[idx])
        energies.append(model.energy_)
        errors.append(abs(model.energy_ - e_ref) / e_ref)
    return InferenceSequence(int(seed), [int(i) + 1 for i in order], energies, errors, e_ref)


# Manufactured solution ------------------------------------------------------

def manufactured_scenario(n: int, kappa=100.0) -> Scenario:
    return Scenario(
        mesh=MeshSpec((0.0, 0.0), (1.0, 1.0), n, n),
        kappa=kappa,
        dirichlet=tuple(DirichletSide(s, 0.0) for s in ("bottom", "right", "top", "left")),
        source=SineModeSource(1.0),
    )


def l2_error(result: FieldResult, exact) -> float:
    """``||phi_h - exact||_L2`` with 3x3 Gauss quadrature per element."""
    gp = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
    gw = np.array([5.0, 8.0, 5.0]) / 9.0
    xi, eta = np.meshgrid(gp, gp)
    w = np.outer(gw, gw).ravel()
    N = q1_shape(xi.ravel(), eta.ravel())  # (9, 4)
    coords = result.mesh.element_coords()
    pts = np.einsum("ga,eai->egi", N, coords)
    uh = np.einsum("ga,ea->eg", N, result.phi[result.mesh.elements])
    # rectangles: constant Jacobian
    hx = coords[:, 1, 0] - coords[:, 0, 0]
    hy = coords[:, 3, 1] - coords[:, 0, 1]
    det = (hx * hy / 4.0)[:, None]
    err = (uh - exact(pts[..., 0], pts[..., 1])) ** 2
    return float(np.sqrt(np.sum(err * w * det)))


def run_manufactured(resolutions=(16, 32, 64), kappa=100.0, tol=1e-10) -> ConvergenceTable:
    table = ConvergenceTable("convergence")
    prev = None
    for n in sorted(resolutions):
        sc = manufactured_scenario(n, kappa)
        r = run(sc, tol=tol)
        e = l2_error(r, sc.source.exact(r.mesh))
        table.add(n, "l2_error", e)
        if prev is not None:
            table.add(n, "rate", np.log(prev[1] / e) / np.log(n / prev[0]))
        prev = (n, e)
    return table
