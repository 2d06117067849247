"""Structured quadrilateral meshes, wire meshes and element regions.

Node numbering of :func:`build_rect_mesh` is lexicographic with x running
fastest: node ``(i, j)`` has index ``j * (nx + 1) + i``.  Element ``(i, j)``
has index ``j * nx + i`` and corners ordered counter-clockwise starting at
the lower-left node.  Golden files depend on this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

SIDES = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    pass


class EmptyRegionError(MeshError):
    """No element center satisfies the region predicate."""


@dataclass(frozen=True, eq=False)
class QuadMesh:
    nodes: np.ndarray
    elements: np.ndarray
    origin: tuple[float, float]
    size: tuple[float, float]
    nx: int
    ny: int
    broken: bool = False

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def area(self) -> float:
        return self.size[0] * self.size[1]

    def element_coords(self) -> np.ndarray:
        """Corner coordinates, shape ``(n_elements, 4, 2)``."""
        return self.nodes[self.elements]

    def element_areas(self) -> np.ndarray:
        xy = self.element_coords()
        x, y = xy[..., 0], xy[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    def element_centers(self) -> np.ndarray:
        return self.element_coords().mean(axis=1)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Element index and reference coordinates in [-1, 1]^2 of each point.

        Points on the outer boundary are attributed to the adjacent element;
        points outside the rectangle raise.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ox, oy = self.origin
        hx, hy = self.size[0] / self.nx, self.size[1] / self.ny
        sx = (pts[:, 0] - ox) / hx
        sy = (pts[:, 1] - oy) / hy
        tol = 1e-10
        if np.any((sx < -tol) | (sx > self.nx + tol) | (sy < -tol) | (sy > self.ny + tol)):
            raise MeshError("point outside the mesh rectangle")
        i = np.clip(np.floor(sx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor(sy).astype(int), 0, self.ny - 1)
        xi = 2.0 * (sx - i) - 1.0
        eta = 2.0 * (sy - j) - 1.0
        return j * self.nx + i, np.column_stack([xi, eta])

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the bilinear interpolant of nodal ``values`` at ``points``."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_nodes,):
            raise MeshError(f"expected {self.n_nodes} nodal values, got shape {values.shape}")
        elem, ref = self.locate(points)
        shape = q1_shape(ref[:, 0], ref[:, 1])
        return np.sum(shape * values[self.elements[elem]], axis=1)


def q1_shape(xi, eta) -> np.ndarray:
    """Bilinear shape functions on the reference square, last axis = node."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return 0.25 * np.stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)],
        axis=-1,
    )


def _check_rect_args(size, nx, ny):
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"element counts must be positive integers, got nx={nx}, ny={ny}")
    if not (np.isfinite(size[0]) and np.isfinite(size[1])) or size[0] <= 0 or size[1] <= 0:
        raise MeshError(f"mesh size must be positive, got {tuple(size)}")


def build_rect_mesh(origin, size, nx: int, ny: int) -> QuadMesh:
    """Structured ``nx`` x ``ny`` mesh of the rectangle ``origin + [0, size]``."""
    _check_rect_args(size, nx, ny)
    nx, ny = int(nx), int(ny)
    ox, oy = float(origin[0]), float(origin[1])
    lx, ly = float(size[0]), float(size[1])
    xs = ox + lx * np.arange(nx + 1) / nx
    ys = oy + ly * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return QuadMesh(nodes, elements, (ox, oy), (lx, ly), nx, ny, broken=False)


def build_broken_mesh(origin, size, nx: int, ny: int) -> QuadMesh:
    """Like :func:`build_rect_mesh` but every element owns four private nodes.

    Node ``4 * e + k`` is corner ``k`` of element ``e``; no two elements
    share a node, so each element is an independent one-element body.
    """
    base = build_rect_mesh(origin, size, nx, ny)
    nodes = base.nodes[base.elements].reshape(-1, 2)
    elements = np.arange(4 * base.n_elements).reshape(-1, 4)
    return QuadMesh(nodes, elements, base.origin, base.size, base.nx, base.ny, broken=True)


def boundary_nodes(mesh: QuadMesh, side: str) -> np.ndarray:
    """Sorted indices of the nodes lying on one side of the mesh rectangle."""
    if side not in SIDES:
        raise MeshError(f"unknown side {side!r}; expected one of {SIDES}")
    ox, oy = mesh.origin
    lx, ly = mesh.size
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    if side == "bottom":
        on = np.abs(y - oy) <= 1e-12 * ly
    elif side == "top":
        on = np.abs(y - (oy + ly)) <= 1e-12 * ly
    elif side == "left":
        on = np.abs(x - ox) <= 1e-12 * lx
    else:
        on = np.abs(x - (ox + lx)) <= 1e-12 * lx
    return np.flatnonzero(on)


@dataclass(frozen=True, eq=False)
class WireMesh:
    length: float
    n_seg: int
    nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_seg + 1


def build_wire_mesh(length: float, n_seg: int) -> WireMesh:
    if not np.isfinite(length) or length <= 0:
        raise MeshError(f"wire length must be positive, got {length}")
    if int(n_seg) != n_seg or n_seg < 1:
        raise MeshError(f"wire segment count must be a positive integer, got {n_seg}")
    n_seg = int(n_seg)
    x = length * np.arange(n_seg + 1) / n_seg
    x[-1] = length
    return WireMesh(float(length), n_seg, x)


# Region predicates.  Membership is decided on element centers only.

@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise MeshError(f"circle radius must be positive, got {self.radius}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) <= self.radius**2


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]

    def __post_init__(self):
        if not (self.semi_axes[0] > 0 and self.semi_axes[1] > 0):
            raise MeshError(f"ellipse semi-axes must be positive, got {self.semi_axes}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = (pts - np.asarray(self.center)) / np.asarray(self.semi_axes)
        return np.einsum("ij,ij->i", d, d) <= 1.0


@dataclass(frozen=True)
class Rect:
    min_corner: tuple[float, float]
    max_corner: tuple[float, float]

    def __post_init__(self):
        if not (self.max_corner[0] > self.min_corner[0] and self.max_corner[1] > self.min_corner[1]):
            raise MeshError(f"rect extents must be positive, got {self.min_corner} -> {self.max_corner}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.min_corner), np.asarray(self.max_corner)
        return np.all((pts >= lo) & (pts <= hi), axis=1)


RegionPredicate = Union[Circle, Ellipse, Rect]


@dataclass(frozen=True, eq=False)
class Region:
    elements: np.ndarray
    measure: float
    centroid: tuple[float, float] = field(default=(0.0, 0.0))

    def __len__(self):
        return len(self.elements)

    def key(self) -> bytes:
        return self.elements.tobytes()


def region_from_elements(mesh: QuadMesh, elements) -> Region:
    elements = np.unique(np.asarray(elements, dtype=np.int64))
    if elements.size == 0:
        raise EmptyRegionError("region has no elements")
    xy = mesh.nodes[mesh.elements[elements]]
    x, y = xy[..., 0], xy[..., 1]
    areas = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    measure = float(areas.sum())
    if not measure > 0:
        raise MeshError("region has zero measure")
    c = (areas[:, None] * xy.mean(axis=1)).sum(axis=0) / measure
    return Region(elements, measure, (float(c[0]), float(c[1])))


def select_region(mesh: QuadMesh, pred: RegionPredicate, centers: np.ndarray | None = None) -> Region:
    """All elements whose center satisfies ``pred``.

    ``centers`` may be passed to avoid recomputing element centers when many
    regions are selected on the same mesh.
    """
    if centers is None:
        centers = mesh.element_centers()
    hit = np.flatnonzero(pred.contains(centers))
    if hit.size == 0:
        raise EmptyRegionError(f"no element center falls inside {pred}")
    return region_from_elements(mesh, hit)
