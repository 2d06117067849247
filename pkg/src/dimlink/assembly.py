"""Discrete forms of the linked bulk/wire problem.

Global unknown ordering: bulk nodal values first, then the nodal values of
each wire in declaration order.  Constraint rows follow the convention
``B u = g``; a wire end contributes ``theta_end - mean_B(phi) = 0`` and a
fixed average contributes ``-mean_S(phi) = -theta_bar``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .mesh import QuadMesh, Region, WireMesh, q1_shape

_GP = np.array([-1.0, 1.0]) / np.sqrt(3.0)
# 2x2 Gauss points (xi, eta) and unit weights
GAUSS_2X2 = np.array([[a, b] for b in _GP for a in _GP])


class AssemblyError(ValueError):
    pass


def _q1_gradients(xi, eta) -> np.ndarray:
    """Reference gradients, shape ``(..., 4, 2)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    deta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return np.stack([dxi, deta], axis=-1)


def _jacobians(coords: np.ndarray):
    """Per element and Gauss point: physical gradients and det J."""
    dN = _q1_gradients(GAUSS_2X2[:, 0], GAUSS_2X2[:, 1])  # (4gp, 4, 2)
    # J[e, g] = sum_a x_a (x) dN_a
    J = np.einsum("gak,eai->egik", dN, coords)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        bad = np.unique(np.nonzero(det <= 0)[0])
        raise AssemblyError(f"degenerate or inverted element(s): {bad[:10].tolist()}")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    grads = np.einsum("gak,egki->egai", dN, inv)
    return grads, det


def _stiffness_batch(coords: np.ndarray, kappa: float) -> np.ndarray:
    grads, det = _jacobians(coords)
    K = kappa * np.einsum("egai,egbi,eg->eab", grads, grads, det)
    return 0.5 * (K + K.transpose(0, 2, 1))


def q1_element_stiffness(coords, kappa: float) -> np.ndarray:
    """4x4 stiffness of one bilinear quadrilateral, 2x2 Gauss quadrature."""
    coords = np.asarray(coords, dtype=float).reshape(1, 4, 2)
    return _stiffness_batch(coords, kappa)[0]


def _scatter(elements: np.ndarray, Ke: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(elements, 4, axis=1).ravel()
    cols = np.tile(elements, (1, 4)).ravel()
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_bulk(mesh: QuadMesh, kappa: float) -> sp.csr_matrix:
    Ke = _stiffness_batch(mesh.element_coords(), kappa)
    return _scatter(mesh.elements, Ke, mesh.n_nodes)


def assemble_load(mesh: QuadMesh, f: Callable | float | None) -> np.ndarray:
    """Nodal load ``int N_a f dV``; ``f(x, y)`` must accept arrays."""
    if f is None:
        return np.zeros(mesh.n_nodes)
    coords = mesh.element_coords()
    _, det = _jacobians(coords)
    N = q1_shape(GAUSS_2X2[:, 0], GAUSS_2X2[:, 1])  # (g, a)
    xg = np.einsum("ga,eai->egi", N, coords)
    if callable(f):
        fv = np.asarray(f(xg[..., 0], xg[..., 1]), dtype=float)
        fv = np.broadcast_to(fv, det.shape)
    else:
        fv = np.full(det.shape, float(f))
    fe = np.einsum("ga,eg->ea", N, fv * det)
    return np.bincount(mesh.elements.ravel(), weights=fe.ravel(), minlength=mesh.n_nodes)


def wire_triplets(wmesh: WireMesh, kappa_bar: float, offset: int = 0):
    """COO triplets of the wire stiffness, shifted by ``offset``."""
    k = kappa_bar / np.diff(wmesh.nodes)
    i = np.arange(wmesh.n_seg) + offset
    rows = np.concatenate([i, i + 1, i, i + 1])
    cols = np.concatenate([i, i + 1, i + 1, i])
    return rows, cols, np.concatenate([k, k, -k, -k])


def wire_stiffness(wmesh: WireMesh, kappa_bar: float) -> sp.csr_matrix:
    """Tridiagonal stiffness of linear elements on the wire."""
    r, c, v = wire_triplets(wmesh, kappa_bar)
    n = wmesh.n_nodes
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def wire_load(wmesh: WireMesh, r: Callable | float | None) -> np.ndarray:
    """Nodal load ``int r eta dx`` with two-point Gauss per segment."""
    out = np.zeros(wmesh.n_nodes)
    if r is None:
        return out
    x0, x1 = wmesh.nodes[:-1], wmesh.nodes[1:]
    h = x1 - x0
    for gp in _GP:
        s = 0.5 * (1 + gp)
        rv = r(x0 + s * h) if callable(r) else np.full_like(h, float(r))
        out[:-1] += 0.5 * h * rv * (1 - s)
        out[1:] += 0.5 * h * rv * s
    return out


def region_integrals(mesh: QuadMesh, region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Node indices and ``int_B N_a dV`` for the nodes touched by ``region``."""
    coords = mesh.nodes[mesh.elements[region.elements]]
    _, det = _jacobians(coords)
    N = q1_shape(GAUSS_2X2[:, 0], GAUSS_2X2[:, 1])
    w = np.einsum("ga,eg->ea", N, det)
    nodes = mesh.elements[region.elements].ravel()
    uniq, inv = np.unique(nodes, return_inverse=True)
    return uniq, np.bincount(inv, weights=w.ravel())


def average_row(mesh: QuadMesh, region: Region) -> sp.csr_matrix:
    """Row ``r`` (1 x n_nodes) with ``r @ phi`` the mean of ``phi_h`` over ``region``."""
    if not region.measure > 0:
        raise AssemblyError("cannot average over a zero-measure region")
    idx, w = region_integrals(mesh, region)
    w = w / w.sum()
    return sp.csr_matrix((w, (np.zeros_like(idx), idx)), shape=(1, mesh.n_nodes))


@dataclass(frozen=True, eq=False)
class ConstraintRow:
    indices: np.ndarray
    values: np.ndarray
    rhs: float
    label: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise AssemblyError(f"constraint {self.label!r} has non-finite coefficients")
        if not np.any(self.values != 0):
            raise AssemblyError(f"constraint {self.label!r} has no nonzero coefficient")

    def dense(self, n: int) -> np.ndarray:
        v = np.zeros(n)
        np.add.at(v, self.indices, self.values)
        return v


@dataclass(frozen=True)
class WireLink:
    """Wire whose node 0 sits on ``start`` and node ``n_seg`` on ``end``."""

    start: Region
    end: Region
    offset: int
    n_nodes: int
    label: str = ""


def build_constraints(
    mesh: QuadMesh,
    wires: Sequence[WireLink] = (),
    fixed_averages: Sequence[tuple[Region, float]] = (),
) -> list[ConstraintRow]:
    """Constraint rows for wire ends (two per wire) and fixed averages.

    Distinct wire-linked regions must not overlap; the same region may be
    shared by several wires.
    """
    owner = np.full(mesh.n_elements, -1)
    keys: dict[bytes, int] = {}
    for w in wires:
        if w.start is None or w.end is None:
            raise AssemblyError(f"wire {w.label!r} has an end without a region")
        for reg in (w.start, w.end):
            k = reg.key()
            if k in keys:
                continue
            keys[k] = len(keys)
            taken = owner[reg.elements]
            if np.any(taken >= 0):
                raise AssemblyError(
                    f"wire {w.label!r}: linked regions overlap "
                    f"({int(np.sum(taken >= 0))} shared elements); linked regions must be disjoint"
                )
            owner[reg.elements] = keys[k]
        if w.start.key() == w.end.key():
            raise AssemblyError(f"wire {w.label!r} links a region to itself")

    cache: dict[bytes, sp.csr_matrix] = {}

    def avg(reg):
        k = reg.key()
        if k not in cache:
            cache[k] = average_row(mesh, reg)
        return cache[k]

    rows = []
    for w in wires:
        for end, region in ((0, w.start), (w.n_nodes - 1, w.end)):
            r = avg(region)
            idx = np.concatenate([r.indices, [w.offset + end]])
            val = np.concatenate([-r.data, [1.0]])
            rows.append(ConstraintRow(idx, val, 0.0, f"{w.label}[{'start' if end == 0 else 'end'}]"))
    for i, (region, value) in enumerate(fixed_averages):
        r = avg(region)
        rows.append(ConstraintRow(r.indices.copy(), -r.data, -float(value), f"average[{i}]"))
    return rows


def constraint_matrix(rows: Sequence[ConstraintRow], n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    if not rows:
        return sp.csr_matrix((0, n)), np.zeros(0)
    r = np.concatenate([np.full(len(c.indices), i) for i, c in enumerate(rows)])
    c = np.concatenate([c.indices for c in rows])
    v = np.concatenate([c.values for c in rows])
    B = sp.coo_matrix((v, (r, c)), shape=(len(rows), n)).tocsr()
    return B, np.array([c.rhs for c in rows], dtype=float)


Value = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class DirichletBC:
    nodes: np.ndarray
    value: Value

    def values(self, coords: np.ndarray) -> np.ndarray:
        pts = coords[self.nodes]
        if callable(self.value):
            v = np.asarray(self.value(pts[:, 0], pts[:, 1]), dtype=float)
            v = np.broadcast_to(v, (len(self.nodes),)).copy()
        else:
            v = np.full(len(self.nodes), float(self.value))
        if not np.all(np.isfinite(v)):
            raise AssemblyError("Dirichlet data is not finite on all listed nodes")
        return v


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """System on the free dofs after eliminating Dirichlet nodes."""

    A: sp.csr_matrix
    f: np.ndarray
    B: sp.csr_matrix
    g: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n: int

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.empty(self.n)
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u


def apply_dirichlet(
    A: sp.spmatrix,
    rhs: np.ndarray,
    bcs: Sequence[DirichletBC],
    coords: np.ndarray,
    B: sp.spmatrix | None = None,
    g: np.ndarray | None = None,
) -> ReducedSystem:
    """Eliminate prescribed bulk nodes symmetrically from ``A`` and ``B``."""
    n = A.shape[0]
    if B is None:
        B, g = sp.csr_matrix((0, n)), np.zeros(0)
    value = np.full(n, np.nan)
    for bc in bcs:
        nodes = np.asarray(bc.nodes, dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= len(coords)):
            raise AssemblyError("Dirichlet node index out of range")
        v = bc.values(coords)
        prev = value[nodes]
        clash = ~np.isnan(prev) & (np.abs(prev - v) > 1e-10)
        if np.any(clash):
            k = nodes[clash][0]
            raise AssemblyError(f"conflicting Dirichlet values at node {k}: {value[k]} vs {v[clash][0]}")
        value[nodes] = v
    is_fixed = ~np.isnan(value)
    fixed = np.flatnonzero(is_fixed)
    free = np.flatnonzero(~is_fixed)
    ub = value[fixed]
    A = sp.csr_matrix(A)
    B = sp.csr_matrix(B)
    A_ff = A[free][:, free]
    f_f = np.asarray(rhs, dtype=float)[free] - A[free][:, fixed] @ ub
    B_f = B[:, free]
    g_f = np.asarray(g, dtype=float) - B[:, fixed] @ ub
    return ReducedSystem(A_ff.tocsr(), f_f, B_f.tocsr(), g_f, free, fixed, ub, n)
