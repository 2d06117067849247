"""KKT assembly and solution of ``[[A, B^T], [B, 0]] [u, lam] = [f, g]``."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    """The KKT matrix is singular.

    ``kind`` is ``"rank_deficient_constraints"`` (``indices`` are constraint
    rows that depend on earlier ones) or ``"unconstrained_kernel"``
    (``indices`` are unknowns of a component whose constant mode is free).
    """

    def __init__(self, message, kind, indices=()):
        super().__init__(message)
        self.kind = kind
        self.indices = list(indices)


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    K: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])


@dataclass(frozen=True, eq=False)
class SaddleSolution:
    u: np.ndarray
    lam: np.ndarray
    residual_primal: float
    residual_constraint: float
    method: str = "direct"
    info: dict = field(default_factory=dict)


def assemble_kkt(A, B, f, g) -> SaddleSystem:
    A = sp.csr_matrix(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got {A.shape}")
    if B is None:
        B = sp.csr_matrix((0, n))
    B = sp.csr_matrix(B, dtype=float)
    f = np.asarray(f, dtype=float)
    g = np.zeros(0) if g is None else np.asarray(g, dtype=float)
    m = B.shape[0]
    if B.shape[1] != n:
        raise ValueError(f"B has {B.shape[1]} columns, A has order {n}")
    if f.shape != (n,) or g.shape != (m,):
        raise ValueError(f"rhs shapes {f.shape}, {g.shape} do not match n={n}, m={m}")
    if m == 0:
        K = A.copy()
    else:
        K = sp.bmat([[A, B.T], [B, None]], format="csr")
    K.sort_indices()
    return SaddleSystem(A, B, f, g, K)


def residuals(sys: SaddleSystem, u: np.ndarray, lam: np.ndarray) -> tuple[float, float]:
    """Componentwise-scaled residuals of the two block rows (infinity norm).

    Scales are ``|A||u| + |B^T||lam| + |f|`` and ``|B||u| + |g|`` so that
    cancellation in ``Au`` cannot inflate the relative value.
    """
    absA, absB = abs(sys.A), abs(sys.B)
    r1 = sys.A @ u + sys.B.T @ lam - sys.f
    s1 = (absA @ np.abs(u) + absB.T @ np.abs(lam) + np.abs(sys.f)).max(initial=0)
    r2 = sys.B @ u - sys.g
    s2 = (absB @ np.abs(u) + np.abs(sys.g)).max(initial=0)
    rel1 = np.abs(r1).max(initial=0) / s1 if s1 > 0 else np.abs(r1).max(initial=0)
    rel2 = np.abs(r2).max(initial=0) / s2 if s2 > 0 else np.abs(r2).max(initial=0)
    return float(rel1), float(rel2)


def diagnose(sys: SaddleSystem) -> SingularSystemError | None:
    """Explain why ``sys.K`` is singular, or return None if no cause is found."""
    B = sys.B
    m = B.shape[0]
    if 0 < m <= 4000:
        # sequential orthogonalisation names the offending rows
        Bd = B.toarray()
        scale = np.abs(Bd).max() or 1.0
        basis = np.zeros((0, Bd.shape[1]))
        dependent = []
        for i, row in enumerate(Bd):
            r = row.copy()
            if basis.shape[0]:
                r -= basis.T @ (basis @ r)
                r -= basis.T @ (basis @ r)
            nr = np.linalg.norm(r)
            if nr <= 1e-10 * max(np.linalg.norm(row), scale):
                dependent.append(i)
            else:
                basis = np.vstack([basis, r / nr])
        if dependent:
            return SingularSystemError(
                f"constraint rows {dependent[:10]} are linearly dependent on earlier rows",
                "rank_deficient_constraints",
                dependent,
            )
    # Floating components of A: connected blocks whose rows sum to zero.
    A = sys.A
    ncomp, labels = connected_components(abs(A) + abs(A.T), directed=False)
    rowsum = np.abs(np.asarray(A.sum(axis=1)).ravel())
    diag_scale = np.abs(A.diagonal()).max(initial=1.0)
    floating = []
    for c in range(ncomp):
        members = labels == c
        if np.all(rowsum[members] <= 1e-12 * diag_scale):
            floating.append(np.flatnonzero(members))
    if floating:
        C = np.column_stack([B @ members_indicator(idx, A.shape[0]) for idx in floating]) if m else np.zeros((0, len(floating)))
        rank = np.linalg.matrix_rank(C) if C.size else 0
        if rank < len(floating):
            # report the first component not pinned by any constraint
            for k, idx in enumerate(floating):
                if m == 0 or np.allclose(C[:, k], 0):
                    break
            else:
                idx = floating[0]
            return SingularSystemError(
                f"{len(floating) - rank} constant mode(s) are not fixed by any boundary "
                f"condition or constraint (component of {len(idx)} unknowns starting at {int(idx[0])})",
                "unconstrained_kernel",
                idx.tolist(),
            )
    return None


def members_indicator(idx: np.ndarray, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[idx] = 1.0
    return v


def _direct(sys: SaddleSystem):
    lu = spla.splu(sys.K.tocsc())
    x = lu.solve(sys.rhs)
    return x


def _minres(sys: SaddleSystem, tol: float, max_iter: int | None):
    n, m = sys.n, sys.m
    d = np.abs(sys.A.diagonal())
    d[d == 0] = 1.0
    if m:
        # Schur complement diagonal approximation for the multiplier block
        S = np.asarray((sys.B.multiply(sys.B)) @ (1.0 / d)).ravel()
        S[S == 0] = 1.0
        pdiag = np.concatenate([d, S])
    else:
        pdiag = d
    M = sp.diags(1.0 / pdiag)
    maxiter = max_iter if max_iter is not None else 20 * (n + m)
    x, info = spla.minres(sys.K, sys.rhs, M=M, rtol=tol, maxiter=maxiter)
    if info != 0:
        raise SolverError(f"MINRES did not converge in {maxiter} iterations")
    return x


def solve_saddle(sys: SaddleSystem, tol: float = 1e-10, method: str = "auto", max_iter: int | None = None) -> SaddleSolution:
    """Solve the KKT system and check both residual blocks against ``tol``.

    ``method`` is ``"direct"`` (sparse LU with partial pivoting), ``"minres"``
    (diagonally preconditioned MINRES) or ``"auto"`` (direct, falling back to
    MINRES when the factorization runs out of memory).
    """
    if method not in ("auto", "direct", "minres"):
        raise ValueError(f"unknown method {method!r}")
    used = method
    try:
        if method == "minres":
            x = _minres(sys, tol, max_iter)
        else:
            try:
                x = _direct(sys)
                used = "direct"
            except MemoryError:
                if method == "direct":
                    raise
                logger.warning("sparse LU ran out of memory, falling back to MINRES")
                x = _minres(sys, tol, max_iter)
                used = "minres"
    except SolverError:
        raise
    except RuntimeError as exc:
        err = diagnose(sys)
        if err is not None:
            raise err from exc
        raise SolverError(f"factorization failed: {exc}") from exc

    u, lam = x[: sys.n], x[sys.n:]
    r1, r2 = residuals(sys, u, lam) if np.all(np.isfinite(x)) else (np.inf, np.inf)
    # iterative solutions are checked against the looser of tol and the Krylov stopping criterion
    limit = tol if used == "direct" else max(tol, 1e-6)
    if not (r1 <= limit and r2 <= limit):
        err = diagnose(sys)
        if err is not None:
            raise err
        raise SolverError(f"residuals {r1:.3e}, {r2:.3e} exceed tolerance {limit:.1e}")
    return SaddleSolution(u, lam, r1, r2, used)


def dense_solve(sys: SaddleSystem) -> tuple[np.ndarray, np.ndarray]:
    """Dense LU of the full KKT matrix (reference path for small systems)."""
    x = np.linalg.solve(sys.K.toarray(), sys.rhs)
    return x[: sys.n], x[sys.n:]


def multiplier_balance(sol, wire_index: int) -> float:
    """``lam_start + lam_end`` of one wire; zero for a source-free wire.

    ``sol`` is a :class:`SaddleSolution` or the multiplier vector itself,
    with the two rows of wire ``k`` at positions ``2k`` and ``2k + 1``.
    """
    lam = sol.lam if isinstance(sol, SaddleSolution) else np.asarray(sol)
    return float(lam[2 * wire_index] + lam[2 * wire_index + 1])
