"""Symmetric positive-definite linear solves.

Direct factorization by default (SuperLU in symmetric mode for sparse input,
LAPACK Cholesky for dense input); Jacobi-preconditioned CG above a dof
threshold.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

CG_THRESHOLD = 200_000
SYMMETRY_TOL = 1e-12
PIVOT_TOL = 1e-12
REFINEMENT_STEPS = 3


class LinearSolveError(RuntimeError):
    """Factorization or solve failure; ``pivot`` is the offending index if known."""

    def __init__(self, message, pivot=None, residual=None):
        super().__init__(message)
        self.pivot = pivot
        self.residual = residual


def _asymmetry(A) -> float:
    if sp.issparse(A):
        diff = abs(A - A.T).max() if A.nnz else 0.0
        scale = abs(A).max() if A.nnz else 0.0
    else:
        diff = np.max(np.abs(A - A.T)) if A.size else 0.0
        scale = np.max(np.abs(A)) if A.size else 0.0
    return float(diff / scale) if scale > 0 else float(diff)


class SpdSolver:
    """Reusable solver for one SPD matrix."""

    def __init__(self, A, method: str, factor=None, precond=None, cg_tol=1e-12,
                 cg_maxiter=None):
        self.A = A
        self.method = method
        self._factor = factor
        self._precond = precond
        self.cg_tol = cg_tol
        self.cg_maxiter = cg_maxiter

    @property
    def shape(self):
        return self.A.shape

    def _raw_solve(self, b):
        if self.method == "dense":
            return sla.cho_solve(self._factor, b)
        if self.method == "splu":
            return self._factor.solve(b)
        x, info = spla.cg(self.A, b, rtol=self.cg_tol, atol=0.0,
                          maxiter=self.cg_maxiter, M=self._precond)
        return x

    def solve(self, rhs, tol: float = 1e-10) -> np.ndarray:
        """Solve and verify ``||A x - b|| <= tol * ||b||``.

        Up to REFINEMENT_STEPS steps of iterative refinement are tried
        before giving up.
        """
        b = np.asarray(rhs, dtype=float)
        if b.shape[0] != self.A.shape[0]:
            raise ValueError(f"rhs has {b.shape[0]} rows, matrix has {self.A.shape[0]}")
        if b.shape[0] == 0:
            return b.copy()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        x = self._raw_solve(b)
        r = b - self.A @ x
        res = np.linalg.norm(r) / bnorm
        for _ in range(REFINEMENT_STEPS):
            if res <= tol:
                break
            x = x + self._raw_solve(r)
            r = b - self.A @ x
            res = np.linalg.norm(r) / bnorm
        if not np.isfinite(res) or res > tol:
            raise LinearSolveError(
                f"{self.method} solve reached relative residual {res:.3e} > {tol:.1e}",
                residual=res,
            )
        return x


def factorize(A, method: str = "auto", cg_threshold: int = CG_THRESHOLD) -> SpdSolver:
    """Factorize a symmetric positive-definite matrix.

    Raises LinearSolveError when the matrix is not symmetric or a pivot is
    non-positive (relative to the largest pivot), reporting the pivot's row.
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    asym = _asymmetry(A)
    if asym > SYMMETRY_TOL:
        raise LinearSolveError(f"matrix is not symmetric (relative asymmetry {asym:.2e})")
    diag = A.diagonal() if sp.issparse(A) else np.diagonal(np.asarray(A, dtype=float))
    if n and not np.all(diag > 0):
        row = int(np.argmax(~(diag > 0)))
        raise LinearSolveError(f"matrix is not positive definite: diagonal entry {diag[row]:.3e} "
                               f"at row {row}", pivot=row)
    if method == "auto":
        if not sp.issparse(A):
            method = "dense"
        elif n > cg_threshold:
            method = "cg"
        else:
            method = "splu"

    if n == 0:
        return SpdSolver(A, "dense", factor=(np.zeros((0, 0)), True))

    if method == "dense":
        M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        c, info = sla.lapack.dpotrf(M, lower=1, clean=1)
        if info > 0:
            raise LinearSolveError(
                f"matrix is not positive definite (pivot {info - 1})", pivot=info - 1
            )
        piv = np.diag(c) ** 2
        _check_pivots(piv, np.arange(n))
        return SpdSolver(M, "dense", factor=(c, True))

    A = sp.csc_matrix(A, dtype=float)
    if method == "splu":
        try:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise LinearSolveError(f"factorization failed: {exc}") from exc
        piv = lu.U.diagonal()
        # column k of U corresponds to original column perm_c^-1(k)
        order = np.argsort(lu.perm_c)
        _check_pivots(piv, order)
        return SpdSolver(A, "splu", factor=lu)

    if method == "cg":
        d = A.diagonal()
        if np.any(d <= 0):
            bad = int(np.argmax(d <= 0))
            raise LinearSolveError(f"non-positive diagonal at row {bad}", pivot=bad)
        inv = 1.0 / d
        M = spla.LinearOperator(A.shape, matvec=lambda x: inv * x, dtype=float)
        return SpdSolver(A, "cg", precond=M, cg_maxiter=10 * n)

    raise ValueError(f"unknown method {method!r}")


def _check_pivots(piv, rows):
    piv = np.asarray(piv, dtype=float)
    top = np.max(np.abs(piv)) if piv.size else 0.0
    bad = np.flatnonzero(~(piv > PIVOT_TOL * top))
    if top == 0.0 or bad.size:
        k = int(bad[0]) if bad.size else 0
        raise LinearSolveError(
            f"matrix is singular or indefinite: pivot {piv[k]:.3e} at row {int(rows[k])}",
            pivot=int(rows[k]),
        )


def solve(solver: SpdSolver, rhs, tol: float = 1e-10) -> np.ndarray:
    return solver.solve(rhs, tol=tol)
