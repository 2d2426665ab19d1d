"""Generic preconditioned fixed-point iteration and its convergence constants.

The iteration solves Phi(u) = y on R^n by

    G_k (u_{k+1} - u_k) = -gamma_k (Phi(u_k) - y)

with symmetric positive-definite G_k.  The contact solvers are special cases
with Phi(u) = K u + grad J(u) and G_k built from the stiffness plus a
contact term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .linsolve import LinearSolveError, factorize

Operator = Union[np.ndarray, sp.spmatrix]


@dataclass
class AbstractResult:
    iterates: list
    converged: bool
    diverged: bool = False

    @property
    def solution(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def n_iterations(self) -> int:
        return len(self.iterates) - 1


def _as_matrix(G):
    if np.isscalar(G):
        return np.array([[float(G)]])
    return G


def _form_at(g_forms, k: int, u: np.ndarray):
    if callable(g_forms):
        return _as_matrix(g_forms(k, u))
    if isinstance(g_forms, (list, tuple)):
        return _as_matrix(g_forms[min(k, len(g_forms) - 1)])
    return _as_matrix(g_forms)


def _gamma_at(gammas, k: int) -> float:
    if np.isscalar(gammas):
        return float(gammas)
    return float(gammas[min(k, len(gammas) - 1)])


def abstract_iterate(phi: Callable[[np.ndarray], np.ndarray], y, g_forms, gammas, u0,
                     tol: float = 1e-12, max_k: int = 1000,
                     blowup: float = 1e100) -> AbstractResult:
    """Run the preconditioned iteration from ``u0``.

    ``g_forms`` is one matrix, a sequence (the last entry repeats), or a
    callable ``(k, u_k) -> matrix``.  ``gammas`` is a scalar or sequence.
    Stops when ``||u_{k+1} - u_k|| <= tol * max(||u_{k+1}||, tiny)`` or the
    norm exceeds ``blowup``.
    """
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    iterates = [u.copy()]
    cache_key, solver = None, None
    for k in range(max_k):
        G = _form_at(g_forms, k, u)
        if G is not cache_key:
            try:
                solver = factorize(G)
            except LinearSolveError as exc:
                raise ValueError(f"G^{k} is not symmetric positive definite: {exc}") from exc
            cache_key = G
        r = np.atleast_1d(phi(u)) - y
        step = solver.solve(r, tol=1e-12) if np.any(r) else np.zeros_like(u)
        u_new = u - _gamma_at(gammas, k) * step
        iterates.append(u_new.copy())
        diff = np.linalg.norm(u_new - u)
        size = np.linalg.norm(u_new)
        u = u_new
        if not np.all(np.isfinite(u)) or size > blowup:
            return AbstractResult(iterates, converged=False, diverged=True)
        if diff <= tol * max(size, np.finfo(float).tiny):
            return AbstractResult(iterates, converged=True)
    return AbstractResult(iterates, converged=False)


@dataclass
class Theorem3Estimate:
    """Sampled constants of the convergence theorem for the iteration.

    ``r_phi`` bounds ||Phi(u)|| (dual norm), ``d_phi`` is the Lipschitz
    constant of Phi, ``b_phi`` its strong-monotonicity constant, and
    ``b_g``/``m_g`` the coercivity/continuity constants of the G forms.
    The admissible relaxation window is (0, 2 * gamma_star).
    """

    r_phi: float
    d_phi: float
    b_phi: float
    b_g: float
    m_g: float
    gamma_star: float
    violations: list = field(default_factory=list)

    @property
    def window(self) -> tuple:
        return (0.0, 2.0 * self.gamma_star)


def _extreme_eigs(G) -> tuple:
    import scipy.sparse.linalg as spla

    n = G.shape[0]
    if sp.issparse(G) and n > 2000:
        hi = spla.eigsh(G, k=1, which="LA", return_eigenvectors=False)[0]
        lo = spla.eigsh(G, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0]
        return float(lo), float(hi)
    M = G.toarray() if sp.issparse(G) else np.asarray(G, dtype=float)
    w = np.linalg.eigvalsh(M)
    return float(w[0]), float(w[-1])


def estimate_theorem3(phi: Callable[[np.ndarray], np.ndarray], g_forms: Sequence,
                      dim: int, probes: int = 20, rng=None, scale: float = 1.0,
                      center=None) -> Theorem3Estimate:
    """Monte-Carlo estimates of the iteration's convergence constants.

    Probe triples (u, v, w) are Gaussian with standard deviation ``scale``
    around ``center``.  The supremum over test vectors in the Lipschitz bound
    is taken exactly through the dual (Euclidean) norm.  G constants are the
    exact extreme eigenvalues over all supplied forms.
    """
    if probes < 1:
        raise ValueError("need at least one probe")
    rng = np.random.default_rng(rng)
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    r_phi, d_phi, b_phi = 0.0, 0.0, np.inf
    for _ in range(probes):
        u = c + scale * rng.standard_normal(dim)
        v = scale * rng.standard_normal(dim)
        w = scale * rng.standard_normal(dim)
        nv, nw = np.linalg.norm(v), np.linalg.norm(w)
        if nv == 0.0 or nw == 0.0:
            continue
        pu = np.atleast_1d(phi(u))
        r_phi = max(r_phi, float(np.linalg.norm(pu)))
        d_phi = max(d_phi, float(np.linalg.norm(np.atleast_1d(phi(u + w)) - pu) / nw))
        b_phi = min(b_phi, float(v @ (np.atleast_1d(phi(u + v)) - pu) / nv**2))

    forms = list(g_forms) if isinstance(g_forms, (list, tuple)) else [g_forms]
    b_g, m_g = np.inf, 0.0
    for G in forms:
        lo, hi = _extreme_eigs(_as_matrix(G))
        b_g, m_g = min(b_g, lo), max(m_g, hi)

    violations = []
    if not b_phi > 0:
        violations.append(f"Phi is not strongly monotone on the samples (B_Phi = {b_phi:.3e})")
    if not b_g > 0:
        violations.append(f"G is not coercive (smallest eigenvalue {b_g:.3e})")
    gamma_star = b_phi * b_g / d_phi**2 if d_phi > 0 else np.inf
    return Theorem3Estimate(r_phi, d_phi, b_phi, b_g, m_g, float(gamma_star), violations)
