"""Node-to-node coupling across Winkler-covered contact pairs.

Boundary integrals over a contact segment use nodal (trapezoid) quadrature,
so every coupling term is a per-node product with the node's tributary
length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem2d import DofMap, contact_segment
from .model import ModelError, PairSpec, Problem, WinklerLaw, eval_g_minus, integral_g_minus

NEUMANN = "neumann"
FULL_ROBIN = "full_robin"
ACTIVE_SET = "active_set"
STRATEGIES = (NEUMANN, FULL_ROBIN, ACTIVE_SET)

MATCH_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ContactPair:
    alpha: int
    beta: int
    nodes_alpha: np.ndarray
    nodes_beta: np.ndarray
    comp_alpha: int
    comp_beta: int
    sign_alpha: float
    sign_beta: float
    weights: np.ndarray  # tributary lengths, cm
    coords: np.ndarray  # coordinate along the segment, cm
    gap: np.ndarray  # initial gap d, cm
    law: WinklerLaw
    name: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    def side(self, side: int):
        """(nodes, component, sign) of side 0 (alpha) or 1 (beta)."""
        if side == 0:
            return self.nodes_alpha, self.comp_alpha, self.sign_alpha
        if side == 1:
            return self.nodes_beta, self.comp_beta, self.sign_beta
        raise ValueError("side must be 0 (alpha) or 1 (beta)")

    def body(self, side: int) -> int:
        return self.alpha if side == 0 else self.beta

    def trace(self, u: np.ndarray, side: int) -> np.ndarray:
        nodes, comp, sign = self.side(side)
        return sign * np.asarray(u).reshape(-1, 2)[nodes, comp]

    def gap_argument(self, u_alpha, u_beta) -> np.ndarray:
        """t = d - u_alpha_n - u_beta_n per paired node."""
        return self.gap - self.trace(u_alpha, 0) - self.trace(u_beta, 1)


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def build_pairing(problem: Problem, spec: PairSpec) -> ContactPair:
    mesh_a = problem.bodies[spec.alpha].mesh
    mesh_b = problem.bodies[spec.beta].mesh
    nodes_a, n_a = contact_segment(mesh_a, spec.tag_alpha)
    nodes_b, n_b = contact_segment(mesh_b, spec.tag_beta)
    if not np.allclose(n_a, -n_b):
        raise ModelError(
            f"pair {spec.name!r}: contact normals {n_a} and {n_b} are not opposite"
        )
    if len(nodes_a) != len(nodes_b):
        raise ModelError(
            f"pair {spec.name!r}: segments have {len(nodes_a)} and {len(nodes_b)} nodes"
        )
    comp_a = int(np.flatnonzero(n_a)[0])
    comp_b = int(np.flatnonzero(n_b)[0])
    along = 1 - comp_a
    xa = mesh_a.nodes[nodes_a, along]
    xb = mesh_b.nodes[nodes_b, along]
    tol = MATCH_TOL * max(1.0, float(np.max(np.abs(xa))))
    mismatch = np.flatnonzero(np.abs(xa - xb) > tol)
    if mismatch.size:
        i = int(mismatch[0])
        raise ModelError(
            f"pair {spec.name!r}: nodes do not match at coordinate {xa[i]!r} vs {xb[i]!r}"
        )
    weights = trapezoid_weights(xa)
    gap = np.asarray(spec.gap(xa), dtype=float)
    if gap.shape != xa.shape or not np.all(np.isfinite(gap)):
        raise ModelError(f"pair {spec.name!r}: gap function returned non-finite values")
    return ContactPair(
        alpha=spec.alpha, beta=spec.beta,
        nodes_alpha=nodes_a, nodes_beta=nodes_b,
        comp_alpha=comp_a, comp_beta=comp_b,
        sign_alpha=float(n_a[comp_a]), sign_beta=float(n_b[comp_b]),
        weights=weights, coords=xa, gap=gap, law=spec.law, name=spec.name,
    )


@dataclass(frozen=True, eq=False)
class GapState:
    t: np.ndarray
    chi: np.ndarray
    psi: np.ndarray
    g_minus: np.ndarray
    g_prime: np.ndarray

    @property
    def n_active(self) -> int:
        return int(self.chi.sum())


def gap_state(pair: ContactPair, u_alpha, u_beta, strategy: str = ACTIVE_SET) -> GapState:
    t = pair.gap_argument(u_alpha, u_beta)
    # t == 0 counts as separated
    chi = (t < 0).astype(float)
    if strategy == NEUMANN:
        psi = np.zeros_like(t)
    elif strategy == FULL_ROBIN:
        psi = np.ones_like(t)
    elif strategy == ACTIVE_SET:
        psi = chi.copy()
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    gm = eval_g_minus(pair.law, t)
    gp = np.asarray(pair.law.dg(t), dtype=float)
    return GapState(t, chi, psi, gm, gp)


def assemble_robin(pair: ContactPair, state: GapState, side: int, dofs: DofMap
                   ) -> sp.csr_matrix:
    """Lumped Robin addend of one side over that body's full dof range."""
    coef = robin_coefficients(pair, state)
    nodes, comp, _ = pair.side(side)
    diag = np.zeros(dofs.n_dofs)
    np.add.at(diag, 2 * nodes + comp, coef)
    return sp.diags(diag, format="csr")


def robin_coefficients(pair: ContactPair, state: GapState) -> np.ndarray:
    bad = np.flatnonzero((state.psi != 0) & ~(state.g_prime >= 0))
    if bad.size:
        i = int(bad[0])
        raise ModelError(
            f"pair {pair.name!r}: law derivative {state.g_prime[i]:.3g} < 0 at "
            f"t={state.t[i]:.3g}; the law must be increasing"
        )
    return state.psi * state.g_prime * pair.weights


def assemble_contact_rhs(pair: ContactPair, state: GapState, u_side_n, side: int,
                         dofs: DofMap) -> np.ndarray:
    """Robin and residual load of one side at the current iterate."""
    nodal = (state.psi * state.g_prime * np.asarray(u_side_n) + state.g_minus) * pair.weights
    nodes, comp, sign = pair.side(side)
    f = np.zeros(dofs.n_dofs)
    np.add.at(f, 2 * nodes + comp, sign * nodal)
    return f


def contact_pressure(pair: ContactPair, u_alpha, u_beta) -> np.ndarray:
    return eval_g_minus(pair.law, pair.gap_argument(u_alpha, u_beta))


def contact_energy(pair: ContactPair, u_alpha, u_beta) -> float:
    t = pair.gap_argument(u_alpha, u_beta)
    return float(np.dot(pair.weights, integral_g_minus(pair.law, t)))


def contact_gradient(pair: ContactPair, u_alpha, u_beta, side: int, n_dofs: int
                     ) -> np.ndarray:
    """Gradient of the pair's contact energy with respect to one body's dofs."""
    gm = contact_pressure(pair, u_alpha, u_beta)
    nodes, comp, sign = pair.side(side)
    g = np.zeros(n_dofs)
    np.add.at(g, 2 * nodes + comp, -sign * gm * pair.weights)
    return g


@dataclass
class ComplementarityReport:
    max_pressure: float  # should be <= 0
    max_penetration: float  # u_an + u_bn + w - d, should be <= tol
    max_product: float
    ok: bool


def complementarity(pair: ContactPair, u_alpha, u_beta, q: float,
                    gap_tol: float = 1e-10, product_tol: float = 1e-8
                    ) -> ComplementarityReport:
    """Discrete sign, gap and complementarity conditions with w = min(t, 0)."""
    t = pair.gap_argument(u_alpha, u_beta)
    w = np.minimum(t, 0.0)
    sigma = np.asarray(pair.law.g(w), dtype=float)
    closing = pair.trace(u_alpha, 0) + pair.trace(u_beta, 1) + w - pair.gap
    product = np.abs(closing * sigma)
    max_sigma = float(sigma.max()) if sigma.size else 0.0
    max_pen = float(closing.max()) if closing.size else -np.inf
    max_prod = float(product.max()) if product.size else 0.0
    ok = max_sigma <= 0.0 and max_pen <= gap_tol and max_prod <= product_tol * abs(q)
    return ComplementarityReport(max_sigma, max_pen, max_prod, ok)
