"""Parallel Robin-Robin domain decomposition and the monolithic Newton oracle.

One DDM step solves, independently for each body,

    (K + X_k) u_tilde = l + X_k u_k^n + g_minus(t_k)    (on the contact trace)

and relaxes ``u_{k+1} = gamma * u_tilde + (1 - gamma) * u_k``.  The
monolithic oracle solves the coupled system with the generalized Jacobian
``K + C_k`` where ``C_k`` couples the two traces of every penetrating node.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .contact import (
    ACTIVE_SET,
    STRATEGIES,
    GapState,
    assemble_contact_rhs,
    contact_pressure,
    gap_state,
    robin_coefficients,
)
from .iteration import abstract_iterate  # noqa: F401  re-exported
from .iteration import estimate_theorem3  # noqa: F401  re-exported
from .linsolve import LinearSolveError, SpdSolver, factorize
from .system import Discretization, as_discretization

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
DIVERGED = "diverged"

DIAG_CHANGE_TOL = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    gamma: Union[float, Sequence[float]] = 0.6
    strategy: str = ACTIVE_SET
    eps_u: float = 1e-3
    max_iterations: int = 500
    divergence_guard: float = 10.0
    divergence_window: int = 20
    blowup_factor: float = 1e6
    initial_trace: float = 1e-4

    def __post_init__(self):
        gammas = [self.gamma] if np.isscalar(self.gamma) else list(self.gamma)
        if not gammas:
            raise ValueError("gamma schedule is empty")
        bad = [g for g in gammas if not (0.0 < g < 2.0)]
        if bad:
            raise ValueError(f"gamma values must lie in (0, 2), got {bad}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not self.eps_u > 0:
            raise ValueError("eps_u must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.divergence_guard > 1:
            raise ValueError("divergence_guard must be > 1")

    def gamma_at(self, k: int) -> float:
        if np.isscalar(self.gamma):
            return float(self.gamma)
        g = list(self.gamma)
        return float(g[min(k, len(g) - 1)])


@dataclass
class SolverState:
    fields: list  # per body (n_nodes, 2)
    k: int = 0
    gaps: list = field(default_factory=list)  # GapState per pair at ``fields``


@dataclass
class IterationRecord:
    k: int
    rho: tuple
    energy: float
    active: int
    gamma: float


@dataclass
class IterationReport:
    records: list = field(default_factory=list)
    outcome: str = MAX_ITERATIONS
    message: str = ""
    initial_energy: float = float("nan")
    pressures: list = field(default_factory=list)  # per pair, at the final state
    seconds: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.outcome == CONVERGED

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy if self.records else self.initial_energy


# --------------------------------------------------------------------------
# Per-body solver with factorization caching
# --------------------------------------------------------------------------


class SubdomainSolver:
    """Solves ``(K_ff + diag(x)) u = f`` for one body, where ``x`` lives on
    the body's contact-normal dofs only.

    In "schur" mode the stiffness is factorized once with the contact dofs
    removed and condensed onto them; each solve then needs one small dense
    Cholesky (reused while the Robin diagonal is unchanged).  "direct" mode
    refactorizes the whole body matrix whenever the diagonal changes.
    """

    def __init__(self, disc: Discretization, body: int, mode: str = "auto"):
        self.body = body
        dm = disc.dofmaps[body]
        self.dofmap = dm
        self.free = dm.free
        K = disc.stiffness[body]
        self.K_ff = K[self.free][:, self.free].tocsc()
        pos = -np.ones(dm.n_dofs, dtype=np.int64)
        pos[self.free] = np.arange(len(self.free))
        self.pos = pos
        cdofs = set()
        for p, side in disc.pairs_of(body):
            nodes, comp, _ = p.side(side)
            cdofs.update((2 * nodes + comp).tolist())
        cfull = np.array(sorted(d for d in cdofs if pos[d] >= 0), dtype=np.int64)
        self.c_full = cfull
        self.c = pos[cfull]
        mask = np.ones(len(self.free), dtype=bool)
        mask[self.c] = False
        self.r = np.flatnonzero(mask)
        self._diag_key = None
        self._small: Optional[SpdSolver] = None
        self._rhs_key = None
        self._y_r = None
        self.factorizations = 0

        self.mode = mode
        if mode in ("auto", "schur"):
            try:
                self._setup_schur()
                self.mode = "schur"
            except LinearSolveError:
                if mode == "schur":
                    raise
                self.mode = "direct"
        elif mode != "direct":
            raise ValueError(f"unknown mode {mode!r}")

    def _setup_schur(self):
        K = self.K_ff
        Krr = K[self.r][:, self.r].tocsc()
        Krc = K[self.r][:, self.c].toarray()
        self.K_cc = K[self.c][:, self.c].toarray()
        self._rr = factorize(Krr) if len(self.r) else None
        self.W = self._rr.solve(Krc, tol=1e-9) if len(self.r) and Krc.size else np.zeros((len(self.r), len(self.c)))
        S = self.K_cc - Krc.T @ self.W
        self.S = 0.5 * (S + S.T)

    def solve(self, diag_full: np.ndarray, rhs_full: np.ndarray) -> np.ndarray:
        """Return the full-dof solution as an (n_nodes, 2) array."""
        diag = diag_full[self.free]
        rhs = rhs_full[self.free]
        off_contact = np.ones(len(self.free), dtype=bool)
        off_contact[self.c] = False
        if np.any(diag[off_contact] != 0):
            raise ValueError("Robin diagonal must vanish away from contact dofs")
        x = np.zeros(len(self.free))
        if self.mode == "schur":
            dc = diag[self.c]
            if not self._same_diag(dc):
                self._small = factorize(self.S + np.diag(dc))
                self._diag_key = dc.copy()
                self.factorizations += 1
            rhs_r = rhs[self.r]
            if self._rhs_key is None or not np.array_equal(rhs_r, self._rhs_key):
                self._y_r = self._rr.solve(rhs_r) if len(self.r) else np.zeros(0)
                self._rhs_key = rhs_r.copy()
            b_c = rhs[self.c] - self.W.T @ rhs_r
            u_c = self._small.solve(b_c) if len(self.c) else np.zeros(0)
            x[self.c] = u_c
            x[self.r] = self._y_r - self.W @ u_c
        else:
            if not self._same_diag(diag):
                self._small = factorize((self.K_ff + sp.diags(diag)).tocsc())
                self._diag_key = diag.copy()
                self.factorizations += 1
            x = self._small.solve(rhs)
        full = np.zeros(self.dofmap.n_dofs)
        full[self.free] = x
        return full.reshape(-1, 2)

    def _same_diag(self, d) -> bool:
        key = self._diag_key
        if key is None or key.shape != d.shape:
            return False
        scale = max(np.max(np.abs(key), initial=0.0), np.max(np.abs(d), initial=0.0))
        return bool(np.max(np.abs(d - key), initial=0.0) <= DIAG_CHANGE_TOL * scale)


def make_solvers(disc: Discretization, mode: str = "auto") -> list:
    return [SubdomainSolver(disc, b, mode) for b in range(disc.n_bodies)]


# --------------------------------------------------------------------------
# DDM
# --------------------------------------------------------------------------


def initial_state(disc: Discretization, trace: float = 1e-4) -> SolverState:
    """Zero fields except the contact normal traces, which are set to ``trace``."""
    fields = disc.zero_fields()
    for p in disc.pairs:
        for side in (0, 1):
            b = p.body(side)
            nodes, comp, sign = p.side(side)
            dofs = 2 * nodes + comp
            free = ~disc.dofmaps[b].fixed[dofs]
            flat = fields[b].reshape(-1)
            flat[dofs[free]] = sign * trace
    return SolverState(fields, 0, [])


def compute_gaps(disc: Discretization, fields, strategy: str) -> list:
    return [gap_state(p, fields[p.alpha], fields[p.beta], strategy) for p in disc.pairs]


def robin_system(disc: Discretization, fields, gaps: Sequence[GapState], body: int):
    """Robin diagonal and right-hand side of one body at the current iterate."""
    dm = disc.dofmaps[body]
    diag = np.zeros(dm.n_dofs)
    rhs = disc.loads[body].copy()
    for (p, side) in disc.pairs_of(body):
        gs = gaps[disc.pairs.index(p)]
        nodes, comp, _ = p.side(side)
        np.add.at(diag, 2 * nodes + comp, robin_coefficients(p, gs))
        rhs += assemble_contact_rhs(p, gs, p.trace(fields[body], side), side, dm)
    return diag, rhs


def ddm_step(problem, state: SolverState, gamma: float, strategy: str = ACTIVE_SET,
             solvers: Optional[list] = None, executor: Optional[Executor] = None
             ) -> SolverState:
    """One relaxed Robin-Robin step; the per-body solves are independent."""
    disc = as_discretization(problem)
    if solvers is None:
        solvers = make_solvers(disc)
    fields = state.fields
    gaps = compute_gaps(disc, fields, strategy)

    def one(b):
        diag, rhs = robin_system(disc, fields, gaps, b)
        try:
            u_tilde = solvers[b].solve(diag, rhs)
        except LinearSolveError as exc:
            raise LinearSolveError(
                f"body {b}, iteration {state.k}: {exc}", pivot=exc.pivot
            ) from exc
        return gamma * u_tilde + (1.0 - gamma) * fields[b]

    bodies = range(disc.n_bodies)
    if executor is not None:
        new = list(executor.map(one, bodies))
    else:
        new = [one(b) for b in bodies]
    return SolverState(new, state.k + 1, [])


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    """||new - old|| / ||new||; 0/0 counts as no change."""
    diff = np.linalg.norm(new - old)
    size = np.linalg.norm(new)
    if size == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / size)


class _DivergenceGuard:
    def __init__(self, cfg: SolverConfig):
        self.factor = cfg.divergence_guard
        self.window = cfg.divergence_window
        self.blowup = cfg.blowup_factor
        self.running_min = float("inf")
        self.streak = 0
        self.reference = None

    def check(self, rhos, fields) -> Optional[str]:
        norm = max(np.linalg.norm(u) for u in fields)
        if not np.isfinite(norm) or not all(np.isfinite(r) or r == float("inf") for r in rhos):
            return "non-finite iterate"
        if self.reference is None:
            self.reference = max(norm, np.finfo(float).tiny)
        elif norm > self.blowup * self.reference:
            return f"field norm {norm:.3e} exceeds {self.blowup:g} x first iterate"
        m = min(rhos)
        if m > self.factor * self.running_min:
            self.streak += 1
        else:
            self.streak = 0
        self.running_min = min(self.running_min, m)
        if self.streak >= self.window:
            return (f"relative change above {self.factor:g} x its running minimum "
                    f"for {self.window} iterations")
        return None


def ddm_solve(problem, config: SolverConfig = SolverConfig(),
              state: Optional[SolverState] = None, solvers: Optional[list] = None,
              executor: Optional[Executor] = None):
    """Iterate Robin-Robin steps until every body's trace change is below eps_u.

    Returns ``(state, report)``; divergence and singular subproblems are
    reported through ``report.outcome`` rather than raised.
    """
    t0 = time.perf_counter()
    disc = as_discretization(problem)
    if state is None:
        state = initial_state(disc, config.initial_trace)
    if solvers is None:
        solvers = make_solvers(disc)
    report = IterationReport(initial_energy=disc.energy(state.fields))
    guard = _DivergenceGuard(config)
    traces = [disc.contact_trace(state.fields, b) for b in range(disc.n_bodies)]

    for k in range(config.max_iterations):
        gamma = config.gamma_at(k)
        try:
            new = ddm_step(disc, state, gamma, config.strategy, solvers, executor)
        except LinearSolveError as exc:
            report.outcome = DIVERGED
            report.message = f"subdomain solve failed: {exc}"
            break
        new_traces = [disc.contact_trace(new.fields, b) for b in range(disc.n_bodies)]
        rhos = tuple(relative_change(n, o) for n, o in zip(new_traces, traces))
        new.gaps = compute_gaps(disc, new.fields, config.strategy)
        active = sum(g.n_active for g in new.gaps)
        energy = disc.energy(new.fields) if all(np.all(np.isfinite(u)) for u in new.fields) else float("nan")
        report.records.append(IterationRecord(new.k, rhos, energy, active, gamma))
        state, traces = new, new_traces
        if all(r <= config.eps_u for r in rhos):
            report.outcome = CONVERGED
            break
        reason = guard.check(rhos, state.fields)
        if reason:
            report.outcome = DIVERGED
            report.message = reason
            break
    else:
        report.outcome = MAX_ITERATIONS

    if not state.gaps:
        state.gaps = compute_gaps(disc, state.fields, config.strategy)
    report.pressures = [contact_pressure(p, state.fields[p.alpha], state.fields[p.beta])
                        for p in disc.pairs]
    report.seconds = time.perf_counter() - t0
    log.info("ddm_solve: %s after %d iterations (%.2fs)", report.outcome,
             report.iterations, report.seconds)
    return state, report


# --------------------------------------------------------------------------
# Monolithic semismooth Newton
# --------------------------------------------------------------------------


def _free_positions(disc: Discretization) -> list:
    off = disc.offsets()
    out = []
    for i, d in enumerate(disc.dofmaps):
        pos = -np.ones(d.n_dofs, dtype=np.int64)
        pos[d.free] = off[i] + np.arange(len(d.free))
        out.append(pos)
    return out


def newton_jacobian_addend(disc: Discretization, gaps: Sequence[GapState]) -> sp.csr_matrix:
    """C_k: chi * g'(t) * w (u_an + u_bn)(v_an + v_bn), lumped per paired node."""
    positions = _free_positions(disc)
    n = int(disc.offsets()[-1])
    rows, cols, vals = [], [], []
    for p, gs in zip(disc.pairs, gaps):
        coef = gs.chi * gs.g_prime * p.weights
        ia = positions[p.alpha][2 * p.nodes_alpha + p.comp_alpha]
        ib = positions[p.beta][2 * p.nodes_beta + p.comp_beta]
        sa, sb = p.sign_alpha, p.sign_beta
        act = coef != 0
        for (i, si) in ((ia, sa), (ib, sb)):
            for (j, sj) in ((ia, sa), (ib, sb)):
                ok = act & (i >= 0) & (j >= 0)
                rows.append(i[ok])
                cols.append(j[ok])
                vals.append(coef[ok] * si * sj)
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def reduced_residual(disc: Discretization, fields) -> np.ndarray:
    """Phi(u) - l on the stacked free dofs."""
    grads = disc.gradient(fields)
    return np.concatenate([g[d.free] for g, d in zip(grads, disc.dofmaps)])


def monolithic_newton(problem, config: SolverConfig = SolverConfig(),
                      state: Optional[SolverState] = None):
    """Semismooth Newton on the coupled bodies (gamma = 1).

    Stops on the same per-body trace criterion as the DDM.
    """
    t0 = time.perf_counter()
    disc = as_discretization(problem)
    if state is None:
        state = initial_state(disc, config.initial_trace)
    K = disc.reduced_stiffness()
    l_red = disc.reduced_load()
    x = disc.stack(state.fields)
    fields = disc.unstack(x)
    report = IterationReport(initial_energy=disc.energy(fields))
    traces = [disc.contact_trace(fields, b) for b in range(disc.n_bodies)]
    guard = _DivergenceGuard(config)

    for k in range(config.max_iterations):
        gaps = compute_gaps(disc, fields, ACTIVE_SET)
        C = newton_jacobian_addend(disc, gaps)
        # (K + C) x_new = (K + C) x - r(x) = C x + l - grad J(x)
        gj = disc.contact_gradients(fields)
        rhs = C @ x + l_red - np.concatenate([g[d.free] for g, d in zip(gj, disc.dofmaps)])
        try:
            x = factorize((K + C).tocsc()).solve(rhs)
        except LinearSolveError as exc:
            report.outcome = DIVERGED
            report.message = f"Newton system solve failed at iteration {k}: {exc}"
            break
        fields = disc.unstack(x)
        new_traces = [disc.contact_trace(fields, b) for b in range(disc.n_bodies)]
        rhos = tuple(relative_change(n, o) for n, o in zip(new_traces, traces))
        traces = new_traces
        new_gaps = compute_gaps(disc, fields, ACTIVE_SET)
        report.records.append(IterationRecord(k + 1, rhos, disc.energy(fields),
                                              sum(g.n_active for g in new_gaps), 1.0))
        if all(rr <= config.eps_u for rr in rhos):
            report.outcome = CONVERGED
            break
        reason = guard.check(rhos, fields)
        if reason:
            report.outcome = DIVERGED
            report.message = reason
            break
    else:
        report.outcome = MAX_ITERATIONS

    final = SolverState(fields, len(report.records), compute_gaps(disc, fields, ACTIVE_SET))
    report.pressures = [contact_pressure(p, fields[p.alpha], fields[p.beta]) for p in disc.pairs]
    report.seconds = time.perf_counter() - t0
    return final, report


# --------------------------------------------------------------------------
# Operators for the generic iteration
# --------------------------------------------------------------------------


def ddm_operators(problem, strategy: str = ACTIVE_SET):
    """Phi, y and the G_k callable that make ``abstract_iterate`` reproduce
    the DDM on stacked free dofs."""
    disc = as_discretization(problem)
    K = disc.reduced_stiffness()
    y = disc.reduced_load()
    positions = _free_positions(disc)
    n = K.shape[0]

    def phi(x):
        return reduced_residual(disc, disc.unstack(x)) + y

    def g_form(k, x):
        fields = disc.unstack(x)
        gaps = compute_gaps(disc, fields, strategy)
        diag = np.zeros(n)
        for p, gs in zip(disc.pairs, gaps):
            coef = robin_coefficients(p, gs)
            for side in (0, 1):
                nodes, comp, _ = p.side(side)
                idx = positions[p.body(side)][2 * nodes + comp]
                ok = idx >= 0
                np.add.at(diag, idx[ok], coef[ok])
        return (K + sp.diags(diag)).tocsc()

    return disc, phi, y, g_form


def newton_operators(problem):
    """Phi, y and G_k for the semismooth Newton special case."""
    disc = as_discretization(problem)
    K = disc.reduced_stiffness()
    y = disc.reduced_load()

    def phi(x):
        return reduced_residual(disc, disc.unstack(x)) + y

    def g_form(k, x):
        gaps = compute_gaps(disc, disc.unstack(x), ACTIVE_SET)
        return (K + newton_jacobian_addend(disc, gaps)).tocsc()

    return disc, phi, y, g_form
