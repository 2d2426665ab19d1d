"""Property checks run by ``winkler verify``.

Each check returns a CheckResult with the measured value and the bound it
was held to.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .contact import ACTIVE_SET, FULL_ROBIN, NEUMANN, complementarity
from .dd_solver import (
    SolverConfig,
    abstract_iterate,
    ddm_operators,
    ddm_solve,
    ddm_step,
    initial_state,
    monolithic_newton,
)
from .fem2d import assemble_stiffness
from .linsolve import factorize
from .scenario import ScenarioConfig, generate_scenario, rectangle_mesh
from .system import Discretization, discretize


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    required: str
    detail: str = ""
    applicable: bool = True

    def line(self) -> str:
        status = "N/A " if not self.applicable else ("PASS" if self.passed else "FAIL")
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status}  {self.name}: measured {self.measured:.3e}, required {self.required}{extra}"


def random_fields(disc: Discretization, rng, scale=1e-4) -> list:
    """Random displacements (zero on constrained dofs) of contact magnitude."""
    out = []
    for d in disc.dofmaps:
        u = scale * rng.standard_normal(d.n_dofs)
        u[d.fixed] = 0.0
        out.append(u.reshape(-1, 2))
    return out


# --------------------------------------------------------------------------
# individual checks
# --------------------------------------------------------------------------


def check_law_monotone(laws, interval=(-1e-3, 1e-3), n=200) -> CheckResult:
    worst, names = np.inf, []
    for law in laws:
        w = np.linspace(interval[0], interval[1], n)
        g = law.g(w)
        dq = np.diff(g)
        worst = min(worst, float(np.min(dq)))
        rep = model.validate_law(law, interval, n)
        if not rep.monotone or rep.g_zero != 0.0:
            names.append(law.name)
    return CheckResult("law strict monotonicity, g(0)=0", not names, worst,
                       "> 0 (smallest sampled increment)",
                       ", ".join(f"violated by {n}" for n in names))


def check_contact_monotone(disc: Discretization, rng, pairs=100) -> CheckResult:
    worst = np.inf
    for _ in range(pairs):
        u = random_fields(disc, rng)
        v = random_fields(disc, rng)
        uv = [a + b for a, b in zip(u, v)]
        g1 = disc.contact_gradients(uv)
        g0 = disc.contact_gradients(u)
        val = sum(float((a - b) @ vv.reshape(-1)) for a, b, vv in zip(g1, g0, v))
        worst = min(worst, val)
    return CheckResult("contact residual monotonicity <J'(u+v)-J'(u), v>", worst >= -1e-12,
                       worst, ">= -1e-12")


def check_contact_lipschitz(disc: Discretization, rng, samples=50) -> CheckResult:
    worst_ratio = 0.0
    for _ in range(samples):
        u = random_fields(disc, rng)
        w = random_fields(disc, rng)
        uw = [a + b for a, b in zip(u, w)]
        dgrad = np.concatenate([a - b for a, b in zip(disc.contact_gradients(uw),
                                                      disc.contact_gradients(u))])
        nw = np.linalg.norm(np.concatenate([x.reshape(-1) for x in w]))
        # bound: max g' over the segment spanned by t(u) and t(u+w)
        bound = 0.0
        for p in disc.pairs:
            t0 = p.gap_argument(u[p.alpha], u[p.beta])
            t1 = p.gap_argument(uw[p.alpha], uw[p.beta])
            ts = np.linspace(np.minimum(t0, t1), np.maximum(t0, t1), 17)
            gmax = float(np.max(p.law.dg(np.minimum(ts, 0.0))))
            bound = max(bound, gmax * float(np.max(p.weights)))
        ratio = np.linalg.norm(dgrad) / (bound * nw) if bound > 0 else 0.0
        worst_ratio = max(worst_ratio, ratio)
    return CheckResult("contact residual Lipschitz bound", worst_ratio <= 1.0 + 1e-12,
                       worst_ratio, "<= 1 (ratio to max g' * max tributary)")


def gradient_check(disc: Discretization, rng, states=10, directions=3,
                   rel_step=1e-4) -> float:
    """Worst relative error between the analytic gradient of F1 and central
    differences along random directions."""
    worst = 0.0
    for _ in range(states):
        u = random_fields(disc, rng)
        grad = np.concatenate([g[d.free] for g, d in zip(disc.gradient(u), disc.dofmaps)])
        x = disc.stack(u)
        for _ in range(directions):
            v = rng.standard_normal(x.size)
            v /= np.linalg.norm(v)
            h = rel_step * np.linalg.norm(x) / np.sqrt(x.size)
            fp = disc.energy(disc.unstack(x + h * v))
            fm = disc.energy(disc.unstack(x - h * v))
            fd = (fp - fm) / (2 * h)
            an = float(grad @ v)
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
    return worst


def check_gradient(disc, rng) -> CheckResult:
    err = gradient_check(disc, rng)
    return CheckResult("energy gradient vs central differences", err <= 1e-5, err, "<= 1e-5")


def patch_test_error(nx=4, ny=3, mat=None) -> float:
    """Impose a linear field on the boundary of a rectangle and return the
    largest interior deviation from it."""
    mat = mat or model.IsotropicMaterial(2.1e5, 0.3)
    mesh = rectangle_mesh(0.0, 0.0, 2.0, 1.5, nx, ny, dict(
        bottom=model.DIRICHLET_FULL, right=model.DIRICHLET_FULL,
        top=model.DIRICHLET_FULL, left=model.DIRICHLET_FULL))
    K = assemble_stiffness(mesh, mat)
    A = np.array([[1e-3, -2e-4], [3e-4, 5e-4]])
    c = np.array([1e-4, -2e-4])
    exact = mesh.nodes @ A.T + c
    on_boundary = np.zeros(mesh.n_nodes, dtype=bool)
    on_boundary[mesh.edges.ravel()] = True
    bd = np.flatnonzero(np.repeat(on_boundary, 2))
    it = np.flatnonzero(~np.repeat(on_boundary, 2))
    ub = exact.reshape(-1)[bd]
    Kii = K[it][:, it].tocsc()
    Kib = K[it][:, bd]
    ui = factorize(Kii).solve(-(Kib @ ub), tol=1e-12)
    return float(np.max(np.abs(ui - exact.reshape(-1)[it])) / np.max(np.abs(exact)))


def check_patch() -> CheckResult:
    err = patch_test_error()
    return CheckResult("patch test (linear field reproduced)", err <= 1e-12, err, "<= 1e-12 relative")


def rigid_mode_residual(disc: Discretization) -> float:
    worst = 0.0
    for K, body in zip(disc.stiffness, disc.problem.bodies):
        x, y = body.mesh.nodes[:, 0], body.mesh.nodes[:, 1]
        modes = [np.column_stack([np.ones_like(x), np.zeros_like(x)]),
                 np.column_stack([np.zeros_like(x), np.ones_like(x)]),
                 np.column_stack([-y, x])]
        scale = abs(K).max()
        for m in modes:
            v = m.reshape(-1)
            worst = max(worst, float(np.max(np.abs(K @ v))) / (scale * np.max(np.abs(v))))
    return worst


def check_rigid_modes(disc) -> CheckResult:
    err = rigid_mode_residual(disc)
    return CheckResult("rigid motions in stiffness nullspace", err <= 1e-12, err, "<= 1e-12 relative")


def trace_rel_error(disc, a, b) -> float:
    ta = np.concatenate([disc.contact_trace(a, k) for k in range(disc.n_bodies)])
    tb = np.concatenate([disc.contact_trace(b, k) for k in range(disc.n_bodies)])
    return float(np.max(np.abs(ta - tb)) / np.max(np.abs(tb)))


def newton_reference(disc, eps=1e-13):
    state, report = monolithic_newton(disc, SolverConfig(eps_u=eps, max_iterations=100))
    if not report.converged:
        raise RuntimeError(f"Newton oracle did not converge: {report.outcome} {report.message}")
    return state, report


def check_fixed_point(disc, ref_state) -> CheckResult:
    new = ddm_step(disc, ref_state, 0.6, ACTIVE_SET)
    err = trace_rel_error(disc, new.fields, ref_state.fields)
    return CheckResult("fixed point: ddm_step leaves the solution unchanged", err <= 1e-8, err,
                       "<= 1e-8 relative")


def check_oracle_equivalence(disc, ref_state, gamma=0.6, eps=1e-11) -> list:
    results = []
    for strategy in (NEUMANN, FULL_ROBIN, ACTIVE_SET):
        state, rep = ddm_solve(disc, SolverConfig(gamma=gamma, strategy=strategy, eps_u=eps,
                                                  max_iterations=5000))
        if not rep.converged:
            results.append(CheckResult(f"oracle equivalence ({strategy})", True, float("nan"),
                                       "<= 1e-6 relative",
                                       f"strategy does not converge: {rep.outcome} {rep.message}"[:160],
                                       applicable=False))
            continue
        err = trace_rel_error(disc, state.fields, ref_state.fields)
        results.append(CheckResult(f"oracle equivalence ({strategy})", err <= 1e-6, err,
                                   "<= 1e-6 relative", f"{rep.iterations} iterations"))
    return results


def check_complementarity(disc, state, q) -> CheckResult:
    worst = 0.0
    ok = True
    for p in disc.pairs:
        rep = complementarity(p, state.fields[p.alpha], state.fields[p.beta], q)
        ok &= rep.ok
        worst = max(worst, rep.max_product)
    return CheckResult("complementarity at convergence", ok, worst, f"<= {1e-8 * abs(q):.1e} (1e-8 q)")


def scalar_window(a=3.0, g=2.0, y=1.5, factors=(0.1, 1.0, 1.9, 2.2), max_k=5000) -> dict:
    """Convergence of the scalar iteration for gamma = f * g / a."""
    out = {}
    for f in factors:
        res = abstract_iterate(lambda u: a * u, [y], g, f * g / a, [0.0], tol=1e-13, max_k=max_k)
        out[f] = res.converged and abs(res.solution[0] - y / a) <= 1e-10 * abs(y / a)
    return out


def check_scalar_window() -> CheckResult:
    out = scalar_window()
    ok = out[0.1] and out[1.0] and out[1.9] and not out[2.2]
    return CheckResult("scalar gamma window (0, 2g/a)", ok, float(sum(out.values())),
                       "converge at 0.1, 1.0, 1.9; diverge at 2.2",
                       ", ".join(f"{k}:{'conv' if v else 'div'}" for k, v in out.items()))


def check_specialization(disc, rng, steps=3) -> CheckResult:
    _, phi, y, g_form = ddm_operators(disc, ACTIVE_SET)
    state = initial_state(disc)
    x0 = disc.stack(state.fields)
    res = abstract_iterate(phi, y, g_form, 0.6, x0, tol=0.0, max_k=steps)
    worst = 0.0
    for k in range(steps):
        state = ddm_step(disc, state, 0.6, ACTIVE_SET)
        xd = disc.stack(state.fields)
        xa = res.iterates[k + 1]
        worst = max(worst, float(np.max(np.abs(xd - xa)) / np.max(np.abs(xa))))
    return CheckResult("ddm_step equals generic iteration", worst <= 1e-10, worst, "<= 1e-10 relative")


def run_all(cfg: ScenarioConfig, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    problem = generate_scenario(cfg)
    disc = discretize(problem)
    laws = [model.power_law(B, a) for B in (1e-6, 1e-5, 2.5e-5, 2e-4) for a in (0.1, 0.3, 0.5, 0.8, 1.0)]
    results = [
        check_law_monotone(laws),
        check_contact_monotone(disc, rng),
        check_contact_lipschitz(disc, rng),
        check_gradient(disc, rng),
        check_patch(),
        check_rigid_modes(disc),
        check_scalar_window(),
        check_specialization(disc, rng),
    ]
    ref_state, _ = newton_reference(disc)
    results.append(check_fixed_point(disc, ref_state))
    results.extend(check_oracle_equivalence(disc, ref_state))
    results.append(check_complementarity(disc, ref_state, cfg.q))
    return results
