"""Assembled form of a Problem, shared by the iterative solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .contact import ContactPair, build_pairing, contact_energy, contact_gradient
from .fem2d import DofMap, assemble_load, assemble_stiffness, build_dofmap
from .model import Problem


@dataclass(frozen=True, eq=False)
class Discretization:
    problem: Problem
    stiffness: tuple  # full (unconstrained) csr per body
    loads: tuple  # full load vector per body
    dofmaps: tuple
    pairs: tuple

    @property
    def n_bodies(self) -> int:
        return len(self.dofmaps)

    def zero_fields(self) -> list:
        return [np.zeros((d.n_nodes, 2)) for d in self.dofmaps]

    def pairs_of(self, body: int):
        """(pair, side) for each contact pair touching ``body``."""
        out = []
        for p in self.pairs:
            if p.alpha == body:
                out.append((p, 0))
            if p.beta == body:
                out.append((p, 1))
        return out

    def contact_trace(self, fields, body: int) -> np.ndarray:
        """Concatenated normal traces of ``body`` over all its contact pairs."""
        parts = [p.trace(fields[body], side) for p, side in self.pairs_of(body)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def elastic_energy(self, fields) -> float:
        total = 0.0
        for K, l, u in zip(self.stiffness, self.loads, fields):
            v = np.asarray(u).reshape(-1)
            total += 0.5 * v @ (K @ v) - l @ v
        return float(total)

    def contact_energy(self, fields) -> float:
        return float(sum(contact_energy(p, fields[p.alpha], fields[p.beta]) for p in self.pairs))

    def energy(self, fields) -> float:
        """F1 = A(u,u)/2 - L(u) + J(u)."""
        return self.elastic_energy(fields) + self.contact_energy(fields)

    def contact_gradients(self, fields) -> list:
        grads = [np.zeros(d.n_dofs) for d in self.dofmaps]
        for p in self.pairs:
            ua, ub = fields[p.alpha], fields[p.beta]
            grads[p.alpha] += contact_gradient(p, ua, ub, 0, self.dofmaps[p.alpha].n_dofs)
            grads[p.beta] += contact_gradient(p, ua, ub, 1, self.dofmaps[p.beta].n_dofs)
        return grads

    def gradient(self, fields) -> list:
        """Full-dof gradient of F1 per body: K u - l + grad J."""
        gj = self.contact_gradients(fields)
        return [K @ np.asarray(u).reshape(-1) - l + g
                for K, l, u, g in zip(self.stiffness, self.loads, fields, gj)]

    # -- stacked free-dof vectors -------------------------------------------

    def offsets(self) -> np.ndarray:
        sizes = [len(d.free) for d in self.dofmaps]
        return np.concatenate([[0], np.cumsum(sizes)])

    def stack(self, fields) -> np.ndarray:
        return np.concatenate([np.asarray(u).reshape(-1)[d.free]
                               for u, d in zip(fields, self.dofmaps)])

    def unstack(self, x: np.ndarray) -> list:
        off = self.offsets()
        out = []
        for i, d in enumerate(self.dofmaps):
            full = np.zeros(d.n_dofs)
            full[d.free] = x[off[i]:off[i + 1]]
            out.append(full.reshape(-1, 2))
        return out

    def reduced_stiffness(self) -> sp.csr_matrix:
        blocks = [K[d.free][:, d.free] for K, d in zip(self.stiffness, self.dofmaps)]
        return sp.block_diag(blocks, format="csr")

    def reduced_load(self) -> np.ndarray:
        return np.concatenate([l[d.free] for l, d in zip(self.loads, self.dofmaps)])


def discretize(problem: Problem) -> Discretization:
    dofmaps = tuple(build_dofmap(b.mesh) for b in problem.bodies)
    stiffness = tuple(assemble_stiffness(b.mesh, b.material, d)
                      for b, d in zip(problem.bodies, dofmaps))
    loads = tuple(assemble_load(b.mesh, b.loads, d) for b, d in zip(problem.bodies, dofmaps))
    pairs = tuple(build_pairing(problem, spec) for spec in problem.contact_pairs)
    return Discretization(problem, stiffness, loads, dofmaps, pairs)


def as_discretization(obj) -> Discretization:
    return obj if isinstance(obj, Discretization) else discretize(obj)


def total_energy(problem_or_disc, fields) -> float:
    return as_discretization(problem_or_disc).energy(fields)
