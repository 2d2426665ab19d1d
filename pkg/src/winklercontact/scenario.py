"""The two-block grooved contact scenario and its structured meshes."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .contact import STRATEGIES
from .dd_solver import SolverConfig
from .model import (
    DIRICHLET_FULL,
    DIRICHLET_NORMAL,
    NEUMANN,
    Body,
    BodyMesh,
    IsotropicMaterial,
    LoadSpec,
    PairSpec,
    Problem,
    contact_tag,
    groove,
    power_law,
)

INTERFACE = contact_tag("S12")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    # geometry (cm) and mesh cells per body
    l: float = 4.0
    h: float = 1.0
    nx: int = 128
    ny: int = 32
    # material
    E: float = 2.1e5
    nu: float = 0.3
    # load (MPa) on the top edge of the upper body
    q: float = 10.0
    # power-law layer
    B: float = 2.5e-5
    a: float = 0.5
    # groove gap (cm)
    r: float = 5e-4
    b: float = 1.0
    # solver
    gamma: tuple = (0.6,)
    strategy: str = "active_set"
    eps_u: float = 1e-3
    max_iterations: int = 500
    initial_trace: float = 1e-4
    divergence_guard: float = 10.0
    seed: int = 0
    output_dir: str = "out"

    def validate(self) -> None:
        errors = []
        for name in ("l", "h", "E", "B", "b"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                errors.append(f"{name} must be > 0 (got {v})")
        for name in ("nx", "ny"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                errors.append(f"{name} must be a positive integer (got {v})")
        if not (0.0 <= self.nu < 0.5):
            errors.append(f"nu must lie in [0, 0.5) (got {self.nu})")
        if not (0.0 < self.a <= 1.0):
            errors.append(f"a must lie in (0, 1] (got {self.a})")
        if not np.isfinite(self.q):
            errors.append(f"q must be finite (got {self.q})")
        if not (np.isfinite(self.r) and self.r >= 0):
            errors.append(f"r must be >= 0 (got {self.r})")
        if len(self.gamma) == 0:
            errors.append("gamma schedule is empty")
        for g in self.gamma:
            if not (0.0 < g < 2.0):
                errors.append(f"gamma must lie in (0, 2) (got {g})")
        if self.strategy not in STRATEGIES:
            errors.append(f"strategy must be one of {STRATEGIES} (got {self.strategy!r})")
        if not self.eps_u > 0:
            errors.append(f"eps_u must be > 0 (got {self.eps_u})")
        if self.max_iterations < 1:
            errors.append(f"max_iterations must be >= 1 (got {self.max_iterations})")
        if not self.divergence_guard > 1:
            errors.append(f"divergence_guard must be > 1 (got {self.divergence_guard})")
        if errors:
            raise ConfigError(errors)

    @property
    def elements_per_body(self) -> int:
        return 2 * self.nx * self.ny

    def solver_config(self, **overrides) -> SolverConfig:
        gamma = self.gamma[0] if len(self.gamma) == 1 else tuple(self.gamma)
        kw = dict(gamma=gamma, strategy=self.strategy, eps_u=self.eps_u,
                  max_iterations=self.max_iterations, initial_trace=self.initial_trace,
                  divergence_guard=self.divergence_guard)
        kw.update(overrides)
        return SolverConfig(**kw)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def config_field_names() -> list:
    return [f.name for f in fields(ScenarioConfig)]


def rectangle_mesh(x0: float, y0: float, width: float, height: float, nx: int, ny: int,
                   tags: dict) -> BodyMesh:
    """Structured crossed-diagonal triangulation of a rectangle.

    The diagonal direction alternates between neighbouring cells.  ``tags``
    maps "bottom", "right", "top", "left" to edge tags.
    """
    xs = np.linspace(x0, x0 + width, nx + 1)
    ys = np.linspace(y0, y0 + height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            n00, n10 = nid(i, j), nid(i + 1, j)
            n01, n11 = nid(i, j + 1), nid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris += [(n00, n10, n11), (n00, n11, n01)]
            else:
                tris += [(n00, n10, n01), (n10, n11, n01)]

    edges, edge_tags = [], []
    for i in range(nx):
        edges.append((nid(i, 0), nid(i + 1, 0)))
        edge_tags.append(tags["bottom"])
    for j in range(ny):
        edges.append((nid(nx, j), nid(nx, j + 1)))
        edge_tags.append(tags["right"])
    for i in range(nx):
        edges.append((nid(i + 1, ny), nid(i, ny)))
        edge_tags.append(tags["top"])
    for j in range(ny):
        edges.append((nid(0, j + 1), nid(0, j)))
        edge_tags.append(tags["left"])
    return BodyMesh(nodes, np.array(tris), np.array(edges), edge_tags)


def generate_scenario(cfg: ScenarioConfig, law=None) -> Problem:
    """Two stacked blocks [0,l]x[0,h] (lower) and [0,l]x[h,2h] (upper).

    Lower bottom clamped, both right edges on rollers, load (0, -q) on the
    upper top edge, groove gap on the interface.
    """
    cfg.validate()
    mat = IsotropicMaterial(cfg.E, cfg.nu)
    lower = rectangle_mesh(0.0, 0.0, cfg.l, cfg.h, cfg.nx, cfg.ny, dict(
        bottom=DIRICHLET_FULL, right=DIRICHLET_NORMAL, top=INTERFACE, left=NEUMANN))
    upper = rectangle_mesh(0.0, cfg.h, cfg.l, cfg.h, cfg.nx, cfg.ny, dict(
        bottom=INTERFACE, right=DIRICHLET_NORMAL, top=NEUMANN, left=NEUMANN))
    top_edges = range(cfg.nx + cfg.ny, 2 * cfg.nx + cfg.ny)
    upper_loads = LoadSpec(tractions={i: (0.0, -cfg.q) for i in top_edges})
    pair = PairSpec(
        alpha=0, beta=1, tag_alpha=INTERFACE, tag_beta=INTERFACE,
        law=law if law is not None else power_law(cfg.B, cfg.a),
        gap=groove(cfg.r, cfg.b, cfg.l), name="S12",
    )
    return Problem(
        bodies=(Body(lower, mat), Body(upper, mat, upper_loads)),
        contact_pairs=(pair,),
    )
