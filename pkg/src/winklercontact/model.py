"""Problem definition: materials, Winkler laws, gaps, meshes and loads.

Units are cm for lengths and MPa for stresses throughout, so nodal forces
carry MPa*cm (per unit thickness).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence, Union

import numpy as np

DIRICHLET_FULL = "dirichlet_full"
DIRICHLET_NORMAL = "dirichlet_normal"
NEUMANN = "neumann"
CONTACT_PREFIX = "contact:"

ScalarFn = Callable[[np.ndarray], np.ndarray]


class ModelError(ValueError):
    """Raised when a problem description violates its invariants."""


def contact_tag(name: str) -> str:
    return CONTACT_PREFIX + name


def is_contact_tag(tag: str) -> bool:
    return tag.startswith(CONTACT_PREFIX)


# --------------------------------------------------------------------------
# Materials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IsotropicMaterial:
    young_modulus: float
    poisson_ratio: float

    def __post_init__(self):
        if not np.isfinite(self.young_modulus) or self.young_modulus <= 0:
            raise ModelError(f"young_modulus must be > 0, got {self.young_modulus}")
        if not (0.0 <= self.poisson_ratio < 0.5):
            raise ModelError(
                f"poisson_ratio must lie in [0, 0.5), got {self.poisson_ratio}"
            )


def plane_strain_matrix(mat: IsotropicMaterial) -> np.ndarray:
    """Return the 3x3 plane-strain matrix D mapping (e11, e22, 2*e12) to
    (s11, s22, s12)."""
    E, nu = mat.young_modulus, mat.poisson_ratio
    # IsotropicMaterial already validates, but D is also called on raw tuples
    # in a few places through duck typing.
    if E <= 0 or not (0.0 <= nu < 0.5):
        raise ModelError(f"invalid material (E={E}, nu={nu})")
    c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return c * np.array(
        [
            [1.0 - nu, nu, 0.0],
            [nu, 1.0 - nu, 0.0],
            [0.0, 0.0, (1.0 - 2.0 * nu) / 2.0],
        ]
    )


# --------------------------------------------------------------------------
# Winkler laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WinklerLaw:
    """Normal response of a Winkler cover, stress as a function of compression.

    ``response`` and ``derivative`` must accept and return numpy arrays.
    ``antiderivative``, when given, is the closed form of
    ``z -> int_0^z response``; otherwise it is integrated numerically.
    """

    response: ScalarFn
    derivative: ScalarFn
    lipschitz_bound: Optional[float] = None
    antiderivative: Optional[ScalarFn] = None
    name: str = "custom"

    def g(self, w):
        return self.response(np.asarray(w, dtype=float))

    def dg(self, w):
        return self.derivative(np.asarray(w, dtype=float))


def _power_response(w, scale, inv_a):
    w = np.asarray(w, dtype=float)
    return scale * np.sign(w) * np.abs(w) ** inv_a


def _power_derivative(w, scale, inv_a):
    w = np.asarray(w, dtype=float)
    if inv_a == 1.0:
        return np.full_like(w, scale)
    aw = np.abs(w)
    # 0 ** negative is inf; a < 1 means inv_a - 1 > 0 so this stays finite
    return scale * inv_a * aw ** (inv_a - 1.0)


def _power_antiderivative(z, scale, inv_a):
    z = np.asarray(z, dtype=float)
    return scale * np.abs(z) ** (inv_a + 1.0) / (inv_a + 1.0)


def power_law(B: float, a: float) -> WinklerLaw:
    """Power-law cover: g(w) = B**(-1/a) * sgn(w) * |w|**(1/a)."""
    if not np.isfinite(B) or B <= 0:
        raise ModelError(f"compliance B must be > 0, got {B}")
    if not (0.0 < a <= 1.0):
        raise ModelError(f"exponent a must lie in (0, 1], got {a}")
    scale = B ** (-1.0 / a)
    inv_a = 1.0 / a
    return WinklerLaw(
        response=partial(_power_response, scale=scale, inv_a=inv_a),
        derivative=partial(_power_derivative, scale=scale, inv_a=inv_a),
        lipschitz_bound=scale if a == 1.0 else None,
        antiderivative=partial(_power_antiderivative, scale=scale, inv_a=inv_a),
        name=f"power(B={B:g}, a={a:g})",
    )


def eval_g_minus(law: WinklerLaw, z) -> np.ndarray:
    """Truncated response: 0 where z >= 0, g(z) where z < 0."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    neg = z < 0
    if np.any(neg):
        out[neg] = law.g(z[neg])
    return out


def eval_dg(law: WinklerLaw, z) -> np.ndarray:
    return np.asarray(law.dg(z), dtype=float)


def integral_g_minus(law: WinklerLaw, t) -> np.ndarray:
    """int_0^t g_minus(z) dz, which is >= 0 for every t."""
    from scipy.integrate import quad

    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    neg = t < 0
    if not np.any(neg):
        return out
    if law.antiderivative is not None:
        # G(t) - G(0), and G(0) = 0 for the closed forms we ship
        out[neg] = law.antiderivative(t[neg]) - law.antiderivative(np.zeros(1))[0]
    else:
        for i in np.flatnonzero(neg):
            val, _ = quad(lambda z: float(law.g(np.array([z]))[0]), 0.0, t[i],
                          epsabs=0.0, epsrel=1e-12, limit=200)
            out[i] = val
    return out


@dataclass
class LawValidation:
    monotone: bool
    g_zero: float
    empirical_lipschitz: float
    lipschitz_ok: bool
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_law(law: WinklerLaw, interval: Sequence[float], n_samples: int = 100
                 ) -> LawValidation:
    """Sample a law for strict monotonicity and its difference quotients.

    Problems are reported in ``violations``; nothing is raised for a bad law.
    """
    w_min, w_max = float(interval[0]), float(interval[1])
    if not w_min < w_max:
        raise ValueError("interval must satisfy w_min < w_max")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    w = np.linspace(w_min, w_max, n_samples)
    g = np.asarray(law.g(w), dtype=float)
    violations = []

    dg = np.diff(g)
    dw = np.diff(w)
    monotone = bool(np.all(dg > 0))
    if not monotone:
        bad = int(np.argmax(dg <= 0))
        violations.append(
            f"not strictly increasing: g({w[bad]:.6g})={g[bad]:.6g} >= "
            f"g({w[bad + 1]:.6g})={g[bad + 1]:.6g}"
        )
    g0 = float(law.g(np.zeros(1))[0])
    if g0 != 0.0:
        violations.append(f"g(0) = {g0:.6g}, expected 0")

    lip = float(np.max(np.abs(dg) / dw))
    lip_ok = True
    if law.lipschitz_bound is not None and lip > law.lipschitz_bound * (1 + 1e-12):
        lip_ok = False
        violations.append(
            f"difference quotient {lip:.6g} exceeds lipschitz_bound "
            f"{law.lipschitz_bound:.6g}"
        )
    return LawValidation(monotone, g0, lip, lip_ok, violations)


# --------------------------------------------------------------------------
# Gaps
# --------------------------------------------------------------------------


def groove_gap(x1, r: float, b: float, l: float):
    """Gap of a groove of depth r and half-width b centred at x1 = l."""
    if b <= 0:
        raise ModelError(f"groove half-width must be > 0, got {b}")
    x1 = np.asarray(x1, dtype=float)
    s = np.maximum(0.0, 1.0 - (x1 - l) ** 2 / b**2)
    return r * s**1.5


def groove(r: float, b: float, l: float) -> Callable:
    return partial(groove_gap, r=r, b=b, l=l)


def _constant_gap(x1, value):
    return np.full_like(np.asarray(x1, dtype=float), value)


def constant_gap(value: float) -> Callable:
    return partial(_constant_gap, value=value)


# --------------------------------------------------------------------------
# Meshes, loads, problems
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BodyMesh:
    """P1 triangulation with tagged boundary edges.

    ``edges`` is an (m, 2) array of node indices and ``edge_tags`` the tag
    of each row.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tags: tuple

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_tags", tuple(self.edge_tags))
        self._validate()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def edges_with_tag(self, tag: str) -> np.ndarray:
        mask = np.array([t == tag for t in self.edge_tags], dtype=bool)
        return self.edges[mask]

    def tags(self) -> set:
        return set(self.edge_tags)

    def _validate(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ModelError("nodes must be an (n, 2) array")
        if not np.all(np.isfinite(self.nodes)):
            raise ModelError("node coordinates must be finite")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ModelError("triangles must be an (m, 3) array")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= self.n_nodes
        ):
            raise ModelError("triangle references a nonexistent node")
        areas = self.signed_areas()
        if np.any(areas <= 0):
            bad = int(np.argmax(areas <= 0))
            raise ModelError(
                f"triangle {bad} is not positively oriented (area {areas[bad]:.3g})"
            )
        if len(self.edge_tags) != len(self.edges):
            raise ModelError("edge_tags must have one entry per edge")

        boundary = _boundary_edge_set(self.triangles)
        seen = set()
        for (a, b), tag in zip(self.edges, self.edge_tags):
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ModelError(f"boundary edge {key} carries more than one tag")
            if key not in boundary:
                raise ModelError(f"edge {key} is not on the mesh boundary")
            if tag not in (DIRICHLET_FULL, DIRICHLET_NORMAL, NEUMANN) and not is_contact_tag(tag):
                raise ModelError(f"unknown edge tag {tag!r}")
            seen.add(key)
        missing = boundary - seen
        if missing:
            raise ModelError(f"{len(missing)} boundary edges are untagged, e.g. {min(missing)}")
        if not any(t in (DIRICHLET_FULL, DIRICHLET_NORMAL) for t in self.edge_tags):
            raise ModelError("body has no Dirichlet-tagged edge")


def _boundary_edge_set(triangles: np.ndarray) -> set:
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return {(int(a), int(b)) for a, b in uniq[counts == 1]}


def edge_outward_normal(mesh: BodyMesh, edge: Sequence[int]) -> np.ndarray:
    """Outward unit normal of a boundary edge, found from its triangle."""
    a, b = int(edge[0]), int(edge[1])
    pa, pb = mesh.nodes[a], mesh.nodes[b]
    t = pb - pa
    n = np.array([t[1], -t[0]]) / np.hypot(*t)
    tri = np.flatnonzero(
        np.any(mesh.triangles == a, axis=1) & np.any(mesh.triangles == b, axis=1)
    )
    third = [k for k in mesh.triangles[tri[0]] if k not in (a, b)][0]
    if np.dot(mesh.nodes[third] - pa, n) > 0:
        n = -n
    return n


BodyForce = Union[Sequence[float], Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class LoadSpec:
    """Body force density (MPa/cm) and per-edge tractions (MPa).

    ``body_force`` is a constant 2-vector or a callable mapping an (n, 2)
    array of points to (n, 2) force densities. ``tractions`` maps an edge
    row index of the mesh to a constant traction vector.
    """

    body_force: BodyForce = (0.0, 0.0)
    tractions: dict = field(default_factory=dict)

    def __post_init__(self):
        if not callable(self.body_force):
            bf = np.asarray(self.body_force, dtype=float)
            if bf.shape != (2,) or not np.all(np.isfinite(bf)):
                raise ModelError("body_force must be a finite 2-vector")
        for k, v in self.tractions.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (2,) or not np.all(np.isfinite(v)):
                raise ModelError(f"traction on edge {k} must be a finite 2-vector")


@dataclass(frozen=True, eq=False)
class Body:
    mesh: BodyMesh
    material: IsotropicMaterial
    loads: LoadSpec = field(default_factory=LoadSpec)


@dataclass(frozen=True, eq=False)
class PairSpec:
    """Descriptor of a contact pair between bodies alpha < beta."""

    alpha: int
    beta: int
    tag_alpha: str
    tag_beta: str
    law: WinklerLaw
    gap: Callable
    name: str = ""


@dataclass(frozen=True, eq=False)
class Problem:
    bodies: tuple
    contact_pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "contact_pairs", tuple(self.contact_pairs))
        n = len(self.bodies)
        seen_pairs = set()
        used_tags = {}
        for i, p in enumerate(self.contact_pairs):
            if not (0 <= p.alpha < p.beta < n):
                raise ModelError(
                    f"pair {i}: body indices must satisfy 0 <= alpha < beta < {n}, "
                    f"got ({p.alpha}, {p.beta})"
                )
            key = (p.alpha, p.beta)
            if key in seen_pairs:
                raise ModelError(f"duplicate contact pair {key}")
            seen_pairs.add(key)
            for body, tag in ((p.alpha, p.tag_alpha), (p.beta, p.tag_beta)):
                if not is_contact_tag(tag):
                    raise ModelError(f"pair {i}: {tag!r} is not a contact tag")
                if tag not in self.bodies[body].mesh.tags():
                    raise ModelError(f"pair {i}: body {body} has no edges tagged {tag!r}")
                if (body, tag) in used_tags:
                    raise ModelError(f"contact tag {tag!r} of body {body} used by two pairs")
                used_tags[(body, tag)] = i
        for b, body in enumerate(self.bodies):
            for tag in body.mesh.tags():
                if is_contact_tag(tag) and (b, tag) not in used_tags:
                    raise ModelError(f"contact tag {tag!r} of body {b} is not referenced by any pair")

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)
