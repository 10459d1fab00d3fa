"""Local SIPG blocks, loads and the element-wise L2 projection.

On a uniform mesh every non-interface element is a translate of one
reference rectangle, so its stiffness, mass and the coupling blocks of edges
between two such elements are computed once and scaled by ``beta``.
Interface elements and the edges touching them are integrated individually
with side-tagged rules.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SolverError
from .ife_basis import LocalSpace, build_local_space, standard_space
from .mesh import Classification, Mesh, build_charts, build_mesh, classify_elements
from .problems import InterfaceProblem
from .quadrature import QuadRule, cut_cell_rule, edge_rule, tensor_rule

SIGMA0 = 4.0


@dataclass
class LocalBlocks:
    stiffness: np.ndarray
    mass: np.ndarray
    load: Optional[np.ndarray] = None


@dataclass
class FaceBlocks:
    """``matrix`` couples ``elements`` (one or two); ``load`` is set on boundary edges."""

    edge: int
    elements: tuple
    matrix: np.ndarray
    sigma: float
    load: Optional[np.ndarray] = None


def penalty(m: int, sigma0: float, beta_e: float) -> float:
    return m * m * sigma0 * beta_e


def local_volume(space: LocalSpace, rule: QuadRule, beta) -> LocalBlocks:
    """Stiffness ``sum w beta grad phi_i . grad phi_j`` and mass on one element."""
    vals, grads = space.tabulate(rule.points, rule.side)
    b = np.where(rule.side < 0, beta[0], beta[1]) if rule.side is not None else np.full(len(rule), beta[0])
    wb = rule.weights * b
    S = np.einsum("q,qid,qjd->ij", wb, grads, grads)
    M = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
    return LocalBlocks(0.5 * (S + S.T), 0.5 * (M + M.T))


def volume_load(space: LocalSpace, rule: QuadRule, f: Callable) -> np.ndarray:
    vals, _ = space.tabulate(rule.points, rule.side, grad=False)
    return vals.T @ (rule.weights * f(rule.points, rule.side))


def _edge_traces(space, rule, normal, beta):
    vals, grads = space.tabulate(rule.points, rule.side)
    b = np.where(rule.side < 0, beta[0], beta[1])
    flux = b[:, None] * (grads @ normal)
    return vals, flux


def face_terms(edge: int, nodes, normal, spaces, m: int, sigma0: float, beta, rule: QuadRule,
               g: Optional[Callable] = None) -> FaceBlocks:
    """SIPG edge blocks ``-{beta grad u.n}[v] - {beta grad v.n}[u] + sigma/|e| [u][v]``.

    ``spaces`` holds the left element's space and, on interior edges, the right
    one.  Boundary edges use ``[v] = v`` and ``{beta grad v.n} = beta grad v.n``
    and, when ``g`` is given, also return ``<-beta grad v.n + sigma/|e| v, g>``.
    """
    length = float(np.linalg.norm(nodes[1] - nodes[0]))
    beta_e = float(np.max(np.where(rule.side < 0, beta[0], beta[1])))
    sigma = penalty(m, sigma0, beta_e)
    w = rule.weights
    vl, fl = _edge_traces(spaces[0], rule, normal, beta)
    if len(spaces) == 2 and spaces[1] is not None:
        vr, fr = _edge_traces(spaces[1], rule, normal, beta)
        U = np.concatenate([vl, -vr], axis=1)
        F = 0.5 * np.concatenate([fl, fr], axis=1)
        load = None
    else:
        U, F = vl, fl
        load = None
        if g is not None:
            gv = g(rule.points, rule.side)
            load = (-F + (sigma / length) * U).T @ (w * gv)
    WU = w[:, None] * U
    K = -F.T @ WU - WU.T @ F + (sigma / length) * (U.T @ WU)
    return FaceBlocks(edge, tuple(s for s in spaces if s is not None), 0.5 * (K + K.T), sigma, load)


def load_terms(space: LocalSpace, rule: QuadRule, f: Callable, boundary=()) -> np.ndarray:
    """Volume load plus the boundary contributions in ``boundary`` (FaceBlocks)."""
    out = volume_load(space, rule, f)
    for fb in boundary:
        if fb.load is not None:
            out = out + fb.load
    return out


# ---------------------------------------------------------------------------
# whole-mesh discretization


@dataclass
class Discretization:
    """Mesh, classification, local spaces and quadrature for one ``(problem, n, m)``."""

    problem: InterfaceProblem
    mesh: Mesh
    cls: Classification
    m: int
    charts: dict
    spaces: dict                 # element -> LocalSpace (interface elements only)
    volume_order: int
    edge_order: int
    _rules: dict = field(default_factory=dict, repr=False)
    _ref: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return (self.m + 1) ** 2

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_elements * self.dim

    def space(self, e: int) -> LocalSpace:
        if e in self.spaces:
            return self.spaces[e]
        return standard_space(self.mesh.element_rect(e), self.m, int(self.cls.side[e]))

    def volume_rule(self, e: int, order: Optional[int] = None) -> QuadRule:
        order = order or self.volume_order
        key = (e, order)
        if key not in self._rules:
            rect = self.mesh.element_rect(e)
            if self.cls.interface[e]:
                rule = cut_cell_rule(rect, self.problem.curve, self.cls.cuts[e], order)
            else:
                rule = tensor_rule(order, rect, int(self.cls.side[e]))
            self._rules[key] = rule
        return self._rules[key]

    def edge_side_of(self, ed: int):
        mesh, cls = self.mesh, self.cls
        for e in (mesh.edge_left[ed], mesh.edge_right[ed]):
            if e >= 0 and not cls.interface[e]:
                s = int(cls.side[e])
                return lambda x, s=s: np.full(len(x), s)
        e = int(mesh.edge_left[ed])
        chart = self.charts[e]
        return lambda x: np.where(chart.to_frenet(x).eta < 0, -1, 1)

    def edge_rule(self, ed: int) -> QuadRule:
        a, b = self.mesh.edge_nodes[ed]
        cuts = [t for t, _, _ in self.cls.edge_cuts.get(ed, [])]
        return edge_rule(a, b, cuts, self.edge_order, self.edge_side_of(ed))

    def is_standard_edge(self, ed: int) -> bool:
        l, r = self.mesh.edge_left[ed], self.mesh.edge_right[ed]
        return (not self.cls.interface[l] and (r < 0 or not self.cls.interface[r])
                and ed not in self.cls.edge_cuts)

    # reference blocks for non-interface elements, scaled by beta at use
    def reference(self):
        if self._ref:
            return self._ref
        mesh, m = self.mesh, self.m
        rect = mesh.element_rect(0)
        sp = standard_space(rect, m, -1)
        rule = tensor_rule(self.volume_order, rect, -1)
        blocks = local_volume(sp, rule, (1.0, 1.0))
        vals, _ = sp.tabulate(rule.points, grad=False)
        self._ref.update(stiffness=blocks.stiffness, mass=blocks.mass, vals=vals,
                         rule_offsets=rule.points - np.array([rect.x0, rect.y0]), weights=rule.weights)
        # interior edge prototypes: vertical (normal +x) and horizontal (normal +y)
        if mesh.nx > 1:
            self._ref["vertical"] = self._proto_edge(mesh.element_rect(0), mesh.element_rect(1),
                                                    np.array([1.0, 0.0]))
        if mesh.ny > 1:
            self._ref["horizontal"] = self._proto_edge(mesh.element_rect(0),
                                                      mesh.element_rect(mesh.nx), np.array([0.0, 1.0]))
        return self._ref

    def _proto_edge(self, rl, rr, normal):
        if normal[0] > 0:
            nodes = np.array([[rl.x1, rl.y0], [rl.x1, rl.y1]])
        else:
            nodes = np.array([[rl.x0, rl.y1], [rl.x1, rl.y1]])
        rule = edge_rule(nodes[0], nodes[1], [], self.edge_order, lambda x: np.full(len(x), -1))
        fb = face_terms(-1, nodes, normal, (standard_space(rl, self.m), standard_space(rr, self.m)),
                        self.m, 1.0, (1.0, 1.0), rule)
        # split into the unit-beta consistency part and the unit-sigma penalty part
        length = float(np.linalg.norm(nodes[1] - nodes[0]))
        vl, _ = standard_space(rl, self.m).tabulate(rule.points, grad=False)
        vr, _ = standard_space(rr, self.m).tabulate(rule.points, grad=False)
        U = np.concatenate([vl, -vr], axis=1)
        P = (U.T @ (rule.weights[:, None] * U)) / length
        P = 0.5 * (P + P.T)
        return {"consistency": fb.matrix - self.m * self.m * P, "penalty": P}


def discretize(problem: InterfaceProblem, n, m: int, volume_order: Optional[int] = None,
               edge_order: Optional[int] = None, ife: bool = True) -> Discretization:
    """Mesh the problem's domain and build the local spaces.

    ``ife=False`` gives standard polynomials on every element (interface
    elements still use side-tagged rules), which is plain SIPG.
    """
    if m < 1:
        raise SolverError("degree must be at least 1")
    mesh = build_mesh(problem.domain, n)
    cls = classify_elements(mesh, problem.curve, problem.level_set)
    charts = build_charts(mesh, problem.curve, cls)
    spaces = {}
    if ife:
        for e, chart in charts.items():
            spaces[e] = build_local_space(chart, m, problem.beta, mesh.element_rect(e))
    return Discretization(problem, mesh, cls, m, charts, spaces,
                          volume_order or m + 3, edge_order or m + 4)


def project_l2(disc: Discretization, u: Optional[Callable] = None) -> np.ndarray:
    """Element-wise L2 projection of ``u(x, side)`` (default: the exact solution)."""
    u = u or disc.problem.u
    mesh, S = disc.mesh, disc.dim
    coef = np.zeros((mesh.n_elements, S))
    ref = disc.reference()
    std = np.flatnonzero(~disc.cls.interface)
    if std.size:
        pts = mesh.element_origins()[std][:, None, :] + ref["rule_offsets"][None]
        side = np.broadcast_to(disc.cls.side[std][:, None], pts.shape[:2])
        rhs = (u(pts, side) * ref["weights"]) @ ref["vals"]
        coef[std] = np.linalg.solve(ref["mass"], rhs.T).T
    for e in disc.cls.interface_elements:
        sp = disc.space(e)
        rule = disc.volume_rule(e)
        vals, _ = sp.tabulate(rule.points, rule.side, grad=False)
        M = vals.T @ (rule.weights[:, None] * vals)
        rhs = vals.T @ (rule.weights * u(rule.points, rule.side))
        d = np.sqrt(np.diag(M))
        try:
            coef[e] = np.linalg.solve(M / np.outer(d, d), rhs / d) / d
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular mass matrix on element {e}") from exc
    return coef.ravel()
