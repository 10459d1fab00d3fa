"""Global SIPG system, sparse solve, errors and convergence rates."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import (SIGMA0, Discretization, face_terms, local_volume, volume_load)
from .errors import SolverError
from .ife_basis import standard_space
from .quadrature import tensor_rule

RESIDUAL_TOL = 1e-10


@dataclass
class GlobalSystem:
    """Element-major DG system: element ``e`` owns dofs ``e*dim .. (e+1)*dim - 1``."""

    disc: Discretization
    matrix: sps.csr_matrix
    rhs: np.ndarray
    solution: Optional[np.ndarray] = None
    residual: float = np.nan
    solve_seconds: float = 0.0
    assemble_seconds: float = 0.0

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def dofs(self, e: int) -> np.ndarray:
        d = self.disc.dim
        return np.arange(e * d, (e + 1) * d)


class _Coo:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add_blocks(self, dofs, blocks):
        """``dofs`` (B, k) index sets, ``blocks`` (B, k, k)."""
        dofs = np.asarray(dofs)
        k = dofs.shape[1]
        self.rows.append(np.repeat(dofs, k, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, k)).ravel())
        self.vals.append(np.asarray(blocks).ravel())

    def matrix(self, n):
        if not self.rows:
            return sps.csr_matrix((n, n))
        return sps.coo_matrix((np.concatenate(self.vals),
                               (np.concatenate(self.rows), np.concatenate(self.cols))),
                              shape=(n, n)).tocsr()


def assemble_system(disc: Discretization, sigma0: float = SIGMA0) -> GlobalSystem:
    t0 = time.perf_counter()
    prob, mesh, cls = disc.problem, disc.mesh, disc.cls
    S = disc.dim
    n = disc.n_dofs
    local = np.arange(S)
    coo = _Coo()
    rhs = np.zeros(n)
    ref = disc.reference()
    beta_el = np.where(cls.side < 0, prob.beta_minus, prob.beta_plus)

    std = np.flatnonzero(~cls.interface)
    if std.size:
        dofs = std[:, None] * S + local
        coo.add_blocks(dofs, beta_el[std][:, None, None] * ref["stiffness"][None])
        pts = mesh.element_origins()[std][:, None, :] + ref["rule_offsets"][None]
        side = np.broadcast_to(cls.side[std][:, None], pts.shape[:2])
        rhs[dofs] += (prob.f(pts, side) * ref["weights"]) @ ref["vals"]
    for e in cls.interface_elements:
        sp, rule = disc.space(e), disc.volume_rule(e)
        coo.add_blocks([e * S + local], [local_volume(sp, rule, prob.beta).stiffness])
        rhs[e * S + local] += volume_load(sp, rule, prob.f)

    fast = {"vertical": [], "horizontal": []}
    for ed in range(mesh.n_edges):
        l, r = int(mesh.edge_left[ed]), int(mesh.edge_right[ed])
        nrm = mesh.edge_normal[ed]
        if r >= 0 and disc.is_standard_edge(ed) and cls.side[l] == cls.side[r]:
            fast["vertical" if nrm[0] != 0 else "horizontal"].append(ed)
            continue
        rule = disc.edge_rule(ed)
        if r >= 0:
            fb = face_terms(ed, mesh.edge_nodes[ed], nrm, (disc.space(l), disc.space(r)),
                            disc.m, sigma0, prob.beta, rule)
            coo.add_blocks([np.concatenate([l * S + local, r * S + local])], [fb.matrix])
        else:
            fb = face_terms(ed, mesh.edge_nodes[ed], nrm, (disc.space(l),), disc.m, sigma0,
                            prob.beta, rule, g=prob.g)
            coo.add_blocks([l * S + local], [fb.matrix])
            rhs[l * S + local] += fb.load
    for kind, eds in fast.items():
        if not eds:
            continue
        eds = np.array(eds)
        blk = ref[kind]["consistency"] + disc.m**2 * sigma0 * ref[kind]["penalty"]
        l, r = mesh.edge_left[eds], mesh.edge_right[eds]
        dofs = np.concatenate([l[:, None] * S + local, r[:, None] * S + local], axis=1)
        coo.add_blocks(dofs, beta_el[l][:, None, None] * blk[None])
    A = coo.matrix(n)
    return GlobalSystem(disc, A, rhs, assemble_seconds=time.perf_counter() - t0)


def solve(system: GlobalSystem, tol: float = RESIDUAL_TOL) -> GlobalSystem:
    """Direct sparse solve of the Jacobi-scaled system, with a residual check."""
    t0 = time.perf_counter()
    A, f = system.matrix, system.rhs
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("non-positive diagonal entry: matrix is not positive definite")
    D = sps.diags(1.0 / np.sqrt(d))
    As = (D @ A @ D).tocsc()
    try:
        # symmetric ordering without pivoting suits the SPD system
        lu = spla.splu(As, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError:
        try:
            lu = spla.splu(As)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
    y = lu.solve(D @ f)
    c = D @ y
    res = np.linalg.norm(A @ c - f)
    fn = np.linalg.norm(f)
    rel = res / fn if fn > 0 else res
    if rel > tol:
        # one step of iterative refinement before giving up
        c = c + D @ lu.solve(D @ (f - A @ c))
        res = np.linalg.norm(A @ c - f)
        rel = res / fn if fn > 0 else res
    if not rel <= tol:
        raise SolverError(f"relative residual {rel:.3e} exceeds {tol:.1e}")
    system.solution = c
    system.residual = float(rel)
    system.solve_seconds = time.perf_counter() - t0
    return system


def assemble_and_solve(disc: Discretization, sigma0: float = SIGMA0, tol: float = RESIDUAL_TOL):
    return solve(assemble_system(disc, sigma0), tol)


# ---------------------------------------------------------------------------
# errors


@dataclass(frozen=True)
class ErrorReport:
    rel_l2: float
    rel_h1: float
    l2: float
    h1: float
    per_side: dict = field(default_factory=dict)   # side -> (l2, h1) absolute
    order: int = 0


def compute_error(disc: Discretization, coef, order: Optional[int] = None) -> ErrorReport:
    """Relative L2 error and broken H1-seminorm error of ``coef`` against the exact solution."""
    prob, mesh, cls = disc.problem, disc.mesh, disc.cls
    order = order or disc.volume_order
    S = disc.dim
    C = np.asarray(coef).reshape(mesh.n_elements, S)
    acc = {s: np.zeros(4) for s in (-1, 1)}   # err_l2^2, err_h1^2, u_l2^2, u_h1^2

    def accumulate(side, w, uh, gh, u, gu):
        for s in (-1, 1):
            k = side == s
            if not np.any(k):
                continue
            acc[s] += [np.sum(w[k] * (uh[k] - u[k]) ** 2),
                       np.sum(w[k] * np.sum((gh[k] - gu[k]) ** 2, axis=-1)),
                       np.sum(w[k] * u[k] ** 2),
                       np.sum(w[k] * np.sum(gu[k] ** 2, axis=-1))]

    std = np.flatnonzero(~cls.interface)
    if std.size:
        rect = mesh.element_rect(0)
        rule = tensor_rule(order, rect)
        vals, grads = standard_space(rect, disc.m).tabulate(rule.points)
        off = rule.points - np.array([rect.x0, rect.y0])
        pts = mesh.element_origins()[std][:, None, :] + off[None]
        side = np.broadcast_to(cls.side[std][:, None], pts.shape[:2])
        uh = C[std] @ vals.T
        gh = np.einsum("es,qsd->eqd", C[std], grads)
        w = np.broadcast_to(rule.weights, uh.shape)
        accumulate(side.ravel(), w.ravel(), uh.ravel(), gh.reshape(-1, 2),
                   prob.u(pts, side).ravel(), prob.grad_u(pts, side).reshape(-1, 2))
    for e in cls.interface_elements:
        rule = disc.volume_rule(e, order)
        vals, grads = disc.space(e).tabulate(rule.points, rule.side)
        accumulate(rule.side, rule.weights, vals @ C[e], np.einsum("qsd,s->qd", grads, C[e]),
                   prob.u(rule.points, rule.side), prob.grad_u(rule.points, rule.side))
    tot = acc[-1] + acc[1]
    l2, h1 = np.sqrt(tot[0]), np.sqrt(tot[1])
    return ErrorReport(float(l2 / np.sqrt(tot[2])), float(h1 / np.sqrt(tot[3])), float(l2), float(h1),
                       {s: (float(np.sqrt(acc[s][0])), float(np.sqrt(acc[s][1]))) for s in acc}, order)


# ---------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class RateFit:
    slope: float
    pairwise: tuple
    r2: float


def convergence_rates(records) -> RateFit:
    """Least-squares slope of ``log(error)`` against ``log(h)`` plus pairwise rates."""
    rec = sorted(((float(h), float(e)) for h, e in records), reverse=True)
    if len(rec) < 3:
        raise SolverError("need at least three (h, error) records")
    h = np.array([r[0] for r in rec])
    err = np.array([r[1] for r in rec])
    if len(np.unique(h)) != len(h):
        raise SolverError("mesh sizes must be distinct")
    if np.any(err <= 0):
        raise SolverError("errors must be positive")
    x, y = np.log(h), np.log(err)
    slope, icpt = np.polyfit(x, y, 1)
    fit = slope * x + icpt
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - fit) ** 2) / ss if ss > 0 else 1.0
    pair = tuple(float(v) for v in np.diff(y) / np.diff(x))
    return RateFit(float(slope), pair, float(r2))
