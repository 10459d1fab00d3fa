"""Gauss rules on intervals, rectangles, cut elements and cut edges."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import geometry
from .errors import MeshError, MultiCutError
from .geometry import Curve
from .problems import Rectangle


@dataclass(frozen=True)
class QuadRule:
    """Nodes, positive weights and optional side labels (``-1``/``+1``)."""

    points: np.ndarray
    weights: np.ndarray
    side: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))

    def restrict(self, s):
        mask = self.side == s
        return QuadRule(self.points[mask], self.weights[mask], self.side[mask])

    @staticmethod
    def concat(rules):
        rules = [r for r in rules if len(r)]
        if not rules:
            return QuadRule(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int))
        side = None
        if all(r.side is not None for r in rules):
            side = np.concatenate([r.side for r in rules])
        return QuadRule(np.concatenate([r.points for r in rules]),
                        np.concatenate([r.weights for r in rules]), side)


def gauss_rule(n: int, interval=(-1.0, 1.0)) -> QuadRule:
    """``n``-point Gauss-Legendre rule mapped onto ``interval``."""
    if n < 1:
        raise ValueError("need at least one point")
    x, w = np.polynomial.legendre.leggauss(n)
    a, b = interval
    half = 0.5 * (b - a)
    return QuadRule(0.5 * (a + b) + half * x, half * w)


def tensor_rule(n: int, rect: Rectangle, side: Optional[int] = None) -> QuadRule:
    gx = gauss_rule(n, (rect.x0, rect.x1))
    gy = gauss_rule(n, (rect.y0, rect.y1))
    X, Y = np.meshgrid(gx.points, gy.points, indexing="ij")
    W = np.outer(gx.weights, gy.weights)
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    tags = None if side is None else np.full(len(pts), side, dtype=int)
    return QuadRule(pts, W.ravel(), tags)


def _graph_axis(curve: Curve, xi0: float, xi1: float, probes: int = 65) -> int:
    """Axis over which the arc ``g([xi0, xi1])`` is a graph (0 for x, 1 for y)."""
    tau = curve.dg(np.linspace(xi0, xi1, probes))
    tau = tau / np.linalg.norm(tau, axis=-1, keepdims=True)
    best = []
    for a in (0, 1):
        c = tau[:, a]
        best.append(np.min(np.abs(c)) if (np.all(c > 0) or np.all(c < 0)) else 0.0)
    a = int(np.argmax(best))
    if best[a] < 1e-3:
        raise MeshError("interface arc is not a graph over either axis inside the element")
    return a


def _invert_graph(curve: Curve, a: int, targets, xi0: float, xi1: float, tol=1e-15, maxiter=60):
    """Parameters ``xi`` in ``[xi0, xi1]`` with ``g(xi)[a] = targets`` for a monotone arc."""
    lo = np.full(targets.shape, min(xi0, xi1))
    hi = np.full(targets.shape, max(xi0, xi1))
    ca, cb = curve.g(np.array([xi0, xi1]))[:, a]
    xi = xi0 + (targets - ca) / (cb - ca) * (xi1 - xi0)
    increasing = curve.dg(np.array([0.5 * (xi0 + xi1)]))[0, a] > 0
    scale = abs(cb - ca)
    for _ in range(maxiter):
        r = curve.g(xi)[:, a] - targets
        below = (r < 0) == increasing
        lo = np.where(below, np.maximum(lo, xi), lo)
        hi = np.where(below, hi, np.minimum(hi, xi))
        if np.all(np.abs(r) <= tol * scale):
            break
        step = xi - r / curve.dg(xi)[:, a]
        outside = (step <= lo) | (step >= hi)
        xi = np.where(outside, 0.5 * (lo + hi), step)
    return xi


def _box_rule(n, lo, hi):
    gx = gauss_rule(n, (lo[0], hi[0]))
    gy = gauss_rule(n, (lo[1], hi[1]))
    X, Y = np.meshgrid(gx.points, gy.points, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=-1), np.outer(gx.weights, gy.weights).ravel()


def _frenet_side(curve: Curve, x, xi_hint) -> int:
    p = geometry.frenet_inverse(curve, np.asarray(x, dtype=float), (0.0, xi_hint))
    return -1 if float(p.eta) < 0 else 1


def cut_cell_rule(rect: Rectangle, curve: Curve, cut, order: int) -> QuadRule:
    """Side-tagged rule on an interface element.

    The arc between ``D`` and ``E`` is a graph over one coordinate axis.  Over
    the arc's extent along that axis the element splits into the parts below
    and above the graph; each is mapped from a square with Gauss points in the
    graph coordinate, so the two sides add up to the element exactly and a
    straight cut is integrated exactly.  The strips beyond the arc's extent
    lie on a single side and get tensor rules.
    """
    a = _graph_axis(curve, cut.xi_d, cut.xi_e)
    b = 1 - a
    lo = np.array([rect.x0, rect.y0])
    hi = np.array([rect.x1, rect.y1])
    ta, tb = sorted((cut.d[a], cut.e[a]))
    ta, tb = max(ta, lo[a]), min(tb, hi[a])
    xi_mid = cut.xi_mid
    pts, wts, tags = [], [], []

    def emit(p, w, s):
        pts.append(p)
        wts.append(w)
        tags.append(np.full(len(w), s, dtype=int))

    # single-side strips before and after the arc along axis a
    for s0, s1 in ((lo[a], ta), (tb, hi[a])):
        if s1 - s0 <= 1e-14 * (hi[a] - lo[a]):
            continue
        blo, bhi = lo.copy(), hi.copy()
        blo[a], bhi[a] = s0, s1
        p, w = _box_rule(order, blo, bhi)
        emit(p, w, _frenet_side(curve, 0.5 * (blo + bhi), xi_mid))

    # the arc's span: graph phi over [ta, tb] along axis a
    ga = gauss_rule(order, (ta, tb))
    gv = gauss_rule(order, (0.0, 1.0))
    xi = _invert_graph(curve, a, ga.points, cut.xi_d, cut.xi_e)
    phi = np.clip(curve.g(xi)[:, b], lo[b], hi[b])
    tau = curve.dg(xi)
    # normal (tau_y, -tau_x); moving along -e_b from the curve enters side sign(-n_b)
    n_b = tau[:, 1] if b == 0 else -tau[:, 0]
    below = -1 if np.median(n_b) > 0 else 1
    for s, start, stop in ((below, lo[b], phi), (-below, phi, hi[b])):
        A, V = np.meshgrid(np.arange(order), gv.points, indexing="ij")
        st, sp = start * np.ones(order), stop * np.ones(order)
        coord_b = st[A] + V * (sp[A] - st[A])
        p = np.empty(A.shape + (2,))
        p[..., a] = ga.points[A]
        p[..., b] = coord_b
        w = ga.weights[A] * gv.weights[None, :] * (sp - st)[A]
        keep = w.ravel() > 0
        emit(p.reshape(-1, 2)[keep], w.ravel()[keep], s)

    return QuadRule(np.concatenate(pts), np.concatenate(wts), np.concatenate(tags))


def edge_rule(a, b, cuts, order: int, side_of: Callable) -> QuadRule:
    """Gauss rule on the segment ``a -> b`` split at the interface crossings.

    ``cuts`` holds crossing positions ``t`` in ``[0, 1]``; ``side_of`` labels
    points, and is called on the midpoint of each sub-segment.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    interior = sorted(t for t in cuts if 0.0 < t < 1.0)
    if len(interior) > 1:
        raise MultiCutError("edge meets the interface more than once")
    knots = [0.0] + interior + [1.0]
    length = float(np.linalg.norm(b - a))
    g = gauss_rule(order, (0.0, 1.0))
    pts, wts, tags = [], [], []
    for t0, t1 in zip(knots[:-1], knots[1:]):
        tt = t0 + (t1 - t0) * g.points
        mid = a + 0.5 * (t0 + t1) * (b - a)
        s = int(np.atleast_1d(side_of(mid[None, :]))[0])
        pts.append(a + tt[:, None] * (b - a))
        wts.append(g.weights * (t1 - t0) * length)
        tags.append(np.full(order, s, dtype=int))
    return QuadRule(np.concatenate(pts), np.concatenate(wts), np.concatenate(tags))
