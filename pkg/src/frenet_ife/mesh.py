"""Uniform Cartesian meshes, interface-element detection and Frenet charts."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .errors import MeshError, MultiCutError, TangencyError, TubeViolationError
from .geometry import Curve
from .problems import Rectangle

SCAN_SAMPLES = 64
COARSE_SAMPLES = 4000
TUBE_LIMIT = 1.0


@dataclass
class Mesh:
    """``nx x ny`` grid of equal rectangles, numbered row-major from the lower left.

    Edge arrays: ``edge_nodes[e]`` holds the two end points, ``edge_left`` and
    ``edge_right`` the incident elements (``-1`` on the boundary, where
    ``edge_left`` is the only element) and ``edge_normal`` the unit normal
    pointing from left to right, or outward on the boundary.
    """

    domain: Rectangle
    nx: int
    ny: int
    edge_nodes: np.ndarray = field(repr=False)
    edge_left: np.ndarray = field(repr=False)
    edge_right: np.ndarray = field(repr=False)
    edge_normal: np.ndarray = field(repr=False)
    element_edges: np.ndarray = field(repr=False)

    @property
    def hx(self) -> float:
        return (self.domain.x1 - self.domain.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.domain.y1 - self.domain.y0) / self.ny

    @property
    def h(self) -> float:
        """Element diameter."""
        return float(np.hypot(self.hx, self.hy))

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_edges(self) -> int:
        return len(self.edge_left)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_right < 0)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_right >= 0)

    def element_index(self, i, j):
        return j * self.nx + i

    def element_rect(self, e) -> Rectangle:
        i, j = e % self.nx, e // self.nx
        x0 = self.domain.x0 + i * self.hx
        y0 = self.domain.y0 + j * self.hy
        return Rectangle(x0, x0 + self.hx, y0, y0 + self.hy)

    def element_origins(self) -> np.ndarray:
        e = np.arange(self.n_elements)
        return np.stack([self.domain.x0 + (e % self.nx) * self.hx,
                         self.domain.y0 + (e // self.nx) * self.hy], axis=-1)

    def vertices(self) -> np.ndarray:
        xs = np.linspace(self.domain.x0, self.domain.x1, self.nx + 1)
        ys = np.linspace(self.domain.y0, self.domain.y1, self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def element_vertex_ids(self, e):
        """Counter-clockwise vertex indices into :meth:`vertices`."""
        i, j = e % self.nx, e // self.nx
        w = self.nx + 1
        return np.array([j * w + i, j * w + i + 1, (j + 1) * w + i + 1, (j + 1) * w + i])


def element_corners(rect: Rectangle) -> np.ndarray:
    return np.array([[rect.x0, rect.y0], [rect.x1, rect.y0],
                     [rect.x1, rect.y1], [rect.x0, rect.y1]])


def build_mesh(domain: Rectangle, n) -> Mesh:
    nx, ny = (n, n) if np.isscalar(n) else n
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise MeshError("element counts must be positive")
    if not (domain.x1 > domain.x0 and domain.y1 > domain.y0):
        raise MeshError("degenerate domain")
    hx = (domain.x1 - domain.x0) / nx
    hy = (domain.y1 - domain.y0) / ny
    nodes, left, right, normal = [], [], [], []
    element_edges = np.zeros((nx * ny, 4), dtype=int)  # bottom, right, top, left

    # vertical edges, row by row
    for j in range(ny):
        for i in range(nx + 1):
            x = domain.x0 + i * hx
            p = [[x, domain.y0 + j * hy], [x, domain.y0 + (j + 1) * hy]]
            eid = len(left)
            if i == 0:
                left.append(j * nx), right.append(-1), normal.append([-1.0, 0.0])
            elif i == nx:
                left.append(j * nx + nx - 1), right.append(-1), normal.append([1.0, 0.0])
            else:
                left.append(j * nx + i - 1), right.append(j * nx + i), normal.append([1.0, 0.0])
            nodes.append(p)
            if i < nx:
                element_edges[j * nx + i, 3] = eid
            if i > 0:
                element_edges[j * nx + i - 1, 1] = eid
    # horizontal edges, row by row
    for j in range(ny + 1):
        for i in range(nx):
            y = domain.y0 + j * hy
            p = [[domain.x0 + i * hx, y], [domain.x0 + (i + 1) * hx, y]]
            eid = len(left)
            if j == 0:
                left.append(i), right.append(-1), normal.append([0.0, -1.0])
            elif j == ny:
                left.append((ny - 1) * nx + i), right.append(-1), normal.append([0.0, 1.0])
            else:
                left.append((j - 1) * nx + i), right.append(j * nx + i), normal.append([0.0, 1.0])
            nodes.append(p)
            if j < ny:
                element_edges[j * nx + i, 0] = eid
            if j > 0:
                element_edges[(j - 1) * nx + i, 2] = eid
    return Mesh(domain, nx, ny, np.array(nodes, dtype=float), np.array(left), np.array(right),
                np.array(normal), element_edges)


# ---------------------------------------------------------------------------
# signed distance to the interface


class _CurveSampler:
    """Dense polyline of the curve for coarse distance queries."""

    def __init__(self, curve: Curve, samples=COARSE_SAMPLES):
        lo, hi = curve.domain
        periodic = curve.period is not None
        if periodic:
            hi = lo + curve.period
        self.curve = curve
        self.t = np.linspace(lo, hi, samples, endpoint=not periodic)
        self.p = curve.g(self.t)
        self.spacing = float(np.max(np.linalg.norm(np.diff(self.p, axis=0), axis=-1)))
        self._tree = None

    def nearest(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        if self._tree is None:
            self._tree = cKDTree(self.p)
        dist, idx = self._tree.query(x)
        return self.t[idx], dist


def signed_distance(curve: Curve, x, near: float, level_set: Optional[Callable] = None,
                    sampler: Optional[_CurveSampler] = None):
    """Frenet coordinates of points near the curve; a side-only estimate elsewhere.

    Returns ``(eta, xi, exact)``: for points within ``near`` of the curve the
    pair is the converged inverse Frenet map, ``exact`` is True.  Far points get
    ``xi`` of the nearest polyline sample and ``|eta|`` equal to that distance
    signed by ``level_set`` (or by the normal at the sample).
    """
    sampler = sampler or _CurveSampler(curve)
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    xi_c, dist = sampler.nearest(x)
    fr = geometry.frenet_apparatus(curve, xi_c)
    eta = geometry.dot(x - curve.g(xi_c), fr.n)
    xi = xi_c.copy()
    exact = dist < near
    if np.any(exact):
        e_n, x_n, ok = geometry._newton_inverse(curve, x[exact], eta[exact], xi_c[exact],
                                                geometry.NEWTON_TOL, geometry.NEWTON_MAXITER)
        sub = np.flatnonzero(exact)
        eta[sub[ok]] = e_n[ok]
        xi[sub[ok]] = x_n[ok]
        exact[sub[~ok]] = False
    far = ~exact
    if level_set is not None and np.any(far):
        eta[far] = np.where(level_set(x[far]) < 0, -1.0, 1.0) * np.maximum(dist[far], 1e-300)
    return eta, xi, exact


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class CutTopology:
    """Where the interface crosses the boundary of an interface element.

    ``xi_d < xi_e`` after unwrapping; ``vertex_side`` holds the side label of
    the four counter-clockwise corners (``0`` for a corner on the curve).
    """

    element: int
    d: np.ndarray
    e: np.ndarray
    xi_d: float
    xi_e: float
    d_edge: int
    e_edge: int
    vertex_side: np.ndarray

    @property
    def xi_mid(self) -> float:
        return 0.5 * (self.xi_d + self.xi_e)


@dataclass
class Classification:
    interface: np.ndarray            # bool per element
    side: np.ndarray                 # -1/+1 per element, 0 for interface elements
    cuts: dict                       # element -> CutTopology
    edge_cuts: dict                  # mesh edge -> list of (t, point, xi)

    @property
    def interface_elements(self) -> np.ndarray:
        return np.flatnonzero(self.interface)


def _unwrap(curve: Curve, xi, ref):
    if curve.period is None:
        return xi
    p = curve.period
    return xi - p * np.round((xi - ref) / p)


def _edge_roots(curve, segs, sampler, near, level_set, h):
    """Intersections of the curve with each segment ``segs[k] = (a, b)``.

    Sign changes of ``eta`` along a uniform scan are refined by bisection and
    one Newton step.  Returns one list of ``(t, point, xi)`` per segment, with
    ``t`` in ``[0, 1]`` measured from ``a``.
    """
    ns = len(segs)
    out = [[] for _ in range(ns)]
    if ns == 0:
        return out
    a, b = segs[:, 0], segs[:, 1]
    t = np.linspace(0.0, 1.0, SCAN_SAMPLES + 1)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    eta, xi, exact = signed_distance(curve, pts.reshape(-1, 2), near, level_set, sampler)
    eta = eta.reshape(ns, -1)
    xi = xi.reshape(ns, -1)
    exact = exact.reshape(ns, -1)
    length = np.linalg.norm(b - a, axis=-1)
    snap = 1e-12 * h
    on = exact & (np.abs(eta) <= snap)

    roots = [list(t[np.flatnonzero(on[k])]) for k in range(ns)]
    flip = (np.sign(eta[:, :-1]) != np.sign(eta[:, 1:])) & ~on[:, :-1] & ~on[:, 1:]
    sk, kk = np.nonzero(flip)
    if len(sk):
        lo, hi = t[kk].copy(), t[kk + 1].copy()
        sgn_lo = np.sign(eta[sk, kk])
        hint = np.where(exact[sk, kk], xi[sk, kk], xi[sk, kk + 1])
        aa, dd = a[sk], (b - a)[sk]
        eta_m = np.zeros(len(sk))
        while np.any((hi - lo) * length[sk] > 1e-13):
            mid = 0.5 * (lo + hi)
            fp = geometry.frenet_inverse(curve, aa + mid[:, None] * dd, (0.0, hint))
            hint = np.asarray(fp.xi)
            same = np.sign(fp.eta) == sgn_lo
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        tm = 0.5 * (lo + hi)
        for _ in range(3):
            fp = geometry.frenet_inverse(curve, aa + tm[:, None] * dd, (0.0, hint))
            hint = np.asarray(fp.xi)
            fr = geometry.frenet_apparatus(curve, fp.xi)
            slope = geometry.dot(fr.n, dd)
            if np.any(np.abs(slope) < 1e-8 * length[sk]):
                raise TangencyError("interface is tangent to a mesh edge")
            tm = np.clip(tm - np.asarray(fp.eta) / slope, lo, hi)
        for k, tr in zip(sk, tm):
            roots[k].append(float(tr))

    for k in range(ns):
        clean = []
        for tr in sorted(roots[k]):
            if clean and (tr - clean[-1]) * length[k] <= snap:
                continue
            if tr * length[k] <= snap:
                tr = 0.0
            elif (1.0 - tr) * length[k] <= snap:
                tr = 1.0
            clean.append(tr)
        roots[k] = clean

    flat = [(k, tr) for k in range(ns) for tr in roots[k]]
    if flat:
        kk = np.array([k for k, _ in flat])
        tt = np.array([tr for _, tr in flat])
        p = a[kk] + tt[:, None] * (b - a)[kk]
        fp = geometry.frenet_inverse(curve, p, (0.0, sampler.nearest(p)[0]))
        for k, tr, q, x in zip(kk, tt, p, np.atleast_1d(fp.xi)):
            out[k].append((float(tr), q, float(x)))
    return out


def classify_elements(mesh: Mesh, curve: Curve, level_set: Optional[Callable] = None) -> Classification:
    """Tag interface elements and locate the boundary crossings ``D``, ``E``."""
    sampler = _CurveSampler(curve)
    h = mesh.h
    near = min(2.0 * h, 0.5 * _min_radius(curve, sampler))
    verts = mesh.vertices()
    v_eta, _, _ = signed_distance(curve, verts, near, level_set, sampler)
    # elements whose corners come within one diameter of the curve
    _, v_dist = sampler.nearest(verts)
    vid = np.array([mesh.element_vertex_ids(e) for e in range(mesh.n_elements)])
    candidate = np.min(v_dist[vid], axis=1) <= h + sampler.spacing

    edge_cuts = {}
    cand_edges = np.unique(mesh.element_edges[candidate])
    found = _edge_roots(curve, mesh.edge_nodes[cand_edges], sampler, near, level_set, h)
    for ed, roots in zip(cand_edges, found):
        if roots:
            edge_cuts[int(ed)] = roots

    interface = np.zeros(mesh.n_elements, dtype=bool)
    cuts = {}
    for e in np.flatnonzero(candidate):
        pts = []
        for local, ed in enumerate(mesh.element_edges[e]):
            for t, p, xi in edge_cuts.get(int(ed), []):
                if not any(np.linalg.norm(p - q) <= 1e-12 * h for q, _, _ in pts):
                    pts.append((p, xi, local))
        if len(pts) > 2:
            raise MultiCutError(f"element {e} boundary meets the interface {len(pts)} times")
        if len(pts) < 2:
            continue
        vs = np.sign(v_eta[vid[e]]).astype(int)
        vs[np.abs(v_eta[vid[e]]) <= 1e-12 * h] = 0
        if pts[0][2] == pts[1][2] and not (np.any(vs < 0) and np.any(vs > 0)):
            raise MultiCutError(f"interface enters and leaves element {e} through one edge")
        if not (np.any(vs < 0) and np.any(vs > 0)):
            continue
        frac = _chord_area_fraction(element_corners(mesh.element_rect(e)), vs, pts[0][0], pts[1][0])
        if min(frac, 1.0 - frac) < 1e-12:
            continue
        (pd, xd, ld), (pe, xe, le) = pts
        xe = _unwrap(curve, xe, xd)
        if xe < xd:
            (pd, xd, ld), (pe, xe, le) = (pe, xe, le), (pd, xd, ld)
        interface[e] = True
        cuts[int(e)] = CutTopology(int(e), np.asarray(pd), np.asarray(pe), float(xd), float(xe),
                                   int(ld), int(le), vs)

    _check_resolved(mesh, sampler, interface)
    side = np.zeros(mesh.n_elements, dtype=int)
    centers = mesh.element_origins() + 0.5 * np.array([mesh.hx, mesh.hy])
    c_eta, _, _ = signed_distance(curve, centers, near, level_set, sampler)
    side[~interface] = np.where(c_eta[~interface] < 0, -1, 1)
    return Classification(interface, side, cuts, edge_cuts)


def _check_resolved(mesh: Mesh, sampler: "_CurveSampler", interface) -> None:
    """Every curve sample strictly inside an element must lie in an interface element.

    Catches interface pieces that cross no edge, such as a small closed curve
    inside one element.
    """
    d = mesh.domain
    tol = 1e-9 * mesh.h
    rel = (sampler.p - [d.x0, d.y0]) / [mesh.hx, mesh.hy]
    ij = np.floor(rel).astype(int)
    inside = np.all((ij >= 0) & (ij < [mesh.nx, mesh.ny]), axis=1)
    frac = rel - ij
    gap = np.minimum(np.minimum(frac, 1.0 - frac)[:, 0] * mesh.hx, np.minimum(frac, 1.0 - frac)[:, 1] * mesh.hy)
    interior = inside & (gap > tol)
    elem = ij[:, 1] * mesh.nx + ij[:, 0]
    bad = interior & ~interface[np.where(inside, elem, 0)]
    if np.any(bad):
        e = int(elem[np.flatnonzero(bad)[0]])
        raise MeshError(f"interface passes through element {e} without crossing its boundary; refine the mesh")


def _chord_area_fraction(corners, vs, d, e) -> float:
    """Area fraction of the minus-side polygon cut off by the chord ``DE``."""
    poly = [c for c, v in zip(corners, vs) if v < 0] + [d, e]
    poly = np.array(poly)
    centre = poly.mean(axis=0)
    ang = np.arctan2(poly[:, 1] - centre[1], poly[:, 0] - centre[0])
    poly = poly[np.argsort(ang)]
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    full = (corners[1, 0] - corners[0, 0]) * (corners[2, 1] - corners[1, 1])
    return area / full


def _min_radius(curve: Curve, sampler: _CurveSampler) -> float:
    k = np.max(np.abs(curve.kappa(sampler.t)))
    return 1.0 / k if k > 0 else np.inf


# ---------------------------------------------------------------------------
# fictitious charts


@dataclass(frozen=True)
class FrenetChart:
    """Frenet fictitious element ``[-half_width, half_width] x [a, b]``."""

    curve: Curve
    a: float
    b: float
    half_width: float
    xi_hint: float
    element: int = -1

    @property
    def interval(self):
        return (self.a, self.b)

    def to_frenet(self, x):
        return geometry.frenet_inverse(self.curve, x, (0.0, self.xi_hint))

    def unwrap(self, xi):
        return _unwrap(self.curve, xi, self.xi_hint)


def fictitious_chart(rect: Rectangle, curve: Curve, cut: CutTopology,
                     tube_limit: float = TUBE_LIMIT) -> FrenetChart:
    """Chart spanned by the normal-foot parameters of the element corners."""
    corners = element_corners(rect)
    fp = geometry.frenet_inverse(curve, corners, (0.0, cut.xi_mid))
    xi = _unwrap(curve, np.asarray(fp.xi), cut.xi_mid)
    params = np.concatenate([xi, [cut.xi_d, cut.xi_e]])
    a, b = float(np.min(params)), float(np.max(params))
    if not a < b:
        raise MeshError(f"degenerate chart on element {cut.element}")
    if curve.period is None and not (np.all(curve.in_domain(np.array([a, b])))):
        raise TubeViolationError(f"chart of element {cut.element} leaves the curve domain")
    h = rect.diameter
    kmax = float(np.max(np.abs(curve.kappa(np.linspace(a, b, 33)))))
    if h * kmax >= tube_limit:
        raise TubeViolationError(
            f"element {cut.element}: h * max|kappa| = {h * kmax:.3g} >= {tube_limit}"
        )
    return FrenetChart(curve, a, b, h, cut.xi_mid, cut.element)


def element_cut(rect: Rectangle, curve: Curve, level_set: Optional[Callable] = None,
                element: int = 0) -> Optional[CutTopology]:
    """Cut topology of a single rectangle, or ``None`` if it is not cut."""
    mesh = build_mesh(rect, 1)
    cls = classify_elements(mesh, curve, level_set)
    if not cls.interface[0]:
        return None
    c = cls.cuts[0]
    return CutTopology(element, c.d, c.e, c.xi_d, c.xi_e, c.d_edge, c.e_edge, c.vertex_side)


def build_charts(mesh: Mesh, curve: Curve, cls: Classification, tube_limit=TUBE_LIMIT) -> dict:
    return {e: fictitious_chart(mesh.element_rect(e), curve, cut, tube_limit)
            for e, cut in cls.cuts.items()}


def summary_rows(mesh: Mesh, cls: Classification, charts: Optional[dict] = None) -> list:
    """Diagnostic table: element_id, tag, xi_D, xi_E, a_K, b_K."""
    rows = []
    for e in range(mesh.n_elements):
        if cls.interface[e]:
            cut = cls.cuts[e]
            ch = charts.get(e) if charts else None
            rows.append({"element_id": e, "tag": "interface", "xi_D": cut.xi_d, "xi_E": cut.xi_e,
                         "a_K": ch.a if ch else "", "b_K": ch.b if ch else ""})
        else:
            rows.append({"element_id": e, "tag": "non-interface", "xi_D": "", "xi_E": "",
                         "a_K": "", "b_K": ""})
    return rows


def write_summary(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["element_id", "tag", "xi_D", "xi_E", "a_K", "b_K"])
        w.writeheader()
        w.writerows(rows)
