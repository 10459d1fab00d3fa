"""Local polynomial and Frenet IFE spaces.

Interface-element shapes are tensor polynomials in Frenet coordinates,
``sum_{i,j} C[i, j] eta^j p_i(xi)``, with ``p_i`` Legendre polynomials mapped
to the chart interval ``[a, b]``.  Shape index ``k = j (m + 1) + i``: the
``j = 0`` row holds the extended shapes ``phi_{i,0}``, rows ``j >= 1`` the
cheap shapes ``eta^j p_i / beta``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from math import ceil, comb, factorial
from typing import Optional

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from . import geometry
from .errors import BasisError, SideMismatchError
from .mesh import FrenetChart, element_cut, fictitious_chart
from .problems import Rectangle
from .quadrature import gauss_rule

SIDE_TOL = 1e-10
CHEB_SAMPLES = 50


def _poly_table(t, m: int, nder: int, basis: str = "legendre"):
    """``out[s, n, i] = d^s/dt^s p_i(t_n)`` for ``s <= nder`` on the reference [-1, 1]."""
    t = np.asarray(t, dtype=float).ravel()
    out = np.zeros((nder + 1, t.size, m + 1))
    if basis == "legendre":
        vander, der = npleg.legvander, npleg.legder
    elif basis == "monomial":
        vander, der = nppoly.polyvander, nppoly.polyder
    else:
        raise BasisError(f"unknown polynomial family {basis!r}")
    eye = np.eye(m + 1)
    for s in range(nder + 1):
        if s > m:
            break
        coef = der(eye, s, axis=0) if s else eye
        out[s] = vander(t, m - s) @ coef
    return out


def _power_table(eta, m: int, nder: int):
    """``out[r, n, j] = d^r/d eta^r eta^j``."""
    eta = np.asarray(eta, dtype=float).ravel()
    out = np.zeros((nder + 1, eta.size, m + 1))
    for r in range(nder + 1):
        for j in range(r, m + 1):
            out[r, :, j] = factorial(j) / factorial(j - r) * eta ** (j - r)
    return out


@dataclass(frozen=True)
class BivariateFrenetPoly:
    """``sum_{i,j} coef[i, j] eta^j p_i(xi)`` with ``p_i`` mapped to ``[a, b]``."""

    coef: np.ndarray
    a: float
    b: float
    basis: str = "legendre"

    @property
    def degree(self) -> int:
        return self.coef.shape[0] - 1

    def _t(self, xi):
        return (2.0 * np.asarray(xi, dtype=float) - self.a - self.b) / (self.b - self.a)

    def __call__(self, eta, xi, deta: int = 0, dxi: int = 0):
        eta, xi = np.broadcast_arrays(np.asarray(eta, dtype=float), np.asarray(xi, dtype=float))
        m = self.degree
        P = _poly_table(self._t(xi), m, dxi, self.basis)[dxi] * (2.0 / (self.b - self.a)) ** dxi
        E = _power_table(eta, m, deta)[deta]
        return np.einsum("ni,nj,ij->n", P, E, self.coef).reshape(eta.shape)

    def eta_trace(self, r: int, xi, dxi: int = 0):
        """``d^r/d eta^r d^dxi/d xi^dxi`` of the polynomial on ``eta = 0``."""
        m = self.degree
        if r > m:
            return np.zeros(np.shape(xi))
        P = _poly_table(self._t(xi), m, dxi, self.basis)[dxi] * (2.0 / (self.b - self.a)) ** dxi
        return (factorial(r) * P @ self.coef[:, r]).reshape(np.shape(xi))


@dataclass(frozen=True)
class PiecewiseFrenetPoly:
    minus: BivariateFrenetPoly
    plus: BivariateFrenetPoly

    def __call__(self, eta, xi, deta: int = 0, dxi: int = 0):
        eta = np.asarray(eta, dtype=float)
        return np.where(eta < 0, self.minus(eta, xi, deta, dxi), self.plus(eta, xi, deta, dxi))

    def side(self, s: int) -> BivariateFrenetPoly:
        return self.minus if s < 0 else self.plus


def laplacian_trace(poly: BivariateFrenetPoly, chart: FrenetChart, j: int, m: Optional[int] = None):
    """``xi -> d^j/d eta^j L(v)(0, xi)`` for the Frenet Laplacian ``L``.

    ``m`` (default: the polynomial degree) bounds the admissible order to
    ``j <= m - 2``.
    """
    m = poly.degree if m is None else m
    if j < 0 or j > m - 2:
        raise BasisError(f"Laplacian trace order {j} outside 0..{m - 2}")

    def trace(xi):
        xi = np.asarray(xi, dtype=float)
        mc = geometry.metric_coeffs(chart.curve, xi, 0.0, max_order=j)
        out = poly.eta_trace(j + 2, xi)
        for l in range(j + 1):
            c = comb(j, l)
            out = out + c * (mc["dJ0"][l] * poly.eta_trace(j - l, xi, dxi=2)
                             + mc["dJ1"][l] * poly.eta_trace(j - l + 1, xi)
                             + mc["dJ2"][l] * poly.eta_trace(j - l, xi, dxi=1))
        return out

    return trace


def extension_quadrature(chart: FrenetChart, m: int):
    return gauss_rule(int(ceil((3 * m + 3) / 2)) + 2, chart.interval)


def _trace_tables(chart: FrenetChart, m: int, basis: str):
    """Per-order Laplacian traces of every ``eta^r p_i`` at the extension nodes.

    Returns the rule, the test table ``p_k(xi_q)`` and ``T[j, r, i, q] =
    d^j L(eta^r p_i)(0, xi_q)``.
    """
    rule = extension_quadrature(chart, m)
    xi = rule.points
    t = (2.0 * xi - chart.a - chart.b) / (chart.b - chart.a)
    d = 2.0 / (chart.b - chart.a)
    P = _poly_table(t, m, 2, basis)
    P[1] *= d
    P[2] *= d * d
    J = max(m - 2, 0)
    mc = geometry.metric_coeffs(chart.curve, xi, 0.0, max_order=J)
    T = np.zeros((J + 1, m + 1, m + 1, xi.size))
    for j in range(J + 1):
        for r in range(m + 1):
            # d^k/d eta^k eta^r at 0 is r! when k == r
            def tr(k, s):
                return factorial(r) * P[s].T if k == r else 0.0
            acc = tr(j + 2, 0) + np.zeros((m + 1, xi.size))
            for l in range(j + 1):
                c = comb(j, l)
                acc = acc + c * (mc["dJ0"][l] * tr(j - l, 2) + mc["dJ1"][l] * tr(j - l + 1, 0)
                                 + mc["dJ2"][l] * tr(j - l, 1))
            T[j, r] = acc
    return rule, P[0], T


def extension_system(chart: FrenetChart, m: int, basis: str = "legendre"):
    """Matrices ``A`` ((m-1)(m+1) x (m^2-1)) and ``B`` ((m-1)(m+1) x (m+1)).

    Row ``j (m + 1) + k`` tests the order-``j`` Laplacian trace against
    ``p_k``; column ``l = (j' - 2)(m + 1) + i'`` of ``A`` is ``eta^j' p_i'``.
    """
    if m < 1:
        raise BasisError("degree must be at least 1")
    if m == 1:
        return np.zeros((0, 0)), np.zeros((0, 2))
    rule, P, T = _trace_tables(chart, m, basis)
    W = P * rule.weights[:, None]  # (q, k)
    rows = (m - 1) * (m + 1)
    A = np.zeros((rows, m * m - 1))
    B = np.zeros((rows, m + 1))
    for j in range(m - 1):
        blk = slice(j * (m + 1), (j + 1) * (m + 1))
        B[blk] = (T[j, 0] @ W).T
        for jp in range(2, m + 1):
            cols = slice((jp - 2) * (m + 1), (jp - 1) * (m + 1))
            A[blk, cols] = (T[j, jp] @ W).T
    return A, B


def block_forward_solve(A, rhs, m: int):
    """Solve the block lower-triangular extension system block by block."""
    nb = m - 1
    size = m + 1
    X = np.zeros((A.shape[1],) + rhs.shape[1:])
    for j in range(nb):
        r = slice(j * size, (j + 1) * size)
        acc = rhs[r] - A[r, : j * size] @ X[: j * size]
        D = A[r, r]
        if np.allclose(D, np.diag(np.diag(D)), rtol=0, atol=1e-14 * np.max(np.abs(D))):
            dd = np.diag(D)
            if np.any(dd == 0):
                raise BasisError("singular diagonal block in the extension system")
            X[r] = acc / dd.reshape((-1,) + (1,) * (acc.ndim - 1))
        else:
            X[r] = np.linalg.solve(D, acc)
    return X


@dataclass
class LocalSpace:
    """The ``(m + 1)^2`` shapes of one element.

    ``kind`` is ``"standard"`` (tensor Legendre on the rectangle) or
    ``"ife"`` (Frenet IFE shapes on ``chart``).
    """

    kind: str
    m: int
    rect: Rectangle
    beta: tuple = (1.0, 1.0)
    chart: Optional[FrenetChart] = None
    coef_minus: Optional[np.ndarray] = None
    coef_plus: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    ext_coef: Optional[np.ndarray] = None
    basis: str = "legendre"
    side: int = 0
    _shapes: list = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return (self.m + 1) ** 2

    @property
    def shapes(self):
        if self.kind != "ife":
            raise BasisError("only IFE spaces carry Frenet shapes")
        if self._shapes is None:
            a, b = self.chart.interval
            self._shapes = [PiecewiseFrenetPoly(BivariateFrenetPoly(self.coef_minus[s], a, b, self.basis),
                                                BivariateFrenetPoly(self.coef_plus[s], a, b, self.basis))
                            for s in range(self.dim)]
        return self._shapes

    # -- evaluation -------------------------------------------------------

    def frenet_coords(self, x):
        fp = self.chart.to_frenet(np.asarray(x, dtype=float))
        return np.asarray(fp.eta, dtype=float), np.asarray(self.chart.unwrap(fp.xi), dtype=float)

    def tabulate(self, x, side=None, grad=True):
        """Values ``(N, dim)`` and gradients ``(N, dim, 2)`` at points ``x``.

        On IFE spaces ``side`` (if given) must agree with the sign of ``eta``.
        """
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        if self.kind == "standard":
            return self._tabulate_standard(x, grad)
        eta, xi = self.frenet_coords(x)
        return self._tabulate_frenet(eta, xi, side, grad)

    def _tabulate_standard(self, x, grad):
        r = self.rect
        m = self.m
        sx, sy = 2.0 / (r.x1 - r.x0), 2.0 / (r.y1 - r.y0)
        PX = _poly_table(sx * (x[:, 0] - r.x0) - 1.0, m, 1)
        PY = _poly_table(sy * (x[:, 1] - r.y0) - 1.0, m, 1)
        vals = np.einsum("nj,ni->nji", PY[0], PX[0]).reshape(len(x), -1)
        if not grad:
            return vals, None
        gx = sx * np.einsum("nj,ni->nji", PY[0], PX[1]).reshape(len(x), -1)
        gy = sy * np.einsum("nj,ni->nji", PY[1], PX[0]).reshape(len(x), -1)
        return vals, np.stack([gx, gy], axis=-1)

    def _tabulate_frenet(self, eta, xi, side, grad):
        own = np.where(eta < 0, -1, 1)
        if side is None:
            side = own
        else:
            side = np.broadcast_to(np.asarray(side, dtype=int), eta.shape)
            tol = SIDE_TOL * self.chart.half_width
            if np.any(side * eta < -tol):
                raise SideMismatchError(
                    f"element {self.chart.element}: quadrature side tags disagree with sign(eta)")
        m = self.m
        a, b = self.chart.interval
        d = 2.0 / (b - a)
        P = _poly_table(d * (xi - a) - 1.0, m, 1, self.basis)
        E = _power_table(eta, m, 1)
        n = eta.size
        vals = np.zeros((n, self.dim))
        deta = np.zeros((n, self.dim))
        dxi = np.zeros((n, self.dim))
        for s, C in ((-1, self.coef_minus), (1, self.coef_plus)):
            k = side == s
            if not np.any(k):
                continue
            vals[k] = np.einsum("ni,nj,sij->ns", P[0][k], E[0][k], C)
            if grad:
                deta[k] = np.einsum("ni,nj,sij->ns", P[0][k], E[1][k], C)
                dxi[k] = d * np.einsum("ni,nj,sij->ns", P[1][k], E[0][k], C)
        if not grad:
            return vals, None
        fr = geometry.frenet_apparatus(self.chart.curve, xi)
        stretch = 1.0 + eta * fr.kappa
        if np.any(stretch <= 0):
            raise geometry.SingularTubeError("1 + eta * kappa <= 0")
        c = 1.0 / (fr.speed * stretch)
        g = deta[..., None] * fr.n[:, None, :] + (c[:, None] * dxi)[..., None] * fr.tau[:, None, :]
        return vals, g


def standard_space(rect: Rectangle, m: int, side: int = 0) -> LocalSpace:
    return LocalSpace("standard", m, rect, side=side)


def cheap_basis(chart: FrenetChart, m: int, beta, basis: str = "legendre") -> list:
    """The ``m (m + 1)`` shapes ``eta^j p_i / beta`` (``j >= 1``); no solve needed."""
    bm, bp = beta
    a, b = chart.interval
    out = []
    for j in range(1, m + 1):
        for i in range(m + 1):
            cm = np.zeros((m + 1, m + 1))
            cm[i, j] = 1.0
            out.append(PiecewiseFrenetPoly(BivariateFrenetPoly(cm / bm, a, b, basis),
                                           BivariateFrenetPoly(cm / bp, a, b, basis)))
    return out


def build_local_space(chart: FrenetChart, m: int, beta, rect: Optional[Rectangle] = None,
                      basis: str = "legendre") -> LocalSpace:
    """IFE space: cheap shapes plus the ``m + 1`` extended shapes ``phi_{i,0}``."""
    bm, bp = float(beta[0]), float(beta[1])
    if bm <= 0 or bp <= 0:
        raise BasisError("coefficients must be positive")
    dim = (m + 1) ** 2
    Cm = np.zeros((dim, m + 1, m + 1))
    Cp = np.zeros((dim, m + 1, m + 1))
    for j in range(1, m + 1):
        for i in range(m + 1):
            k = j * (m + 1) + i
            Cm[k, i, j] = 1.0 / bm
            Cp[k, i, j] = 1.0 / bp
    A, B = extension_system(chart, m, basis)
    ext = np.zeros((max(m * m - 1, 0), m + 1))
    if m >= 2:
        ext = block_forward_solve(A, ((bm - bp) / bp) * B, m)
    for i in range(m + 1):
        Cm[i, i, 0] = 1.0
        Cp[i, i, 0] = 1.0
        for jp in range(2, m + 1):
            Cp[i, :, jp] += ext[(jp - 2) * (m + 1):(jp - 1) * (m + 1), i]
    return LocalSpace("ife", m, rect, (bm, bp), chart, Cm, Cp, A, B, ext, basis)


def eval_shape(space: LocalSpace, k: int, x, side=None):
    return space.tabulate(x, side, grad=False)[0][:, k]


def eval_shape_grad(space: LocalSpace, k: int, x, side=None):
    return space.tabulate(x, side)[1][:, k]


@dataclass(frozen=True)
class JumpResidual:
    value: np.ndarray     # per-shape max |[phi]|
    flux: np.ndarray      # per-shape max |[beta phi_eta]|
    weak: np.ndarray      # (dim, (m-1)(m+1)) weak Laplacian residuals
    scale: np.ndarray     # per-shape max |phi| on the samples

    def max_exact(self):
        return float(np.max(np.maximum(self.value, self.flux) / self.scale))


def jump_residual(space: LocalSpace, samples: int = CHEB_SAMPLES) -> JumpResidual:
    """Pointwise and weak interface-condition residuals of every shape."""
    if space.kind != "ife":
        raise BasisError("jump residuals are defined on IFE spaces only")
    a, b = space.chart.interval
    k = np.arange(samples)
    xi = 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * k + 1) * np.pi / (2 * samples))
    bm, bp = space.beta
    m = space.m
    zero = np.zeros_like(xi)
    value, flux, scale = [], [], []
    weak = np.zeros((space.dim, max((m - 1) * (m + 1), 0)))
    if m >= 2:
        rule = extension_quadrature(space.chart, m)
        t = (2.0 * rule.points - a - b) / (b - a)
        Pk = _poly_table(t, m, 0, space.basis)[0] * rule.weights[:, None]
    for s, shp in enumerate(space.shapes):
        vm, vp = shp.minus(zero, xi), shp.plus(zero, xi)
        fm, fp = shp.minus(zero, xi, deta=1), shp.plus(zero, xi, deta=1)
        value.append(np.max(np.abs(vp - vm)))
        flux.append(np.max(np.abs(bp * fp - bm * fm)))
        pts_eta = np.linspace(-space.chart.half_width, space.chart.half_width, 7)
        big = max(np.max(np.abs(vm)), np.max(np.abs(vp)),
                  np.max(np.abs(shp(pts_eta[:, None], xi[None, :]))))
        scale.append(max(big, 1e-300))
        for j in range(m - 1):
            lp = laplacian_trace(shp.plus, space.chart, j, m)(rule.points)
            lm = laplacian_trace(shp.minus, space.chart, j, m)(rule.points)
            weak[s, j * (m + 1):(j + 1) * (m + 1)] = (bp * lp - bm * lm) @ Pk
    return JumpResidual(np.array(value), np.array(flux), weak, np.array(scale))


def conditioning_element(eps: float) -> Rectangle:
    lo = 1.0 / np.sqrt(2.0) - eps
    return Rectangle(lo, lo + 0.5, lo, lo + 0.5)


def jacobi_condition(A) -> float:
    if A.size == 0:
        return 1.0
    J = np.diag(A)
    return float(np.linalg.cond(A / J[:, None], 2))


def conditioning_study(curve, m: int, eps_list, level_set=None) -> list:
    """``cond_2(J^-1 A)`` on ``K(eps)`` for each ``eps``; ``J = diag(A)``."""
    out = []
    for eps in eps_list:
        if not 0 < eps < 0.5:
            raise BasisError("eps must lie in (0, 1/2)")
        rect = conditioning_element(eps)
        cut = element_cut(rect, curve, level_set)
        if cut is None:
            raise BasisError(f"K({eps}) is not cut by {curve.name}")
        chart = fictitious_chart(rect, curve, cut)
        A, _ = extension_system(chart, m)
        out.append((m, float(eps), jacobi_condition(A)))
    return out


def dump_extension(space: LocalSpace, stream=None) -> str:
    """Matrix-market style ``row col value`` blocks for ``A``, ``B`` and ``c``."""
    buf = io.StringIO()
    buf.write(f"% element {space.chart.element} m={space.m} beta={space.beta}\n")
    for name, M in (("A", space.A), ("B", space.B), ("C", space.ext_coef)):
        M = np.atleast_2d(M)
        buf.write(f"%% {name} {M.shape[0]} {M.shape[1]}\n")
        for (r, c), v in np.ndenumerate(M):
            if v != 0.0:
                buf.write(f"{r + 1} {c + 1} {v:.17g}\n")
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
