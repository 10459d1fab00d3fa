"""Model interface problems with manufactured exact solutions.

A side label is an integer array with ``-1`` for the minus region and ``+1``
for the plus region.  Every callable here takes points ``x`` with a trailing
axis of length 2 and a matching ``side`` array.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import geometry
from .errors import OrientationError
from .geometry import Curve


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    @property
    def area(self) -> float:
        return float((self.x1 - self.x0) * (self.y1 - self.y0))

    def contains(self, x, tol=0.0):
        x = np.asarray(x)
        return ((x[..., 0] >= self.x0 - tol) & (x[..., 0] <= self.x1 + tol)
                & (x[..., 1] >= self.y0 - tol) & (x[..., 1] <= self.y1 + tol))


@dataclass(frozen=True)
class InterfaceProblem:
    """``-div(beta grad u) = f`` with ``u = g`` on the boundary.

    ``level_set`` is negative in the minus region and positive in the plus
    region; it is used only for points far away from the interface.
    """

    name: str
    domain: Rectangle
    curve: Curve
    beta_minus: float
    beta_plus: float
    level_set: Callable
    u: Callable
    grad_u: Callable
    f: Callable

    @property
    def beta(self):
        return (self.beta_minus, self.beta_plus)

    def beta_of(self, side):
        return np.where(np.asarray(side) < 0, self.beta_minus, self.beta_plus)

    def side_of(self, x):
        return np.where(self.level_set(np.asarray(x, dtype=float)) < 0, -1, 1)

    def g(self, x, side):
        return self.u(x, side)


def check_orientation(curve: Curve, level_set: Callable, xi_samples) -> None:
    """Require the Frenet normal to point from the minus into the plus region."""
    fr = geometry.frenet_apparatus(curve, xi_samples)
    on = curve.g(xi_samples)
    d = 1e-6 * max(1.0, float(np.max(np.abs(on))))
    ahead = level_set(on + d * fr.n)
    behind = level_set(on - d * fr.n)
    if np.any(ahead <= 0) or np.any(behind >= 0):
        raise OrientationError(
            f"normal of {curve.name} does not point into the plus region everywhere"
        )


# ---------------------------------------------------------------------------
# Example 1: circular interface


def example1(beta_minus=1.0, beta_plus=10.0, r0=1.0 / np.sqrt(3.0)) -> InterfaceProblem:
    """Circle of radius ``r0`` in ``(-1, 1)^2``; minus region inside."""
    curve = geometry.circle(r0)
    bm, bp = float(beta_minus), float(beta_plus)
    shift = np.cos(np.pi * r0**2) * (1.0 / bm - 1.0 / bp)

    def level_set(x):
        return np.hypot(x[..., 0], x[..., 1]) - r0

    def u(x, side):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        base = np.cos(np.pi * r2)
        return np.where(np.asarray(side) < 0, base / bm, base / bp + shift)

    def grad_u(x, side):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        c = np.where(np.asarray(side) < 0, 1.0 / bm, 1.0 / bp)
        return (-2.0 * np.pi * c * np.sin(np.pi * r2))[..., None] * x

    def f(x, side):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        val = 4.0 * np.pi * np.sin(np.pi * r2) + 4.0 * np.pi**2 * r2 * np.cos(np.pi * r2)
        return val + 0.0 * np.asarray(side)

    return InterfaceProblem("example1", Rectangle(-1.0, 1.0, -1.0, 1.0), curve, bm, bp,
                            level_set, u, grad_u, f)


def example1_selftest(problem: InterfaceProblem, samples: int = 20) -> tuple:
    """Value and flux jumps of the Example 1 solution at interface samples."""
    t = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    fr = geometry.frenet_apparatus(problem.curve, t)
    x = problem.curve.g(t)
    minus = -np.ones(samples, dtype=int)
    plus = np.ones(samples, dtype=int)
    jump = np.max(np.abs(problem.u(x, plus) - problem.u(x, minus)))
    flux_p = problem.beta_plus * geometry.dot(problem.grad_u(x, plus), fr.n)
    flux_m = problem.beta_minus * geometry.dot(problem.grad_u(x, minus), fr.n)
    return jump, np.max(np.abs(flux_p - flux_m))


# ---------------------------------------------------------------------------
# Example 2: quartic interface  L(x) = Re((x1 + i x2)^4) + 1/2 = 0


@lru_cache(maxsize=1)
def _example2_derivatives():
    import sympy as sp

    t = sp.symbols("t", real=True)
    w = sp.sqrt(2 * sp.exp(2 * t) + 1)
    g = [sp.Rational(1, 2) * sp.sqrt(w), sp.Rational(1, 2) * sp.sqrt(3 * w - 4 * sp.exp(t))]
    funcs = []
    expr = g
    for _ in range(4):
        funcs.append(sp.lambdify(t, expr, "numpy"))
        expr = [sp.diff(e, t) for e in expr]
    return funcs


def _vectorize(fn):
    def wrapped(xi):
        xi = np.asarray(xi, dtype=float)
        a, b = fn(xi)
        return np.stack(np.broadcast_arrays(a, b), axis=-1).astype(float)

    return wrapped


EXAMPLE2_DOMAIN = Rectangle(0.6, 1.6, 0.2, 1.2)


def _quartic(x):
    x1, x2 = x[..., 0], x[..., 1]
    return (x1**2 - x2**2) ** 2 - 4 * x1**2 * x2**2 + 0.5


def _quartic_grad(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([4 * x1**3 - 12 * x1 * x2**2, 4 * x2**3 - 12 * x1**2 * x2], axis=-1)


def _conjugate(x):
    x1, x2 = x[..., 0], x[..., 1]
    return 4 * x1 * x2 * (x1**2 - x2**2)


def _conjugate_grad(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([12 * x1**2 * x2 - 4 * x2**3, 4 * x1**3 - 12 * x1 * x2**2], axis=-1)


def covering_interval(g: Callable, box: Rectangle, search=(-10.0, 10.0), margin=0.05,
                      samples=200001) -> tuple:
    """Smallest parameter interval whose image covers ``g`` inside ``box``, padded."""
    t = np.linspace(*search, samples)
    inside = box.contains(g(t))
    if not np.any(inside):
        raise ValueError("curve does not meet the box")
    idx = np.flatnonzero(inside)
    lo, hi = t[max(idx[0] - 1, 0)], t[min(idx[-1] + 1, samples - 1)]
    pad = margin * (hi - lo)
    return float(lo - pad), float(hi + pad)


@lru_cache(maxsize=1)
def example2_curve() -> Curve:
    g, dg, d2g, d3g = (_vectorize(fn) for fn in _example2_derivatives())
    # generous padding: normal feet of coarse-mesh element corners fall outside the box
    domain = covering_interval(g, EXAMPLE2_DOMAIN, margin=0.5)
    curve = Curve(g, dg, d2g, d3g, domain=domain, name="quartic")
    check_orientation(curve, _quartic, np.linspace(*domain, 41))
    return curve


def example2(beta_minus=1.0, beta_plus=10.0) -> InterfaceProblem:
    """Quartic interface in ``(0.6, 1.6) x (0.2, 1.2)``; plus region where ``L > 0``.

    The exact solution is ``L/beta + Lc + Lc L/beta`` with ``Lc`` the harmonic
    conjugate of ``L``.  Both pieces are harmonic, so the source vanishes.
    """
    bm, bp = float(beta_minus), float(beta_plus)

    def binv(side):
        return np.where(np.asarray(side) < 0, 1.0 / bm, 1.0 / bp)

    def u(x, side):
        L, Lc = _quartic(x), _conjugate(x)
        return binv(side) * L + Lc + binv(side) * Lc * L

    def grad_u(x, side):
        L, Lc = _quartic(x), _conjugate(x)
        gL, gLc = _quartic_grad(x), _conjugate_grad(x)
        b = binv(side)[..., None]
        return b * gL + gLc + b * (Lc[..., None] * gL + L[..., None] * gLc)

    def f(x, side):
        return np.zeros(np.broadcast(x[..., 0], np.asarray(side)).shape)

    return InterfaceProblem("example2", EXAMPLE2_DOMAIN, example2_curve(), bm, bp,
                            _quartic, u, grad_u, f)


# ---------------------------------------------------------------------------
# smooth problem with equal coefficients, any curve


def smooth_problem(curve: Curve, domain: Rectangle, level_set: Callable, beta=1.0,
                   name="smooth") -> InterfaceProblem:
    """``u = sin(pi x) sin(pi y)`` with a single coefficient on both sides."""
    b = float(beta)

    def u(x, side):
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]) + 0.0 * np.asarray(side)

    def grad_u(x, side):
        sx, sy = np.sin(np.pi * x[..., 0]), np.sin(np.pi * x[..., 1])
        cx, cy = np.cos(np.pi * x[..., 0]), np.cos(np.pi * x[..., 1])
        return np.pi * np.stack([cx * sy, sx * cy], axis=-1) + 0.0 * np.asarray(side)[..., None]

    def f(x, side):
        return 2.0 * np.pi**2 * b * u(x, side)

    return InterfaceProblem(name, domain, curve, b, b, level_set, u, grad_u, f)


def get_problem(name: str, beta_minus: float, beta_plus: float,
                domain: Optional[Rectangle] = None) -> InterfaceProblem:
    if name in ("example1", "problem1", "1"):
        return example1(beta_minus, beta_plus)
    if name in ("example2", "problem2", "2"):
        return example2(beta_minus, beta_plus)
    raise KeyError(name)
