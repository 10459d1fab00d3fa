"""Frenet apparatus of a parametrized planar curve.

Points are arrays whose last axis has length 2.  Every routine is vectorized
over the leading axes of its inputs.  The normal is ``n = Q tau`` with
``Q = [[0, 1], [-1, 0]]``; the signed curvature is normalised so that the
Frenet-Serret relations ``tau' = -kappa |g'| n`` and ``n' = kappa |g'| tau``
hold for any regular parametrization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np

from .errors import (
    AmbiguousProjectionError,
    ConvergenceError,
    DegenerateTangentError,
    OutOfDomainError,
    SingularTubeError,
)

Q = np.array([[0.0, 1.0], [-1.0, 0.0]])

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
LINE_SEARCH_SAMPLES = 200
DOMAIN_MARGIN = 0.05


def cross(u, v):
    """2D wedge product ``u^T Q v``."""
    u = np.asarray(u)
    v = np.asarray(v)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def dot(u, v):
    return np.einsum("...i,...i->...", u, v)


@dataclass(frozen=True)
class Curve:
    """Regular parametrized curve ``g : [xi_s, xi_e] -> R^2``.

    ``g``, ``dg``, ``d2g`` and ``d3g`` take an array of parameters and return
    an array with one extra trailing axis of length 2.  ``d3g`` may be left
    out, in which case the curvature derivative falls back to a central
    difference.  Closed curves set ``period``; their parameters are not
    clipped to ``domain``.
    """

    g: Callable
    dg: Callable
    d2g: Callable
    d3g: Optional[Callable] = None
    domain: tuple = (0.0, 1.0)
    period: Optional[float] = None
    name: str = "curve"

    @property
    def length(self) -> float:
        return float(self.domain[1] - self.domain[0])

    def speed(self, xi):
        s = np.linalg.norm(self.dg(np.asarray(xi, dtype=float)), axis=-1)
        if np.any(s < 1e-13):
            raise DegenerateTangentError(f"|g'| < 1e-13 on {self.name}")
        return s

    def kappa(self, xi):
        xi = np.asarray(xi, dtype=float)
        d1 = self.dg(xi)
        s = self.speed(xi)
        return cross(d1, self.d2g(xi)) / s**3

    def dkappa(self, xi):
        """Derivative of the signed curvature with respect to the parameter."""
        xi = np.asarray(xi, dtype=float)
        if self.d3g is None:
            step = 1e-6 * self.length
            return (self.kappa(xi + step) - self.kappa(xi - step)) / (2 * step)
        d1, d2, d3 = self.dg(xi), self.d2g(xi), self.d3g(xi)
        s = self.speed(xi)
        return cross(d1, d3) / s**3 - 3.0 * cross(d1, d2) * dot(d1, d2) / s**5

    def in_domain(self, xi, margin=DOMAIN_MARGIN):
        if self.period is not None:
            return np.ones(np.shape(xi), dtype=bool)
        pad = margin * self.length
        xi = np.asarray(xi)
        return (xi >= self.domain[0] - pad) & (xi <= self.domain[1] + pad)


@dataclass(frozen=True)
class FrenetFrame:
    tau: np.ndarray
    n: np.ndarray
    kappa: np.ndarray
    speed: np.ndarray


@dataclass(frozen=True)
class FrenetPoint:
    eta: np.ndarray
    xi: np.ndarray

    def __iter__(self):
        yield self.eta
        yield self.xi


def frenet_apparatus(curve: Curve, xi) -> FrenetFrame:
    xi = np.asarray(xi, dtype=float)
    d1 = curve.dg(xi)
    s = np.linalg.norm(d1, axis=-1)
    if np.any(s < 1e-13):
        raise DegenerateTangentError(f"|g'| < 1e-13 on {curve.name}")
    tau = d1 / s[..., None]
    n = np.stack([tau[..., 1], -tau[..., 0]], axis=-1)
    kappa = cross(d1, curve.d2g(xi)) / s**3
    return FrenetFrame(tau=tau, n=n, kappa=kappa, speed=s)


def frenet_forward(curve: Curve, eta, xi, jacobian: bool = False):
    """Map Frenet coordinates to Cartesian points, ``g(xi) + eta n(xi)``.

    With ``jacobian=True`` also returns the 2x2 Jacobian whose columns are
    ``n`` and ``|g'| (1 + eta kappa) tau``.
    """
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    fr = frenet_apparatus(curve, xi)
    x = curve.g(xi) + eta[..., None] * fr.n
    if not jacobian:
        return x
    col2 = (fr.speed * (1.0 + eta * fr.kappa))[..., None] * fr.tau
    jac = np.stack([fr.n, col2], axis=-1)
    return x, jac


def frenet_inverse(curve: Curve, x, hint, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER) -> FrenetPoint:
    """Frenet coordinates ``(eta, xi)`` of Cartesian points by Newton's method.

    ``hint`` is an ``(eta0, xi0)`` pair (scalars or arrays broadcastable to the
    points).  Points where Newton fails fall back to a closest-point search
    and are polished again.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    eta0, xi0 = hint
    eta = np.broadcast_to(np.asarray(eta0, dtype=float), shape).reshape(-1).copy()
    xi = np.broadcast_to(np.asarray(xi0, dtype=float), shape).reshape(-1).copy()

    eta, xi, ok = _newton_inverse(curve, pts, eta, xi, tol, maxiter)
    if not np.all(ok):
        bad = ~ok
        xb = closest_point_param(curve, pts[bad])
        fr = frenet_apparatus(curve, xb)
        eb = dot(pts[bad] - curve.g(xb), fr.n)
        eb, xb, okb = _newton_inverse(curve, pts[bad], eb, xb, tol, maxiter)
        if not np.all(okb):
            raise ConvergenceError(
                f"Frenet inversion failed for {np.count_nonzero(~okb)} point(s) on {curve.name}"
            )
        eta[bad], xi[bad] = eb, xb
    if not np.all(curve.in_domain(xi)):
        raise OutOfDomainError(f"inverse Frenet parameter left the domain of {curve.name}")
    return FrenetPoint(eta.reshape(shape), xi.reshape(shape))


def _newton_inverse(curve, pts, eta, xi, tol, maxiter):
    scale = tol * (1.0 + np.linalg.norm(pts, axis=-1))
    span = curve.period if curve.period is not None else curve.length
    lost = np.zeros(len(pts), dtype=bool)
    ok = np.zeros(len(pts), dtype=bool)
    for _ in range(maxiter + 1):
        fr = frenet_apparatus(curve, xi)
        res = curve.g(xi) + eta[:, None] * fr.n - pts
        ok = (np.linalg.norm(res, axis=-1) <= scale) & ~lost
        if np.all(ok | lost):
            break
        stretch = 1.0 + eta * fr.kappa
        lost |= stretch <= 0
        stretch = np.where(lost, 1.0, stretch)
        eta = np.where(lost, eta, eta - dot(fr.n, res))
        xi = np.where(lost, xi, xi - dot(fr.tau, res) / (fr.speed * stretch))
        # a runaway iterate is handed to the closest-point fallback
        lost |= ~np.isfinite(xi) | ~np.isfinite(eta) | (np.abs(xi) > 1e3 * (1.0 + span))
        xi = np.where(lost, 0.0, xi)
        eta = np.where(lost, 0.0, eta)
    # one more step on converged points takes them to rounding level
    good = ok & ~lost
    if np.any(good):
        fr = frenet_apparatus(curve, xi[good])
        res = curve.g(xi[good]) + eta[good, None] * fr.n - pts[good]
        stretch = 1.0 + eta[good] * fr.kappa
        eta[good] = eta[good] - dot(fr.n, res)
        xi[good] = xi[good] - dot(fr.tau, res) / (fr.speed * stretch)
    return eta, xi, good


def closest_point_param(curve: Curve, x, window=None, samples=LINE_SEARCH_SAMPLES, tol=1e-12):
    """Parameter of the point of the curve closest to each ``x``.

    Coarse line search over ``window`` (default: the curve domain, or one
    period), one guarded Newton step on ``|g - x|^2 = 0``, Barzilai-Borwein
    descent on ``|g - x|^2`` and a final Newton polish of the stationarity
    condition ``g' . (g - x) = 0``.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    lo, hi = window if window is not None else curve.domain
    if window is None and curve.period is not None:
        hi = lo + curve.period
    periodic = window is None and curve.period is not None
    grid = np.linspace(lo, hi, samples, endpoint=not periodic)
    gpts = curve.g(grid)

    xi = np.empty(len(pts))
    chunk = max(1, 200000 // samples)
    for start in range(0, len(pts), chunk):
        p = pts[start:start + chunk]
        d2 = np.sum((gpts[None, :, :] - p[:, None, :]) ** 2, axis=-1)
        best = np.argmin(d2, axis=1)
        bval = d2[np.arange(len(p)), best]
        idx = np.arange(samples)[None, :]
        sep = np.abs(idx - best[:, None])
        if periodic:
            sep = np.minimum(sep, samples - sep)
        far = sep > 1
        close = d2 <= bval[:, None] + 1e-12 * (1.0 + bval[:, None])
        if np.any(far & close):
            raise AmbiguousProjectionError(
                f"closest point on {curve.name} is not unique for a query point"
            )
        xi[start:start + chunk] = grid[best]

    def objective(t):
        return np.sum((curve.g(t) - pts) ** 2, axis=-1)

    def gradient(t):
        return 2.0 * dot(curve.dg(t), curve.g(t) - pts)

    # guarded Newton step on the squared distance
    f0 = objective(xi)
    gr = gradient(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        trial = xi - f0 / gr
    trial = np.where(np.isfinite(trial), trial, xi)
    bounded = window is not None or curve.period is None
    if bounded:
        trial = np.clip(trial, lo, hi)
    better = objective(trial) < f0
    xi = np.where(better, trial, xi)

    # Barzilai-Borwein descent
    gr = gradient(xi)
    gamma = 0.5 / np.maximum(np.sum(curve.dg(xi) ** 2, axis=-1), 1e-300)
    for _ in range(200):
        step = gamma * gr
        xi_new = xi - step
        if bounded:
            xi_new = np.clip(xi_new, lo, hi)
        gr_new = gradient(xi_new)
        s = xi_new - xi
        y = gr_new - gr
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = (s * s) / (s * y)
        gamma = np.where((s * y > 0) & np.isfinite(bb), bb, gamma)
        xi, gr = xi_new, gr_new
        if np.all(np.abs(s) <= 1e-10 * (1.0 + np.abs(xi))):
            break

    # Newton polish of the stationarity condition
    for _ in range(8):
        d1 = curve.dg(xi)
        r = curve.g(xi) - pts
        fp = dot(d1, r)
        fpp = np.sum(d1 * d1, axis=-1) + dot(curve.d2g(xi), r)
        upd = np.where(fpp > 0, fp / np.where(fpp > 0, fpp, 1.0), 0.0)
        xi = xi - upd
        if bounded:
            xi = np.clip(xi, lo, hi)
        if np.all(np.abs(upd) <= 1e-15 * (1.0 + np.abs(xi))):
            break

    fr = frenet_apparatus(curve, xi)
    stat = np.abs(dot(fr.tau, curve.g(xi) - pts))
    bad = stat > 1e3 * tol * (1.0 + np.linalg.norm(pts, axis=-1))
    if bounded and np.any(bad & ((xi <= lo) | (xi >= hi))):
        raise OutOfDomainError(f"closest point on {curve.name} lies at the end of the parameter window")
    if np.any(stat > 1e3 * tol * (1.0 + np.linalg.norm(pts, axis=-1))):
        raise ConvergenceError(f"closest-point search did not converge on {curve.name}")
    return xi.reshape(shape)


def metric_coeffs(curve: Curve, xi, eta=0.0, max_order: int = 0) -> dict:
    """Metric factors of the Frenet Laplacian.

    Returns ``J0, J1, J2`` at ``(eta, xi)`` and, under ``dJ0, dJ1, dJ2``, the
    eta-derivatives of orders ``0..max_order`` at ``eta = 0`` stacked along
    the first axis.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    fr = frenet_apparatus(curve, xi)
    k, s = fr.kappa, fr.speed
    kp = curve.dkappa(xi)
    gg = dot(curve.dg(xi), curve.d2g(xi))
    stretch = 1.0 + eta * k
    if np.any(stretch <= 0):
        raise SingularTubeError("1 + eta * kappa <= 0")
    psi = 1.0 / stretch
    a = (psi / s) ** 2
    out = {
        "J0": a,
        "J1": k * psi,
        "J2": -a * (eta * kp * psi + gg / s**2),
    }
    dJ0, dJ1, dJ2 = [], [], []
    for l in range(max_order + 1):
        sgn = (-1.0) ** l
        dJ0.append(sgn * factorial(l + 1) * k**l / s**2)
        dJ1.append(k * sgn * factorial(l) * k**l)
        term = -gg / s**4 * sgn * factorial(l + 1) * k**l
        if l >= 1:
            term = term - kp / s**2 * (l * (-1.0) ** (l - 1) * factorial(l + 1) / 2 * k ** (l - 1))
        dJ2.append(term)
    out["dJ0"] = np.array(dJ0)
    out["dJ1"] = np.array(dJ1)
    out["dJ2"] = np.array(dJ2)
    out["kappa"] = k
    out["speed"] = s
    return out


def frenet_laplacian(curve: Curve, eta, xi, u_eta, u_xi, u_etaeta, u_xixi):
    """Cartesian Laplacian of ``u`` written through its Frenet derivatives."""
    mc = metric_coeffs(curve, xi, eta)
    return u_etaeta + mc["J0"] * u_xixi + mc["J1"] * u_eta + mc["J2"] * u_xi


def pushforward_gradient(curve: Curve, eta, xi, du_eta, du_xi):
    """Cartesian gradient from the Frenet partial derivatives of ``u o P``."""
    eta = np.asarray(eta, dtype=float)
    fr = frenet_apparatus(curve, xi)
    stretch = 1.0 + eta * fr.kappa
    if np.any(stretch <= 0):
        raise SingularTubeError("1 + eta * kappa <= 0")
    c = np.asarray(du_xi) / (fr.speed * stretch)
    return np.asarray(du_eta)[..., None] * fr.n + c[..., None] * fr.tau


# ---------------------------------------------------------------------------
# stock curves


def circle(radius=1.0, center=(0.0, 0.0), start=-np.pi) -> Curve:
    """Counter-clockwise circle; its normal points outward."""
    cx, cy = center
    r = float(radius)

    def g(t):
        t = np.asarray(t, dtype=float)
        return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=-1)

    def dg(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-r * np.sin(t), r * np.cos(t)], axis=-1)

    def d2g(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-r * np.cos(t), -r * np.sin(t)], axis=-1)

    def d3g(t):
        t = np.asarray(t, dtype=float)
        return np.stack([r * np.sin(t), -r * np.cos(t)], axis=-1)

    return Curve(g, dg, d2g, d3g, domain=(start, start + 2 * np.pi), period=2 * np.pi,
                 name=f"circle(r={r:g})")


def line(point=(0.0, 0.0), direction=(1.0, 0.0), domain=(-10.0, 10.0)) -> Curve:
    p = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)

    def g(t):
        t = np.asarray(t, dtype=float)
        return p + t[..., None] * d

    def dg(t):
        return np.broadcast_to(d, np.shape(t) + (2,)).copy()

    def zero(t):
        return np.zeros(np.shape(t) + (2,))

    return Curve(g, dg, zero, zero, domain=tuple(domain), name="line")
