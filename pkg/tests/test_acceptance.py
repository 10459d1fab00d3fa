"""Acceptance suite: one test per criterion, each printing a single pass/fail line."""

import dataclasses

import numpy as np

from frenet_ife import geometry
from frenet_ife.assembly import discretize, project_l2
from frenet_ife.geometry import Curve, circle, frenet_apparatus, frenet_forward, frenet_inverse, line
from frenet_ife.ife_basis import build_local_space, conditioning_study, jump_residual
from frenet_ife.mesh import element_cut
from frenet_ife.problems import (EXAMPLE2_DOMAIN, Rectangle, covering_interval, example1, example2,
                                 example2_curve, smooth_problem)
from frenet_ife.quadrature import cut_cell_rule
from frenet_ife.solver import assemble_and_solve, compute_error, convergence_rates

R0 = 1 / np.sqrt(3)


# -- helpers ----------------------------------------------------------------

def radius2():
    return Curve(lambda t: np.stack([2 * np.cos(t), 2 * np.sin(t)], -1),
                 lambda t: np.stack([-2 * np.sin(t), 2 * np.cos(t)], -1),
                 lambda t: np.stack([-2 * np.cos(t), -2 * np.sin(t)], -1),
                 lambda t: np.stack([2 * np.sin(t), -2 * np.cos(t)], -1),
                 domain=(-np.pi, np.pi), period=2 * np.pi, name="r2")


def laplacian_of_cubic(curve, eta, xi):
    """Frenet-coordinate Laplacian of x^3 y^2 and its Cartesian value."""
    fr = frenet_apparatus(curve, xi)
    g, dg, d2g = curve.g(xi), curve.dg(xi), curve.d2g(xi)
    ks = fr.kappa * fr.speed
    x = g + eta[:, None] * fr.n
    x_eta = fr.n
    x_xi = dg + (eta * ks)[:, None] * fr.tau
    s_p = np.sum(dg * d2g, -1) / fr.speed
    dks = curve.dkappa(xi) * fr.speed + fr.kappa * s_p
    x_xixi = d2g + eta[:, None] * (dks[:, None] * fr.tau - (ks**2)[:, None] * fr.n)
    X, Y = x[:, 0], x[:, 1]
    gu = np.stack([3 * X**2 * Y**2, 2 * X**3 * Y], -1)
    H = np.stack([np.stack([6 * X * Y**2, 6 * X**2 * Y], -1), np.stack([6 * X**2 * Y, 2 * X**3], -1)], -2)
    u_eta = np.sum(gu * x_eta, -1)
    u_xi = np.sum(gu * x_xi, -1)
    u_ee = np.einsum("ni,nij,nj->n", x_eta, H, x_eta)
    u_xx = np.einsum("ni,nij,nj->n", x_xi, H, x_xi) + np.sum(gu * x_xixi, -1)
    return geometry.frenet_laplacian(curve, eta, xi, u_eta, u_xi, u_ee, u_xx), 6 * X * Y**2 + 2 * X**3


def discrete_difference(da, ca, db, cb):
    """Relative L2 distance between two discrete functions on the same mesh and rules."""
    Ca, Cb = ca.reshape(da.mesh.n_elements, -1), cb.reshape(db.mesh.n_elements, -1)
    num = den = 0.0
    for e in range(da.mesh.n_elements):
        rule = da.volume_rule(e)
        va = da.space(e).tabulate(rule.points, rule.side if e in da.spaces else None, grad=False)[0] @ Ca[e]
        vb = db.space(e).tabulate(rule.points, rule.side if e in db.spaces else None, grad=False)[0] @ Cb[e]
        num += rule.integrate((va - vb) ** 2)
        den += rule.integrate(vb**2)
    return float(np.sqrt(num / den))


def clip_left(poly, p0, d):
    """Part of a convex polygon left of the directed line through ``p0`` along ``d``."""
    side = lambda q: d[0] * (q[1] - p0[1]) - d[1] * (q[0] - p0[0])
    out = []
    for a, b in zip(poly, poly[1:] + poly[:1]):
        sa, sb = side(a), side(b)
        if sa >= 0:
            out.append(a)
        if sa * sb < 0:
            t = sa / (sa - sb)
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    return out


def polygon_moment(poly, dx, dy):
    """Exact monomial moment over a convex polygon: triangle fan with collapsed Gauss rules."""
    n = dx + dy + 2
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = 0.5 * (t + 1), 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    W = np.outer(w, w)
    A = np.array(poly[0])
    total = 0.0
    for B, C in zip(poly[1:-1], poly[2:]):
        B, C = np.array(B), np.array(C)
        twice_area = abs((B - A)[0] * (C - A)[1] - (B - A)[1] * (C - A)[0])
        P = A + U[..., None] * (B - A) + (U * V)[..., None] * (C - B)
        total += np.sum(W * twice_area * U * P[..., 0] ** dx * P[..., 1] ** dy)
    return total


# -- criteria ---------------------------------------------------------------

def test_criterion_01_frenet_identities(criterion):
    rep = criterion("1 (Frenet round trip and Laplacian)", 10)
    box1 = example1().domain
    box2 = EXAMPLE2_DOMAIN
    cases = {"unit circle": (circle(1.0), (-np.pi, np.pi), box1),
             "radius-2 circle": (radius2(), (-np.pi, np.pi), box1),
             "line": (line((0.0, 0.137), (1.0, 0.0)), (-1.0, 1.0), box1),
             "Example 2 curve": (example2_curve(), covering_interval(example2_curve().g, box2, margin=0.0), box2)}
    rng = np.random.default_rng(2024)
    worst_trip, worst_lap, ok = 0.0, 0.0, True
    for curve, (lo, hi), box in cases.values():
        xi = rng.uniform(lo, hi, 1000)
        kmax = np.max(np.abs(curve.kappa(xi)))
        width = 0.1 if kmax == 0 else min(0.1, 0.4 / kmax)
        eta = rng.uniform(-width, width, 1000)
        x = frenet_forward(curve, eta, xi)
        p = frenet_inverse(curve, x, (0.0, xi + rng.uniform(-0.05, 0.05, 1000)))
        diam = np.hypot(box.x1 - box.x0, box.y1 - box.y0)
        trip = np.max(np.linalg.norm(frenet_forward(curve, p.eta, p.xi) - x, axis=-1)) / diam
        L, want = laplacian_of_cubic(curve, eta, xi)
        lap = np.max(np.abs(L - want) / (1 + np.abs(want)))
        worst_trip, worst_lap = max(worst_trip, trip), max(worst_lap, lap)
        ok &= trip <= 1e-10 and lap <= 1e-8
    assert rep.finish(ok, f"round trip {worst_trip:.1e} diam (tol 1e-10), Laplacian {worst_lap:.1e} (tol 1e-8)")


def test_criterion_02_jump_conformity(criterion):
    rep = criterion("2 (exact jump conformity)", 30)
    worst, count = 0.0, 0
    for bp in (10.0, 1000.0):
        for m in (1, 2, 3, 4):
            disc = discretize(example1(beta_plus=bp), 10, m)
            for sp in disc.spaces.values():
                worst = max(worst, jump_residual(sp, samples=50).max_exact())
                count += sp.dim
    assert rep.finish(worst <= 1e-11, f"{count} shapes, worst scaled jump {worst:.1e} (tol 1e-11)")


def test_criterion_03_equal_beta_consistency(criterion):
    rep = criterion("3 (equal-beta consistency on the circle)", 30)
    prob = example1(beta_minus=1.0, beta_plus=1.0)
    c_max = 0.0
    for m in (2, 3, 4):
        disc = discretize(prob, 10, m)
        c_max = max(c_max, max(float(np.max(np.abs(sp.ext_coef))) for sp in disc.spaces.values()))
    m = 2
    ife = assemble_and_solve(discretize(prob, 10, m))
    std = assemble_and_solve(discretize(prob, 10, m, ife=False))
    diff = discrete_difference(ife.disc, ife.solution, std.disc, std.solution)
    assert rep.finish(c_max <= 1e-12 and diff <= 1e-10,
                      f"max |c| {c_max:.1e} (tol 1e-12), IDG vs SIPG relative {diff:.1e} (tol 1e-10)")


def test_criterion_03_supplement_straight_interface(criterion):
    # on a straight interface the equal-beta IFE space is exactly Q^m, so the solves must agree
    rep = criterion("3-supplement (equal-beta consistency, straight interface)", 30)
    y0 = 0.137
    prob = smooth_problem(line((0.0, y0), (1.0, 0.0)), Rectangle(-1, 1, -1, 1), lambda x: y0 - x[..., 1])
    prob = dataclasses.replace(prob, u=lambda x, s: np.sin(2 * x[..., 0]) * np.exp(x[..., 1]) + 0.0 * np.asarray(s),
                               grad_u=lambda x, s: np.stack([2 * np.cos(2 * x[..., 0]) * np.exp(x[..., 1]),
                                                             np.sin(2 * x[..., 0]) * np.exp(x[..., 1])], -1)
                               + 0.0 * np.asarray(s)[..., None],
                               f=lambda x, s: 3 * np.sin(2 * x[..., 0]) * np.exp(x[..., 1]) + 0.0 * np.asarray(s))
    c_max, diff = 0.0, 0.0
    for m in (2, 3):
        d_ife = discretize(prob, 10, m)
        c_max = max(c_max, max(float(np.max(np.abs(sp.ext_coef))) for sp in d_ife.spaces.values()))
        ife = assemble_and_solve(d_ife)
        std = assemble_and_solve(discretize(prob, 10, m, ife=False))
        diff = max(diff, discrete_difference(ife.disc, ife.solution, std.disc, std.solution))
    assert rep.finish(c_max <= 1e-12 and diff <= 1e-10,
                      f"max |c| {c_max:.1e} (tol 1e-12), IDG vs SIPG relative {diff:.1e} (tol 1e-10)")


def _h_study(problem_of, degrees, meshes, betas, solve: bool):
    errs = {}
    for bp in betas:
        for m in degrees:
            for n in meshes:
                disc = discretize(problem_of(bp), n, m)
                coef = assemble_and_solve(disc).solution if solve else project_l2(disc)
                errs[bp, m, n] = (disc.mesh.h, compute_error(disc, coef).rel_l2)
    fits = {(bp, m): convergence_rates([errs[bp, m, n] for n in meshes]) for bp in betas for m in degrees}
    slopes = {k: f.slope for k, f in fits.items()}
    finest = min(f.pairwise[-1] - m for (bp, m), f in fits.items())
    return errs, slopes, finest


def test_criterion_04_projection_h_convergence(criterion):
    rep = criterion("4 (projection h-convergence, Example 1)", 180)
    meshes, betas = (8, 16, 32, 64), (10.0, 1000.0)
    errs, slopes, finest = _h_study(lambda bp: example1(beta_plus=bp), (1, 2, 3), meshes, betas, solve=False)
    margin = min(s - (m + 0.8) for (bp, m), s in slopes.items())
    spread = max(max(errs[b, m, n][1] for b in betas) / min(errs[b, m, n][1] for b in betas)
                 for m in (1, 2, 3) for n in meshes)
    text = ", ".join(f"m={m}: " + "/".join(f"{slopes[b, m]:.2f}" for b in betas) for m in (1, 2, 3))
    assert rep.finish(margin >= 0 and spread <= 5,
                      f"slopes {text} (need m+0.8), finest-pair rate >= m+{finest:.2f}, "
                      f"beta spread {spread:.2f} (max 5)")


def test_criterion_05_solve_h_convergence(criterion):
    rep = criterion("5 (solve h-convergence, Example 1)", 300)
    betas = (10.0, 1000.0)
    _, slopes, finest = _h_study(lambda bp: example1(beta_plus=bp), (1, 2, 3), (8, 16, 32, 64), betas, solve=True)
    margin = min(s - (m + 0.8) for (bp, m), s in slopes.items())
    text = ", ".join(f"m={m}: " + "/".join(f"{slopes[b, m]:.2f}" for b in betas) for m in (1, 2, 3))
    assert rep.finish(margin >= 0, f"slopes {text} (need m+0.8), finest-pair rate >= m+{finest:.2f}")


def test_criterion_06_example2_h_convergence(criterion):
    rep = criterion("6 (solve h-convergence, Example 2)", 300)
    betas = (10.0, 100.0)
    _, slopes, finest = _h_study(lambda bp: example2(beta_plus=bp), (1, 2, 3), (10, 20, 40), betas, solve=True)
    margin = min(s - (m + 0.75) for (bp, m), s in slopes.items())
    text = ", ".join(f"m={m}: " + "/".join(f"{slopes[b, m]:.2f}" for b in betas) for m in (1, 2, 3))
    assert rep.finish(margin >= 0, f"slopes {text} (need m+0.75), finest-pair rate >= m+{finest:.2f}")


def test_criterion_07_p_convergence(criterion):
    rep = criterion("7 (p-convergence, 5x5 mesh)", 180)
    degrees = np.arange(1, 7)
    errs = np.array([compute_error(s.disc, s.solution).rel_l2 for s in
                     (assemble_and_solve(discretize(example1(beta_plus=10.0), 5, int(m))) for m in degrees)])
    slope, icpt = np.polyfit(degrees, np.log(errs), 1)
    fit = slope * degrees + icpt
    r2 = 1 - np.sum((np.log(errs) - fit) ** 2) / np.sum((np.log(errs) - np.log(errs).mean()) ** 2)
    decreasing = bool(np.all(np.diff(errs) < 0))
    ratio = errs[-1] / errs[0]
    ok = decreasing and ratio <= 1e-3 and slope < 0 and r2 >= 0.9
    assert rep.finish(ok, f"errors {' '.join(f'{e:.1e}' for e in errs)}, err6/err1 {ratio:.1e} (max 1e-3), "
                          f"log slope {slope:.2f}, R^2 {r2:.3f} (min 0.9)")


def test_criterion_08_conditioning(criterion):
    rep = criterion("8 (extension conditioning as eps -> 0)", 30)
    eps = [10.0**-k for k in range(1, 7)]
    ratios = {}
    for m in (2, 3, 4, 5):
        conds = [c for _, _, c in conditioning_study(circle(1.0), m, eps)]
        ratios[m] = max(conds) / min(conds)
    worst = max(ratios.values())
    text = ", ".join(f"m={m}: {r:.2f}" for m, r in ratios.items())
    assert rep.finish(worst <= 10, f"max/min cond ratio {text} (max 10)")


def test_criterion_09_quadrature_oracles(criterion):
    rep = criterion("9 (cut-cell quadrature oracles)", 60)
    rng = np.random.default_rng(99)
    c = circle(R0)
    n_mc = 10**7
    worst_sigma = 0.0
    for rect in (Rectangle(0.4, 0.6, 0.2, 0.4), Rectangle(-0.2, 0.0, 0.4, 0.6),
                 Rectangle(-0.6, -0.4, -0.4, -0.2), Rectangle(0.2, 0.4, -0.6, -0.4)):
        rule = cut_cell_rule(rect, c, element_cut(rect, c), 8)
        inside = 0
        for _ in range(10):
            pts = rng.uniform([rect.x0, rect.y0], [rect.x1, rect.y1], (n_mc // 10, 2))
            inside += np.count_nonzero(np.hypot(pts[:, 0], pts[:, 1]) < R0)
        frac = inside / n_mc
        se = np.sqrt(frac * (1 - frac) / n_mc) * rect.area
        for s, ref in ((-1, frac * rect.area), (1, (1 - frac) * rect.area)):
            worst_sigma = max(worst_sigma, abs(rule.restrict(s).weights.sum() - ref) / se)
    # straight cuts: every monomial of degree <= q on each side against a polygon oracle
    rect, q = Rectangle(0.0, 0.5, 0.0, 0.5), 6
    square = [(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
    worst_poly = 0.0
    for p0, d in (((0.0, 0.1), (1.0, 0.25)), ((0.15, 0.0), (0.2, 1.0)),
                  ((0.0, 0.9), (1.0, -1.0)), ((0.4, 1.0), (-0.3, -2.0))):
        ln = line(p0, d, domain=(-3, 3))
        rule = cut_cell_rule(rect, ln, element_cut(rect, ln), q)
        pieces = {}
        for s in (-1, 1):
            r = rule.restrict(s)
            x = r.points[len(r) // 2]
            left = d[0] * (x[1] - p0[1]) - d[1] * (x[0] - p0[0]) > 0
            pieces[s] = (r, clip_left(square, p0, d) if left else clip_left(square, p0, (-d[0], -d[1])))
        for dx in range(q + 1):
            for dy in range(q + 1 - dx):
                for r, poly in pieces.values():
                    got = r.integrate(r.points[:, 0] ** dx * r.points[:, 1] ** dy)
                    worst_poly = max(worst_poly, abs(got - polygon_moment(poly, dx, dy)))
    ok = worst_sigma <= 3 and worst_poly <= 1e-12
    assert rep.finish(ok, f"worst Monte Carlo deviation {worst_sigma:.2f} sigma (max 3), "
                          f"straight-cut moment error {worst_poly:.1e} (tol 1e-12)")


def test_criterion_10_matrix_structure(criterion):
    rep = criterion("10 (extension matrix structure)", 10)
    identical, worst = True, 0.0
    for m in (2, 3, 4, 5):
        disc = discretize(example1(beta_plus=10.0), 10, m)
        size = m + 1
        for e, chart in disc.charts.items():
            rect = disc.mesh.element_rect(e)
            A = build_local_space(chart, m, (1.0, 10.0), rect).A
            identical &= np.array_equal(A, build_local_space(chart, m, (1.0, 1000.0), rect).A)
            identical &= np.array_equal(A, build_local_space(chart, m, (3.0, 0.5), rect).A)
            norm = np.linalg.norm(A, 2)
            for j in range(m - 1):
                upper = A[j * size:(j + 1) * size, (j + 1) * size:]
                if upper.size:
                    worst = max(worst, float(np.max(np.abs(upper))) / norm)
    assert rep.finish(identical and worst <= 1e-12,
                      f"A bitwise equal across beta: {identical}, worst super-block entry {worst:.1e} ||A|| "
                      f"(tol 1e-12)")
