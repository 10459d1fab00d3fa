import csv

import numpy as np
import pytest

from frenet_ife.errors import MeshError, MultiCutError, TubeViolationError
from frenet_ife.geometry import circle, frenet_inverse, line
from frenet_ife.mesh import (CutTopology, build_charts, build_mesh, classify_elements, element_corners,
                             element_cut, fictitious_chart, summary_rows, write_summary)
from frenet_ife.problems import Rectangle, example1, example2


def test_counts_two_by_two():
    m = build_mesh(Rectangle(-1, 1, -1, 1), 2)
    assert m.n_elements == 4
    assert m.n_edges == 12
    assert len(m.interior_edges) == 4 and len(m.boundary_edges) == 8


def test_coarse_example_mesh():
    m = build_mesh(Rectangle(0.6, 1.6, 0.2, 1.2), 5)
    assert m.n_elements == 25
    assert m.hx == pytest.approx(0.2) and m.hy == pytest.approx(0.2)


def test_diameter():
    m = build_mesh(Rectangle(-1, 1, -1, 1), 20)
    assert m.h == pytest.approx(0.1 * np.sqrt(2))


def test_edge_incidence():
    m = build_mesh(Rectangle(0, 1, 0, 2), (3, 4))
    counts = np.zeros(m.n_elements, dtype=int)
    for ed in range(m.n_edges):
        counts[m.edge_left[ed]] += 1
        if m.edge_right[ed] >= 0:
            counts[m.edge_right[ed]] += 1
            # normal points from left to right
            cl = m.element_origins()[m.edge_left[ed]]
            cr = m.element_origins()[m.edge_right[ed]]
            assert np.dot(cr - cl, m.edge_normal[ed]) > 0
    assert np.all(counts == 4)
    for e in range(m.n_elements):
        rect = m.element_rect(e)
        for ed in m.element_edges[e]:
            mid = m.edge_nodes[ed].mean(axis=0)
            assert rect.contains(mid, tol=1e-14)


def test_degenerate_domain():
    with pytest.raises(MeshError):
        build_mesh(Rectangle(0, 0, 0, 1), 2)
    with pytest.raises(MeshError):
        build_mesh(Rectangle(0, 1, 0, 1), 0)


def _brute_force_interface(mesh, r0, samples=400):
    out = set()
    for e in range(mesh.n_elements):
        c = element_corners(mesh.element_rect(e))
        pts = np.concatenate([c[k] + np.linspace(0, 1, samples, endpoint=False)[:, None] * (c[(k + 1) % 4] - c[k])
                              for k in range(4)])
        s = np.sign(np.hypot(pts[:, 0], pts[:, 1]) - r0)
        if np.any(s < 0) and np.any(s > 0):
            out.add(e)
    return out


def test_classification_matches_brute_force():
    prob = example1()
    mesh = build_mesh(prob.domain, 20)
    cls = classify_elements(mesh, prob.curve, prob.level_set)
    assert set(cls.cuts) == _brute_force_interface(mesh, 1 / np.sqrt(3))
    for e, cut in cls.cuts.items():
        rect = mesh.element_rect(e)
        for p in (cut.d, cut.e):
            assert abs(np.hypot(*p) - 1 / np.sqrt(3)) <= 1e-12
            on_edge = min(abs(p[0] - rect.x0), abs(p[0] - rect.x1), abs(p[1] - rect.y0), abs(p[1] - rect.y1))
            assert on_edge <= 1e-12


def test_non_interface_side():
    prob = example1()
    mesh = build_mesh(prob.domain, 20)
    cls = classify_elements(mesh, prob.curve, prob.level_set)
    centre = mesh.element_index(10, 10)   # touches the origin
    assert not cls.interface[centre] and cls.side[centre] == -1
    assert cls.side[0] == 1


def test_k_eps_intersections():
    eps = 0.1
    lo = 1 / np.sqrt(2) - eps
    rect = Rectangle(lo, lo + 0.5, lo, lo + 0.5)
    cut = element_cut(rect, circle(1.0))
    assert cut is not None
    for p in (cut.d, cut.e):
        assert abs(np.hypot(*p) - 1.0) <= 1e-12
    # bisection oracle along the two edges through the lower-left corner
    f = lambda t: np.hypot(lo + t, lo) - 1.0
    a, b = 0.0, 0.5
    for _ in range(80):
        c = 0.5 * (a + b)
        a, b = (c, b) if f(a) * f(c) > 0 else (a, c)
    xs = sorted(p[0] for p in (cut.d, cut.e) if abs(p[1] - lo) < 1e-14)
    assert xs and abs(xs[0] - (lo + a)) <= 1e-12


def test_chart_circle_containment():
    c = circle(1.0)
    cx, cy = np.cos(0.1), np.sin(0.1)
    rect = Rectangle(cx - 0.05, cx + 0.05, cy - 0.05, cy + 0.05)
    cut = element_cut(rect, c)
    ch = fictitious_chart(rect, c, cut)
    assert ch.a < 0.1 < ch.b
    fp = frenet_inverse(c, element_corners(rect), (0.0, 0.1))
    assert np.all((fp.xi >= ch.a - 1e-14) & (fp.xi <= ch.b + 1e-14))
    assert ch.a <= cut.xi_d <= cut.xi_e <= ch.b
    assert ch.half_width == pytest.approx(rect.diameter)


def test_chart_line_exact():
    ln = line((0.0, 0.0), (1.0, 0.0), domain=(-5, 5))
    rect = Rectangle(0, 1, -0.5, 0.5)
    cut = CutTopology(0, np.array([0.0, 0.0]), np.array([1.0, 0.0]), 0.0, 1.0, 3, 1, np.array([1, 1, -1, -1]))
    ch = fictitious_chart(rect, ln, cut)
    assert ch.a == 0.0 and ch.b == 1.0


def test_chart_size_example2():
    prob = example2()
    mesh = build_mesh(prob.domain, 10)
    cls = classify_elements(mesh, prob.curve, prob.level_set)
    charts = build_charts(mesh, prob.curve, cls)
    assert charts
    for e, ch in charts.items():
        length = np.mean(prob.curve.speed(np.linspace(ch.a, ch.b, 9))) * (ch.b - ch.a)
        assert 0.2 <= length / mesh.h <= 5
        assert ch.a <= cls.cuts[e].xi_d <= cls.cuts[e].xi_e <= ch.b


@pytest.mark.parametrize("factory,n", [(example1, 10), (example2, 10)])
def test_orientation_consistent(factory, n):
    prob = factory()
    mesh = build_mesh(prob.domain, n)
    cls = classify_elements(mesh, prob.curve, prob.level_set)
    charts = build_charts(mesh, prob.curve, cls)
    rng = np.random.default_rng(0)
    for e, ch in charts.items():
        r = mesh.element_rect(e)
        pts = np.stack([rng.uniform(r.x0, r.x1, 20), rng.uniform(r.y0, r.y1, 20)], -1)
        eta = ch.to_frenet(pts).eta
        ls = prob.level_set(pts)
        keep = np.abs(ls) > 1e-9
        assert np.all(np.sign(eta[keep]) == np.sign(ls[keep]))


def test_refinement_monotone():
    prob = example1()
    coarse = classify_elements(build_mesh(prob.domain, 10), prob.curve, prob.level_set)
    fine_mesh = build_mesh(prob.domain, 20)
    fine = classify_elements(fine_mesh, prob.curve, prob.level_set)
    for e in fine.cuts:
        i, j = e % 20, e // 20
        assert coarse.interface[(j // 2) * 10 + i // 2]


def test_multi_cut_error():
    # a tight circle inside one coarse element crosses its boundary four times
    with pytest.raises(MultiCutError):
        classify_elements(build_mesh(Rectangle(-1, 1, -1, 1), 1), circle(1.1))


def test_tube_violation():
    c = circle(0.3)
    rect = Rectangle(0.2, 0.6, -0.2, 0.2)
    cut = element_cut(rect, c)
    with pytest.raises(TubeViolationError):
        fictitious_chart(rect, c, cut, tube_limit=0.5)


def test_summary_export(tmp_path):
    prob = example1()
    mesh = build_mesh(prob.domain, 8)
    cls = classify_elements(mesh, prob.curve, prob.level_set)
    rows = summary_rows(mesh, cls, build_charts(mesh, prob.curve, cls))
    path = tmp_path / "summary.csv"
    write_summary(path, rows)
    with open(path) as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == ["element_id", "tag", "xi_D", "xi_E", "a_K", "b_K"]
    assert sum(r["tag"] == "interface" for r in table) == len(cls.cuts)
