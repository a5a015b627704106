import numpy as np

from roacert import figures


def circle_field(res=101, r=1.0, lim=2.0):
    xs = np.linspace(-lim, lim, res)
    ys = np.linspace(-lim, lim, res)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    return xs, ys, XX * XX + YY * YY - r * r


def test_marching_squares_circle_radius():
    xs, ys, Z = circle_field()
    segs = figures.marching_squares(xs, ys, Z, 0.0)
    assert len(segs) > 50
    pts = np.array([p for seg in segs for p in seg])
    radii = np.linalg.norm(pts, axis=1)
    # linear interpolation error is O(h^2) with h = 0.04
    assert np.max(np.abs(radii - 1.0)) < 5e-3


def test_marching_squares_no_crossing_no_segments():
    xs, ys, Z = circle_field()
    assert figures.marching_squares(xs, ys, Z, -2.0) == []
    assert figures.marching_squares(xs, ys, Z, 100.0) == []


def test_cell_union_outline_single_cell():
    points = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])
    mask = np.array([True, False, False, False])
    segs = figures.cell_union_outline(mask, points, (2, 2), 1.0)
    assert len(segs) == 4  # a lone cell exposes all four faces
    total = sum(np.linalg.norm(np.subtract(b, a)) for a, b in segs)
    np.testing.assert_allclose(total, 4.0)


def test_cell_union_outline_interior_faces_hidden():
    points = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])
    mask = np.ones(4, dtype=bool)
    segs = figures.cell_union_outline(mask, points, (2, 2), 1.0)
    total = sum(np.linalg.norm(np.subtract(b, a)) for a, b in segs)
    np.testing.assert_allclose(total, 8.0)  # perimeter of the 2x2 block


def test_render_field_shapes_and_values():
    xs, ys, Z = figures.render_field(
        lambda X: X[:, 0] + 10 * X[:, 1], [(-1, 1), (0, 2)], res=5)
    assert Z.shape == (5, 5)
    assert Z[0, 0] == -1.0 + 0.0
    assert Z[-1, -1] == 1.0 + 20.0


def test_quantile_levels_sorted_unique():
    Z = np.arange(100.0).reshape(10, 10)
    lv = figures.quantile_levels(Z)
    assert lv == sorted(lv)
    assert len(lv) == len(set(lv))


def test_svg_output_deterministic():
    xs, ys, Z = circle_field(res=21)
    a = figures.contour_figure("t", [(-2, 2), (-2, 2)], xs, ys, Z, [0.0])
    b = figures.contour_figure("t", [(-2, 2), (-2, 2)], xs, ys, Z, [0.0])
    assert a == b
    assert a.startswith("<svg") and a.rstrip().endswith("</svg>")
