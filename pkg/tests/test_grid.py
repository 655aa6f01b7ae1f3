import numpy as np
import pytest

from planarfault.errors import ConfigError, GeometryError
from planarfault.grid import (
    FaultGrid,
    GeometryParam,
    Rake,
    build_difference_ops,
    build_grid,
    fault_normal,
    patch_weight,
    rake_direction,
    weighted_center,
)


def test_two_by_two_nodes():
    g = build_grid((0, 0), (1, 1), 2)
    assert g.q == 4
    np.testing.assert_allclose(sorted(map(tuple, g.nodes)),
                               sorted([(x, y) for x in (-1 / 3, 1 / 3) for y in (-1 / 3, 1 / 3)]))


def test_single_node_at_center():
    g = build_grid((4.0, -2.0), (3, 5), 1)
    np.testing.assert_allclose(g.nodes, [[4.0, -2.0]])


def test_weighted_center():
    c = weighted_center([[0, 0], [10, 0]], [[1, 0, 0], [0, 3, 0]])
    assert c[0] == pytest.approx(7.5)
    with pytest.raises(ConfigError):
        weighted_center([[0, 0]], [[0, 0, 0]])


def test_node_ordering_round_trip():
    g = build_grid((3, 7), (10, 20), 5)
    k = np.arange(g.q)
    np.testing.assert_array_equal(g.locate(g.nodes[:, 0], g.nodes[:, 1]), k)
    # x1 varies fastest
    assert g.nodes[1, 0] > g.nodes[0, 0] and g.nodes[1, 1] == g.nodes[0, 1]
    assert g.index(2, 3) == 3 * 5 + 2


def test_invalid_grids():
    with pytest.raises(ConfigError):
        build_grid((0, 0), (0, 1), 3)
    with pytest.raises(ConfigError):
        build_grid((0, 0), (1, 1), 0)


def test_penalty_of_constant_and_zero():
    ops = build_difference_ops(build_grid((0, 0), (1, 1), 3))
    assert ops.penalty(np.ones(9)) > 0
    assert not np.any(ops.D @ np.zeros(9)) and not np.any(ops.E @ np.zeros(9))


def test_operator_norms():
    ops = build_difference_ops(build_grid((0, 0), (1, 1), 10))
    # power iteration on D'D
    v = np.random.default_rng(0).normal(size=100)
    for _ in range(2000):
        v = ops.D.T @ (ops.D @ v)
        v /= np.linalg.norm(v)
    norm = np.sqrt(v @ ops.D.T @ ops.D @ v)
    assert 1 < norm <= 2
    assert norm == pytest.approx(np.linalg.norm(ops.D, 2), rel=1e-6)
    assert np.linalg.norm(np.linalg.inv(ops.D), 2) <= 10.0


def test_K_inverse_and_definiteness():
    ops = build_difference_ops(build_grid((0, 0), (1, 1), 6))
    np.testing.assert_allclose(ops.K @ ops.K_inv, np.eye(36), atol=1e-10)
    rng = np.random.default_rng(1)
    for _ in range(10):
        g = rng.normal(size=36)
        assert ops.penalty(g) > 0


def test_penalty_converges_to_dirichlet_energy():
    # (|Dg|^2 + |Eg|^2) / h^2 times the cell area h^2 is a Riemann sum of |grad g|^2
    L = 10.0
    exact = np.pi**2 / 2
    errs = []
    for n in (10, 20, 40):
        g = build_grid((L / 2, L / 2), (L / 2, L / 2), n)
        y = g.nodes
        vals = np.sin(np.pi * y[:, 0] / L) * np.sin(np.pi * y[:, 1] / L)
        ops = build_difference_ops(g)
        h = g.spacing[0]
        cell_area = h * h
        errs.append(abs(ops.penalty(vals) / h**2 * cell_area - exact))
    assert errs[0] / errs[1] >= 1.9 and errs[1] / errs[2] >= 1.9


def test_rake_single_slope_plane():
    m = GeometryParam(0.0, -1.0, -10.0)
    s = rake_direction(Rake(), m)
    np.testing.assert_allclose(s, np.array([0.0, -1.0, 1.0]) / np.sqrt(2))
    assert abs(s @ fault_normal(m)) <= np.finfo(float).eps
    assert s[2] > 0  # points up-dip


def test_rake_fixed_zero_is_steepest_ascent():
    m = GeometryParam(-0.3, -0.15, -14.0)
    np.testing.assert_array_equal(rake_direction(Rake.fixed_angle(0.0), m), rake_direction(Rake(), m))


@pytest.mark.parametrize("angle", [0.0, 0.3, -1.2, np.pi])
def test_rake_tangent_unit(angle):
    m = GeometryParam(-0.3, -0.15, -14.0)
    g = build_grid((0, 0), (50, 50), 4, Rake(angle))
    for node in range(g.q):
        s = rake_direction(g, m, node)
        assert abs(s @ fault_normal(m)) < 1e-12
        assert abs(np.linalg.norm(s) - 1) < 1e-12
    ascent = rake_direction(Rake(), m)
    angle_between = np.arctan2(np.linalg.norm(np.cross(s, ascent)), s @ ascent)
    assert angle_between == pytest.approx(abs(angle), abs=1e-12)


def test_rake_horizontal_plane_error():
    with pytest.raises(GeometryError, match="rake undefined on horizontal plane"):
        rake_direction(Rake(), GeometryParam(0.0, 0.0, -10.0))


def test_rake_parse_round_trip():
    for r in (Rake(), Rake(np.radians(20.0)), Rake(np.radians(-7.5))):
        assert Rake.parse(str(r)) == r
    with pytest.raises(ConfigError):
        Rake.parse("sideways")


def test_depth_guard():
    g = build_grid((0, 0), (50, 50), 5)
    assert g.satisfies_depth(GeometryParam(-0.1, 0.0, -14.0))
    assert not g.satisfies_depth(GeometryParam(-0.5, 0.0, -14.0))
    with pytest.raises(GeometryError, match="guard"):
        g.check_depth(GeometryParam(-0.5, 0.0, -14.0))


def test_patch_weight_is_plane_area():
    g = build_grid((0, 0), (50, 50), 9)
    m = GeometryParam(0.3, 0.4, -20)
    assert patch_weight(g, m) * g.q == pytest.approx(
        (2 * 50 * 9 / 10) ** 2 * np.sqrt(1.25))
    assert isinstance(g, FaultGrid)
