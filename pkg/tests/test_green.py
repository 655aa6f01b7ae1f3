import numpy as np
import pytest

from planarfault.errors import ConfigError, GeometryError
from planarfault.green import (
    DislocationSource,
    ElasticMedium,
    ProbeBox,
    decay_exponent,
    displacement,
    field_residuals,
    green_surface,
    verify_field,
)
from planarfault.grid import GeometryParam, Rake, fault_normal, rake_direction

MEDIUM = ElasticMedium()


def source(m=GeometryParam(-0.3, -0.15, -14.0), pos=(0.0, 0.0, -14.0), rake=Rake()):
    return DislocationSource(np.array(pos), rake_direction(rake, m), fault_normal(m))


def random_source(rng):
    m = GeometryParam(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), -10.0)
    if abs(m.a) + abs(m.b) < 0.05:
        m = GeometryParam(0.2, m.b, m.d)
    rake = Rake(rng.uniform(-np.pi, np.pi))
    pos = (rng.uniform(-5, 5), rng.uniform(-5, 5), -rng.uniform(5, 30))
    return source(m, pos, rake)


def kelvin_double_couple(medium, src, points):
    """Full-space displacement of a point dislocation with unit potency.

    u_i = -M_pq dG_ip/dr_q with M = mu (s n' + n s') and G the Kelvin tensor.
    """
    mu, nu = medium.mu, medium.poisson
    s, n = src.slip_direction, src.fault_normal
    M = mu * (np.outer(s, n) + np.outer(n, s))
    r = np.asarray(points) - src.position
    R = np.linalg.norm(r, axis=-1)[..., None, None, None]
    eye = np.eye(3)
    ri = r[..., :, None, None]
    rp = r[..., None, :, None]
    rq = r[..., None, None, :]
    dG = ((3 - 4 * nu) * eye[:, :, None] * (-rq) / R**3
          + (eye[:, None, :] * rp + ri * eye[None, :, :]) / R**3
          - 3 * ri * rp * rq / R**5) / (16 * np.pi * mu * (1 - nu))
    return -np.einsum("pq,...ipq->...i", M, dG)


def test_surface_matches_interior_solution_at_zero_depth():
    src = source()
    x = np.array([10.0, 10.0])
    u_s = green_surface(MEDIUM, src, x)
    u_i = displacement(MEDIUM, src, np.array([10.0, 10.0, -1e-9]))
    assert np.linalg.norm(u_s - u_i) <= 1e-6 * np.linalg.norm(u_s)
    u_0 = displacement(MEDIUM, src, np.array([10.0, 10.0, 0.0]))
    np.testing.assert_allclose(u_0, u_s, rtol=1e-12, atol=0)


@pytest.mark.parametrize("rake", [Rake(), Rake(np.pi / 2), Rake(np.radians(20))])
def test_deep_source_matches_kelvin_solution(rake):
    # far below the surface the image terms fade and the full-space solution remains
    m = GeometryParam(0.4, -0.2, -1000.0)
    src = source(m, (0.0, 0.0, -1000.0), rake)
    rng = np.random.default_rng(3)
    pts = src.position + rng.uniform(-5, 5, size=(20, 3))
    u = displacement(MEDIUM, src, pts)
    ref = kelvin_double_couple(MEDIUM, src, pts)
    # normalize by the double-couple amplitude so nodal directions do not inflate the error
    r = np.linalg.norm(pts - src.position, axis=-1)
    nu = MEDIUM.poisson
    scale = np.sqrt(2.0) * MEDIUM.mu / (16 * np.pi * MEDIUM.mu * (1 - nu) * r**2)
    err = np.linalg.norm(u - ref, axis=-1) / scale
    assert err.max() < 1e-4


def test_mirror_symmetry_across_diagonal():
    P = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1.0]])
    m = GeometryParam(-0.3, -0.1, -14.0)
    s = rake_direction(Rake(0.4), m)
    n = fault_normal(m)
    src = DislocationSource(np.array([2.0, -1.0, -12.0]), s, n)
    mir = DislocationSource(P @ src.position, P @ s, P @ n)
    x = np.array([[7.0, 3.0], [-20.0, 15.0], [40.0, 41.0]])
    u = green_surface(MEDIUM, src, x)
    u_m = green_surface(MEDIUM, mir, x[:, ::-1])
    np.testing.assert_allclose(u_m, u @ P.T, rtol=1e-10, atol=1e-15)


def test_linearity_in_potency():
    src = source()
    big = DislocationSource(src.position, src.slip_direction, src.fault_normal, potency=3.7)
    x = np.array([[5.0, -3.0], [30.0, 12.0]])
    np.testing.assert_array_equal(green_surface(MEDIUM, big, x), 3.7 * green_surface(MEDIUM, src, x))


def test_horizontal_translation_invariance():
    src = source()
    shift = np.array([123.0, -45.0])
    moved = DislocationSource(src.position + np.r_[shift, 0.0], src.slip_direction, src.fault_normal)
    x = np.array([[10.0, 10.0], [-25.0, 3.0]])
    np.testing.assert_allclose(green_surface(MEDIUM, moved, x + shift),
                               green_surface(MEDIUM, src, x), rtol=1e-9, atol=1e-15)


def test_far_field_ratio_and_decay_exponent():
    src = source()
    r = 300.0
    d = np.array([np.cos(0.7), np.sin(0.7)])
    u1 = np.linalg.norm(green_surface(MEDIUM, src, r * d))
    u2 = np.linalg.norm(green_surface(MEDIUM, src, 2 * r * d))
    assert abs(u2 / u1 - 0.25) <= 0.15 * 0.25
    assert 1.9 <= decay_exponent(MEDIUM, src) <= 2.1


def test_verify_field_residuals():
    rep = verify_field(MEDIUM, source(pos=(0.0, 0.0, -20.0)), ProbeBox(), seed=1)
    assert rep.navier_max <= 1e-4
    assert rep.traction_max <= 1e-3


def test_verify_field_random_sources_and_media():
    rng = np.random.default_rng(11)
    for k in range(3):
        medium = ElasticMedium(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
        rep = verify_field(medium, random_source(rng), n_interior=30, n_surface=30, seed=k)
        assert rep.navier_max <= 1e-4 and rep.traction_max <= 1e-3


def test_singular_point_errors():
    src = source()
    with pytest.raises(GeometryError, match="singular point"):
        field_residuals(MEDIUM, src, src.position[None, :], np.empty((0, 3)))
    with pytest.raises(GeometryError, match="singular point"):
        displacement(MEDIUM, src, src.position)


def test_source_validation():
    m = GeometryParam(-0.3, -0.15, -14.0)
    n = fault_normal(m)
    with pytest.raises(ConfigError, match="tangential"):
        DislocationSource(np.array([0, 0, -5.0]), n, n)
    with pytest.raises(GeometryError):
        DislocationSource(np.array([0, 0, 1.0]), rake_direction(Rake(), m), n)
    with pytest.raises(ConfigError):
        DislocationSource(np.array([0, 0, -5.0]), 2 * rake_direction(Rake(), m), n)
    with pytest.raises(ConfigError):
        ElasticMedium(0.0, 1.0)


def test_interior_points_above_surface_rejected():
    with pytest.raises(GeometryError):
        displacement(MEDIUM, source(), np.array([1.0, 1.0, 0.5]))
