"""Surface response of a homogeneous elastic half space to a point dislocation.

Point-source formulas of Okada (1992, BSSA 82) for strike-slip and dip-slip
nuclei. Coordinates are (x1, x2, x3) with x3 up and the free surface at
x3 = 0. A source is described by a position below the surface, a unit slip
vector (displacement jump of the side the normal points into, relative to
the other side) and a unit normal. Only the symmetric product of slip and
normal matters, so (s, n) and (-s, -n) give the same field.

With positions in km the kernel has units of km^-2; multiplied by a potency
(slip x area, mm km^2) it returns displacements in mm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GeometryError

__all__ = [
    "ElasticMedium",
    "DislocationSource",
    "FaultFrame",
    "fault_frame",
    "green_surface",
    "surface_kernel",
    "displacement",
    "ProbeBox",
    "FieldResidualReport",
    "field_residuals",
    "verify_field",
    "decay_exponent",
]

SINGULAR_RADIUS = 1e-6  # km
_TANGENCY_TOL = 1e-12
_UNIT_TOL = 1e-12
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ElasticMedium:
    """Homogeneous isotropic medium given by its two Lame constants."""

    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ConfigError(f"Lame constants must be positive, got lam={self.lam}, mu={self.mu}")

    @property
    def alpha(self) -> float:
        """Medium constant (lam + mu) / (lam + 2 mu)."""
        return (self.lam + self.mu) / (self.lam + 2.0 * self.mu)

    @property
    def poisson(self) -> float:
        return self.lam / (2.0 * (self.lam + self.mu))


@dataclass(frozen=True)
class DislocationSource:
    """Tangential point dislocation at ``position`` (x3 < 0)."""

    position: np.ndarray
    slip_direction: np.ndarray
    fault_normal: np.ndarray
    potency: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        slip = np.asarray(self.slip_direction, dtype=float).reshape(3)
        normal = np.asarray(self.fault_normal, dtype=float).reshape(3)
        if pos[2] >= 0:
            raise GeometryError(f"source must lie below the free surface, got x3={pos[2]}")
        if abs(np.linalg.norm(slip) - 1.0) > _UNIT_TOL or abs(np.linalg.norm(normal) - 1.0) > _UNIT_TOL:
            raise ConfigError("slip_direction and fault_normal must be unit vectors")
        if abs(slip @ normal) > _TANGENCY_TOL:
            raise ConfigError(
                f"slip_direction is not tangential to the fault (dot with normal = {slip @ normal:.3e})"
            )
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "slip_direction", slip)
        object.__setattr__(self, "fault_normal", normal)


@dataclass(frozen=True)
class FaultFrame:
    """Local strike/dip frame of a planar source and the slip decomposition.

    ``strike`` and ``updip`` are unit horizontal vectors (right handed with
    x3 up); ``strike_slip`` and ``dip_slip`` are the slip components along
    the strike and along the up-dip direction of the plane.
    """

    strike: np.ndarray
    updip: np.ndarray
    sin_dip: float
    cos_dip: float
    strike_slip: float
    dip_slip: float


def fault_frame(slip_direction, fault_normal) -> FaultFrame:
    slip = np.asarray(slip_direction, dtype=float)
    normal = np.asarray(fault_normal, dtype=float)
    if normal[2] < 0:
        slip, normal = -slip, -normal
    horizontal = normal[:2]
    sin_dip = float(np.hypot(*horizontal))
    cos_dip = float(normal[2])
    if sin_dip < 1e-14:
        updip = np.array([0.0, 1.0])
        sin_dip = 0.0
        cos_dip = 1.0
    else:
        updip = -horizontal / sin_dip
    strike = np.array([updip[1], -updip[0]])
    e_updip = np.array([cos_dip * updip[0], cos_dip * updip[1], sin_dip])
    return FaultFrame(
        strike=strike,
        updip=updip,
        sin_dip=sin_dip,
        cos_dip=cos_dip,
        strike_slip=float(slip[:2] @ strike),
        dip_slip=float(slip @ e_updip),
    )


# Okada point-source terms in the source frame: x along strike, y toward
# up-dip, source at depth c, d = c - z. Each returns (..., 3) with the
# strike-slip and dip-slip contributions already weighted.

def _ua(x, y, d, sd, cd, alpha, us, ud):
    R2 = x * x + y * y + d * d
    R = np.sqrt(R2)
    R3 = R2 * R
    R5 = R3 * R2
    q = y * sd - d * cd
    p = y * cd + d * sd
    s = p * sd + q * cd
    t = p * cd - q * sd
    h = 0.5 * (1.0 - alpha) / R3
    k = 1.5 * alpha * (us * x * q + ud * p * q) / R5
    u = np.empty(np.broadcast(x, y, d).shape + (3,))
    u[..., 0] = h * us * q + k * x
    u[..., 1] = h * (us * x * sd + ud * s) + k * y
    u[..., 2] = -h * (us * x * cd + ud * t) + k * d
    return u


def _ub(x, y, d, c, sd, cd, alpha, us, ud):
    R2 = x * x + y * y + d * d
    R = np.sqrt(R2)
    R3 = R2 * R
    R5 = R3 * R2
    q = y * sd - d * cd
    p = y * cd + d * sd
    Rd = R + d
    Rd2 = Rd * Rd
    x2 = x * x
    i1 = y * (1.0 / (R * Rd2) - x2 * (3.0 * R + d) / (R3 * Rd2 * Rd))
    i2 = x * (1.0 / (R * Rd2) - y * y * (3.0 * R + d) / (R3 * Rd2 * Rd))
    i3 = x / R3 - i2
    i4 = -x * y * (2.0 * R + d) / (R3 * Rd2)
    i5 = 1.0 / (R * Rd) - x2 * (2.0 * R + d) / (R3 * Rd2)
    k = -3.0 * (us * x * q + ud * p * q) / R5
    f = (1.0 - alpha) / alpha
    fs = f * sd * us
    fd = f * sd * cd * ud
    u = np.empty(np.broadcast(x, y, d, c).shape + (3,))
    u[..., 0] = k * x - fs * i1 + fd * i3
    u[..., 1] = k * y - fs * i2 + fd * i1
    u[..., 2] = k * c - fs * i4 + fd * i5
    return u


def _uc(x, y, d, c, sd, cd, alpha, us, ud):
    R2 = x * x + y * y + d * d
    R = np.sqrt(R2)
    R3 = R2 * R
    R5 = R3 * R2
    q = y * sd - d * cd
    p = y * cd + d * sd
    s = p * sd + q * cd
    t = p * cd - q * sd
    a3 = 1.0 - 3.0 * x * x / R2
    a5 = 1.0 - 5.0 * x * x / R2
    cos2d = cd * cd - sd * sd
    m = 1.0 - alpha
    g = 3.0 * alpha * c / R5
    u = np.empty(np.broadcast(x, y, d, c).shape + (3,))
    u[..., 0] = (
        us * (-m * a3 * cd / R3 + g * q * a5)
        + ud * (m * 3.0 * x * t / R5 - g * 5.0 * x * p * q / R2)
    )
    u[..., 1] = (
        us * (m * 3.0 * x * y * cd / R5 + g * x * (sd - 5.0 * y * q / R2))
        + ud * (-m * (cos2d - 3.0 * y * t / R2) / R3 + g * (s - 5.0 * y * p * q / R2))
    )
    u[..., 2] = (
        us * (-m * 3.0 * x * y * sd / R5 + g * x * (cd + 5.0 * d * q / R2))
        + ud * (-m * a3 * sd * cd / R3 + g * (t + 5.0 * d * p * q / R2))
    )
    return u


def _to_local(frame: FaultFrame, dx1, dx2):
    x = dx1 * frame.strike[0] + dx2 * frame.strike[1]
    y = dx1 * frame.updip[0] + dx2 * frame.updip[1]
    return x, y


def _to_global(frame: FaultFrame, u):
    out = np.empty_like(u)
    out[..., 0] = u[..., 0] * frame.strike[0] + u[..., 1] * frame.updip[0]
    out[..., 1] = u[..., 0] * frame.strike[1] + u[..., 1] * frame.updip[1]
    out[..., 2] = u[..., 2]
    return out


def surface_kernel(medium: ElasticMedium, frame: FaultFrame, dx1, dx2, depth):
    """Surface displacement per unit potency, vectorized.

    ``dx1, dx2`` are horizontal receiver-minus-source offsets and ``depth``
    the source depth (positive), all broadcastable. Returns (..., 3).
    """
    dx1, dx2, depth = np.broadcast_arrays(
        np.asarray(dx1, dtype=float), np.asarray(dx2, dtype=float), np.asarray(depth, dtype=float)
    )
    if np.any(depth <= 0):
        raise GeometryError("source must lie below the free surface")
    if np.any(dx1 * dx1 + dx2 * dx2 + depth * depth < SINGULAR_RADIUS**2):
        raise GeometryError("evaluation at a singular point (receiver on the source)")
    x, y = _to_local(frame, dx1, dx2)
    u = _ub(x, y, depth, depth, frame.sin_dip, frame.cos_dip, medium.alpha,
            frame.strike_slip, frame.dip_slip)
    return _to_global(frame, u) / _TWO_PI


def green_surface(medium: ElasticMedium, src: DislocationSource, x) -> np.ndarray:
    """Displacement at the surface point ``x`` (2-vector, km) due to ``src``."""
    x = np.asarray(x, dtype=float)
    frame = fault_frame(src.slip_direction, src.fault_normal)
    u = surface_kernel(medium, frame, x[..., 0] - src.position[0], x[..., 1] - src.position[1],
                       -src.position[2])
    return src.potency * u


def displacement(medium: ElasticMedium, src: DislocationSource, points) -> np.ndarray:
    """Displacement at arbitrary points of the closed half space (x3 <= 0)."""
    pts = np.asarray(points, dtype=float)
    z = pts[..., 2]
    if np.any(z > 0):
        raise GeometryError("evaluation points must satisfy x3 <= 0")
    rel = pts - src.position
    if np.any(np.einsum("...i,...i->...", rel, rel) < SINGULAR_RADIUS**2):
        raise GeometryError("evaluation at a singular point (receiver on the source)")
    frame = fault_frame(src.slip_direction, src.fault_normal)
    x, y = _to_local(frame, rel[..., 0], rel[..., 1])
    c = -src.position[2]
    args = (frame.sin_dip, frame.cos_dip, medium.alpha, frame.strike_slip, frame.dip_slip)
    d = c - z
    u = _ua(x, y, d, *args) - _ua(x, y, c + z, *args) + _ub(x, y, d, c, *args)
    u += z[..., None] * _uc(x, y, d, c, *args)
    return src.potency * _to_global(frame, u) / _TWO_PI


# ---------------------------------------------------------------------------
# Verification of the field equations by finite differences


@dataclass(frozen=True)
class ProbeBox:
    """Axis-aligned sampling region for verification probes (km)."""

    lower: tuple = (-30.0, -30.0, -40.0)
    upper: tuple = (30.0, 30.0, 0.0)
    exclusion_radius: float = 1.0


@dataclass
class FieldResidualReport:
    navier_max: float
    traction_max: float
    navier: np.ndarray = field(repr=False)
    traction: np.ndarray = field(repr=False)
    step: float = 1e-3


def _hessian(f, p, h):
    """Central-difference Hessian of a vector field: out[..., i, j, k] = d2 u_i / dx_j dx_k."""
    eye = np.eye(3) * h
    u0 = f(p)
    H = np.empty(p.shape[:-1] + (3, 3, 3))
    for j in range(3):
        up = f(p + eye[j])
        um = f(p - eye[j])
        H[..., :, j, j] = (up - 2.0 * u0 + um) / h**2
        for k in range(j + 1, 3):
            upp = f(p + eye[j] + eye[k])
            upm = f(p + eye[j] - eye[k])
            ump = f(p - eye[j] + eye[k])
            umm = f(p - eye[j] - eye[k])
            H[..., :, j, k] = H[..., :, k, j] = (upp - upm - ump + umm) / (4.0 * h**2)
    return u0, H


def _surface_gradient(f, p, h):
    """Gradient at x3 = 0: central in x1, x2, one-sided (downward) in x3."""
    grad = np.empty(p.shape[:-1] + (3, 3))
    for j in range(2):
        e = np.zeros(3)
        e[j] = h
        grad[..., :, j] = (f(p + e) - f(p - e)) / (2.0 * h)
    e = np.array([0.0, 0.0, h])
    grad[..., :, 2] = (3.0 * f(p) - 4.0 * f(p - e) + f(p - 2.0 * e)) / (2.0 * h)
    return grad


def field_residuals(medium, src, interior, surface, h=1e-3, exclusion_radius=1.0):
    """Relative Navier and free-surface traction residuals at given probes.

    Residuals are normalized by (lam + 2 mu) |u| / r^2 (interior) and
    (lam + 2 mu) |u| / r (surface), r being the distance to the source.
    """
    interior = np.atleast_2d(np.asarray(interior, dtype=float))
    surface = np.atleast_2d(np.asarray(surface, dtype=float))
    for pts in (interior, surface):
        if pts.size and np.any(np.linalg.norm(pts - src.position, axis=-1) < exclusion_radius):
            raise GeometryError(
                f"probe closer than {exclusion_radius} km to the source (singular point)"
            )
    if interior.size and np.any(interior[:, 2] > -2.0 * h):
        raise ConfigError("interior probes must lie at least 2h below the surface")
    if surface.size:
        surface = surface.copy()
        surface[:, 2] = 0.0

    f = lambda p: displacement(medium, src, p)  # noqa: E731
    stiff = medium.lam + 2.0 * medium.mu

    navier = np.zeros(len(interior))
    if interior.size:
        u0, H = _hessian(f, interior, h)
        lap = np.einsum("...ijj->...i", H)
        graddiv = np.einsum("...jji->...i", H)
        res = medium.mu * lap + (medium.lam + medium.mu) * graddiv
        r = np.linalg.norm(interior - src.position, axis=-1)
        scale = stiff * np.linalg.norm(u0, axis=-1) / r**2
        navier = np.linalg.norm(res, axis=-1) / scale

    traction = np.zeros(len(surface))
    if surface.size:
        grad = _surface_gradient(f, surface, h)
        div = np.einsum("...ii->...", grad)
        t = medium.mu * (grad[..., :, 2] + grad[..., 2, :])
        t[..., 2] += medium.lam * div
        r = np.linalg.norm(surface - src.position, axis=-1)
        scale = stiff * np.linalg.norm(f(surface), axis=-1) / r
        traction = np.linalg.norm(t, axis=-1) / scale

    return FieldResidualReport(
        navier_max=float(navier.max(initial=0.0)),
        traction_max=float(traction.max(initial=0.0)),
        navier=navier,
        traction=traction,
        step=h,
    )


def verify_field(medium, src, probe_box=ProbeBox(), n_interior=100, n_surface=100, h=1e-3, seed=0):
    """Sample random probes in ``probe_box`` and report PDE / boundary residuals."""
    if probe_box.exclusion_radius < 1.0:
        raise ConfigError("probe exclusion radius must be at least 1 km")
    rng = np.random.default_rng(seed)
    lo = np.asarray(probe_box.lower, dtype=float)
    hi = np.asarray(probe_box.upper, dtype=float)
    hi_int = hi.copy()
    hi_int[2] = min(hi[2], -2.0 * h)

    def sample(n, top):
        out = np.empty((0, 3))
        while len(out) < n:
            pts = rng.uniform(lo, top, size=(2 * n, 3))
            keep = np.linalg.norm(pts - src.position, axis=-1) >= probe_box.exclusion_radius
            out = np.vstack([out, pts[keep]])
        return out[:n]

    interior = sample(n_interior, hi_int)
    surface = sample(n_surface, hi)
    surface[:, 2] = 0.0
    return field_residuals(medium, src, interior, surface, h=h,
                           exclusion_radius=probe_box.exclusion_radius)


def decay_exponent(medium, src, azimuth=0.3, r_min=None, decades=1.0, n=11):
    """Least-squares exponent p in |u| ~ r^-p along a surface ray from the epicenter."""
    depth = -src.position[2]
    if r_min is None:
        r_min = 20.0 * depth
    r = r_min * np.logspace(0.0, decades, n)
    pts = src.position[:2] + r[:, None] * np.array([np.cos(azimuth), np.sin(azimuth)])
    amp = np.linalg.norm(green_surface(medium, src, pts), axis=-1)
    slope = np.polyfit(np.log(r), np.log(amp), 1)[0]
    return float(-slope)
