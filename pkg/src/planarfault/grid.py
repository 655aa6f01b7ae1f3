"""Slip rectangle, its interior node grid and the first-difference operators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, GeometryError

__all__ = [
    "GeometryParam",
    "Rake",
    "FaultGrid",
    "DifferenceOperators",
    "build_grid",
    "build_difference_ops",
    "weighted_center",
    "fault_normal",
    "rake_direction",
    "patch_weight",
    "station_weights",
    "DEFAULT_DEPTH_GUARD",
]

DEFAULT_DEPTH_GUARD = 2.0  # km


@dataclass(frozen=True)
class GeometryParam:
    """Fault plane x3 = a*x1 + b*x2 + d."""

    a: float
    b: float
    d: float

    def as_array(self):
        return np.array([self.a, self.b, self.d])

    def depth_at(self, y1, y2):
        return self.a * np.asarray(y1) + self.b * np.asarray(y2) + self.d


@dataclass(frozen=True)
class Rake:
    """In-plane slip direction: ``angle`` (radians) measured from steepest ascent.

    ``Rake()`` is steepest ascent. Positive angles turn counterclockwise
    about the upward fault normal.
    """

    angle: float = 0.0

    @classmethod
    def steepest_ascent(cls):
        return cls(0.0)

    @classmethod
    def fixed_angle(cls, theta):
        return cls(float(theta))

    @property
    def is_steepest_ascent(self):
        return self.angle == 0.0

    def __str__(self):
        return "steepest-ascent" if self.is_steepest_ascent else f"fixed:{np.degrees(self.angle):.17g}"

    @classmethod
    def parse(cls, text: str) -> "Rake":
        """Parse ``steepest-ascent`` or ``fixed:<degrees>``."""
        text = text.strip().lower()
        if text in ("steepest-ascent", "steepest_ascent", "steepest"):
            return cls()
        if text.startswith("fixed:"):
            return cls(np.radians(float(text.split(":", 1)[1])))
        raise ConfigError(f"unknown rake specification {text!r}")


@dataclass(frozen=True, eq=False)
class FaultGrid:
    """Regular n_side x n_side grid of interior nodes of the rectangle R.

    Node k sits at row ``k // n_side`` (x2 index) and column ``k % n_side``
    (x1 index); x1 varies fastest. Slip vanishes on the boundary of R,
    which carries no unknowns.
    """

    center: tuple
    half_lengths: tuple
    n_side: int
    rake: Rake = Rake()

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        half = tuple(float(h) for h in self.half_lengths)
        if len(center) != 2 or len(half) != 2:
            raise ConfigError("center and half_lengths must be 2-vectors")
        if min(half) <= 0:
            raise ConfigError(f"half lengths must be positive, got {half}")
        if int(self.n_side) != self.n_side or self.n_side < 1:
            raise ConfigError(f"n_side must be a positive integer, got {self.n_side}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_lengths", half)
        object.__setattr__(self, "n_side", int(self.n_side))

    @property
    def q(self) -> int:
        return self.n_side * self.n_side

    @property
    def spacing(self) -> np.ndarray:
        return 2.0 * np.asarray(self.half_lengths) / (self.n_side + 1)

    @cached_property
    def axes(self):
        lo = np.asarray(self.center) - np.asarray(self.half_lengths)
        steps = np.arange(1, self.n_side + 1)
        return lo[0] + self.spacing[0] * steps, lo[1] + self.spacing[1] * steps

    @cached_property
    def nodes(self) -> np.ndarray:
        """(q, 2) horizontal node coordinates in km."""
        y1, y2 = np.meshgrid(*self.axes, indexing="xy")
        return np.column_stack([y1.ravel(), y2.ravel()])

    def index(self, i1, i2):
        return np.asarray(i2) * self.n_side + np.asarray(i1)

    def locate(self, y1, y2):
        """Inverse of ``nodes``: grid index of the node at (y1, y2)."""
        lo = np.asarray(self.center) - np.asarray(self.half_lengths)
        i1 = np.rint((np.asarray(y1) - lo[0]) / self.spacing[0]).astype(int) - 1
        i2 = np.rint((np.asarray(y2) - lo[1]) / self.spacing[1]).astype(int) - 1
        if np.any((i1 < 0) | (i1 >= self.n_side) | (i2 < 0) | (i2 >= self.n_side)):
            raise ConfigError("point is not a node of the grid")
        return self.index(i1, i2)

    def lifted_nodes(self, m: GeometryParam) -> np.ndarray:
        """(q, 3) node positions on the plane of ``m``."""
        y = self.nodes
        return np.column_stack([y, m.depth_at(y[:, 0], y[:, 1])])

    def check_depth(self, m: GeometryParam, guard: float = DEFAULT_DEPTH_GUARD):
        """Raise GeometryError if any node is shallower than ``-guard``."""
        x3 = self.lifted_nodes(m)[:, 2]
        if x3.max() > -guard:
            raise GeometryError(
                f"fault intersects guard zone: shallowest node at x3={x3.max():.3f} km "
                f"> -{guard} km for m=({m.a}, {m.b}, {m.d})"
            )

    def satisfies_depth(self, m: GeometryParam, guard: float = DEFAULT_DEPTH_GUARD) -> bool:
        # the plane is linear, so the extreme is at a corner node
        y1, y2 = self.axes
        corners = [(y1[i], y2[j]) for i in (0, -1) for j in (0, -1)]
        return max(m.depth_at(c1, c2) for c1, c2 in corners) <= -guard


def build_grid(center, half_lengths, n_side, rake: Rake = Rake()) -> FaultGrid:
    return FaultGrid(tuple(center), tuple(half_lengths), n_side, rake)


def weighted_center(positions, displacements) -> np.ndarray:
    """Mean of station positions weighted by displacement magnitude."""
    positions = np.asarray(positions, dtype=float)
    w = np.linalg.norm(np.asarray(displacements, dtype=float), axis=-1)
    if w.sum() <= 0:
        raise ConfigError("weighted center undefined: all displacements vanish")
    return (w[:, None] * positions).sum(axis=0) / w.sum()


@dataclass(frozen=True, eq=False)
class DifferenceOperators:
    """D, E (x1 and x2 first differences, zero Dirichlet data) and (D'D + E'E)^-1."""

    D: np.ndarray
    E: np.ndarray
    K_inv: np.ndarray

    @property
    def K(self):
        return self.D.T @ self.D + self.E.T @ self.E

    def penalty(self, g):
        g = np.asarray(g)
        Dg = self.D @ g
        Eg = self.E @ g
        return float(Dg @ Dg + Eg @ Eg)


def build_difference_ops(grid: FaultGrid) -> DifferenceOperators:
    """First differences with unit entries; the h^2 factor is left to C."""
    n = grid.n_side
    T = np.eye(n) - np.eye(n, k=-1)
    D = np.kron(np.eye(n), T)
    E = np.kron(T, np.eye(n))
    K = D.T @ D + E.T @ E
    K_inv = np.linalg.inv(K)
    K_inv = 0.5 * (K_inv + K_inv.T)
    return DifferenceOperators(D=D, E=E, K_inv=K_inv)


def fault_normal(m: GeometryParam) -> np.ndarray:
    """Upward unit normal of the plane."""
    n = np.array([-m.a, -m.b, 1.0])
    return n / np.linalg.norm(n)


def rake_direction(grid_or_rake, m: GeometryParam, node=None) -> np.ndarray:
    """Unit slip direction on the plane of ``m``.

    The direction is the same at every node of a planar fault; ``node`` is
    accepted for interface symmetry and ignored.
    """
    rake = grid_or_rake.rake if isinstance(grid_or_rake, FaultGrid) else grid_or_rake
    slope2 = m.a * m.a + m.b * m.b
    if slope2 == 0.0:
        raise GeometryError("rake undefined on horizontal plane")
    ascent = np.array([m.a, m.b, slope2]) / np.sqrt(slope2 * (1.0 + slope2))
    if rake.angle == 0.0:
        return ascent
    n = fault_normal(m)
    return np.cos(rake.angle) * ascent + np.sin(rake.angle) * np.cross(n, ascent)


def patch_weight(grid: FaultGrid, m: GeometryParam) -> float:
    """Area on the plane represented by one node (km^2)."""
    h1, h2 = grid.spacing
    return float(h1 * h2 * np.sqrt(1.0 + m.a * m.a + m.b * m.b))


def station_weights(n_stations: int) -> np.ndarray:
    """Station quadrature weights; uniform for scattered networks."""
    return np.ones(n_stations)
