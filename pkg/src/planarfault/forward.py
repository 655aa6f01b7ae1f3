"""Discrete forward operator: nodal slip -> weighted station displacements."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .green import ElasticMedium, fault_frame, surface_kernel
from .grid import (
    DEFAULT_DEPTH_GUARD,
    FaultGrid,
    GeometryParam,
    fault_normal,
    patch_weight,
    rake_direction,
    station_weights,
)

__all__ = ["StationSet", "ForwardSystem", "assemble", "predict", "kernel_matrix"]


@dataclass(frozen=True, eq=False)
class StationSet:
    """Surface stations with 3-component displacements (mm) and noise levels."""

    names: tuple
    positions: np.ndarray
    measured_u: np.ndarray
    sigma_hor: np.ndarray
    sigma_ver: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        n = len(names)
        if n == 0:
            raise DataError("station set is empty")
        positions = np.asarray(self.positions, dtype=float).reshape(n, 2)
        u = np.asarray(self.measured_u, dtype=float).reshape(n, 3)
        sh = np.broadcast_to(np.asarray(self.sigma_hor, dtype=float), (n,)).copy()
        sv = np.broadcast_to(np.asarray(self.sigma_ver, dtype=float), (n,)).copy()
        if not (np.all(sh > 0) and np.all(sv > 0)):
            raise DataError("all station standard deviations must be positive")
        dup = sorted({x for x in names if names.count(x) > 1})
        if dup:
            raise DataError(f"duplicate station name(s): {', '.join(dup)}")
        for attr, val in (("names", names), ("positions", positions), ("measured_u", u),
                          ("sigma_hor", sh), ("sigma_ver", sv)):
            object.__setattr__(self, attr, val)

    def __len__(self):
        return len(self.names)

    @property
    def has_displacements(self) -> bool:
        return bool(np.all(np.isfinite(self.measured_u)))

    def data_vector(self) -> np.ndarray:
        """Stacked (u1, u2, u3) per station, length 3N."""
        if not self.has_displacements:
            raise DataError("station set has no measured displacements")
        return self.measured_u.reshape(-1).copy()

    def weights(self) -> np.ndarray:
        """Diagonal of the 3N x 3N weighting matrix: C'(j,N)^(1/2) / sigma."""
        c = np.sqrt(station_weights(len(self)))
        w = np.column_stack([c / self.sigma_hor, c / self.sigma_hor, c / self.sigma_ver])
        return w.reshape(-1)

    def with_sigmas(self, sigma_hor, sigma_ver) -> "StationSet":
        return replace(self, sigma_hor=sigma_hor, sigma_ver=sigma_ver)

    def with_displacements(self, u) -> "StationSet":
        return replace(self, measured_u=np.asarray(u, dtype=float).reshape(len(self), 3))

    def translated(self, shift) -> "StationSet":
        return replace(self, positions=self.positions + np.asarray(shift, dtype=float))


@dataclass(eq=False)
class ForwardSystem:
    """A(m), the weights and the thin SVD of diag(weights) @ A."""

    m: GeometryParam
    A: np.ndarray
    weights: np.ndarray
    U: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def Dw(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def B(self) -> np.ndarray:
        """Weighted operator diag(weights) @ A."""
        return self.weights[:, None] * self.A

    @property
    def q(self) -> int:
        return self.A.shape[1]

    @property
    def n_data(self) -> int:
        return self.A.shape[0]

    def rank(self, rtol=None) -> int:
        s = self.singular_values
        if s.size == 0 or s[0] == 0:
            return 0
        if rtol is None:
            rtol = max(self.A.shape) * np.finfo(float).eps
        return int(np.count_nonzero(s > rtol * s[0]))


def kernel_matrix(m: GeometryParam, grid: FaultGrid, positions, medium: ElasticMedium,
                  rake=None) -> np.ndarray:
    """(3N, q) matrix of surface displacements per unit nodal slip."""
    positions = np.asarray(positions, dtype=float)
    nodes = grid.lifted_nodes(m)
    slip = rake_direction(grid.rake if rake is None else rake, m)
    frame = fault_frame(slip, fault_normal(m))
    dx1 = positions[:, 0, None] - nodes[None, :, 0]
    dx2 = positions[:, 1, None] - nodes[None, :, 1]
    k = surface_kernel(medium, frame, dx1, dx2, -nodes[None, :, 2])  # (N, q, 3)
    A = np.ascontiguousarray(k.transpose(0, 2, 1)).reshape(3 * len(positions), grid.q)
    return A * patch_weight(grid, m)


def assemble(m: GeometryParam, grid: FaultGrid, stations: StationSet,
             medium: ElasticMedium = ElasticMedium(), guard: float = DEFAULT_DEPTH_GUARD,
             rake=None) -> ForwardSystem:
    grid.check_depth(m, guard)
    A = kernel_matrix(m, grid, stations.positions, medium, rake=rake)
    w = stations.weights()
    U, s, Vt = np.linalg.svd(w[:, None] * A, full_matrices=False)
    return ForwardSystem(m=m, A=A, weights=w, U=U, singular_values=s, Vt=Vt)


def predict(system: ForwardSystem, g) -> np.ndarray:
    """Predicted displacements (N, 3) in mm for nodal slip ``g``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (system.q,):
        raise DataError(f"slip vector has length {g.size}, expected {system.q}")
    return (system.A @ g).reshape(-1, 3)
