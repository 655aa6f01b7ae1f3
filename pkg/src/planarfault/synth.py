"""Synthetic slip scenarios and noisy station data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .forward import StationSet, kernel_matrix
from .green import ElasticMedium
from .grid import DEFAULT_DEPTH_GUARD, FaultGrid, GeometryParam, Rake

__all__ = ["GaussianBump", "SyntheticTruth", "slip_values", "exact_displacements", "add_noise",
           "synthesize"]


@dataclass(frozen=True)
class GaussianBump:
    """amplitude * exp(-((y1-c1)/w1)^2/2 - ((y2-c2)/w2)^2/2), slip in mm."""

    center: tuple
    widths: tuple
    amplitude: float

    def __call__(self, y1, y2):
        (c1, c2), (w1, w2) = self.center, self.widths
        return self.amplitude * np.exp(-0.5 * ((y1 - c1) / w1) ** 2 - 0.5 * ((y2 - c2) / w2) ** 2)


@dataclass(frozen=True)
class SyntheticTruth:
    """Geometry and slip used to generate data.

    Slip is sampled at the interior nodes of ``grid`` (so it vanishes on the
    rectangle boundary) from the bumps, or taken from ``nodal_values``.
    ``grid.rake`` is the rake used for generation.
    """

    m: GeometryParam
    grid: FaultGrid
    bumps: tuple = ()
    nodal_values: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.bumps and self.nodal_values is None:
            raise ConfigError("synthetic truth needs bumps or nodal values")
        if self.nodal_values is not None:
            v = np.asarray(self.nodal_values, dtype=float)
            if v.shape != (self.grid.q,):
                raise ConfigError(f"nodal_values must have length {self.grid.q}")

    @property
    def rake(self) -> Rake:
        return self.grid.rake


def slip_values(truth: SyntheticTruth) -> np.ndarray:
    if truth.nodal_values is not None:
        return np.asarray(truth.nodal_values, dtype=float).copy()
    y = truth.grid.nodes
    return sum(b(y[:, 0], y[:, 1]) for b in truth.bumps)


def exact_displacements(truth: SyntheticTruth, positions, medium: ElasticMedium = ElasticMedium(),
                        guard: float = DEFAULT_DEPTH_GUARD) -> np.ndarray:
    """Noise-free (N, 3) displacements in mm."""
    truth.grid.check_depth(truth.m, guard)
    A = kernel_matrix(truth.m, truth.grid, positions, medium, rake=truth.rake)
    return (A @ slip_values(truth)).reshape(-1, 3)


def add_noise(u, sigma_hor, sigma_ver, rng: np.random.Generator) -> np.ndarray:
    """Independent zero-mean Gaussian noise; sigmas are scalars or per station."""
    u = np.asarray(u, dtype=float)
    n = len(u)
    sh = np.broadcast_to(np.asarray(sigma_hor, dtype=float), (n,))
    sv = np.broadcast_to(np.asarray(sigma_ver, dtype=float), (n,))
    scale = np.column_stack([sh, sh, sv])
    return u + scale * rng.standard_normal(u.shape)


def synthesize(truth: SyntheticTruth, stations: StationSet, sigma_hor, sigma_ver, seed,
               medium: ElasticMedium = ElasticMedium(),
               guard: float = DEFAULT_DEPTH_GUARD) -> tuple[StationSet, np.ndarray]:
    """Station set carrying noisy synthetic data, plus the exact displacements.

    ``sigma_*`` set both the generated noise and the recorded standard
    deviations; zero sigmas give exact data recorded with the station's
    existing standard deviations.
    """
    exact = exact_displacements(truth, stations.positions, medium, guard)
    rng = np.random.default_rng(seed)
    noisy = add_noise(exact, sigma_hor, sigma_ver, rng)
    n = len(stations)
    sh = np.broadcast_to(np.asarray(sigma_hor, dtype=float), (n,))
    sv = np.broadcast_to(np.asarray(sigma_ver, dtype=float), (n,))
    rec_h = np.where(sh > 0, sh, stations.sigma_hor)
    rec_v = np.where(sv > 0, sv, stations.sigma_ver)
    return stations.with_displacements(noisy).with_sigmas(rec_h, rec_v), exact
