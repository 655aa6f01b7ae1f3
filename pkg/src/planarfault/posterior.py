"""Marginal posterior of the fault geometry over a grid of the parameter box.

The slip field is integrated out analytically, leaving for each geometry m

    log rho(m) = -(tau/2) F(m) - 1/2 sum_j log(tau (mu_j^2 + C) / 2 pi) + log 1_B(m)

where F is the minimized Tikhonov functional and mu_j are the singular
values of the weighted forward operator padded with zeros to length q.
Everything stays in the log domain until the grid maximum is subtracted.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NumericalError
from .forward import StationSet, assemble
from .green import ElasticMedium
from .grid import DEFAULT_DEPTH_GUARD, DifferenceOperators, FaultGrid, GeometryParam
from .solver import (
    CSelection,
    _check_C,
    select_C_global,
    select_C_many,
    solve,
    woodbury_factors,
)

__all__ = [
    "ParameterBox",
    "CellSummaries",
    "PosteriorGrid",
    "SlipPosterior",
    "ConcentrationReport",
    "log_density_cell",
    "log_det_term",
    "compute_summaries",
    "select_C",
    "sweep",
    "marginals",
    "concentration_experiment",
    "slip_posterior",
    "trapezoid_weights",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


def trapezoid_weights(values) -> np.ndarray:
    """Composite trapezoid weights on a sorted 1-D grid.

    A single point gets weight 1 so that degenerate axes act as a unit
    measure.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return np.ones(1)
    dx = np.diff(values)
    w = np.zeros_like(values)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass(frozen=True)
class ParameterBox:
    """Closed box of geometries with a regular grid on each axis."""

    a_range: tuple
    b_range: tuple
    d_range: tuple
    n_a: int
    n_b: int
    n_d: int

    def __post_init__(self):
        for name in ("a_range", "b_range", "d_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if hi < lo:
                raise ConfigError(f"{name} must satisfy lo <= hi, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        for name in ("n_a", "n_b", "n_d"):
            n = getattr(self, name)
            if int(n) != n or n < 1:
                raise ConfigError(f"{name} must be a positive integer, got {n}")
            object.__setattr__(self, name, int(n))
        for name, n in (("a", self.n_a), ("b", self.n_b), ("d", self.n_d)):
            lo, hi = getattr(self, f"{name}_range")
            if n > 1 and hi == lo:
                raise ConfigError(f"{name}_range is degenerate but n_{name}={n}")

    @property
    def shape(self):
        return (self.n_a, self.n_b, self.n_d)

    @property
    def n_cells(self):
        return self.n_a * self.n_b * self.n_d

    @property
    def axes(self):
        out = []
        for (lo, hi), n in ((self.a_range, self.n_a), (self.b_range, self.n_b),
                            (self.d_range, self.n_d)):
            out.append(np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n))
        return tuple(out)

    @property
    def spacing(self) -> np.ndarray:
        """Grid step per axis (range length for single-point axes, 1 if that is 0)."""
        out = []
        for (lo, hi), n in ((self.a_range, self.n_a), (self.b_range, self.n_b),
                            (self.d_range, self.n_d)):
            out.append((hi - lo) / (n - 1) if n > 1 else (hi - lo) or 1.0)
        return np.array(out)

    def weights(self):
        """Per-axis trapezoid weights; single-point axes use the axis length."""
        out = []
        for ax, step, n in zip(self.axes, self.spacing, self.shape):
            out.append(np.array([step]) if n == 1 else trapezoid_weights(ax))
        return tuple(out)

    def cell_weights(self) -> np.ndarray:
        wa, wb, wd = self.weights()
        return wa[:, None, None] * wb[None, :, None] * wd[None, None, :]

    def geometry(self, i, j, k) -> GeometryParam:
        a, b, d = self.axes
        return GeometryParam(float(a[i]), float(b[j]), float(d[k]))

    def contains(self, m: GeometryParam) -> bool:
        return (self.a_range[0] <= m.a <= self.a_range[1]
                and self.b_range[0] <= m.b <= self.b_range[1]
                and self.d_range[0] <= m.d <= self.d_range[1])

    def nearest_index(self, m: GeometryParam):
        return tuple(int(np.argmin(np.abs(ax - v))) for ax, v in zip(self.axes, (m.a, m.b, m.d)))

    def cell_distance(self, m: GeometryParam) -> np.ndarray:
        """Distance of every cell to ``m`` in units of grid steps."""
        a, b, d = self.axes
        step = self.spacing
        da = (a - m.a) / step[0]
        db = (b - m.b) / step[1]
        dd = (d - m.d) / step[2]
        return np.sqrt(da[:, None, None] ** 2 + db[None, :, None] ** 2 + dd[None, None, :] ** 2)


def log_det_term(singular_values, q: int, C: float, tau: float = 1.0) -> float:
    """sum_{j=1..q} log(tau (mu_j^2 + C) / 2 pi) with mu padded by zeros."""
    s = np.asarray(singular_values, dtype=float)
    r = s.size
    if r > q:
        raise ConfigError("more singular values than unknowns")
    lt = np.log(tau)
    return float(np.sum(np.log(s * s + C)) + (q - r) * np.log(C) + q * (lt - _LOG_2PI))


def log_density_cell(system, ops: DifferenceOperators, u, C: float, tau: float = 1.0,
                     box: ParameterBox | None = None) -> float:
    """Unnormalized log posterior density of the geometry of ``system``."""
    _check_C(C)
    if not (np.isfinite(tau) and tau > 0):
        raise ConfigError(f"tau must be positive, got {tau}")
    if box is not None and not box.contains(system.m):
        return -np.inf
    sol = solve(system, ops, u, C)
    return float(-0.5 * tau * sol.functional
                 - 0.5 * log_det_term(system.singular_values, system.q, C, tau))


@dataclass
class CellSummaries:
    """What the sweep needs from each geometry, packed per cell.

    For a valid cell: the singular values of W A, the eigenvalues of
    G = W A K^-1 A' W with the squared data coefficients on their
    eigenvectors (zero where the eigenvalue is treated as null), the data
    energy outside the range, and both misfit endpoints.
    """

    box: ParameterBox
    q: int
    valid: np.ndarray
    svals: np.ndarray
    lam: np.ndarray
    coef2: np.ndarray
    resid2: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def data_norm(self) -> float:
        """||W u||, identical for every geometry."""
        up = self.upper[self.valid.ravel()]
        return float(up[0]) if up.size else float("nan")

    def functional(self, C: float) -> np.ndarray:
        lam = np.where(self.coef2 > 0, self.lam, 1.0)
        return self.resid2 + np.sum(self.coef2 * C / (C + lam), axis=-1)

    def misfit(self, C: float) -> np.ndarray:
        lam = np.where(self.coef2 > 0, self.lam, 1.0)
        ratio = C / (C + lam)
        return np.sqrt(self.resid2 + np.sum(ratio * ratio * self.coef2, axis=-1))

    def log_density(self, C: float, tau: float = 1.0) -> np.ndarray:
        _check_C(C)
        if not (np.isfinite(tau) and tau > 0):
            raise ConfigError(f"tau must be positive, got {tau}")
        r = self.svals.shape[1]
        logdet = (np.sum(np.log(self.svals**2 + C), axis=-1) + (self.q - r) * np.log(C)
                  + self.q * (np.log(tau) - _LOG_2PI))
        out = -0.5 * tau * self.functional(C) - 0.5 * logdet
        out = np.where(self.valid.ravel(), out, -np.inf)
        return out.reshape(self.box.shape)

    def per_cell_C(self, err_target: float, rtol: float = 1e-3) -> np.ndarray:
        v = self.valid.ravel()
        out = np.full(v.shape, np.nan)
        out[v] = select_C_many(self.lam[v], self.coef2[v], self.resid2[v], self.lower[v],
                               self.upper[v], err_target, rtol=rtol)
        return out.reshape(self.box.shape)


def _summarize_chunk(cells, box, grid, stations, medium, ops, u, guard, rake):
    n_data = 3 * len(stations)
    r = min(n_data, grid.q)
    k = len(cells)
    valid = np.zeros(k, dtype=bool)
    svals = np.ones((k, r))
    lam = np.ones((k, n_data))
    coef2 = np.zeros((k, n_data))
    resid2 = np.zeros(k)
    lower = np.zeros(k)
    upper = np.zeros(k)
    for pos, flat in enumerate(cells):
        m = box.geometry(*np.unravel_index(flat, box.shape))
        if not grid.satisfies_depth(m, guard):
            continue
        system = assemble(m, grid, stations, medium, guard=guard, rake=rake)
        f = woodbury_factors(system, ops)
        y = system.weights * u
        c2 = (f.V.T @ y) ** 2
        valid[pos] = True
        svals[pos] = system.singular_values
        lam[pos] = f.lam
        coef2[pos] = np.where(f.active, c2, 0.0)
        resid2[pos] = c2[~f.active].sum()
        rank = system.rank()
        Ur = system.U[:, :rank]
        lower[pos] = np.linalg.norm(y - Ur @ (Ur.T @ y))
        upper[pos] = np.linalg.norm(y)
    return valid, svals, lam, coef2, resid2, lower, upper


def compute_summaries(box: ParameterBox, grid: FaultGrid, stations: StationSet,
                      medium: ElasticMedium, ops: DifferenceOperators,
                      guard: float = DEFAULT_DEPTH_GUARD, workers: int = 1,
                      rake=None) -> CellSummaries:
    """Assemble and factor every geometry of the box once.

    Cells whose fault would reach above ``-guard`` are marked invalid and
    later receive zero density.
    """
    u = stations.data_vector()
    n = box.n_cells
    workers = max(1, int(workers))
    n_chunks = min(n, workers * 8) if workers > 1 else 1
    chunks = [c for c in np.array_split(np.arange(n), n_chunks) if c.size]
    args = (box, grid, stations, medium, ops, u, guard, rake)
    if workers == 1:
        parts = [_summarize_chunk(c, *args) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _summarize_chunk(c, *args), chunks))
    fields = [np.concatenate([p[i] for p in parts]) for i in range(7)]
    valid = fields[0].reshape(box.shape)
    n_bad = int((~valid).sum())
    if n_bad:
        log.warning("%d of %d cells violate the depth guard and get zero density", n_bad, n)
    return CellSummaries(box, grid.q, valid, *fields[1:])


def select_C(summaries: CellSummaries, err_rel: float, rtol: float = 1e-3) -> CSelection:
    """Discrepancy constant per cell for Err = err_rel * ||W u||, and their max."""
    if not (0 < err_rel < 1):
        raise ConfigError(f"relative error target must lie in (0, 1), got {err_rel}")
    if not summaries.valid.any():
        raise NumericalError("no admissible geometry in the parameter box")
    err = err_rel * summaries.data_norm
    return select_C_global(summaries.per_cell_C(err, rtol=rtol), err_target=err)


@dataclass
class PosteriorGrid:
    """Posterior over the box: unnormalized log density and its normalization."""

    box: ParameterBox
    log_density: np.ndarray
    global_C: float
    tau: float = 1.0

    def __post_init__(self):
        ld = np.asarray(self.log_density, dtype=float).reshape(self.box.shape)
        if np.any(np.isnan(ld)) or np.any(ld == np.inf):
            raise NumericalError("log density contains NaN or +inf")
        if not np.any(np.isfinite(ld)):
            raise NumericalError("posterior vanishes on the whole box")
        self.log_density = ld
        self._peak = float(ld.max())
        rel = np.exp(ld - self._peak)
        self._integral = float(np.sum(self.box.cell_weights() * rel))
        self.density = rel / self._integral

    @property
    def log_normalizer(self) -> float:
        """log of the constant turning exp(log_density) into a probability density."""
        return -(self._peak + np.log(self._integral))

    @property
    def normalized_log_density(self) -> np.ndarray:
        return self.log_density + self.log_normalizer

    def integral(self) -> float:
        return float(np.sum(self.box.cell_weights() * self.density))

    def map_index(self):
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.log_density), self.box.shape))

    def map_geometry(self) -> GeometryParam:
        return self.box.geometry(*self.map_index())

    def refined_map(self) -> np.ndarray:
        """Stationary point of a quadratic fit to log density on the 3x3x3 neighborhood.

        Diagnostic only; falls back to the grid argmax when the fit is not
        usable or moves more than one cell.
        """
        idx = np.array(self.map_index())
        base = np.array([ax[i] for ax, i in zip(self.box.axes, idx)])
        step = self.box.spacing
        pts, vals = [], []
        for off in np.ndindex(3, 3, 3):
            o = np.array(off) - 1
            j = idx + o
            if np.any(j < 0) or np.any(j >= self.box.shape):
                continue
            v = self.log_density[tuple(j)]
            if np.isfinite(v):
                pts.append(o.astype(float))
                vals.append(v)
        if len(pts) < 10:
            return base
        x = np.array(pts)
        cols = [np.ones(len(x))] + [x[:, i] for i in range(3)]
        cols += [x[:, i] * x[:, j] for i in range(3) for j in range(i, 3)]
        coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.array(vals), rcond=None)
        grad = coef[1:4]
        H = np.zeros((3, 3))
        it = iter(coef[4:])
        for i in range(3):
            for j in range(i, 3):
                c = next(it)
                if i == j:
                    H[i, i] = 2 * c
                else:
                    H[i, j] = H[j, i] = c
        try:
            shift = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            return base
        if not np.all(np.isfinite(shift)) or np.any(np.abs(shift) > 1.0):
            return base
        return base + shift * step

    def marginals(self):
        """Three 1-D marginal densities (values, density) for a, b and d."""
        wa, wb, wd = self.box.weights()
        rho = self.density
        ma = np.einsum("ijk,j,k->i", rho, wb, wd)
        mb = np.einsum("ijk,i,k->j", rho, wa, wd)
        md = np.einsum("ijk,i,j->k", rho, wa, wb)
        return tuple(zip(self.box.axes, (ma, mb, md)))

    def posterior_mean(self) -> np.ndarray:
        return np.array([np.sum(w * v * p) for (v, p), w in zip(self.marginals(), self.box.weights())])

    def posterior_std(self) -> np.ndarray:
        out = []
        for (v, p), w in zip(self.marginals(), self.box.weights()):
            mean = np.sum(w * v * p)
            out.append(np.sqrt(max(np.sum(w * (v - mean) ** 2 * p), 0.0)))
        return np.array(out)

    def mass_outside(self, center: GeometryParam, radius_cells: float) -> float:
        """Posterior mass of the cells farther than ``radius_cells`` grid steps from ``center``."""
        far = self.box.cell_distance(center) > radius_cells
        return float(np.sum((self.box.cell_weights() * self.density)[far]))

    def log_mass_outside(self, center: GeometryParam, radius_cells: float) -> float:
        """log of :meth:`mass_outside`, computed without underflow."""
        far = self.box.cell_distance(center) > radius_cells
        if not far.any():
            return -np.inf
        terms = self.normalized_log_density + np.log(self.box.cell_weights())
        return float(logsumexp(terms[far]))


def sweep(box: ParameterBox, grid: FaultGrid, stations: StationSet, medium: ElasticMedium,
          ops: DifferenceOperators, C: float, tau: float = 1.0, workers: int = 1,
          guard: float = DEFAULT_DEPTH_GUARD, summaries: CellSummaries | None = None,
          rake=None) -> PosteriorGrid:
    """Evaluate and normalize the posterior on every cell of ``box``."""
    if not (C > 0):
        raise ConfigError(f"posterior evaluation needs C > 0, got {C}")
    if summaries is None:
        summaries = compute_summaries(box, grid, stations, medium, ops, guard=guard,
                                      workers=workers, rake=rake)
    return PosteriorGrid(box, summaries.log_density(C, tau), global_C=C, tau=tau)


def marginals(pg: PosteriorGrid):
    return pg.marginals()


@dataclass
class ConcentrationReport:
    """Mass outside the ball per tau, also kept in log form since it underflows quickly."""

    taus: list
    outside_mass: list
    log_outside_mass: list
    radius_cells: float

    @property
    def strictly_decreasing(self) -> bool:
        m = self.log_outside_mass
        return all(b < a for a, b in zip(m, m[1:]))

    @property
    def nonincreasing(self) -> bool:
        m = self.log_outside_mass
        return all(b <= a for a, b in zip(m, m[1:]))


def concentration_experiment(summaries: CellSummaries, C: float, taus, truth: GeometryParam,
                             radius_cells: float = 3.0) -> ConcentrationReport:
    """Posterior mass outside a ball around ``truth`` for increasing tau."""
    taus = [float(t) for t in taus]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ConfigError("taus must be increasing")
    masses, logs = [], []
    for tau in taus:
        pg = PosteriorGrid(summaries.box, summaries.log_density(C, tau), global_C=C, tau=tau)
        masses.append(pg.mass_outside(truth, radius_cells))
        logs.append(pg.log_mass_outside(truth, radius_cells))
    return ConcentrationReport(taus=taus, outside_mass=masses, log_outside_mass=logs,
                               radius_cells=radius_cells)


@dataclass
class SlipPosterior:
    mean: np.ndarray
    node_std: np.ndarray


def slip_posterior(system, ops: DifferenceOperators, u, C: float) -> SlipPosterior:
    """Gaussian slip posterior at fixed geometry.

    Covariance (A'W^2A + C K)^-1 = (K^-1 - Z'(C I + G)^-1 Z) / C; only its
    diagonal is formed.
    """
    _check_C(C)
    sol = solve(system, ops, u, C)
    f = woodbury_factors(system, ops)
    P = f.Z.T @ f.V[:, f.active]  # (q, k)
    var = (np.diag(ops.K_inv) - np.sum(P * P / (C + f.lam[f.active]), axis=1)) / C
    if np.any(var <= 0):
        raise NumericalError("non-positive posterior variance; C too small for double precision")
    return SlipPosterior(mean=sol.g, node_std=np.sqrt(var))
