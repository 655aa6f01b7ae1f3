"""Tikhonov solves and discrepancy-principle selection of the regularization constant.

Notation: B = diag(w) A is the weighted operator, y = diag(w) u the weighted
data and K = D'D + E'E. With Z = B K^-1 and G = Z B' (3N x 3N), the
push-through form of Woodbury's identity gives

    (B'B + C K)^-1 B' y = Z' (C I + G)^-1 y,

so every solve costs one small eigen-decomposition of G per geometry plus a
(q x 3N) product. In the eigenbasis of G the weighted misfit, the penalty
and the minimized functional are explicit rational functions of C.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .forward import ForwardSystem
from .grid import DifferenceOperators

__all__ = [
    "TikhonovSolution",
    "WoodburyFactors",
    "MisfitCurve",
    "CSelection",
    "woodbury_factors",
    "solve",
    "misfit_curve",
    "misfit_endpoints",
    "select_C_cell",
    "select_C_global",
    "select_C_many",
    "C_BRACKET",
]

log = logging.getLogger(__name__)

C_BRACKET = (1e-12, 1e6)
_EIG_RTOL = 1e-13


@dataclass
class TikhonovSolution:
    g: np.ndarray
    C: float
    weighted_misfit: float
    penalty: float

    @property
    def functional(self) -> float:
        return self.weighted_misfit**2 + self.C * self.penalty


@dataclass
class WoodburyFactors:
    Z: np.ndarray  # (3N, q) = B K^-1
    lam: np.ndarray  # eigenvalues of G, ascending, clipped at 0
    V: np.ndarray  # eigenvectors of G
    active: np.ndarray  # eigenvalues treated as nonzero


def woodbury_factors(system: ForwardSystem, ops: DifferenceOperators) -> WoodburyFactors:
    key = ("woodbury", id(ops))
    cached = system._cache.get(key)
    if cached is not None:
        return cached
    B = system.B
    Z = B @ ops.K_inv
    G = Z @ B.T
    lam, V = np.linalg.eigh(0.5 * (G + G.T))
    lam = np.clip(lam, 0.0, None)
    top = lam[-1] if lam.size else 0.0
    active = lam > _EIG_RTOL * max(top, np.finfo(float).tiny)
    f = WoodburyFactors(Z=Z, lam=lam, V=V, active=active)
    system._cache[key] = f
    return f


def _check_C(C):
    if not np.isfinite(C) or C <= 0:
        raise ConfigError(f"regularization constant must be positive, got {C}")


def solve(system: ForwardSystem, ops: DifferenceOperators, u, C: float) -> TikhonovSolution:
    """Minimize ||W(A g - u)||^2 + C (||D g||^2 + ||E g||^2)."""
    _check_C(C)
    u = np.asarray(u, dtype=float)
    y = system.weights * u
    f = woodbury_factors(system, ops)
    coef = f.V[:, f.active].T @ y
    g = f.Z.T @ (f.V[:, f.active] @ (coef / (C + f.lam[f.active])))
    r = system.B @ g - y
    return TikhonovSolution(g=g, C=float(C), weighted_misfit=float(np.linalg.norm(r)),
                            penalty=ops.penalty(g))


def misfit_endpoints(system: ForwardSystem, u):
    """Limits of the weighted misfit as C -> 0 and C -> infinity.

    The lower limit is the distance from W u to the range of W A.
    """
    y = system.weights * np.asarray(u, dtype=float)
    r = system.rank()
    Ur = system.U[:, :r]
    v = Ur @ (Ur.T @ y)
    return float(np.linalg.norm(y - v)), float(np.linalg.norm(y))


@dataclass
class MisfitCurve:
    """Weighted misfit, penalty and minimized functional as functions of C.

    ``lam`` are the eigenvalues of G that are treated as nonzero and
    ``coef2`` the squared components of y on their eigenvectors;
    ``resid2`` collects the part of ||y||^2 outside the range of G.
    """

    lam: np.ndarray
    coef2: np.ndarray
    resid2: float
    lower: float
    upper: float

    def misfit(self, C):
        C = np.asarray(C, dtype=float)[..., None]
        ratio = C / (C + self.lam)
        return np.sqrt(self.resid2 + np.sum(ratio * ratio * self.coef2, axis=-1))

    def penalty(self, C):
        C = np.asarray(C, dtype=float)[..., None]
        return np.sum(self.lam * self.coef2 / (C + self.lam) ** 2, axis=-1)

    def functional(self, C):
        C = np.asarray(C, dtype=float)[..., None]
        return self.resid2 + np.sum(self.coef2 * C / (C + self.lam), axis=-1)

    def select_C(self, err_target, rtol=1e-3, bracket=C_BRACKET, max_iter=60):
        return float(_bisect_C(self.misfit, np.array([self.lower]), np.array([self.upper]),
                               np.asarray(err_target, dtype=float).reshape(1),
                               rtol, bracket, max_iter)[0])


def misfit_curve(system: ForwardSystem, ops: DifferenceOperators, u) -> MisfitCurve:
    y = system.weights * np.asarray(u, dtype=float)
    f = woodbury_factors(system, ops)
    coef2 = (f.V.T @ y) ** 2
    lower, upper = misfit_endpoints(system, u)
    return MisfitCurve(lam=f.lam[f.active], coef2=coef2[f.active],
                       resid2=float(coef2[~f.active].sum()), lower=lower, upper=upper)


def _bisect_C(misfit, lower, upper, err, rtol, bracket, max_iter):
    """Vectorized bisection in log10(C) for misfit(C) = err, one root per entry.

    ``misfit`` maps an array of C values (one per entry) to misfits.
    Entries with err <= lower get 0.
    """
    err = np.broadcast_to(err, lower.shape).astype(float)
    out = np.zeros_like(lower, dtype=float)
    todo = err > lower
    if not np.any(todo):
        return out
    lo = np.full(lower.shape, np.log10(bracket[0]))
    hi = np.full(lower.shape, np.log10(bracket[1]))

    top = misfit(np.full(lower.shape, bracket[1]))
    capped = todo & (top < err)
    if np.any(capped):
        log.warning("misfit below target at C=%g for %d cell(s); returning bracket top",
                    bracket[1], int(capped.sum()))
        out[capped] = bracket[1]
    bottom = misfit(np.full(lower.shape, bracket[0]))
    floored = todo & ~capped & (bottom > err)
    if np.any(floored):
        log.warning("misfit above target at C=%g for %d cell(s); returning bracket bottom",
                    bracket[0], int(floored.sum()))
        out[floored] = bracket[0]

    active = todo & ~capped & ~floored
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        val = misfit(10.0**mid)
        done = active & (np.abs(val - err) <= rtol * err)
        out[done] = 10.0 ** mid[done]
        active &= ~done
        below = val < err
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    out[active] = 10.0 ** (0.5 * (lo[active] + hi[active]))
    return out


def select_C_cell(system: ForwardSystem, ops: DifferenceOperators, u, err_target,
                  rtol=1e-3, bracket=C_BRACKET, max_iter=60) -> float:
    """Largest C whose minimizer keeps the weighted misfit at most ``err_target``."""
    curve = misfit_curve(system, ops, u)
    if not (0 < err_target < curve.upper):
        raise ConfigError(
            f"err_target must lie in (0, ||W u|| = {curve.upper:.6g}), got {err_target}"
        )
    return curve.select_C(err_target, rtol=rtol, bracket=bracket, max_iter=max_iter)


@dataclass
class CSelection:
    """Per-geometry constants and the global (max) constant.

    ``per_cell_C`` is NaN where the geometry was not admissible.
    """

    per_cell_C: np.ndarray
    global_C: float
    err_target: float

    def summary(self) -> dict:
        c = self.per_cell_C[np.isfinite(self.per_cell_C)]
        return {
            "n_cells": int(self.per_cell_C.size),
            "n_valid": int(c.size),
            "n_zero": int(np.count_nonzero(c == 0)),
            "min": float(c.min()) if c.size else None,
            "max": float(c.max()) if c.size else None,
            "median": float(np.median(c)) if c.size else None,
        }


def select_C_many(lam, coef2, resid2, lower, upper, err_target, rtol=1e-3,
                  bracket=C_BRACKET, max_iter=60):
    """Discrepancy constants for many geometries at once.

    ``lam`` and ``coef2`` are (n_cells, k) arrays padded with zero ``coef2``
    where a cell has fewer active eigenvalues.
    """
    lam = np.asarray(lam, dtype=float)
    coef2 = np.asarray(coef2, dtype=float)
    safe = np.where(coef2 > 0, lam, 1.0)

    def misfit(C):
        C = np.asarray(C)[:, None]
        ratio = C / (C + safe)
        return np.sqrt(resid2 + np.sum(ratio * ratio * coef2, axis=-1))

    return _bisect_C(misfit, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
                     np.asarray(err_target, dtype=float), rtol, bracket, max_iter)


def select_C_global(per_cell_C, err_target=float("nan")) -> CSelection:
    """Reduce per-geometry constants to the global constant (maximum).

    Accepts an array of per-cell constants (NaN for inadmissible cells) or a
    mapping from cell index to constant.
    """
    if isinstance(per_cell_C, dict):
        if not per_cell_C:
            raise ConfigError("parameter grid is empty")
        per_cell_C = np.array([per_cell_C[k] for k in sorted(per_cell_C)], dtype=float)
    per_cell_C = np.asarray(per_cell_C, dtype=float)
    if per_cell_C.size == 0:
        raise ConfigError("parameter grid is empty")
    finite = per_cell_C[np.isfinite(per_cell_C)]
    if finite.size == 0:
        raise NumericalError("no admissible geometry in the parameter box")
    return CSelection(per_cell_C=per_cell_C, global_C=float(finite.max()),
                      err_target=float(err_target))
