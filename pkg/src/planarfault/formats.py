"""Readers and writers for station files, truth records and result tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .forward import StationSet
from .grid import FaultGrid, GeometryParam, Rake
from .posterior import ParameterBox, PosteriorGrid
from .synth import GaussianBump, SyntheticTruth

STATION_COLUMNS = ("name", "x1_km", "x2_km", "u1_mm", "u2_mm", "u3_mm", "sigma_hor_mm", "sigma_ver_mm")
GRID_COLUMNS = ("a", "b", "d", "density", "log_density")
MARGINAL_COLUMNS = ("value", "density")
SLIP_COLUMNS = ("y1_km", "y2_km", "mean_mm", "std_mm")
MANIFEST_VERSION = 1


def fmt(x) -> str:
    """Shortest round-trippable text for a float; empty for NaN."""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _data_lines(lines):
    for lineno, line in enumerate(lines, start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def load_stations(path, require_displacements: bool = True) -> StationSet:
    """Read a station CSV (``#`` comment lines allowed).

    Empty displacement fields are read as NaN and only accepted when
    ``require_displacements`` is false (synthetic-data mode).
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read station file: {exc}") from exc
    return parse_stations(text, require_displacements, source=str(path))


def parse_stations(text: str, require_displacements: bool = True, source="<stations>") -> StationSet:
    path = source
    lines = list(_data_lines(text.splitlines()))
    if not lines:
        raise DataError(f"{path}: empty station file")
    header_line, header = lines[0][0], next(csv.reader([lines[0][1]]))
    header = [h.strip() for h in header]
    if tuple(header) != STATION_COLUMNS:
        raise DataError(f"{path}:{header_line}: header must be {','.join(STATION_COLUMNS)}")
    names, pos, u, sh, sv = [], [], [], [], []
    seen = {}
    for lineno, line in lines[1:]:
        row = [c.strip() for c in next(csv.reader([line]))]
        if len(row) != len(STATION_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(STATION_COLUMNS)} fields, got {len(row)}")
        name = row[0]
        if not name:
            raise DataError(f"{path}:{lineno}: missing station name")
        if name in seen:
            raise DataError(f"{path}:{lineno}: duplicate station {name!r} (first on line {seen[name]})")
        seen[name] = lineno
        try:
            x = [float(row[1]), float(row[2])]
            disp = [float(v) if v else math.nan for v in row[3:6]]
            s = [float(row[6]), float(row[7])]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if require_displacements and any(math.isnan(v) for v in disp):
            raise DataError(f"{path}:{lineno}: missing displacement for station {name!r}")
        if not all(math.isfinite(v) for v in x + s) or min(s) <= 0:
            raise DataError(f"{path}:{lineno}: positions must be finite and sigmas positive")
        names.append(name)
        pos.append(x)
        u.append(disp)
        sh.append(s[0])
        sv.append(s[1])
    if not names:
        raise DataError(f"{path}: no stations")
    return StationSet(tuple(names), np.array(pos), np.array(u), np.array(sh), np.array(sv))


def stations_to_text(stations: StationSet, comment: str | None = None) -> str:
    fh = io.StringIO()
    if comment:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STATION_COLUMNS)
    for i, name in enumerate(stations.names):
        w.writerow([name, *(fmt(v) for v in stations.positions[i]),
                    *(fmt(v) for v in stations.measured_u[i]),
                    fmt(stations.sigma_hor[i]), fmt(stations.sigma_ver[i])])
    return fh.getvalue()


def write_stations(stations: StationSet, path, comment: str | None = None):
    Path(path).write_text(stations_to_text(stations, comment), encoding="utf-8")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- synthetic truth -------------------------------------------------------

def truth_to_dict(truth: SyntheticTruth) -> dict:
    g = truth.grid
    return {
        "m": [truth.m.a, truth.m.b, truth.m.d],
        "rectangle": {"center": list(g.center), "half_lengths": list(g.half_lengths),
                      "n_side": g.n_side},
        "rake": str(g.rake),
        "bumps": [{"center": list(b.center), "widths": list(b.widths), "amplitude_mm": b.amplitude}
                  for b in truth.bumps],
        "nodal_values": None if truth.nodal_values is None else list(map(float, truth.nodal_values)),
    }


def truth_from_dict(data: dict) -> SyntheticTruth:
    try:
        rect = data["rectangle"]
        grid = FaultGrid(tuple(rect["center"]), tuple(rect["half_lengths"]), int(rect["n_side"]),
                         Rake.parse(data.get("rake", "steepest-ascent")))
        bumps = tuple(GaussianBump(tuple(b["center"]), tuple(b["widths"]), float(b["amplitude_mm"]))
                      for b in data.get("bumps", ()))
        nodal = data.get("nodal_values")
        return SyntheticTruth(GeometryParam(*map(float, data["m"])), grid, bumps,
                              None if nodal is None else np.asarray(nodal, dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed truth record: {exc}") from exc


def load_truth(path) -> SyntheticTruth:
    with open(path, encoding="utf-8") as fh:
        try:
            return truth_from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_json(data, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    if not Path(path).exists():
        raise DataError(f"{path}: file not found")
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc


# --- result tables ---------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_posterior_grid(pg: PosteriorGrid, path):
    a, b, d = pg.box.axes
    logd = pg.normalized_log_density
    rows = []
    for i, j, k in np.ndindex(pg.box.shape):
        rows.append([fmt(a[i]), fmt(b[j]), fmt(d[k]), fmt(pg.density[i, j, k]), fmt(logd[i, j, k])])
    _write_rows(path, GRID_COLUMNS, rows)


def read_posterior_grid(path, global_C=float("nan"), tau=1.0) -> PosteriorGrid:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GRID_COLUMNS:
            raise DataError(f"{path}: header must be {','.join(GRID_COLUMNS)}")
        try:
            rows = np.array([[float(v) for v in r] for r in reader if r])
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    if rows.size == 0:
        raise DataError(f"{path}: empty posterior grid")
    axes = [np.unique(rows[:, c]) for c in range(3)]
    shape = tuple(len(ax) for ax in axes)
    if np.prod(shape) != len(rows):
        raise DataError(f"{path}: rows do not form a full grid")
    box = ParameterBox(*((ax[0], ax[-1]) for ax in axes), *shape)
    idx = [np.searchsorted(ax, rows[:, c]) for c, ax in enumerate(axes)]
    logd = np.full(shape, -np.inf)
    logd[tuple(idx)] = rows[:, 4]
    return PosteriorGrid(box, logd, global_C=global_C, tau=tau)


def write_marginals(pg: PosteriorGrid, out_dir, prefix="marginal"):
    paths = []
    for name, (values, density) in zip("abd", pg.marginals()):
        p = Path(out_dir) / f"{prefix}_{name}.csv"
        _write_rows(p, MARGINAL_COLUMNS, [[fmt(v), fmt(r)] for v, r in zip(values, density)])
        paths.append(p)
    return paths


def write_slip(nodes, mean, std, path):
    _write_rows(path, SLIP_COLUMNS, [[fmt(y[0]), fmt(y[1]), fmt(m), fmt(s)]
                                     for y, m, s in zip(nodes, mean, std)])


def read_table(path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != tuple(columns):
            raise DataError(f"{path}: header must be {','.join(columns)}")
        return np.array([[float(v) for v in r] for r in reader if r])
