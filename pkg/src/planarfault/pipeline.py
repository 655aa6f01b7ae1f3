"""End-to-end inversion: C selection, posterior sweep, marginals, MAP and slip statistics.

Each stage reads and writes plain files in an output directory so stages can
be run separately from the command line; :func:`run_pipeline` chains them and
writes a manifest from which the run can be repeated.
"""

from __future__ import annotations

import contextlib
import hashlib
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import formats
from .config import ScenarioConfig, config_hash, dump_config, parse_config
from .errors import DataError, PlanarFaultError
from .forward import StationSet, assemble
from .grid import (
    DifferenceOperators,
    FaultGrid,
    GeometryParam,
    build_difference_ops,
    build_grid,
    weighted_center,
)
from .posterior import CellSummaries, PosteriorGrid, compute_summaries, select_C, slip_posterior
from .solver import CSelection
from .synth import SyntheticTruth, synthesize

log = logging.getLogger(__name__)

FILES = {
    "stations": "stations.csv",
    "truth": "truth.json",
    "c_selection": "c_selection.json",
    "per_cell_C": "per_cell_C.csv",
    "posterior_grid": "posterior_grid.csv",
    "sweep": "sweep.json",
    "marginal_a": "marginal_a.csv",
    "marginal_b": "marginal_b.csv",
    "marginal_d": "marginal_d.csv",
    "map": "map.json",
    "slip": "slip.csv",
    "manifest": "manifest.json",
}


@contextlib.contextmanager
def stage(name: str):
    """Re-raise package errors with the stage name prefixed, keeping the type."""
    try:
        yield
    except PlanarFaultError as exc:
        if str(exc).startswith(f"[{name}]"):
            raise
        raise type(exc)(f"[{name}] {exc}") from exc


@dataclass
class Setup:
    config: ScenarioConfig
    stations: StationSet  # with the assumed noise model applied
    grid: FaultGrid
    ops: DifferenceOperators


def effective_stations(config: ScenarioConfig, stations: StationSet) -> StationSet:
    """Apply the configured global sigmas, if any, to the station set."""
    sh = stations.sigma_hor if config.sigma_hor is None else config.sigma_hor
    sv = stations.sigma_ver if config.sigma_ver is None else config.sigma_ver
    return stations.with_sigmas(sh, sv)


def inversion_grid(config: ScenarioConfig, stations: StationSet) -> FaultGrid:
    if config.center_mode == "explicit":
        center = config.center
    else:
        if not stations.has_displacements:
            raise DataError("weighted-station-mean center needs measured displacements")
        center = weighted_center(stations.positions, stations.measured_u)
    return build_grid(tuple(float(c) for c in center), config.half_lengths, config.n_side,
                      config.rake_spec())


def prepare(config: ScenarioConfig, stations: StationSet) -> Setup:
    with stage("setup"):
        if not stations.has_displacements:
            raise DataError("station file has missing displacements; run synth first")
        st = effective_stations(config, stations)
        grid = inversion_grid(config, st)
        return Setup(config, st, grid, build_difference_ops(grid))


def summarize(setup: Setup) -> CellSummaries:
    c = setup.config
    with stage("sweep"):
        return compute_summaries(c.box(), setup.grid, setup.stations, c.medium(), setup.ops,
                                 guard=c.depth_guard, workers=c.threads)


# --- stages ------------------------------------------------------------------

def run_synth(config: ScenarioConfig, truth: SyntheticTruth, template: StationSet, seed: int,
              out_dir) -> StationSet:
    """Write noisy synthetic stations and the truth sidecar into ``out_dir``.

    Noise uses the configured global sigmas, or the template's per-station
    sigmas when those are unset.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with stage("synth"):
        sh = template.sigma_hor if config.sigma_hor is None else config.sigma_hor
        sv = template.sigma_ver if config.sigma_ver is None else config.sigma_ver
        st, _ = synthesize(truth, template, sh, sv, seed, config.medium(), config.depth_guard)
    formats.write_stations(st, out / FILES["stations"],
                           comment=f"synthetic data, seed {seed}")
    formats.write_json(formats.truth_to_dict(truth) | {"seed": int(seed)}, out / FILES["truth"])
    return st


def run_select_c(setup: Setup, out_dir, summaries: CellSummaries | None = None):
    c = setup.config
    if summaries is None:
        summaries = summarize(setup)
    with stage("select-c"):
        sel = select_C(summaries, c.err_rel)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a, b, d = c.box().axes
    rows = [[formats.fmt(a[i]), formats.fmt(b[j]), formats.fmt(d[k]),
             formats.fmt(sel.per_cell_C[i, j, k])] for i, j, k in np.ndindex(c.box().shape)]
    formats._write_rows(out / FILES["per_cell_C"], ("a", "b", "d", "C"), rows)
    formats.write_json(c_selection_record(setup, sel), out / FILES["c_selection"])
    return sel, summaries


def c_selection_record(setup: Setup, sel: CSelection) -> dict:
    return {
        "config_sha256": config_hash(setup.config),
        "err_rel": setup.config.err_rel,
        "err_target": sel.err_target,
        "global_C": sel.global_C,
        "per_cell_C": sel.summary(),
    }


def resolve_C(setup: Setup, out_dir):
    """C from the override, else from a cached select-c result in ``out_dir``."""
    c = setup.config
    if c.c_override is not None:
        return c.c_override, "override"
    path = Path(out_dir) / FILES["c_selection"]
    if not path.exists():
        raise DataError(f"no C available: pass --c-override or run select-c first ({path} missing)")
    rec = formats.read_json(path)
    if rec.get("config_sha256") != config_hash(c):
        log.warning("%s was produced with a different config", path)
    return float(rec["global_C"]), "cached"


def run_sweep(setup: Setup, C: float, out_dir, summaries: CellSummaries | None = None) -> PosteriorGrid:
    c = setup.config
    if summaries is None:
        summaries = summarize(setup)
    with stage("sweep"):
        pg = PosteriorGrid(c.box(), summaries.log_density(C, c.tau), global_C=C, tau=c.tau)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_posterior_grid(pg, out / FILES["posterior_grid"])
    formats.write_json({"global_C": C, "tau": c.tau, "config_sha256": config_hash(c)},
                       out / FILES["sweep"])
    return pg


def map_record(pg: PosteriorGrid) -> dict:
    m = pg.map_geometry()
    return {
        "index": list(pg.map_index()),
        "geometry": [m.a, m.b, m.d],
        "refined": [float(v) for v in pg.refined_map()],
        "posterior_mean": [float(v) for v in pg.posterior_mean()],
        "posterior_std": [float(v) for v in pg.posterior_std()],
    }


def run_marginals(pg: PosteriorGrid, out_dir) -> dict:
    with stage("marginals"):
        formats.write_marginals(pg, out_dir)
        rec = map_record(pg)
    formats.write_json(rec, Path(out_dir) / FILES["map"])
    return rec


def run_slip_stats(setup: Setup, m: GeometryParam, C: float, out_dir):
    c = setup.config
    with stage("slip-stats"):
        system = assemble(m, setup.grid, setup.stations, c.medium(), guard=c.depth_guard)
        post = slip_posterior(system, setup.ops, setup.stations.data_vector(), C)
    formats.write_slip(setup.grid.nodes, post.mean, post.node_std, Path(out_dir) / FILES["slip"])
    return post


# --- full run ----------------------------------------------------------------

@dataclass
class RunResult:
    global_C: float
    c_source: str
    selection: CSelection | None
    posterior: PosteriorGrid
    map: dict
    manifest: dict


def run_pipeline(config: ScenarioConfig, stations: StationSet, out_dir) -> RunResult:
    """select-c, sweep, marginals, MAP and slip statistics at the MAP, plus a manifest."""
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    station_text = formats.stations_to_text(stations)
    (out / FILES["stations"]).write_text(station_text, encoding="utf-8")
    setup = prepare(config, stations)
    summaries = summarize(setup)
    sel = None
    if config.c_override is not None:
        C, source = config.c_override, "override"
    else:
        sel, summaries = run_select_c(setup, out, summaries)
        C, source = sel.global_C, "discrepancy"
    run_sweep(setup, C, out, summaries)
    # marginals work from the written grid, exactly as the standalone stage does
    pg = formats.read_posterior_grid(out / FILES["posterior_grid"], C, config.tau)
    rec = run_marginals(pg, out)
    run_slip_stats(setup, pg.map_geometry(), C, out)

    artifacts = {}
    for key, name in FILES.items():
        p = out / name
        if key not in ("manifest", "truth", "sweep", "c_selection") and p.exists():
            artifacts[key] = {"path": name, "sha256": formats.file_sha256(p)}
    manifest = {
        "schema_version": formats.MANIFEST_VERSION,
        "package_version": __version__,
        "config": {"text": dump_config(config), "sha256": config_hash(config)},
        "stations": {"text": station_text,
                     "sha256": hashlib.sha256(station_text.encode()).hexdigest()},
        "inversion_grid": {"center": list(setup.grid.center),
                           "half_lengths": list(setup.grid.half_lengths),
                           "n_side": setup.grid.n_side, "rake": str(setup.grid.rake)},
        "global_C": C,
        "c_source": source,
        "err_target": None if sel is None else sel.err_target,
        "per_cell_C": None if sel is None else sel.summary(),
        "tau": config.tau,
        "n_valid_cells": int(summaries.valid.sum()),
        "map": rec,
        "artifacts": artifacts,
        "runtime": {"wall_time_s": time.perf_counter() - t0},
    }
    formats.write_json(manifest, out / FILES["manifest"])
    return RunResult(C, source, sel, pg, rec, manifest)


def rerun_from_manifest(manifest_path, out_dir) -> RunResult:
    """Repeat a run using only what its manifest records."""
    man = formats.read_json(manifest_path)
    if man.get("schema_version") != formats.MANIFEST_VERSION:
        raise DataError(f"unsupported manifest schema {man.get('schema_version')!r}")
    config = parse_config(man["config"]["text"])
    stations = formats.parse_stations(man["stations"]["text"], source=str(manifest_path))
    return run_pipeline(config, stations, out_dir)
