"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data or geometry error,
4 numerical failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import formats, pipeline
from .config import _TYPES, ScenarioConfig, _parse, load_config
from .errors import ConfigError, DataError, GeometryError, NumericalError
from .grid import GeometryParam

log = logging.getLogger("planarfault")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3, 4


def _common(p: argparse.ArgumentParser, stations=True):
    p.add_argument("--config", type=Path, help="scenario config (INI); defaults apply when omitted")
    if stations:
        p.add_argument("--stations", type=Path, help="station CSV")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--err-rel", type=float, help="relative misfit target (config default 0.05)")
    p.add_argument("--tau", type=float, help="posterior temperature (config default 1)")
    p.add_argument("--c-override", type=float, help="use this C instead of selecting it")
    p.add_argument("--threads", type=int, help="worker threads for the sweep")
    p.add_argument("--seed", type=int, help="seed for synthetic noise")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, e.g. --set n_side=20 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planarfault", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate noisy synthetic station data from a truth record")
    _common(p)
    p.add_argument("--truth", type=Path, required=True, help="truth JSON")

    p = sub.add_parser("select-c", help="per-cell discrepancy constants and the global C")
    _common(p)

    p = sub.add_parser("sweep", help="posterior over the parameter box")
    _common(p)

    p = sub.add_parser("marginals", help="marginals, MAP and posterior std from a posterior grid")
    p.add_argument("--out", type=Path, required=True, help="directory holding posterior_grid.csv")

    p = sub.add_parser("slip-stats", help="slip posterior mean and std at a geometry")
    _common(p)
    p.add_argument("--m", type=str, help="geometry a,b,d (default: MAP from map.json)")

    p = sub.add_parser("run", help="full pipeline with manifest")
    _common(p)
    p.add_argument("--manifest", type=Path, help="repeat the run recorded in this manifest")
    return parser


def resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    for name, attr in (("err_rel", "err_rel"), ("tau", "tau"), ("c_override", "c_override"),
                       ("threads", "threads"), ("seed", "seed")):
        v = getattr(args, attr, None)
        if v is not None:
            changes[name] = v
    for item in args.set:
        key, sep, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _TYPES:
            raise ConfigError(f"bad --set {item!r}: expected KEY=VALUE with a config field name")
        changes[key] = _parse(key, value)
    return cfg.replace(**changes) if changes else cfg


def _stations(args, require_displacements=True):
    path = args.stations
    if path is None:
        cached = args.out / pipeline.FILES["stations"]
        if not cached.exists():
            raise DataError("no station file: pass --stations")
        path = cached
    return formats.load_stations(path, require_displacements=require_displacements)


def _cmd_synth(args):
    cfg = resolve_config(args)
    truth = formats.load_truth(args.truth)
    template = _stations(args, require_displacements=False)
    seed = args.seed if args.seed is not None else cfg.seed
    pipeline.run_synth(cfg, truth, template, seed, args.out)
    print(f"wrote {args.out / pipeline.FILES['stations']}")


def _cmd_select_c(args):
    cfg = resolve_config(args)
    setup = pipeline.prepare(cfg, _stations(args))
    sel, _ = pipeline.run_select_c(setup, args.out)
    print(f"global C = {sel.global_C:.6g}")


def _cmd_sweep(args):
    cfg = resolve_config(args)
    setup = pipeline.prepare(cfg, _stations(args))
    C, source = pipeline.resolve_C(setup, args.out)
    pg = pipeline.run_sweep(setup, C, args.out)
    print(f"C = {C:.6g} ({source}); MAP index {pg.map_index()}")


def _read_grid(out: Path):
    path = out / pipeline.FILES["posterior_grid"]
    if not path.exists():
        raise DataError(f"{path} missing; run sweep first")
    meta_path = out / pipeline.FILES["sweep"]
    meta = formats.read_json(meta_path) if meta_path.exists() else {}
    return formats.read_posterior_grid(path, meta.get("global_C", float("nan")),
                                       meta.get("tau", 1.0))


def _cmd_marginals(args):
    rec = pipeline.run_marginals(_read_grid(args.out), args.out)
    print("MAP", rec["geometry"], "std", rec["posterior_std"])


def _cmd_slip_stats(args):
    cfg = resolve_config(args)
    setup = pipeline.prepare(cfg, _stations(args))
    if args.m:
        try:
            m = GeometryParam(*(float(v) for v in args.m.split(",")))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"--m expects a,b,d: {exc}") from exc
    else:
        path = args.out / pipeline.FILES["map"]
        if not path.exists():
            raise DataError(f"{path} missing; pass --m or run marginals first")
        m = GeometryParam(*formats.read_json(path)["geometry"])
    if cfg.c_override is not None:
        C = cfg.c_override
    else:
        sweep_meta = args.out / pipeline.FILES["sweep"]
        C = (formats.read_json(sweep_meta)["global_C"] if sweep_meta.exists()
             else pipeline.resolve_C(setup, args.out)[0])
    args.out.mkdir(parents=True, exist_ok=True)
    pipeline.run_slip_stats(setup, m, C, args.out)
    print(f"wrote {args.out / pipeline.FILES['slip']}")


def _cmd_run(args):
    if args.manifest:
        res = pipeline.rerun_from_manifest(args.manifest, args.out)
    else:
        res = pipeline.run_pipeline(resolve_config(args), _stations(args), args.out)
    print(f"C = {res.global_C:.6g} ({res.c_source}); MAP {res.map['geometry']}; "
          f"std {res.map['posterior_std']}")


COMMANDS = {
    "synth": _cmd_synth,
    "select-c": _cmd_select_c,
    "sweep": _cmd_sweep,
    "marginals": _cmd_marginals,
    "slip-stats": _cmd_slip_stats,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GeometryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
