"""Command-line interface: ``dyrc {simulate,vg,metrics,run,export}``.

Exit codes: 0 ok, 2 configuration error, 3 numerical divergence,
4 data or file error. ``DYRC_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from dyrc import __version__
from dyrc.dynamics import DUFFING_SETS, SimConfig, integrate, read_series_csv, split, with_overrides, write_series_csv
from dyrc.errors import NonFinite, SectionTooLong, TooShort, ZeroSpectralRadius
from dyrc.experiment import (
    ExperimentConfig,
    Variant,
    config_from_mapping,
    fit_replicate,
    read_results_csv,
    run_experiment,
    summarize,
    write_pairing_csv,
    write_plotdata,
    write_results_csv,
    write_summary_csv,
)
from dyrc.graphs import (
    metrics,
    read_graph_csv,
    sample_sections,
    scale_to_spectral_radius,
    section_slice,
    visibility_graph,
    write_graph_csv,
)
from dyrc.io import atomic_writer
from dyrc.reservoir import save_model

log = logging.getLogger("dyrc")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_DATA = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("DYRC_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def _write_json(path: Path, data) -> None:
    with atomic_writer(path) as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Variant):
        return obj.value
    return obj


# -- simulate ------------------------------------------------------------------


def _parse_overrides(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or key not in ("d", "k", "k_nl", "F", "Omega"):
            raise ConfigError(f"bad --force value {item!r}; expected KEY=VALUE with KEY in d,k,k_nl,F,Omega")
        try:
            out[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad number in --force {item!r}") from exc
    return out


def cmd_simulate(args) -> int:
    file_cfg = load_config_file(args.config) if args.config else {}
    dataset = args.set if args.set is not None else int(file_cfg.get("dataset", 1))
    if dataset not in DUFFING_SETS:
        raise ConfigError(f"--set must be one of {sorted(DUFFING_SETS)}")
    sim_kw = dict(file_cfg.get("sim", {}))
    if args.ic:
        try:
            q0, v0 = (float(x) for x in args.ic.split(","))
        except ValueError as exc:
            raise ConfigError(f"--ic expects 'q0,v0', got {args.ic!r}") from exc
        sim_kw.update(q0=q0, v0=v0)
    for key in ("dt_record", "substeps", "n_samples", "n_transient"):
        val = getattr(args, key)
        if val is not None:
            sim_kw[key] = val
    try:
        overrides = dict(file_cfg.get("duffing", {}))
        overrides.update(_parse_overrides(args.force))
        params = with_overrides(DUFFING_SETS[dataset], **overrides)
        sim = SimConfig(**sim_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    ts = integrate(params, sim)
    out = Path(args.out)
    csv_path = out / f"{args.name}.csv"
    with atomic_writer(csv_path) as fh:
        write_series_csv(ts, fh)
    _write_json(
        out / f"{args.name}.json",
        {
            "dataset": dataset,
            "params": dataclasses.asdict(params),
            "sim": dataclasses.asdict(sim),
            "dt_record": sim.resolve_dt(params),
            "length": len(ts),
            "version": __version__,
        },
    )
    print(csv_path)
    return EXIT_OK


# -- vg ------------------------------------------------------------------------


def _read_series(path):
    try:
        return read_series_csv(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read series {path}: {exc}") from exc


def cmd_vg(args) -> int:
    ts = _read_series(args.input)
    if args.train_fraction is not None:
        try:
            ts, _ = split(ts, args.train_fraction)
        except (TooShort, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    if args.points < 2 or args.stride < 1 or args.n_sections < 1:
        raise ConfigError("--points must be >= 2, --stride and --n-sections >= 1")
    rng = np.random.default_rng(args.seed or 0) if args.sections == "random" else None
    secs = sample_sections(len(ts), args.points, args.stride, args.n_sections, method=args.sections, rng=rng)
    if not 0 <= args.section_index < len(secs):
        raise DataError(f"--section-index {args.section_index} outside [0, {len(secs)})")
    sec = secs[args.section_index]
    sl = section_slice(sec)
    g = visibility_graph(ts.q[sl], ts.t[sl])
    out = Path(args.out)
    graph_path = out / f"{args.name}.csv"
    with atomic_writer(graph_path) as fh:
        write_graph_csv(g, fh)
    info = {
        "points": sec.length,
        "stride": sec.stride,
        "start": sec.start,
        "span": sec.span,
        "section_index": args.section_index,
        "n_sections": args.n_sections,
        "edges": g.n_edges,
        "metrics": metrics(g).as_dict(),
    }
    _write_json(out / f"{args.name}_metrics.json", info)
    print(graph_path)
    return EXIT_OK


# -- metrics -------------------------------------------------------------------


def cmd_metrics(args) -> int:
    try:
        g = read_graph_csv(args.graph)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read graph {args.graph}: {exc}") from exc
    if g.n < 2:
        raise DataError("graph needs at least two nodes")
    try:
        scale_to_spectral_radius(g, 1.0)
    except ZeroSpectralRadius as exc:
        print(json.dumps({"error": "ZeroSpectralRadius", "message": str(exc)}))
        return EXIT_DATA
    m = metrics(g)
    data = {k: float(f"{v:.12g}") for k, v in m.as_dict().items()}
    text = json.dumps(data, indent=2)
    print(text)
    if args.out_given:
        _write_json(Path(args.out) / "metrics.json", data)
    return EXIT_OK


# -- run / export --------------------------------------------------------------


def _experiment_config(args) -> tuple[ExperimentConfig, dict]:
    data = load_config_file(args.config) if args.config else {}
    cli_keys = {k: data.pop(k) for k in ("out", "parallel", "record_timing") if k in data}
    data.pop("log", None)
    flag_map = {
        "set": "dataset",
        "sizes": "sizes",
        "replicates": "n_replicates",
        "variants": "variants",
        "mode": "mode",
        "sections": "sections",
        "seed": "seed",
        "ridge_lambda": "ridge_lambda",
    }
    for flag, key in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    try:
        return config_from_mapping(data), cli_keys
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def _write_tables(records, out: Path, record_timing: bool) -> None:
    with atomic_writer(out / "results.csv") as fh:
        write_results_csv(records, fh, record_timing=record_timing)
    with atomic_writer(out / "summary.csv") as fh:
        write_summary_csv(summarize(records), fh)
    if any(r.p_gen is not None for r in records):
        with atomic_writer(out / "pairing.csv") as fh:
            write_pairing_csv(records, fh)
    write_plotdata(records, out / "plotdata")


def cmd_run(args) -> int:
    config, file_cli = _experiment_config(args)
    out = Path(args.out if args.out_given else file_cli.get("out", args.out))
    parallel = args.parallel if args.parallel is not None else int(file_cli.get("parallel", 1))
    record_timing = args.record_timing or bool(file_cli.get("record_timing", False))
    if parallel < 0:
        raise ConfigError("--parallel must be >= 0")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    total = len(config.variants) * len(config.sizes) * config.n_replicates
    log.info("running %d replicates with parallel=%d", total, parallel)

    def progress(i, n, rec):
        log.info("[%d/%d] %s N=%d rep=%d %s", i, n, rec.variant, rec.N, rec.replicate, rec.status)

    records, _ = run_experiment(config, parallel=parallel, progress=progress)
    _write_tables(records, out, record_timing)
    _write_json(out / "config.json", {"experiment": _jsonable(config), "version": __version__})
    n_fail = sum(not r.ok for r in records)
    print(f"{len(records)} records ({n_fail} failed) -> {out / 'results.csv'}")
    return EXIT_OK


def cmd_export(args) -> int:
    out = Path(args.out)
    if args.model:
        config, _ = _experiment_config(args)
        if args.variant is None or args.size is None:
            raise ConfigError("--model needs --variant and --size")
        fit = fit_replicate(config, Variant(args.variant), args.size, args.replicate)
        path = Path(args.model)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(fit.model, path)
        print(path)
        return EXIT_OK
    results = Path(args.results) if args.results else out / "results.csv"
    try:
        with open(results, newline="") as fh:
            records = read_results_csv(fh)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read results {results}: {exc}") from exc
    with atomic_writer(out / "summary.csv") as fh:
        write_summary_csv(summarize(records), fh)
    write_plotdata(records, out / "plotdata")
    print(out / "summary.csv")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _csv_variants(text: str) -> list[str]:
    names = [x for x in text.split(",") if x]
    bad = [x for x in names if x not in Variant._value2member_map_]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variants {bad}; choose from {[v.value for v in Variant]}")
    return names


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--parallel", type=int, default=argparse.SUPPRESS, help="worker processes (0 = auto)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML or JSON config file")

    p = _Parser(prog="dyrc", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"dyrc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="integrate a Duffing trajectory")
    s.add_argument("--set", type=int, default=None, choices=sorted(DUFFING_SETS))
    s.add_argument("--force", action="append", metavar="KEY=VALUE", help="override a Duffing parameter")
    s.add_argument("--ic", help="initial condition 'q0,v0'")
    s.add_argument("--dt", dest="dt_record", type=float)
    s.add_argument("--substeps", type=int)
    s.add_argument("--n-samples", type=int)
    s.add_argument("--n-transient", type=int)
    s.add_argument("--name", default="series")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("vg", parents=[common], help="visibility graph of a series section")
    v.add_argument("input", help="series CSV (t,q,qdot,g)")
    v.add_argument("--points", type=int, required=True)
    v.add_argument("--stride", type=int, default=1)
    v.add_argument("--section-index", type=int, default=0)
    v.add_argument("--n-sections", type=int, default=100)
    v.add_argument("--sections", choices=("even", "random"), default="even")
    v.add_argument("--train-fraction", type=float)
    v.add_argument("--name", default="vg")
    v.set_defaults(func=cmd_vg)

    m = sub.add_parser("metrics", parents=[common], help="network metrics of an edge-list file")
    m.add_argument("graph")
    m.set_defaults(func=cmd_metrics)

    def experiment_flags(sp):
        sp.add_argument("--set", type=int, choices=sorted(DUFFING_SETS))
        sp.add_argument("--sizes", type=_csv_ints)
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--variants", type=_csv_variants)
        sp.add_argument("--mode", choices=("open", "closed"))
        sp.add_argument("--sections", choices=("even", "random"))
        sp.add_argument("--ridge-lambda", type=float)

    r = sub.add_parser("run", parents=[common], help="run the benchmark sweep")
    experiment_flags(r)
    r.add_argument("--record-timing", action="store_true", help="fill wall_ms (makes results.csv non-reproducible)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("export", parents=[common], help="summary/plot tables from results.csv, or a trained model")
    experiment_flags(e)
    e.add_argument("--results", help="results.csv to summarise (default <out>/results.csv)")
    e.add_argument("--model", help="write a trained model archive to this path")
    e.add_argument("--variant", choices=[x.value for x in Variant])
    e.add_argument("--size", type=int)
    e.add_argument("--replicate", type=int, default=0)
    e.set_defaults(func=cmd_export)
    return p


_DEFAULT_OUT = {"run": "results"}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    args.out_given = hasattr(args, "out")
    if not args.out_given:
        args.out = _DEFAULT_OUT.get(args.command, ".")
    for name, default in (("seed", None), ("parallel", None), ("config", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"dyrc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFinite as exc:
        print(f"dyrc: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, SectionTooLong) as exc:
        print(f"dyrc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
