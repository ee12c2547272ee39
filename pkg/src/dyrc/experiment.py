"""Four-variant benchmark: ER, density-matched ER, and visibility-graph
reservoirs at stride 1 and 16, swept over reservoir sizes and replicates.

Every replicate draws from its own generator, derived from
``(master seed, variant, N, replicate)``, so results do not depend on
execution order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from dyrc.dynamics import DUFFING_SETS, DuffingParams, SimConfig, TimeSeries, integrate, split
from dyrc.errors import EmptyCell, NonFinite, SectionTooLong, SingularSystem, ZeroSpectralRadius
from dyrc.graphs import (
    NetworkMetrics,
    WeightedDigraph,
    density,
    erdos_renyi,
    metrics,
    sample_sections,
    scale_to_spectral_radius,
    section_slice,
    visibility_graph,
)
from dyrc.io import atomic_writer
from dyrc.reservoir import (
    ReservoirModel,
    build_input_layer,
    evolve,
    io_pairs,
    mae,
    predict_closed_loop,
    predict_open_loop,
    train_readout,
)

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "SummaryRow",
    "Variant",
    "FittedReplicate",
    "build_reservoir",
    "fit_replicate",
    "generation_probability",
    "prepare_data",
    "replicate_seed",
    "reservoir_graph",
    "run_experiment",
    "run_replicate",
    "summarize",
]


class Variant(str, enum.Enum):
    ER = "ER"
    DenseER = "DenseER"
    DyRC_VG = "DyRC_VG"
    DyRC_VG_16 = "DyRC_VG_16"

    @property
    def tag(self) -> int:
        return _TAGS[self]

    @property
    def stride(self) -> int | None:
        return {Variant.DyRC_VG: 1, Variant.DyRC_VG_16: 16}.get(self)

    def __str__(self) -> str:
        return self.value


_TAGS = {Variant.ER: 0, Variant.DenseER: 1, Variant.DyRC_VG: 2, Variant.DyRC_VG_16: 3}
_SECTION_TAG = 7
DEFAULT_SIZES = (50, 100, 200, 300, 400, 500)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: int = 1
    sizes: tuple[int, ...] = DEFAULT_SIZES
    n_replicates: int = 100
    seed: int = 0
    variants: tuple[Variant, ...] = tuple(Variant)
    mode: str = "closed"
    alpha: float = 0.5
    input_fraction: float = 0.5
    ridge_lambda: float = 1e-6
    washout: int = 100
    spectral_target: float = 0.9
    er_density: float = 0.1
    train_fraction: float = 0.8
    sections: str = "even"
    n_sections: int | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    duffing: DuffingParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "variants", tuple(Variant(v) for v in self.variants))
        if not self.sizes or any(n < 2 for n in self.sizes):
            raise ValueError("sizes must be integers >= 2")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not self.variants:
            raise ValueError("at least one variant is required")
        if self.mode not in ("open", "closed"):
            raise ValueError("mode must be 'open' or 'closed'")
        if self.sections not in ("even", "random"):
            raise ValueError("sections must be 'even' or 'random'")
        if self.duffing is None and self.dataset not in DUFFING_SETS:
            raise ValueError(f"dataset must be one of {sorted(DUFFING_SETS)}")
        if self.n_sections is not None and self.n_sections < self.n_replicates:
            raise ValueError("n_sections must cover every replicate")

    @property
    def params(self) -> DuffingParams:
        return self.duffing if self.duffing is not None else DUFFING_SETS[self.dataset]

    @property
    def sections_count(self) -> int:
        return self.n_sections or self.n_replicates


@dataclass(frozen=True)
class RunRecord:
    variant: Variant
    dataset: int
    N: int
    replicate: int
    seed: int
    mode: str
    status: str
    mae: float | None = None
    metrics: NetworkMetrics | None = None
    p_gen: float | None = None
    wall_ms: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def key(self) -> tuple:
        return (self.variant.tag, self.N, self.replicate)


@dataclass(frozen=True)
class SummaryRow:
    variant: Variant
    N: int
    count_ok: int
    count_failed: int
    mae_median: float
    mae_q1: float
    mae_q3: float
    mae_mean: float
    mae_std: float
    mae_min: float
    mae_max: float

    @property
    def iqr(self) -> float:
        return self.mae_q3 - self.mae_q1


def replicate_seed(master: int, variant: Variant, N: int, replicate: int) -> int:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(Variant(variant).tag, N, replicate))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@lru_cache(maxsize=8)
def _simulate(params: DuffingParams, sim: SimConfig, train_fraction: float) -> tuple[TimeSeries, TimeSeries]:
    return split(integrate(params, sim), train_fraction)


def prepare_data(config: ExperimentConfig) -> tuple[TimeSeries, TimeSeries]:
    """Simulated trajectory split into (train, test); cached per process."""
    return _simulate(config.params, config.sim, config.train_fraction)


def _section_values(train: TimeSeries, N: int, stride: int, replicate: int, config: ExperimentConfig):
    rng = None
    if config.sections == "random":
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_SECTION_TAG, N, stride)))
    secs = sample_sections(len(train), N, stride, config.sections_count, method=config.sections, rng=rng)
    sl = section_slice(secs[replicate])
    return train.q[sl], train.t[sl]


def _vg(train: TimeSeries, N: int, stride: int, replicate: int, config: ExperimentConfig) -> WeightedDigraph:
    return visibility_graph(*_section_values(train, N, stride, replicate, config))


def generation_probability(
    variant: Variant, N: int, train: TimeSeries, replicate: int, config: ExperimentConfig
) -> float | None:
    """Edge probability of a random variant; ``None`` for visibility-graph variants.

    DenseER is paired with the stride-1 visibility graph of the same replicate.
    """
    variant = Variant(variant)
    if variant is Variant.ER:
        return config.er_density
    if variant is Variant.DenseER:
        return density(_vg(train, N, 1, replicate, config))
    return None


def reservoir_graph(
    variant: Variant,
    N: int,
    train: TimeSeries,
    replicate: int,
    rng: np.random.Generator,
    config: ExperimentConfig = ExperimentConfig(),
) -> WeightedDigraph:
    """Reservoir adjacency of one replicate, scaled to the target spectral radius."""
    variant = Variant(variant)
    if variant.stride is not None:
        g = _vg(train, N, variant.stride, replicate, config)
    else:
        g = erdos_renyi(N, generation_probability(variant, N, train, replicate, config), rng)
    return scale_to_spectral_radius(g, config.spectral_target)


def build_reservoir(
    variant: Variant,
    N: int,
    train: TimeSeries,
    replicate: int,
    rng: np.random.Generator,
    config: ExperimentConfig = ExperimentConfig(),
) -> tuple[WeightedDigraph, NetworkMetrics]:
    """:func:`reservoir_graph` together with its metrics.

    Topological metrics are unaffected by the scaling, so computing all six on
    the scaled graph gives the rescaled ``nu`` and the binary graph's density,
    degrees, clustering and betweenness.
    """
    scaled = reservoir_graph(variant, N, train, replicate, rng, config)
    return scaled, metrics(scaled)


def _test_inputs(train: TimeSeries, test: TimeSeries) -> np.ndarray:
    return np.vstack(
        [
            np.r_[train.q[-1], test.q[:-1]],
            np.r_[train.qdot[-1], test.qdot[:-1]],
            test.g,
        ]
    )


@dataclass(frozen=True, eq=False)
class FittedReplicate:
    model: ReservoirModel
    metrics: NetworkMetrics
    p_gen: float | None
    final_state: np.ndarray


def fit_replicate(config: ExperimentConfig, variant: Variant, N: int, replicate: int) -> FittedReplicate:
    """Build the reservoir and input layer of one replicate and train its readout."""
    variant = Variant(variant)
    seed = replicate_seed(config.seed, variant, N, replicate)
    train, _ = prepare_data(config)
    rng = np.random.default_rng(seed)
    p_gen = generation_probability(variant, N, train, replicate, config)
    graph, met = build_reservoir(variant, N, train, replicate, rng, config)
    W_in = build_input_layer(N, 3, config.input_fraction, rng)
    model = ReservoirModel(graph.weights, W_in, config.alpha, spectral_target=config.spectral_target, seed=seed)
    X, Y = io_pairs(train)
    R = evolve(model, X)
    W_out = train_readout(R, Y, config.ridge_lambda, config.washout)
    return FittedReplicate(model.with_readout(W_out), met, p_gen, R[:, -1].copy())


def run_replicate(
    config: ExperimentConfig,
    variant: Variant,
    N: int,
    replicate: int,
    *,
    zero_readout: bool = False,
) -> RunRecord:
    """Build, train and evaluate one reservoir; failures land in ``status``.

    ``zero_readout`` replaces the trained readout by zeros (diagnostic).
    The test run starts from the last training state, since the test
    segment continues the training segment in time.
    """
    variant = Variant(variant)
    seed = replicate_seed(config.seed, variant, N, replicate)
    base = dict(variant=variant, dataset=config.dataset, N=N, replicate=replicate, seed=seed, mode=config.mode)
    t0 = time.perf_counter()
    train, test = prepare_data(config)
    met = p_gen = None
    try:
        p_gen = generation_probability(variant, N, train, replicate, config)
        fit = fit_replicate(config, variant, N, replicate)
        met, model = fit.metrics, fit.model
        if zero_readout:
            model = model.with_readout(np.zeros_like(model.W_out))
        if config.mode == "closed":
            y_hat = predict_closed_loop(model, test.g, train.states()[:, -1], r0=fit.final_state)
        else:
            y_hat = predict_open_loop(model, _test_inputs(train, test), r0=fit.final_state)
        err = mae(y_hat, test.states())
        if not math.isfinite(err):
            raise NonFinite("non-finite MAE")
        status = "ok"
    except NonFinite:
        status, err = "failed:diverged", None
    except ZeroSpectralRadius:
        status, err = "failed:zero_spectral_radius", None
    except SectionTooLong:
        status, err = "failed:section_too_long", None
    except SingularSystem:
        status, err = "failed:singular_system", None
    wall = (time.perf_counter() - t0) * 1e3
    return RunRecord(**base, status=status, mae=err, metrics=met, p_gen=p_gen, wall_ms=wall)


def _tasks(config: ExperimentConfig) -> list[tuple[Variant, int, int]]:
    return [(v, N, k) for v in config.variants for N in config.sizes for k in range(config.n_replicates)]


def _limit_blas_threads():
    from threadpoolctl import threadpool_limits

    threadpool_limits(limits=1)


def _run_task(args):
    config, variant, N, k = args
    return run_replicate(config, variant, N, k)


def run_experiment(config: ExperimentConfig, parallel: int = 1, progress=None) -> tuple[list[RunRecord], list[SummaryRow]]:
    """Run the full (variant x size x replicate) sweep.

    BLAS is pinned to one thread in every worker so floating-point results are
    identical for any ``parallel``; ``0`` means one worker per CPU.
    """
    from threadpoolctl import threadpool_limits

    tasks = _tasks(config)
    workers = parallel or (__import__("os").cpu_count() or 1)
    records: list[RunRecord] = []
    if workers <= 1:
        with threadpool_limits(limits=1):
            for i, (v, N, k) in enumerate(tasks):
                records.append(run_replicate(config, v, N, k))
                if progress:
                    progress(i + 1, len(tasks), records[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_limit_blas_threads) as pool:
            for i, rec in enumerate(pool.map(_run_task, [(config, *t) for t in tasks], chunksize=1)):
                records.append(rec)
                if progress:
                    progress(i + 1, len(tasks), rec)
    records.sort(key=RunRecord.key)
    return records, summarize(records)


def summarize(records, strict: bool = False) -> list[SummaryRow]:
    """Box-plot statistics of MAE per (variant, N) over ok records.

    Quartiles use linear interpolation; the standard deviation is the
    population one. Cells without ok records get NaN statistics, or raise
    :class:`EmptyCell` when ``strict``.
    """
    cells: dict[tuple[Variant, int], list[RunRecord]] = {}
    for r in records:
        cells.setdefault((Variant(r.variant), r.N), []).append(r)
    rows = []
    for (v, N) in sorted(cells, key=lambda c: (c[0].tag, c[1])):
        recs = cells[(v, N)]
        vals = np.array([r.mae for r in recs if r.ok], dtype=float)
        n_fail = len(recs) - len(vals)
        if len(vals) == 0:
            if strict:
                raise EmptyCell(f"no successful runs for {v} N={N}")
            nan = math.nan
            rows.append(SummaryRow(v, N, 0, n_fail, nan, nan, nan, nan, nan, nan, nan))
            continue
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        rows.append(
            SummaryRow(
                v, N, len(vals), n_fail,
                float(med), float(q1), float(q3),
                float(vals.mean()), float(vals.std()), float(vals.min()), float(vals.max()),
            )
        )
    return rows


# -- CSV output ----------------------------------------------------------------

RESULTS_HEADER = (
    "variant,dataset,N,replicate,seed,mode,status,mae,nu,rho,k_in,k_out,clustering,betweenness,wall_ms"
).split(",")
SUMMARY_HEADER = (
    "variant,N,count_ok,count_failed,mae_median,mae_q1,mae_q3,mae_mean,mae_std,mae_min,mae_max"
).split(",")
METRIC_COLUMNS = {"nu": "nu", "rho": "rho", "k_in": "k_in", "k_out": "k_out", "c": "clustering", "b": "betweenness"}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_results_csv(records, fh, record_timing: bool = False) -> None:
    """One row per record. ``wall_ms`` is left empty unless ``record_timing``
    so that the file is byte-reproducible."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in records:
        m = r.metrics.as_dict() if r.metrics else dict.fromkeys(METRIC_COLUMNS)
        w.writerow(
            [_fmt(x) for x in (str(r.variant), r.dataset, r.N, r.replicate, r.seed, r.mode, r.status, r.mae)]
            + [_fmt(m[k]) for k in METRIC_COLUMNS]
            + [_fmt(r.wall_ms if record_timing else None)]
        )


def read_results_csv(fh) -> list[RunRecord]:
    rd = csv.DictReader(fh)
    if rd.fieldnames != RESULTS_HEADER:
        raise ValueError(f"unexpected results header {rd.fieldnames!r}")

    def num(s):
        return float(s) if s != "" else None

    out = []
    for row in rd:
        vals = {k: num(row[col]) for k, col in METRIC_COLUMNS.items()}
        met = NetworkMetrics(**vals) if None not in vals.values() else None
        out.append(
            RunRecord(
                variant=Variant(row["variant"]),
                dataset=int(row["dataset"]),
                N=int(row["N"]),
                replicate=int(row["replicate"]),
                seed=int(row["seed"]),
                mode=row["mode"],
                status=row["status"],
                mae=num(row["mae"]),
                metrics=met,
                wall_ms=num(row["wall_ms"]),
            )
        )
    return out


def write_summary_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in rows:
        w.writerow([str(s.variant), s.N, s.count_ok, s.count_failed] + [_fmt(getattr(s, c)) for c in SUMMARY_HEADER[4:]])


def write_pairing_csv(records, fh) -> None:
    """Generation probability of the random variants next to the paired VG density.

    Only DenseER is paired, so ER rows leave ``vg_rho`` empty.
    """
    vg = {(r.N, r.replicate): r for r in records if r.variant is Variant.DyRC_VG}
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["variant", "N", "replicate", "p_gen", "vg_rho"])
    for r in records:
        if r.p_gen is None:
            continue
        partner = vg.get((r.N, r.replicate)) if r.variant is Variant.DenseER else None
        vg_rho = partner.metrics.rho if partner is not None and partner.metrics else None
        w.writerow([str(r.variant), r.N, r.replicate, _fmt(r.p_gen), _fmt(vg_rho)])


def write_plotdata(records, outdir: Path) -> dict[str, Path]:
    """Long-format tables: MAE per size, and MAE against each network metric."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    p_size = outdir / "mae_by_size.csv"
    with atomic_writer(p_size) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "N", "replicate", "mae"])
        for r in records:
            if r.ok:
                w.writerow([str(r.variant), r.N, r.replicate, _fmt(r.mae)])
    p_met = outdir / "mae_by_metric.csv"
    with atomic_writer(p_met) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "N", "replicate", "metric", "value", "mae"])
        for r in records:
            if r.ok and r.metrics is not None:
                for k, col in METRIC_COLUMNS.items():
                    w.writerow([str(r.variant), r.N, r.replicate, col, _fmt(getattr(r.metrics, k)), _fmt(r.mae)])
    return {"mae_by_size": p_size, "mae_by_metric": p_met}


def config_from_mapping(data: dict) -> ExperimentConfig:
    """Build a config from a flat TOML/JSON mapping; ``sim`` and ``duffing`` may be sub-tables."""
    data = dict(data)
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "sim" in data and isinstance(data["sim"], dict):
        data["sim"] = SimConfig(**data["sim"])
    if "duffing" in data and isinstance(data["duffing"], dict):
        base = DUFFING_SETS.get(int(data.get("dataset", 1)), DUFFING_SETS[1])
        data["duffing"] = replace(base, **{k: float(v) for k, v in data["duffing"].items()})
    for key in ("sizes", "variants"):
        if key in data:
            data[key] = tuple(data[key])
    return ExperimentConfig(**data)
