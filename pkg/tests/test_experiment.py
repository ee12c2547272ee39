import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyrc.dynamics import SimConfig, TimeSeries
from dyrc.errors import EmptyCell
from dyrc.experiment import (
    ExperimentConfig,
    RunRecord,
    Variant,
    build_reservoir,
    config_from_mapping,
    fit_replicate,
    generation_probability,
    prepare_data,
    read_results_csv,
    replicate_seed,
    run_experiment,
    run_replicate,
    summarize,
    write_pairing_csv,
    write_plotdata,
    write_results_csv,
    write_summary_csv,
)
from dyrc.graphs import density, sample_sections, section_slice, spectral_radius, visibility_graph

SMALL_SIM = SimConfig(n_samples=3000, n_transient=500)


def small_config(**kw):
    base = dict(sizes=(20, 30), n_replicates=3, sim=SMALL_SIM, washout=50)
    base.update(kw)
    return ExperimentConfig(**base)


def strip_time(rec):
    return rec.__class__(**{**rec.__dict__, "wall_ms": None})


class TestSeeds:
    def test_deterministic(self):
        assert replicate_seed(0, Variant.ER, 50, 3) == replicate_seed(0, "ER", 50, 3)

    def test_distinct(self):
        seeds = {replicate_seed(m, v, N, k) for m in (0, 1) for v in Variant for N in (50, 100) for k in range(20)}
        assert len(seeds) == 2 * 4 * 2 * 20
        assert all(0 <= s < 2**63 for s in seeds)


class TestBuildReservoir:
    def test_er_spectral_radius(self, set1_split):
        train, _ = set1_split
        g, met = build_reservoir(Variant.ER, 100, train, 0, np.random.default_rng(0))
        assert abs(spectral_radius(g) - 0.9) <= 1e-9
        assert met.nu == pytest.approx(0.9, abs=1e-9)
        assert g.directed

    def test_ramp_is_path(self):
        t = np.arange(500) * 0.01
        ramp = TimeSeries(t, 2 * t + 1, np.full(500, 2.0), np.zeros(500))
        cfg = ExperimentConfig(n_replicates=4)
        for N in (10, 50, 100):
            g, met = build_reservoir(Variant.DyRC_VG, N, ramp, 2, np.random.default_rng(0), cfg)
            assert g.n_edges == N - 1
            assert met.rho == pytest.approx(2 / N, rel=1e-12)
            assert met.nu == pytest.approx(0.9, abs=1e-9)

    def test_vg_matches_section(self, set1_split):
        train, _ = set1_split
        cfg = ExperimentConfig(n_replicates=5)
        sec = sample_sections(len(train), 60, 16, 5)[3]
        sl = section_slice(sec)
        expected = visibility_graph(train.q[sl], train.t[sl])
        g, _ = build_reservoir(Variant.DyRC_VG_16, 60, train, 3, np.random.default_rng(0), cfg)
        assert np.array_equal(g.support, expected.support)

    def test_dense_er_pairing(self, set1_split):
        train, _ = set1_split
        cfg = ExperimentConfig(n_replicates=4)
        for k in range(4):
            vg, _ = build_reservoir(Variant.DyRC_VG, 80, train, k, np.random.default_rng(0), cfg)
            p = generation_probability(Variant.DenseER, 80, train, k, cfg)
            assert p == density(vg)
        assert generation_probability(Variant.ER, 80, train, 0, cfg) == 0.1
        assert generation_probability(Variant.DyRC_VG, 80, train, 0, cfg) is None


class TestRunReplicate:
    def test_deterministic(self):
        cfg = small_config()
        for v in Variant:
            a = run_replicate(cfg, v, 30, 1)
            b = run_replicate(cfg, v, 30, 1)
            assert a.status == "ok"
            assert strip_time(a) == strip_time(b)

    @pytest.mark.parametrize("mode", ["open", "closed"])
    def test_zero_readout_baseline(self, mode):
        cfg = small_config(mode=mode)
        _, test = prepare_data(cfg)
        rec = run_replicate(cfg, Variant.ER, 30, 0, zero_readout=True)
        assert rec.mae == pytest.approx(float(np.mean(np.abs(test.states()))), rel=1e-14)

    def test_open_beats_baseline(self):
        cfg = small_config(mode="open")
        _, test = prepare_data(cfg)
        baseline = float(np.mean(np.abs(test.states())))
        for v in Variant:
            assert run_replicate(cfg, v, 30, 0).mae < baseline

    def test_section_too_long_recorded(self):
        cfg = small_config(sizes=(200,))
        rec = run_replicate(cfg, Variant.DyRC_VG_16, 200, 0)
        assert rec.status == "failed:section_too_long"
        assert rec.mae is None and not rec.ok

    def test_warm_start(self):
        cfg = small_config()
        fit = fit_replicate(cfg, Variant.ER, 30, 0)
        assert fit.final_state.shape == (30,)
        assert np.all(np.abs(fit.final_state) < 1)
        assert fit.model.trained and fit.model.W_out.shape == (2, 30)


class TestSweep:
    def test_complete_and_ordered(self):
        cfg = small_config()
        records, summary = run_experiment(cfg)
        assert len(records) == 4 * 2 * 3
        assert [r.key() for r in records] == sorted(r.key() for r in records)
        assert {(r.variant, r.N, r.replicate) for r in records} == {
            (v, N, k) for v in Variant for N in cfg.sizes for k in range(3)
        }
        assert len(summary) == 8
        assert all(s.count_ok + s.count_failed == 3 for s in summary)

    def test_seed_isolation(self):
        few = run_experiment(small_config(n_replicates=2, variants=("ER", "DyRC_VG"), n_sections=5))[0]
        many = run_experiment(small_config(n_replicates=5, sizes=(30, 20), variants=("DyRC_VG", "ER")))[0]
        lookup = {r.key(): strip_time(r) for r in many}
        for r in few:
            assert strip_time(r) == lookup[r.key()]

    def test_parallel_matches_serial(self):
        cfg = small_config(sizes=(20,), n_replicates=2)
        a = [strip_time(r) for r in run_experiment(cfg, parallel=1)[0]]
        b = [strip_time(r) for r in run_experiment(cfg, parallel=2)[0]]
        assert a == b

    def test_master_seed_changes_er(self):
        a = run_replicate(small_config(seed=0), Variant.ER, 20, 0)
        b = run_replicate(small_config(seed=1), Variant.ER, 20, 0)
        assert a.seed != b.seed and a.mae != b.mae


def fake(v, N, k, mae, status="ok"):
    return RunRecord(Variant(v), 1, N, k, 0, "closed", status, mae if status == "ok" else None)


class TestSummarize:
    def test_odd_median(self):
        (row,) = summarize([fake("ER", 50, k, x) for k, x in enumerate([3.0, 1.0, 2.0])])
        assert row.mae_median == 2.0 and row.mae_min == 1.0 and row.mae_max == 3.0

    def test_even_median(self):
        (row,) = summarize([fake("ER", 50, k, x) for k, x in enumerate([4.0, 1.0, 3.0, 2.0])])
        assert row.mae_median == 2.5
        assert row.mae_q1 == 1.75 and row.mae_q3 == 3.25
        assert row.mae_std == pytest.approx(math.sqrt(1.25))

    def test_failures_counted(self):
        recs = [fake("ER", 50, 0, 1.0), fake("ER", 50, 1, None, "failed:diverged")]
        (row,) = summarize(recs)
        assert (row.count_ok, row.count_failed, row.mae_median) == (1, 1, 1.0)

    def test_empty_cell(self):
        recs = [fake("DenseER", 50, 0, None, "failed:diverged")]
        (row,) = summarize(recs)
        assert row.count_ok == 0 and math.isnan(row.mae_median)
        with pytest.raises(EmptyCell):
            summarize(recs, strict=True)

    def test_order(self):
        recs = [fake(v, N, 0, 1.0) for v in ("DyRC_VG_16", "ER", "DenseER") for N in (100, 50)]
        assert [(str(s.variant), s.N) for s in summarize(recs)] == [
            ("ER", 50), ("ER", 100), ("DenseER", 50), ("DenseER", 100), ("DyRC_VG_16", 50), ("DyRC_VG_16", 100)
        ]

    @given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_against_sorting_oracle(self, values):
        (row,) = summarize([fake("ER", 10, k, x) for k, x in enumerate(values)])
        s = sorted(values)

        def quantile(q):
            pos = q * (len(s) - 1)
            lo = math.floor(pos)
            hi = min(lo + 1, len(s) - 1)
            return s[lo] + (s[hi] - s[lo]) * (pos - lo)

        for q, got in ((0.25, row.mae_q1), (0.5, row.mae_median), (0.75, row.mae_q3)):
            assert got == pytest.approx(quantile(q), rel=1e-12, abs=1e-12)
        assert row.mae_min == s[0] and row.mae_max == s[-1]
        assert row.iqr >= 0


@pytest.fixture(scope="module")
def records():
    return run_experiment(small_config(sizes=(20,), n_replicates=2))[0]


class TestCsv:
    def test_results_roundtrip(self, records):
        buf = io.StringIO()
        write_results_csv(records, buf)
        text = buf.getvalue()
        assert text.splitlines()[0] == (
            "variant,dataset,N,replicate,seed,mode,status,mae,nu,rho,k_in,k_out,clustering,betweenness,wall_ms"
        )
        back = read_results_csv(io.StringIO(text))
        assert back == [strip_time(r.__class__(**{**r.__dict__, "p_gen": None})) for r in records]
        assert all(line.endswith(",") for line in text.splitlines()[1:])

    def test_timing_column(self, records):
        buf = io.StringIO()
        write_results_csv(records, buf, record_timing=True)
        assert all(float(line.rsplit(",", 1)[1]) >= 0 for line in buf.getvalue().splitlines()[1:])

    def test_summary(self, records):
        buf = io.StringIO()
        write_summary_csv(summarize(records), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "variant,N,count_ok,count_failed,mae_median,mae_q1,mae_q3,mae_mean,mae_std,mae_min,mae_max"
        assert len(lines) == 5

    def test_pairing(self, records):
        buf = io.StringIO()
        write_pairing_csv(records, buf)
        rows = [line.split(",") for line in buf.getvalue().splitlines()[1:]]
        assert {r[0] for r in rows} == {"ER", "DenseER"}
        for variant, _, _, p_gen, vg_rho in rows:
            if variant == "DenseER":
                assert float(p_gen) == float(vg_rho)
            else:
                assert p_gen == "0.10000000000000001" and vg_rho == ""

    def test_plotdata(self, records, tmp_path):
        paths = write_plotdata(records, tmp_path)
        size_rows = paths["mae_by_size"].read_text().splitlines()
        metric_rows = paths["mae_by_metric"].read_text().splitlines()
        assert len(size_rows) == 1 + len(records)
        assert len(metric_rows) == 1 + 6 * len(records)


class TestConfig:
    def test_mapping(self):
        cfg = config_from_mapping({"sizes": [50], "n_replicates": 2, "sim": {"n_samples": 5000}, "duffing": {"F": 0.0}})
        assert cfg.sizes == (50,) and cfg.sim.n_samples == 5000 and cfg.params.F == 0.0

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            config_from_mapping({"sizez": [50]})

    @pytest.mark.parametrize(
        "kw", [{"sizes": ()}, {"n_replicates": 0}, {"mode": "half"}, {"dataset": 9}, {"sections": "all"}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.sizes == (50, 100, 200, 300, 400, 500)
        assert cfg.n_replicates == 100 and cfg.mode == "closed"
        assert cfg.sections_count == 100
