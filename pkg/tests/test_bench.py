import numpy as np
import pytest
from scipy import stats

from dynshadow.bench import (
    CALIBRATED_COST_MODEL,
    BenchError,
    CompileCostModel,
    bench_dynamic,
    bench_static,
    run_bench,
    throughput_ratio,
)
from dynshadow.circuit import parse_gatespec

MODEL = CompileCostModel(5.4, 4e-4)


def test_cost_model_reproduces_calibration_timings():
    assert CALIBRATED_COST_MODEL.modeled_time(1, 100_000) == pytest.approx(40.0, rel=1e-12)
    assert CALIBRATED_COST_MODEL.modeled_time(100, 100) == pytest.approx(540.0, rel=1e-12)
    assert CALIBRATED_COST_MODEL.compile_cost == pytest.approx(5.4, rel=1e-3)


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        CompileCostModel(-1.0, 0.0)


@pytest.mark.parametrize("shots", [1, 10, 1000])
def test_compile_counts(shots):
    dyn, static = run_bench(1, shots, 3, MODEL)
    assert dyn.circuits_compiled == 1 and dyn.total_shots == shots
    assert static.circuits_compiled == shots and static.total_shots == shots
    assert dyn.modeled_time == MODEL.modeled_time(1, shots)
    assert static.modeled_time == MODEL.modeled_time(shots, shots)
    c, s = MODEL.compile_cost, MODEL.per_shot_cost
    assert dyn.speedup_vs_static == pytest.approx(shots * (c + s) / (c + shots * s), rel=1e-12)


def test_no_compile_cost_no_advantage():
    dyn, static = run_bench(2, 200, 1, CompileCostModel(0.0, 1e-3))
    assert dyn.speedup_vs_static == pytest.approx(1.0, rel=1e-12)


def test_ratio_uses_per_shot_throughput():
    dyn = bench_dynamic(1, 5000, 1, MODEL)
    static = bench_static(1, 50, 1, MODEL)
    expected = (5000 / dyn.modeled_time) / (50 / static.modeled_time)
    assert throughput_ratio(dyn, static) == pytest.approx(expected, rel=1e-12)


def test_zero_shots():
    with pytest.raises(BenchError):
        bench_dynamic(1, 0, 1, MODEL)
    with pytest.raises(BenchError):
        bench_static(1, 0, 1, MODEL)


def test_summary_fields():
    dyn, _ = run_bench(1, 10, 1, MODEL)
    assert set(dyn.summary()) == {"mode", "circuits_compiled", "total_shots", "measured_wall_time",
                                  "modeled_time", "speedup_vs_static"}


def test_reproducible():
    a = bench_static(2, 300, 8, MODEL, parse_gatespec("h0"))
    b = bench_static(2, 300, 8, MODEL, parse_gatespec("h0"))
    assert np.array_equal(a.snapshots.bases, b.snapshots.bases)
    assert np.array_equal(a.snapshots.outcomes, b.snapshots.outcomes)


@pytest.mark.slow
@pytest.mark.parametrize("n, prep", [(1, "h0"), (2, "h0,cx0-1"), (3, "x0,h1,s1,h2")])
def test_modes_statistically_equivalent(n, prep):
    shots = 100_000
    gates = parse_gatespec(prep)
    dyn = bench_dynamic(n, shots, 5, MODEL, gates).snapshots
    static = bench_static(n, shots, 6, MODEL, gates).snapshots
    for q in range(n):
        basis_table = [[np.sum(b.bases[:, q] == code) for code in (1, 2, 3)] for b in (dyn, static)]
        assert stats.chi2_contingency(np.array(basis_table)).pvalue > 1e-3
        for code in (1, 2, 3):
            table = [[np.sum((b.bases[:, q] == code) & (b.outcomes[:, q] == v)) for v in (0, 1)]
                     for b in (dyn, static)]
            table = np.array(table)
            if (table.sum(axis=0) > 0).all():
                assert stats.chi2_contingency(table).pvalue > 1e-3
            else:
                assert table[0].argmax() == table[1].argmax()
