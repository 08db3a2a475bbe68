import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rbstats.cliffsim import Depolarizing
from rbstats.model import DecayParams
from rbstats.sampler import (
    AnalyticSource,
    DesignRow,
    DriftSpec,
    GateLevelSource,
    Point,
    RBDataset,
    UnitarityDataset,
    difference_summary,
    export_summary_csv,
    generate,
    generate_unitarity,
    summarize,
    unitarity_summaries,
)

P = DecayParams(0.4, 0.5, 0.98)


def test_design_row_parse():
    assert DesignRow.parse("10:1:50:20") == DesignRow(10, 1, 50, 20)
    for bad in ("10:2:5:5", "0:0:5:5", "10:0:0:5", "a:b", "1:0:1"):
        with pytest.raises(ValueError):
            DesignRow.parse(bad)


def test_point_validation():
    with pytest.raises(ValueError):
        Point(1, 0, [5], [6])
    with pytest.raises(ValueError):
        Point(1, 0, [], [])
    with pytest.raises(ValueError):
        Point(1, 0, [0], [0])


def test_generation_is_deterministic():
    design = [DesignRow(4, 0, 30, 10), DesignRow(20, 0, 30, 10)]
    a = generate(design, AnalyticSource(P), seed=7)
    b = generate(design, AnalyticSource(P), seed=7)
    c = generate(design, AnalyticSource(P), seed=8)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_binomial_counts_chi_square():
    m, n, k = 10, 20, 20000
    ds = generate([DesignRow(m, 0, k, n)], AnalyticSource(P), seed=1)
    counts = np.bincount(ds.group(m).successes, minlength=n + 1)
    expected = k * stats.binom.pmf(np.arange(n + 1), n, P.A * P.p**m + P.B)
    # pool sparse tails so every cell has an expected count of at least five
    keep = expected >= 5
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    _, pval = stats.chisquare(obs, exp * obs.sum() / exp.sum())
    assert pval > 1e-3


def test_flipped_group_probability():
    ds = generate([DesignRow(5, 1, 20000, 1)], AnalyticSource(P), seed=2)
    q1 = P.B - P.A * P.p**5
    se = math.sqrt(q1 * (1 - q1) / 20000)
    assert abs(ds.group(5, 1).fractions.mean() - q1) < 4 * se


def test_flipped_group_rejects_negative_probability():
    src = AnalyticSource(DecayParams(0.8, 0.2, 0.99))
    with pytest.raises(ValueError):
        generate([DesignRow(2, 1, 5, 5)], src)


def test_spread_inflates_variance():
    design = [DesignRow(10, 0, 4000, 20)]
    plain = summarize(generate(design, AnalyticSource(P), seed=3), 10)
    spread = summarize(generate(design, AnalyticSource(P, spread=20.0), seed=3), 10)
    q = P.A * P.p**10 + P.B
    assert plain.variance == pytest.approx(q * (1 - q) / 20, rel=0.1)
    assert spread.variance > 1.5 * plain.variance
    assert spread.mean == pytest.approx(q, abs=0.01)


def test_linear_drift_lowers_late_groups():
    design = [DesignRow(50, 0, 500, 100), DesignRow(50, 0, 500, 100)]
    drift = DriftSpec.linear(0.99, 0.95, 1000)
    ds = generate(design, AnalyticSource(DecayParams(0.5, 0.5, 0.99)), drift=drift, seed=4)
    early, late = ds.points[0].fractions.mean(), ds.points[1].fractions.mean()
    assert late < early - 0.02
    assert "drift" in ds.meta


def test_drift_requires_analytic_source():
    with pytest.raises(ValueError):
        generate([DesignRow(2, 0, 2, 2)], GateLevelSource(Depolarizing(0.01)), drift=DriftSpec({0: 0.9}))
    with pytest.raises(ValueError):
        DriftSpec({0: 1.5})


def test_gate_level_mean_matches_depolarizing_model():
    p_dep, m, k = 0.97, 8, 3000
    ds = generate([DesignRow(m, 0, k, 1)], GateLevelSource(Depolarizing(1 - p_dep)), seed=5)
    q = 0.5 * p_dep ** (m + 1) + 0.5
    assert abs(ds.group(m).fractions.mean() - q) < 4 * math.sqrt(q * (1 - q) / k)
    assert ds.meta["backend"] == "gate-level"


def test_summary_uses_unbiased_variance():
    ds = RBDataset({}, [Point(3, 0, [10, 10, 10, 10], [2, 5, 7, 9])])
    s = summarize(ds, 3)
    f = [0.2, 0.5, 0.7, 0.9]
    assert s.mean == pytest.approx(statistics.mean(f))
    assert s.variance == pytest.approx(statistics.variance(f))
    assert s.variance_of_mean == pytest.approx(statistics.variance(f) / 4)
    assert s.flags == ()


def test_summary_flags():
    single = RBDataset({}, [Point(3, 0, [10], [4])])
    s = summarize(single, 3)
    assert s.variance == 0.0 and "insufficient_replicates" in s.flags
    mixed = RBDataset({}, [Point(3, 0, [1, 5, 1], [1, 3, 0])])
    assert "mixed_shots" in summarize(mixed, 3).flags
    assert mixed.mixed_shots and not mixed.is_arb
    with pytest.raises(KeyError):
        summarize(single, 4)


def test_difference_summary():
    ds = RBDataset({}, [Point(2, 0, [4, 4], [4, 3]), Point(2, 1, [4, 4, 4], [0, 1, 2])])
    d = difference_summary(ds, 2)
    assert d.mean == pytest.approx(0.875 - 0.25)
    v0 = statistics.variance([1.0, 0.75]) / 2
    v1 = statistics.variance([0.0, 0.25, 0.5]) / 3
    assert d.variance == pytest.approx(v0 + v1)
    assert (d.k0, d.k1) == (2, 3)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(1, 200), st.integers(0, 1), st.lists(st.integers(1, 50), min_size=1, max_size=5)),
        min_size=1,
        max_size=4,
        unique_by=lambda t: (t[0], t[1]),
    ),
    st.data(),
)
def test_dataset_round_trip(groups, data):
    points = []
    for m, b, shots in groups:
        succ = [data.draw(st.integers(0, n)) for n in shots]
        points.append(Point(m, b, shots, succ))
    ds = RBDataset({"seed": 1}, points)
    again = RBDataset.from_dict(ds.to_dict())
    assert again.to_dict() == ds.to_dict()


def test_export_summary_csv(tmp_path):
    ds = generate([DesignRow(20, 0, 10, 5), DesignRow(4, 1, 10, 5)], AnalyticSource(P), seed=6)
    path = tmp_path / "s.csv"
    export_summary_csv(ds, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "m,b,k,shots,mean,variance"
    assert rows[1].startswith("4,1,10,50,")
    m, b, k, n, mean, var = rows[2].split(",")
    assert float(mean) == summarize(ds, 20).mean


def test_unitarity_decay_tracks_squared_depolarizing_parameter():
    p_dep = 0.95
    src = GateLevelSource(Depolarizing(1 - p_dep))
    uds = generate_unitarity([2, 12], 2000, src, seed=3)
    s1, s2 = (unitarity_summaries(uds, m) for m in (2, 12))
    assert s1.a == pytest.approx(1.0) and s2.a == pytest.approx(1.0)
    u_hat = (s2.b / s1.b) ** (1 / 10)
    assert u_hat == pytest.approx(p_dep**2, abs=2e-3)


def test_unitarity_summary_formula_and_options():
    uds = UnitarityDataset({}, [])
    from rbstats.sampler import UnitarityPoint

    vals = np.array([[0.5, -0.2, 0.1], [0.3, 0.4, -0.6]])
    uds.points.append(UnitarityPoint(3, vals, [1.0, 0.9]))
    s = unitarity_summaries(uds, 3)
    a_p = vals.mean(axis=0)
    assert s.b == pytest.approx(np.sum(vals**2) / 2 - np.sum(a_p**2))
    assert s.a == pytest.approx(0.95)
    assert unitarity_summaries(uds, 3, normalization="pauli_average").b == pytest.approx(s.b / 3)
    assert unitarity_summaries(uds, 3, leakage="pauli_mean").a == pytest.approx(a_p.mean())
    with pytest.raises(ValueError):
        unitarity_summaries(uds, 3, normalization="other")
    uds.points.append(UnitarityPoint(4, vals[:1]))
    with pytest.raises(ValueError):
        unitarity_summaries(uds, 4)
    again = UnitarityDataset.from_dict(uds.to_dict())
    np.testing.assert_allclose(again.group(3).values, vals)


def test_unitarity_shot_noise_stays_in_range():
    uds = generate_unitarity([3], 20, GateLevelSource(Depolarizing(0.05)), seed=1, shots=7)
    v = uds.group(3).values
    assert np.all(np.abs(v) <= 1)
    # +-1 averages over an odd number of shots are never zero
    assert np.all(v != 0)
