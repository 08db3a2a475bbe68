import math

import numpy as np
import pytest
from scipy import stats

from rbstats.estimate import TwoPointSummary, ratio_estimate, summary_from_dataset
from rbstats.model import DecayParams
from rbstats.sampler import AnalyticSource, DesignRow, DriftSpec, generate
from rbstats.validate import consistency_test, predict_at

P = DecayParams(0.5, 0.5, 0.99)
FIT = (4, 50)
HOLD = (10, 25, 100)
K, N = 100, 20


def _design():
    return [DesignRow(m, 0, K, N) for m in FIT + HOLD]


def _fit(ds):
    return ratio_estimate(summary_from_dataset(ds, *FIT, B=P.B), bias_correct="off")


def test_prediction_interpolates_fit_lengths():
    ds = generate(_design(), AnalyticSource(P), seed=0)
    est = _fit(ds)
    for m, q in zip(FIT, (est.summary.q1, est.summary.q2)):
        assert predict_at(est, m).mean == pytest.approx(q, abs=1e-12)


def test_unit_p_prediction_is_flat():
    est = ratio_estimate(TwoPointSummary(4, 50, 0.8, 0.8, 1e-5, 1e-5, 0.5))
    means = [predict_at(est, m).mean for m in (1, 10, 100)]
    assert means == pytest.approx([0.8] * 3)


def test_full_covariance_matches_spread_of_predictions():
    # A_hat and p_hat are anti-correlated, so dropping the amplitude term can
    # over- or under-state the spread; the full covariance should track it
    means, full, p_only = [], [], []
    for seed in range(1000):
        est = _fit(generate(_design()[:2], AnalyticSource(P), seed=seed))
        means.append(predict_at(est, 100).mean)
        full.append(predict_at(est, 100).variance)
        p_only.append(predict_at(est, 100, amplitude_uncertainty=False).variance)
    emp = np.var(means)
    assert np.mean(full) == pytest.approx(emp, rel=0.15)
    assert abs(np.mean(full) - emp) < abs(np.mean(p_only) - emp)


def test_prediction_covers_truth():
    rng_seeds = range(400)
    inside = 0
    for seed in rng_seeds:
        est = _fit(generate(_design()[:2], AnalyticSource(P), seed=seed))
        pred = predict_at(est, 25)
        truth = P.A * P.p**25 + P.B
        inside += abs(pred.mean - truth) <= 3 * math.sqrt(pred.variance)
    assert inside / len(rng_seeds) >= 0.95


def test_holdout_errors():
    ds = generate(_design(), AnalyticSource(P), seed=2)
    est = _fit(ds)
    with pytest.raises(ValueError):
        consistency_test(ds, est, [])
    with pytest.raises(ValueError):
        consistency_test(ds, est, [4, 10])
    with pytest.raises(ValueError):
        consistency_test(ds, est, [10, 10])
    with pytest.raises(ValueError):
        consistency_test(ds, est, [10], alpha=1.5)
    with pytest.raises(KeyError):
        consistency_test(ds, est, [77])


def test_null_calibration_and_uniform_p_values():
    reps = 400
    rejects = 0
    per_m = []
    for seed in range(reps):
        ds = generate(_design(), AnalyticSource(P), seed=seed)
        rep = consistency_test(ds, _fit(ds), HOLD)
        rejects += rep.reject
        per_m.extend(t.p_value for t in rep.per_m)
        assert 0 <= rep.combined_p <= 1
        assert rep.reject == (rep.combined_p < rep.alpha)
    rate = rejects / reps
    assert abs(rate - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / reps)
    assert stats.kstest(per_m, "uniform").pvalue > 0.01


def test_drift_power_monotone():
    reps = 100
    n_seq = K * len(_design())
    power = []
    for p_end in (0.985, 0.97, 0.95):
        drift = DriftSpec.linear(0.99, p_end, n_seq)
        rejects = 0
        for seed in range(reps):
            ds = generate(_design(), AnalyticSource(P), drift=drift, seed=seed)
            rejects += consistency_test(ds, _fit(ds), HOLD).reject
        power.append(rejects / reps)
    assert power[-1] >= 0.8
    assert power[0] <= power[1] + 0.05 and power[1] <= power[2] + 0.05


def test_difference_mode():
    Q = DecayParams(0.25, 0.5, 0.99)
    design = [DesignRow(m, b, K, N) for m in FIT + HOLD for b in (0, 1)]
    ds = generate(design, AnalyticSource(Q), seed=3)
    est = ratio_estimate(summary_from_dataset(ds, *FIT, mode="difference"))
    rep = consistency_test(ds, est, HOLD, mode="difference")
    assert rep.meta["mode"] == "difference"
    assert all(abs(t.z) < 4 for t in rep.per_m)
    with pytest.raises(ValueError):
        consistency_test(ds, est, HOLD, mode="bayes")


def test_report_serialization_and_table():
    ds = generate(_design(), AnalyticSource(P), seed=4)
    rep = consistency_test(ds, _fit(ds), HOLD)
    d = rep.to_dict()
    assert d["schema"] == "rb-validation/1"
    assert [row["m"] for row in d["per_m"]] == list(HOLD)
    assert "Fisher" in d["meta"]["method"]
    table = rep.format_table()
    assert len(table.splitlines()) == len(HOLD) + 2
    assert np.isfinite([t.z for t in rep.per_m]).all()
