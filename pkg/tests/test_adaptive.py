import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbstats.adaptive import (
    AdaptiveConfig,
    AdaptiveError,
    AnalyticOracle,
    ExactOracle,
    GateLevelOracle,
    ReplayOracle,
    bracket_bounds,
    check_pm_window,
    required_shots,
    run_adaptive,
)
from rbstats.cliffsim import Depolarizing
from rbstats.model import DecayParams
from rbstats.sampler import AnalyticSource, DesignRow, generate


def test_unit_p_never_exits():
    cfg = AdaptiveConfig(0.05, 0.1, t=10, max_doublings=12)
    with pytest.raises(AdaptiveError):
        run_adaptive(ExactOracle(DecayParams(0.8, 0.0, 1.0)), cfg)


def test_no_signal_at_first_length():
    oracle = lambda m, t: 0.0  # noqa: E731
    with pytest.raises(AdaptiveError):
        run_adaptive(oracle, AdaptiveConfig(0.05, 0.1, t=10))


@pytest.mark.parametrize("p", [0.9, 0.99, 0.999])
def test_exact_oracle_exit_and_recovery(p):
    res = run_adaptive(ExactOracle(DecayParams(0.8, 0.0, p)), AdaptiveConfig(0.05, 0.1, t=1))
    expected_ell = next(l for l in range(1, 40) if p ** (2**l + 1) / p <= 1 / 3)
    assert res.ell == expected_ell
    assert res.m == 2**res.ell
    assert res.p_hat == pytest.approx(p, rel=1e-12)
    assert check_pm_window(p, res.m, 0.0)
    lo, hi = bracket_bounds(p, res.m, 0.05)
    assert lo <= res.p_hat <= hi


def test_trace_consistency():
    res = run_adaptive(ExactOracle(DecayParams(0.8, 0.0, 0.97)), AdaptiveConfig(0.05, 0.1, t=7))
    assert len(res.trace) == res.ell
    assert [e.m for e in res.trace] == [1] + [2**i + 1 for i in range(2, res.ell + 1)]
    assert res.total_shots == 7 * res.ell
    assert res.r_hat == 1.0 - res.p_hat
    d = res.to_dict()
    assert d["schema"] == "rb-adaptive/1" and len(d["trace"]) == res.ell


def test_doubling_count_grows_logarithmically():
    ells = []
    rs = [1e-1, 1e-2, 1e-3, 1e-4]
    for r in rs:
        res = run_adaptive(ExactOracle(DecayParams(0.8, 0.0, 1 - r)), AdaptiveConfig(0.05, 0.1, t=1))
        ells.append(res.ell)
        assert abs(res.ell - math.log2(math.log(3) / r)) <= 1
    slope = np.polyfit(np.log10(1 / np.array(rs)), ells, 1)[0]
    assert slope == pytest.approx(math.log2(10), abs=0.5)


def test_pm_window_boundaries():
    assert check_pm_window(1 / 3 ** (1 / 5), 5, 0.0)
    assert not check_pm_window(1 / 9 ** (1 / 5), 5, 0.0)
    assert not check_pm_window(0.5, 1, 0.0)


def test_required_shots_scaling():
    t1 = required_shots(0.1, 0.1, 40)
    t2 = required_shots(0.05, 0.1, 40)
    assert t2 / t1 == pytest.approx(4.0, rel=1e-3)
    t3 = required_shots(0.1, 0.1, 80)
    assert t3 / t1 == pytest.approx(math.log(1600) / math.log(800), rel=1e-3)
    assert t1 == math.ceil(2 / 0.25**2 / 0.01 * math.log(800))
    with pytest.raises(ValueError):
        required_shots(0.0, 0.1, 40)


def test_required_shots_band_failure_rate():
    eps, delta, r = 0.1, 0.1, 1e-2
    P = DecayParams(0.8, 0.0, 1 - r)
    # eps = 0.1 is above the algorithm's cap, so the shot rule is exercised on its own
    band = 0.25 * eps
    cfg = AdaptiveConfig(0.05, delta, t=required_shots(eps, delta, 40))
    rng = np.random.default_rng(0)
    fails = 0
    runs = 200
    for _ in range(runs):
        res = run_adaptive(AnalyticOracle(P, rng), cfg)
        errs = [abs(e.q_hat - P.A * P.p**e.m) for e in res.trace]
        fails += max(errs) > band
    assert fails / runs <= delta


def test_relative_error_is_scale_free():
    eps = 0.05
    cfg = AdaptiveConfig(eps, 0.1)
    rng = np.random.default_rng(1)
    medians = []
    for r in (1e-2, 1e-3):
        P = DecayParams(0.8, 0.0, 1 - r)
        rel = [abs(run_adaptive(AnalyticOracle(P, rng), cfg).r_hat - r) / r for _ in range(60)]
        medians.append(np.median(rel))
    assert max(medians) / min(medians) < 2


@given(st.floats(1e-4, 0.2), st.floats(0.001, 0.06))
def test_bracket_contains_truth(r, eps):
    p = 1 - r
    m = 2 ** max(1, math.ceil(math.log2(math.log(3) / r)))
    lo, hi = bracket_bounds(p, m, eps)
    assert lo <= p <= hi


def test_config_validation():
    for kwargs in (
        dict(epsilon=0.0625, delta=0.1),
        dict(epsilon=0.05, delta=1.0),
        dict(epsilon=0.05, delta=0.1, t=0),
        dict(epsilon=0.05, delta=0.1, max_doublings=1),
        dict(epsilon=0.05, delta=0.1, ap_lower=0.0),
    ):
        with pytest.raises(ValueError):
            AdaptiveConfig(**kwargs)
    assert AdaptiveConfig(0.05, 0.1, t=5).shots() == 5


def test_gate_level_oracle():
    p_dep = 0.95
    rng = np.random.default_rng(2)
    res = run_adaptive(GateLevelOracle(Depolarizing(1 - p_dep), rng), AdaptiveConfig(0.05, 0.1, t=3000))
    assert res.p_hat == pytest.approx(p_dep, abs=0.01)


def test_gate_level_oracle_mean():
    p_dep = 0.9
    oracle = GateLevelOracle(Depolarizing(1 - p_dep), np.random.default_rng(3), batch=500)
    t = 4000
    mean = oracle(3, t) / t
    # difference mean is p^(m+1) on a single qubit; shots are +-1
    assert abs(mean - p_dep**4) < 4 / math.sqrt(t)


def test_replay_oracle():
    P = DecayParams(0.4, 0.5, 0.95)
    lengths = [1] + [2**i + 1 for i in range(2, 8)]
    design = [DesignRow(m, b, 4000, 1) for m in lengths for b in (0, 1)]
    ds = generate(design, AnalyticSource(P), seed=4)
    res = run_adaptive(ReplayOracle(ds, "difference"), AdaptiveConfig(0.05, 0.1, t=3000))
    assert res.p_hat == pytest.approx(0.95, abs=0.01)
    res = run_adaptive(ReplayOracle(ds, "known-B", B=0.5), AdaptiveConfig(0.05, 0.1, t=3000))
    assert res.p_hat == pytest.approx(0.95, abs=0.01)


def test_replay_oracle_errors():
    P = DecayParams(0.4, 0.5, 0.95)
    ds = generate([DesignRow(1, 0, 10, 1), DesignRow(1, 1, 10, 1)], AnalyticSource(P), seed=0)
    oracle = ReplayOracle(ds, "known-B", B=0.5)
    oracle(1, 6)
    with pytest.raises(AdaptiveError):
        oracle(1, 6)
    with pytest.raises(AdaptiveError):
        oracle(5, 1)
    with pytest.raises(AdaptiveError):
        ReplayOracle(ds, "difference")(1, 1)
    multi = generate([DesignRow(1, 0, 10, 3)], AnalyticSource(P), seed=0)
    with pytest.raises(AdaptiveError):
        ReplayOracle(multi, "known-B", B=0.5)(1, 2)
    with pytest.raises(ValueError):
        ReplayOracle(ds, "fit")
