import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from flagspec.errors import ZeroVector
from flagspec.flagman import FlagPoint, chart_point, linearize, morse_component
from flagspec.jordan import Flow, hyperbolic_type, sorted_flow
from flagspec.roots import FlagType, WeylWord, predicted_spectrum, sample_stable_layer
from flagspec.spectra import (
    Status,
    fit_exponent,
    lyapunov_adjoint,
    metric_exponent,
    nilpotent_ratio_check,
    verify_spectrum,
)
from generators import random_conformal_generator, random_flag_type, random_weyl

E = np.e
NONCONF = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -2.0]])


def unit(n, i, j):
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


def golden():
    f = Flow.continuous(np.diag([1.0, -1.0]))
    ft = FlagType(2, (1,))
    comp = morse_component(hyperbolic_type(f), ft, WeylWord.identity(2))
    x = FlagPoint.from_frame([[1.0, 0.0], [1.0, 1.0]], ft)
    return f, x, comp


def test_fit_exponent_gate():
    ts = np.linspace(0, 10, 101)
    est = fit_exponent(list(zip(ts, -2 * ts + 1)), 10.0)
    assert est.status is Status.CONVERGED
    assert_allclose(est.slope, -2.0)
    assert est.window == (5.0, 10.0)
    flat = fit_exponent(list(zip(ts, np.zeros_like(ts))), 10.0)
    assert flat.status is Status.CONVERGED and flat.r_squared == 1.0
    wobble = fit_exponent(list(zip(ts, np.sin(3 * ts))), 10.0)
    assert wobble.status is Status.INCONCLUSIVE
    bent = fit_exponent(list(zip(ts, -np.where(ts < 7.5, ts, 7.5 + 2 * (ts - 7.5)))), 10.0)
    assert bent.status is Status.INCONCLUSIVE


def test_adjoint_examples():
    est = lyapunov_adjoint(Flow.continuous(np.diag([1.0, -1.0])), unit(2, 1, 0), 20, 0.1)
    assert abs(est.slope + 2.0) <= 1e-12
    assert est.converged

    rot = Flow.continuous([[0.0, -1.0], [1.0, 0.0]])
    est = lyapunov_adjoint(rot, np.random.default_rng(0).standard_normal((2, 2)), 50, 0.1)
    assert abs(est.slope) <= 5e-3

    with pytest.raises(ZeroVector):
        lyapunov_adjoint(rot, np.zeros((2, 2)))


def test_adjoint_nonconformal_closed_form():
    f = Flow.continuous(NONCONF)
    v = unit(3, 2, 0)
    for prop in (f, sorted_flow(f, conjugate=False)):
        est = lyapunov_adjoint(prop, v, 20, 0.1)
        ts = np.array([t for t, _ in est.samples])
        logs = np.array([y for _, y in est.samples])
        assert_allclose(logs, -3 * ts + 0.5 * np.log1p(ts ** 2), atol=1e-9)
    est = lyapunov_adjoint(sorted_flow(f, conjugate=False), v, 80, 0.1)
    assert abs(est.slope + 3.0) <= 0.05 * 3


def test_nilpotent_ratio_closed_form():
    ts, ratios = nilpotent_ratio_check(Flow.continuous(NONCONF), unit(3, 2, 0), 80, 0.1)
    assert_allclose(ratios, np.sqrt(1 + ts ** 2) / ts, rtol=1e-9)
    assert 0.95 <= ratios[-1] <= 1.05


def test_nilpotent_ratio_conformal():
    f = Flow.continuous(np.diag([2.0, 0.0, -2.0]))
    v = 0.8 * unit(3, 1, 0) + 0.3 * unit(3, 2, 0)
    ts, ratios = nilpotent_ratio_check(f, v, 30, 0.1)
    assert np.all(np.diff(ratios) <= 1e-12)
    assert_allclose(ratios[-1], 1.0, atol=1e-10)

    ts, ratios = nilpotent_ratio_check(f, unit(3, 2, 1), 30, 0.1)
    assert_allclose(ratios, 1.0, atol=1e-12)


def test_metric_golden():
    f, x, comp = golden()
    est = metric_exponent(f, x, comp, 25, 0.05)
    assert est.converged
    assert abs(est.slope + 2.0) <= 0.05


def test_metric_at_component():
    f, _, comp = golden()
    est = metric_exponent(f, comp.base_point, comp, 25, 0.05)
    assert est.status is Status.AT_COMPONENT


def test_metric_diverges_near_repeller():
    f = Flow.continuous(np.diag([1.0, -1.0]))
    ft = FlagType(2, (1,))
    comp = morse_component(hyperbolic_type(f), ft, WeylWord.reversal(2))
    x = FlagPoint.from_frame([[1e-8, 1.0], [1.0, 0.0]], ft)
    est = metric_exponent(f, x, comp, 25, 0.05)
    assert est.status is Status.DIVERGED


def test_metric_deep_layer_discrete():
    f = Flow.discrete(np.diag([E ** 2, 1.0, E ** -2]))
    h = hyperbolic_type(f)
    ft, w = FlagType.full(3), WeylWord.identity(3)
    comp = morse_component(h, ft, w)
    pred = predicted_spectrum(h, ft, w)
    assert pred.lambdas == (-2.0, -4.0)
    xr = sample_stable_layer(h, ft, w, 1, rng=0)
    x = linearize(comp, comp.base_point, xr)
    est = metric_exponent(f, x, comp, 20, 1)
    assert abs(est.slope + 4.0) <= 0.1
    assert abs(lyapunov_adjoint(f, xr, 20, 1).slope + 4.0) <= 0.1


def test_chart_route_saddle():
    # a saddle component: the trajectory must not be pushed off by rounding
    rng = np.random.default_rng(3)
    f = Flow.continuous(np.diag([1.5, 0.5, -0.4, -1.6]))
    sf = sorted_flow(f)
    ft, w = FlagType.full(4), WeylWord((2, 0, 3, 1))
    comp = morse_component(sf.htype, ft, w)
    pred = predicted_spectrum(sf.htype, ft, w)
    assert pred.negative_part and len(pred.negative_part) < len(pred.lambdas)
    for layer in pred.negative_layers:
        x0 = sample_stable_layer(sf.htype, ft, w, layer, rng=rng)
        cp = chart_point(comp, comp.random_group_element(rng), x0)
        est = metric_exponent(sf, cp, comp, 50, 0.1)
        assert est.converged
        assert abs(est.slope - pred.lambdas[layer]) <= 0.05 * max(1, abs(pred.lambdas[layer]))


def test_verify_examples():
    f = Flow.discrete(np.diag([E, 1 / E]))
    rep = verify_spectrum(f, FlagType.full(2), WeylWord.identity(2), samples_per_layer=2, tol=0.05)
    assert rep.passed and len(rep.per_layer) == 1
    assert_allclose(rep.per_layer[0].lambda_pred, -2.0)

    rep = verify_spectrum(f, FlagType.full(2), WeylWord.reversal(2))
    assert rep.per_layer == [] and rep.passed
    assert any("empty" in n for n in rep.notes)

    f = Flow.discrete(np.diag([E ** 2, 1.0, E ** -2]))
    rep = verify_spectrum(f, FlagType.full(3), WeylWord.identity(3), samples_per_layer=2, tol=0.1)
    assert [layer.lambda_pred for layer in rep.per_layer] == [-2.0, -4.0]
    assert rep.passed


def test_verify_fails_at_tiny_tolerance():
    rep = verify_spectrum(Flow.continuous(NONCONF), FlagType.full(3), WeylWord.identity(3),
                          samples_per_layer=1, tol=1e-6)
    assert not rep.passed


def test_verify_nonconformal_warning():
    rep = verify_spectrum(Flow.continuous(NONCONF), FlagType.full(3), WeylWord((2, 1, 0)),
                          samples_per_layer=1, horizon=20)
    assert any("warning" in n for n in rep.notes)


def test_verify_deterministic_across_workers():
    rng = np.random.default_rng(4)
    f = Flow.continuous(random_conformal_generator(rng, 4))
    ft, w = FlagType.full(4), WeylWord((1, 0, 3, 2))
    a = verify_spectrum(f, ft, w, samples_per_layer=2, horizon=20, rng_seed=9).to_dict()
    b = verify_spectrum(f, ft, w, samples_per_layer=2, horizon=20, rng_seed=9, workers=4).to_dict()
    assert a == b


@pytest.mark.parametrize("seed", range(4))
def test_invariants_random_conformal(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.choice([3, 4]))
    f = Flow.continuous(random_conformal_generator(rng, n))
    ft, w = random_flag_type(rng, n), random_weyl(rng, n)
    tol = 0.05
    rep = verify_spectrum(f, ft, w, samples_per_layer=1, tol=tol, rng_seed=seed)
    angles = verify_spectrum(f, ft, w, samples_per_layer=1, tol=tol, rng_seed=seed, metric="principal_angles")
    for layer, other in zip(rep.per_layer, angles.per_layer):
        for s, t in zip(layer.estimates, other.estimates):
            assert abs(s.metric.slope - s.adjoint.slope) <= 2 * tol
            assert abs(s.metric.slope - t.metric.slope) <= 1e-2
            if s.metric.converged:
                assert abs(s.metric.slope - s.metric.tail_slope) <= 2e-2
    assert rep.passed


def test_report_to_dict_handles_nan():
    f, _, comp = golden()
    est = metric_exponent(f, comp.base_point, comp, 5, 0.05)
    d = est.to_dict()
    assert d["slope"] is None and d["status"] == "AtComponent"
    assert math.isnan(est.slope)
