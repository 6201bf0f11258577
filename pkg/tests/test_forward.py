import numpy as np
import pytest

from pointscat import (PulseWeights, ScattererArray, SensorArray, arrival_events,
                       free_field_mollified, laplace_transform, pairwise_distances,
                       scattered_field, sensor_traces, solve_charges, sphere_ball_fraction)
from pointscat.errors import (BeyondHorizon, EvaluationAtScatterer, HorizonNonPositive,
                              NonPositiveEpsilon, StepTooLarge)
from pointscat.validation import (_two_scatterer_series, check_causality_and_jumps,
                                  check_convergence, check_single_scatterer, random_scatterers,
                                  random_sphere)

FOUR_PI = 4 * np.pi
ORIGIN = ScattererArray([[0.0, 0.0, 0.0]], [0.5])


def nodes_right(ch):
    """Mask selecting right limits (drops the first copy of doubled nodes)."""
    keep = np.ones(ch.times.shape, bool)
    keep[:-1] = ch.times[1:] != ch.times[:-1]
    return keep


# arrival events -----------------------------------------------------------

def test_events_single():
    ev = arrival_events(ORIGIN, SensorArray([[1, 0, 0]]), PulseWeights([1.0]))
    assert [(e.time, e.scatterer, e.jump) for e in ev] == [(1.0, 0, 1.0)]


def test_events_zero_weights():
    assert arrival_events(ORIGIN, SensorArray([[1, 0, 0]]), PulseWeights([0.0])) == []


def test_events_two_sensors():
    ev = arrival_events(ORIGIN, SensorArray([[1, 0, 0], [0, 2, 0]]), PulseWeights([1, 1]))
    assert [(e.time, e.scatterer, e.jump) for e in ev] == [(1.0, 0, 1.0), (2.0, 0, 0.5)]


# charges ------------------------------------------------------------------

def test_no_sources_zero_charges():
    sc = ScattererArray([[0, 0, 0], [1, 0, 0]], [0.5, 0.2])
    ch = solve_charges(sc, SensorArray([[0, 2, 0]]), PulseWeights([0.0]), T=5.0, h=0.01)
    assert not np.any(ch.values)


def test_single_scatterer_closed_form():
    ch = solve_charges(ORIGIN, SensorArray([[1, 0, 0]]), PulseWeights([1.0]), T=5.0, h=1e-3)
    t = ch.times
    keep = nodes_right(ch)
    exact = np.where(t >= 1, np.exp(-2 * np.pi * np.maximum(t - 1, 0)), 0.0)
    assert np.abs(ch.values[0][keep] - exact[keep]).max() <= 1e-12
    assert ch.values[0][0] == 0.0
    assert np.all(ch.values[0][t < 1] == 0.0)


def test_single_scatterer_acceptance_check():
    res = check_single_scatterer()
    assert res.passed, res.summary


def test_retarded_coupling_switches_on():
    sc = ScattererArray([[0, 0, 0], [1, 0, 0]], [0.5, 0.5])
    se = SensorArray([[-1, 0, 0]])
    ch = solve_charges(sc, se, PulseWeights([1.0]), T=6.0, h=0.005)
    t = ch.times
    # direct arrival at y2 at t = 2 coincides with the first echo at 1 + 1
    se2 = SensorArray([[-1, 0.5, 0]])
    ch2 = solve_charges(sc, se2, PulseWeights([1.0]), T=6.0, h=0.005)
    _, r = pairwise_distances(sc, se2)
    start = r[0, 0] + 1.0
    assert np.all(ch2.values[1][ch2.times < min(start, r[0, 1])] == 0.0)
    assert np.all(ch.values[1][t < 2.0] == 0.0)


def test_two_scatterer_series_oracle():
    sc = ScattererArray([[0, 0, 0], [1, 0, 0]], [0.3, 0.3])
    se = SensorArray([[-1, 0.5, 0]])
    _, r = pairwise_distances(sc, se)
    ch = solve_charges(sc, se, PulseWeights([1.0]), T=8.0, h=1e-3)
    keep = nodes_right(ch)
    for j in range(2):
        exact = _two_scatterer_series(ch.times[keep], j, r[0], 1.0, FOUR_PI * 0.3)
        assert np.abs(ch.values[j][keep] - exact).max() <= 1e-6


def test_second_order_convergence():
    res = check_convergence()
    assert res.passed, res.summary


def test_linearity_in_weights():
    rng = np.random.default_rng(4)
    sc = random_scatterers(rng, 3, min_sep=0.3)
    se = SensorArray(random_sphere(rng, 4, radius=2.0))
    w = rng.uniform(-1, 1, 4)
    a = solve_charges(sc, se, PulseWeights(w), T=6.0, h=0.01)
    b = solve_charges(sc, se, PulseWeights(2 * w), T=6.0, h=0.01)
    assert np.array_equal(a.times, b.times)
    assert np.allclose(b.values, 2 * a.values, rtol=1e-12, atol=0)
    ta = sensor_traces(sc, se, PulseWeights(w), T=6.0, h=0.01)
    tb = sensor_traces(sc, se, PulseWeights(2 * w), T=6.0, h=0.01)
    assert np.allclose(tb.values, 2 * ta.values, rtol=1e-12, atol=0)
    # superposition of unit pulses; each run has its own grid, so compare
    # at probe times away from the jumps
    probe = np.linspace(0.05, 5.95, 157)
    parts = sum(f * np.array([solve_charges(sc, se, PulseWeights.unit(4, k), T=6.0, h=2e-3)
                              .sample(j, probe) for j in range(3)])
                for k, f in enumerate(w))
    fine = solve_charges(sc, se, PulseWeights(w), T=6.0, h=2e-3)
    whole = np.array([fine.sample(j, probe) for j in range(3)])
    assert np.abs(whole - parts).max() <= 1e-4 * np.abs(whole).max()


def test_jump_events_match_distances():
    rng = np.random.default_rng(6)
    sc = random_scatterers(rng, 2, min_sep=0.4)
    se = SensorArray(random_sphere(rng, 3, radius=2.0))
    w = PulseWeights([1.0, -0.5, 2.0])
    ch = solve_charges(sc, se, w, T=6.0, h=0.01)
    _, r = pairwise_distances(sc, se)
    for e in ch.jump_events:
        assert e.time == r[e.sensor, e.scatterer]
        assert e.jump == w.weights[e.sensor] / r[e.sensor, e.scatterer]


def test_causality_and_jumps_random():
    res = check_causality_and_jumps(n_scenes=20, seed=3)
    assert res.passed, res.summary


def test_step_and_horizon_errors():
    se = SensorArray([[1, 0, 0]])
    with pytest.raises(HorizonNonPositive):
        solve_charges(ORIGIN, se, PulseWeights([1.0]), T=0.0, h=0.01)
    with pytest.raises(StepTooLarge):
        solve_charges(ORIGIN, se, PulseWeights([1.0]), T=5.0, h=0.5)


# scattered field ----------------------------------------------------------

@pytest.fixture(scope="module")
def single_charges():
    return solve_charges(ORIGIN, SensorArray([[1, 0, 0]]), PulseWeights([1.0]), T=5.0, h=1e-3)


def test_field_before_arrival(single_charges):
    x = [0, 2, 0]
    assert scattered_field(single_charges, ORIGIN, 2.9, x) == 0.0
    assert np.all(scattered_field(single_charges, ORIGIN, np.linspace(0, 2.99, 50), x) == 0)


def test_field_closed_form(single_charges):
    val = scattered_field(single_charges, ORIGIN, 3.5, [0, 2, 0])
    assert val == pytest.approx(np.exp(-np.pi) / (8 * np.pi), rel=1e-6)
    assert val == pytest.approx(1.7195e-3, abs=1e-7)


def test_field_is_sum_of_retarded_contributions():
    sc = ScattererArray([[0, 0, 0], [0.8, 0.3, 0]], [0.5, 0.9])
    se = SensorArray([[-1, 0.2, 0.1], [0.5, 1.5, -0.4]])
    ch = solve_charges(sc, se, PulseWeights([1.0, 0.3]), T=6.0, h=0.005)
    x = np.array([0.3, -1.2, 0.9])
    t = np.linspace(0, 5, 200)
    total = scattered_field(ch, sc, t, x)
    R = np.linalg.norm(sc.points - x, axis=1)
    parts = sum(np.where(t - R[j] > 0, ch.sample(j, np.maximum(t - R[j], 0)), 0) / (FOUR_PI * R[j])
                for j in range(2))
    assert np.allclose(total, parts, rtol=1e-13, atol=1e-16)


def test_field_errors(single_charges):
    with pytest.raises(EvaluationAtScatterer):
        scattered_field(single_charges, ORIGIN, 1.0, [0, 0, 0])
    with pytest.raises(BeyondHorizon):
        scattered_field(single_charges, ORIGIN, 8.0, [0, 2, 0])


# sensor traces ------------------------------------------------------------

def test_zero_weight_traces():
    tr = sensor_traces(ORIGIN, SensorArray([[1, 0, 0], [0, 2, 0]]), PulseWeights([0, 0]),
                       T=5.0, h=0.01)
    assert not np.any(tr.values)


def test_self_trace():
    tr = sensor_traces(ORIGIN, SensorArray([[1, 0, 0]]), PulseWeights([1.0]), T=6.0, h=1e-3)
    t, v = tr.times, tr.values[0]
    assert np.all(v[t < 2] == 0)
    keep = np.ones(t.shape, bool)
    keep[:-1] = t[1:] != t[:-1]
    after = keep & (t >= 2)
    exact = np.exp(-2 * np.pi * (t[after] - 2)) / FOUR_PI
    assert np.abs(v[after] - exact).max() <= 1e-6


def test_trace_laplace_identity():
    alpha, r0, R, lam = 0.5, 1.0, 2.0, 1.0
    se = SensorArray([[r0, 0, 0], [0, R, 0]])
    tr = sensor_traces(ORIGIN, se, PulseWeights([1, 0]), T=16.0, h=2.5e-4)
    s = np.sqrt(lam)
    exact = np.exp(-s * (R + r0)) / (FOUR_PI * R * r0 * (s + FOUR_PI * alpha))
    assert laplace_transform(tr.times, tr.values[1], s) == pytest.approx(exact, rel=1e-6)


# mollified pulses ---------------------------------------------------------

@pytest.mark.parametrize("t, r, eps", [(0.6, 0.5, 0.8), (1.0, 1.0, 0.8), (0.2, 0.3, 0.8)])
def test_cap_fraction_monte_carlo(t, r, eps):
    rng = np.random.default_rng(12)
    v = rng.standard_normal((100_000, 3))
    pts = t * v / np.linalg.norm(v, axis=1, keepdims=True)
    frac = np.mean(np.linalg.norm(pts - [r, 0, 0], axis=1) < eps)
    assert sphere_ball_fraction(t, r, eps) == pytest.approx(frac, rel=1e-2)


def test_free_field_examples():
    se = SensorArray([[0, 0, 0]])
    w = PulseWeights([1.0])
    eps, r = 0.1, 1.0
    x = [r, 0, 0]
    assert free_field_mollified(se, w, eps, 0.5, x) == 0.0
    assert free_field_mollified(se, w, eps, r, x) == pytest.approx(3 / (16 * np.pi * r * eps),
                                                                   rel=1e-14)
    vals = [free_field_mollified(se, w, e, 1.05, x) for e in (0.1, 0.06, 0.01)]
    assert vals[0] > 0 and vals[2] == 0.0
    with pytest.raises(NonPositiveEpsilon):
        free_field_mollified(se, w, 0.0, 1.0, x)


def test_free_field_unit_mass():
    # int_0^inf u0 dt integrates the source against 1/(4 pi |x - y|); the
    # ball average of 1/|x - y| is its centre value outside the ball
    se = SensorArray([[0, 0, 0]])
    t = np.linspace(0.5, 1.5, 200_001)
    u = free_field_mollified(se, PulseWeights([1.0]), 0.2, t, [1.0, 0, 0])
    assert np.trapezoid(u, t) == pytest.approx(1 / FOUR_PI, rel=1e-6)


def test_mollified_charges_approach_delta():
    se = SensorArray([[1, 0, 0]])
    w = PulseWeights([1.0])
    ref = solve_charges(ORIGIN, se, w, T=4.0, h=1e-3)
    probe = np.linspace(1.5, 4.0, 50)
    errs = []
    for eps in (0.2, 0.1, 0.05):
        ch = solve_charges(ORIGIN, se, w, T=4.0, h=1e-3, epsilon=eps)
        errs.append(np.abs(ch.sample(0, probe) - ref.sample(0, probe)).max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-3
