import json
import math

import numpy as np
import pytest

from pointscat import (DataOperator, PulseWeights, ScattererArray, SensorArray,
                       closed_form_operator, default_lambda, free_field_mollified,
                       laplace_transform, lambda_upper_bound, perturb_operator,
                       simulated_operator)
from pointscat.errors import EmptyTrace, LambdaBelowSpectrum, TruncationTooShort
from pointscat.forward import _integrate
from pointscat.validation import (ball_mean_factor, check_mollified_consistency,
                                  check_oracle_equivalence, random_scatterers, random_sphere)

FOUR_PI = 4 * np.pi


def independent_operator(scatterers, sensors, lam):
    """Plain-loop evaluation of (4 pi)^-2 Phi M^-1 Phi^T."""
    s = math.sqrt(lam)
    y, x, a = scatterers.points.tolist(), sensors.points.tolist(), scatterers.alphas.tolist()
    n, N = len(y), len(x)
    M = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                M[i, j] = a[i] + s / (4 * math.pi)
            else:
                d = math.dist(y[i], y[j])
                M[i, j] = -math.exp(-s * d) / (4 * math.pi * d)
    Phi = np.array([[math.exp(-s * math.dist(xk, yj)) / math.dist(xk, yj) for yj in y]
                    for xk in x])
    return Phi @ np.linalg.inv(M) @ Phi.T / (4 * math.pi) ** 2


# closed form --------------------------------------------------------------

def test_closed_form_single():
    op = closed_form_operator(ScattererArray([[0, 0, 0]], [0.0]), SensorArray([[1, 0, 0]]), 1.0)
    assert op.matrix[0, 0] == pytest.approx(np.exp(-2) / FOUR_PI, rel=1e-14)
    assert op.matrix[0, 0] == pytest.approx(0.0107696, abs=1e-7)
    assert np.all(op.matrix @ np.zeros(1) == 0)


def test_closed_form_rank_one():
    op = closed_form_operator(ScattererArray([[0, 0, 0]], [0.4]),
                              SensorArray([[1, 0, 0], [0, 2, 0]]), 1.0)
    F = op.matrix
    assert np.linalg.matrix_rank(F, tol=1e-12 * np.abs(F).max()) == 1
    assert F[0, 1] ** 2 == pytest.approx(F[0, 0] * F[1, 1], rel=1e-13)


def test_single_scatterer_formula():
    alpha, r0, R, lam = 0.5, 1.0, 2.0, 2.5
    s = np.sqrt(lam)
    op = closed_form_operator(ScattererArray([[0, 0, 0]], [alpha]),
                              SensorArray([[r0, 0, 0], [0, R, 0]]), lam)
    exact = np.exp(-s * (R + r0)) / (FOUR_PI * R * r0 * (s + FOUR_PI * alpha))
    assert op.matrix[1, 0] == pytest.approx(exact, rel=1e-14)


def test_factorization_two_paths():
    rng = np.random.default_rng(21)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        sc = random_scatterers(rng, n, alpha_range=(-0.3, 1.0))
        se = SensorArray(random_sphere(rng, int(rng.integers(1, 9))))
        lam = lambda_upper_bound(sc) + rng.uniform(0.2, 5)
        F = closed_form_operator(sc, se, lam).matrix
        G = independent_operator(sc, se, lam)
        assert np.max(np.abs(F - G) / np.abs(G)) <= 1e-13


def test_symmetric_and_psd():
    rng = np.random.default_rng(22)
    for _ in range(30):
        sc = random_scatterers(rng, int(rng.integers(1, 5)), alpha_range=(-0.3, 1.0))
        se = SensorArray(random_sphere(rng, int(rng.integers(2, 10))))
        lam = lambda_upper_bound(sc) + rng.uniform(0.01, 5)
        op = closed_form_operator(sc, se, lam)
        F = op.matrix
        assert np.array_equal(F, F.T)
        assert np.linalg.eigvalsh(F).min() >= -1e-12 * np.linalg.norm(F)
        assert op.above_spectrum is True


def test_below_spectrum_rejected():
    sc = ScattererArray([[0, 0, 0]], [-1 / FOUR_PI])
    with pytest.raises(LambdaBelowSpectrum):
        closed_form_operator(sc, SensorArray([[1, 0, 0]]), 0.25)
    with pytest.raises(LambdaBelowSpectrum):
        simulated_operator(sc, SensorArray([[1, 0, 0]]), 0.25)


def test_default_lambda():
    sc = ScattererArray([[0, 0, 0]], [-1 / FOUR_PI])
    assert default_lambda(sc) == pytest.approx(2.0)
    assert default_lambda(ScattererArray([[0, 0, 0]], [1.0])) == 1.0
    far = ScattererArray([[0, 0, 0], [0.05, 0, 0]], [-1.0, -1.0])
    with pytest.warns(RuntimeWarning):
        default_lambda(far, SensorArray([[3, 0, 0]]))


def test_operator_json_round_trip():
    op = closed_form_operator(ScattererArray([[0, 0, 0]], [0.3]),
                              SensorArray([[1, 0, 0], [0, 1.5, 0]]), 1.0)
    back = DataOperator.from_dict(json.loads(json.dumps(op.to_dict())))
    assert np.array_equal(back.matrix, op.matrix) and back.lam == op.lam
    assert back.provenance == {"kind": "closed-form"} and back.above_spectrum is True


# laplace transform --------------------------------------------------------

def test_laplace_zero():
    t = np.linspace(0, 10, 101)
    assert laplace_transform(t, np.zeros_like(t), 1.0) == 0.0


def test_laplace_constant():
    t = np.linspace(0, 40, 40001)
    assert laplace_transform(t, np.ones_like(t), 1.0) == pytest.approx(1 - np.exp(-40), abs=1e-7)


def test_laplace_decaying_step():
    h = 1e-3
    t = np.concatenate([np.arange(0, 1, h), [1.0], np.arange(1, 15 + h / 2, h)])
    w = np.where(t >= 1, np.exp(-2 * np.pi * (t - 1)), 0.0)
    w[np.flatnonzero(t == 1.0)[0]] = 0.0        # left limit at the doubled node
    val = laplace_transform(t, w, 1.0)
    assert val == pytest.approx(np.exp(-1) / (1 + 2 * np.pi), abs=1e-6)
    assert val == pytest.approx(0.050513, abs=5e-6)


def test_laplace_truncation():
    t = np.linspace(0, 10, 10001)
    w = np.ones_like(t)
    assert laplace_transform(t, w, 1.0, T=2.0005) == pytest.approx(1 - np.exp(-2.0005), abs=1e-7)
    with pytest.raises(EmptyTrace):
        laplace_transform(np.zeros(0), np.zeros(0), 1.0)


def test_free_resolvent_identity():
    # transform of the mollified free wave tends to exp(-s r) / (4 pi r)
    eps, lam = 1e-2, 1.0
    s = np.sqrt(lam)
    se = SensorArray([[0, 0, 0]])
    x = [0.7, 0.4, -0.2]
    r = np.linalg.norm(x)
    t = np.linspace(r - eps, r + eps, 200_001)
    u = free_field_mollified(se, PulseWeights([1.0]), eps, t, x)
    val = laplace_transform(t, u, s)
    target = np.exp(-s * r) / (FOUR_PI * r)
    assert val == pytest.approx(target, rel=1e-3)
    # the ball average is exactly a mean-value factor off
    assert val == pytest.approx(target * ball_mean_factor(s * eps), rel=1e-8)


# simulated operator -------------------------------------------------------

def test_simulated_single():
    alpha, r0, lam = 0.5, 1.0, 1.0
    sc = ScattererArray([[0, 0, 0]], [alpha])
    se = SensorArray([[r0, 0, 0]])
    F = simulated_operator(sc, se, lam).matrix
    s = 1.0
    exact = np.exp(-2 * s * r0) / (FOUR_PI * r0 * r0 * (s + FOUR_PI * alpha))
    assert F[0, 0] == pytest.approx(exact, rel=1e-4)


def test_simulated_pair_six_sensors():
    rng = np.random.default_rng(30)
    sc = random_scatterers(rng, 2, min_sep=0.5)
    se = SensorArray(random_sphere(rng, 6))
    lam = lambda_upper_bound(sc) + 1
    Fs = simulated_operator(sc, se, lam)
    Fc = closed_form_operator(sc, se, lam).matrix
    assert np.max(np.abs(Fs.matrix - Fc) / np.abs(Fc)) <= 1e-3
    assert Fs.provenance["kind"] == "simulated" and Fs.provenance["tail_change"] < 1e-6


def test_oracle_equivalence_small_sweep():
    res = check_oracle_equivalence(n_scenes=5, seed=5)
    assert res.passed, res.summary


def test_zero_weight_column_is_exactly_zero():
    sc = ScattererArray([[0, 0, 0], [0.7, 0, 0]], [0.4, 0.6])
    se = SensorArray([[2, 0, 0], [0, 2, 0]])
    W = np.array([[1.0, 0.0], [0.5, 0.0]])
    _, q, _, _, _ = _integrate(sc, se, W, 8.0, 0.01)
    assert not np.any(q[:, :, 1])


def test_truncation_too_short():
    sc = ScattererArray([[0, 0, 0]], [0.05])
    with pytest.raises(TruncationTooShort):
        simulated_operator(sc, SensorArray([[1, 0, 0]]), 0.01, T=3.0)


def test_mollified_operator_mean_value_factor():
    res = check_mollified_consistency()
    assert res.passed, res.summary
    sc = ScattererArray([[0, 0, 0]], [0.5])
    se = SensorArray([[1, 0, 0], [0, 1.5, 0]])
    eps = 0.2
    F = simulated_operator(sc, se, 1.0, T=20.0, h=1e-3, epsilon=eps).matrix
    target = closed_form_operator(sc, se, 1.0).matrix * ball_mean_factor(eps)
    assert np.max(np.abs(F - target) / target) <= 2e-4


# perturbation -------------------------------------------------------------

@pytest.fixture
def op():
    return closed_form_operator(ScattererArray([[0, 0, 0], [0.5, 0.2, 0]], [0.5, 0.3]),
                                SensorArray(random_sphere(np.random.default_rng(2), 7)), 1.0)


def test_perturb_zero(op):
    assert np.array_equal(perturb_operator(op, 0.0, 1).matrix, op.matrix)


def test_perturb_deterministic(op):
    a, b = perturb_operator(op, 0.05, 9), perturb_operator(op, 0.05, 9)
    assert np.array_equal(a.matrix, b.matrix)
    assert not np.array_equal(a.matrix, perturb_operator(op, 0.05, 10).matrix)


def test_perturb_level(op):
    p = perturb_operator(op, 0.01, 3)
    rel = np.linalg.norm(p.matrix - op.matrix) / np.linalg.norm(op.matrix)
    assert rel == pytest.approx(0.01, abs=1e-12)
    assert np.array_equal(p.matrix, p.matrix.T)
    assert p.provenance["kind"] == "perturbed" and p.provenance["base"] == op.provenance
