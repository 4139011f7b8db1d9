"""Spectral initialization: scale estimates, the matrix-free surrogate,
power iteration, and the robustness gap between median and mean scaling."""

import math

import numpy as np
import pytest

from robustphase import (
    CorruptionSpec,
    DegenerateMeasurements,
    InitResult,
    InvalidInputError,
    SensingEnsemble,
    clean_measurements,
    generate_problem,
    leading_eigenvector,
    mean_spectral_init,
    median_spectral_init,
    relative_error,
    sample_ensemble,
    sample_signal,
    scale_estimate,
    surrogate_apply,
)


# ------------------------------------------------------------ scale estimate


def test_scale_estimate_examples():
    assert scale_estimate([0.455, 0.455, 0.455]) == pytest.approx(1.0, rel=1e-12)
    assert scale_estimate([0.0, 0.0, 0.0]) == 0.0


def test_scale_estimate_recovers_signal_norm():
    ens = sample_ensemble(4, 100_000, seed=40)
    x = sample_signal(4, seed=41)
    x *= 2.0 / np.linalg.norm(x)
    lam = scale_estimate(clean_measurements(ens, x))
    assert abs(lam - 2.0) <= 0.05 * 2.0


def test_scale_estimate_rejects_negative_median():
    with pytest.raises(DegenerateMeasurements):
        scale_estimate([-5.0, -5.0, 1.0])


# ------------------------------------------------------------------ surrogate


def test_surrogate_empty_mask_gives_zero():
    ens = sample_ensemble(5, 20, seed=42)
    y = np.full(20, 1e12)
    v = sample_signal(5, seed=43)
    np.testing.assert_array_equal(
        surrogate_apply(ens, y, alpha_y=3.0, lambda0=1.0, v=v), np.zeros(5)
    )


def test_surrogate_rank_one_action():
    ens = SensingEnsemble(rows=np.array([[1.0, 0.0]]), seed=0)
    y = np.array([1.0])
    out = surrogate_apply(ens, y, alpha_y=3.0, lambda0=1.0, v=np.array([1.0, 0.0]))
    np.testing.assert_allclose(out, [1.0, 0.0])


def test_surrogate_is_linear_at_zero():
    ens = sample_ensemble(6, 30, seed=44)
    y = np.abs(sample_signal(30, seed=45))
    np.testing.assert_array_equal(
        surrogate_apply(ens, y, 3.0, 1.0, np.zeros(6)), np.zeros(6)
    )


def test_surrogate_matches_materialized_matrix():
    """Matrix-free product vs an explicitly built Y, brute force."""
    rng = np.random.Generator(np.random.Philox(key=46))
    for trial in range(10):
        n = int(rng.integers(2, 21))
        m = int(rng.integers(5, 201))
        ens = sample_ensemble(n, m, seed=470 + trial)
        y = rng.standard_normal(m) * 3.0
        lambda0 = float(rng.uniform(0.3, 2.0))
        alpha_y = float(rng.uniform(0.5, 3.0))
        mask = np.abs(y) <= (alpha_y * lambda0) ** 2
        Y = (ens.rows.T * (np.where(mask, y, 0.0))) @ ens.rows / m
        v = rng.standard_normal(n)
        got = surrogate_apply(ens, y, alpha_y, lambda0, v)
        want = Y @ v
        scale = max(float(np.linalg.norm(want)), 1e-30)
        assert float(np.linalg.norm(got - want)) / scale <= 1e-10


def test_surrogate_rejects_bad_shapes():
    ens = sample_ensemble(4, 10, seed=48)
    with pytest.raises(InvalidInputError):
        surrogate_apply(ens, np.ones(9), 3.0, 1.0, np.ones(4))
    with pytest.raises(InvalidInputError):
        surrogate_apply(ens, np.ones(10), 3.0, 1.0, np.ones(5))
    with pytest.raises(InvalidInputError):
        surrogate_apply(ens, np.ones(10), 0.0, 1.0, np.ones(4))


# ------------------------------------------------------------ power iteration


def test_power_iteration_diagonal_gap():
    mat = np.diag([3.0, 1.0])
    v, iters, converged = leading_eigenvector(lambda u: mat @ u, 2)
    assert converged
    assert abs(abs(v[0]) - 1.0) < 1e-5
    assert abs(v[1]) < 1e-5


def test_power_iteration_identity_converges_immediately():
    v, iters, converged = leading_eigenvector(lambda u: u, 5)
    assert converged and iters == 1
    assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-12)


def test_power_iteration_rank_one():
    x = sample_signal(8, seed=49)
    x /= np.linalg.norm(x)
    v, iters, converged = leading_eigenvector(lambda u: x * float(x @ u), 8)
    assert converged and iters <= 2
    assert min(np.linalg.norm(v - x), np.linalg.norm(v + x)) < 1e-6


def test_power_iteration_zero_operator_flagged_converged():
    v, iters, converged = leading_eigenvector(lambda u: np.zeros_like(u), 3)
    assert converged
    assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-12)


def test_power_iteration_budget_exhaustion_is_nonfatal():
    mat = np.diag([3.0, 1.0])
    v, iters, converged = leading_eigenvector(
        lambda u: mat @ u, 2, tol=1e-12, max_iters=1
    )
    assert not converged and iters == 1
    assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-12)


def test_power_iteration_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        leading_eigenvector(lambda u: u, 3, tol=0.0)
    with pytest.raises(InvalidInputError):
        leading_eigenvector(lambda u: u, 0)
    with pytest.raises(InvalidInputError):
        leading_eigenvector(lambda u: u, 3, max_iters=0)


# ------------------------------------------------------------- median init


def test_median_init_accuracy_noise_free():
    # Monte-Carlo-calibrated bound: at m = 50n the error distribution has
    # mean 0.27 and observed max 0.326 over these 100 seeds (power iteration
    # agrees with exact eigendecomposition to 6 digits, so this is the
    # method's true accuracy at this sampling ratio, not an eigensolver
    # artifact).
    n, m, hits = 64, 50 * 64, 0
    for seed in range(100):
        ens = sample_ensemble(n, m, seed=5000 + seed)
        x = sample_signal(n, seed=6000 + seed)
        res = median_spectral_init(ens, clean_measurements(ens, x))
        assert np.linalg.norm(res.z0) == pytest.approx(res.lambda0, rel=1e-12)
        if relative_error(res.z0, x) <= 0.35:
            hits += 1
    assert hits >= 95


def test_median_init_accuracy_under_outliers():
    # Same calibration with 5% outliers of size 100*||x||^2: observed max
    # 0.364, barely above the clean case; the median scale and |y| mask
    # absorb the corruption.
    spec = CorruptionSpec(outlier_fraction=0.05, eta_max_rel=100.0)
    hits = 0
    for seed in range(100):
        prob = generate_problem(64, 50 * 64, spec, master_seed=7000 + seed)
        res = median_spectral_init(prob.ensemble, prob.measurements.y)
        if relative_error(res.z0, prob.signal) <= 0.37:
            hits += 1
    assert hits >= 95


def test_median_init_error_shrinks_with_oversampling():
    """At m = 200n every trial lands under 0.2 relative error."""
    for seed in range(20):
        ens = sample_ensemble(64, 200 * 64, seed=5000 + seed)
        x = sample_signal(64, seed=6000 + seed)
        res = median_spectral_init(ens, clean_measurements(ens, x))
        assert relative_error(res.z0, x) <= 0.2


def test_median_init_all_zero_measurements_degenerate():
    ens = sample_ensemble(6, 40, seed=50)
    res = median_spectral_init(ens, np.zeros(40))
    assert res.degenerate
    assert res.lambda0 == 0.0
    np.testing.assert_array_equal(res.z0, np.zeros(6))


def test_median_init_deterministic_and_mask_monotone_in_alpha_y():
    ens = sample_ensemble(8, 120, seed=51)
    x = sample_signal(8, seed=52)
    y = clean_measurements(ens, x)
    y[::7] *= 50.0  # spread the magnitudes so the mask actually moves
    a = median_spectral_init(ens, y)
    b = median_spectral_init(ens, y)
    np.testing.assert_array_equal(a.z0, b.z0)
    counts = [
        median_spectral_init(ens, y, alpha_y=al).truncated_count
        for al in (0.5, 1.0, 2.0, 3.0, 5.0)
    ]
    assert counts == sorted(counts)
    assert all(c <= 120 for c in counts)


# --------------------------------------------------------------- mean init


def test_mean_init_examples():
    ens = sample_ensemble(3, 3, seed=53)
    res = mean_spectral_init(ens, np.ones(3))
    assert res.lambda0 == pytest.approx(1.0, rel=1e-12)


def test_mean_init_recovers_signal_norm_on_clean_data():
    ens = sample_ensemble(16, 100_000, seed=54)
    x = sample_signal(16, seed=55)
    x *= 2.0 / np.linalg.norm(x)
    res = mean_spectral_init(ens, clean_measurements(ens, x))
    assert abs(res.lambda0 - 2.0) <= 0.05 * 2.0


def test_single_huge_outlier_breaks_mean_scale_but_not_median_scale():
    ens = sample_ensemble(8, 100, seed=56)
    y = np.ones(100)
    y[0] = 1e9
    assert mean_spectral_init(ens, y).lambda0 > 1e3
    lam = median_spectral_init(ens, y).lambda0
    assert 0.5 <= lam <= 2.0


def test_mean_init_rejects_negative_mean():
    ens = sample_ensemble(2, 2, seed=57)
    with pytest.raises(DegenerateMeasurements):
        mean_spectral_init(ens, np.array([-3.0, 1.0]))


def test_init_result_shape_contract():
    ens = sample_ensemble(5, 60, seed=58)
    x = sample_signal(5, seed=59)
    res = median_spectral_init(ens, clean_measurements(ens, x))
    assert isinstance(res, InitResult)
    assert res.z0.shape == (5,)
    assert 0 <= res.truncated_count <= 60
    assert res.power_iters >= 1
