import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afretrieval.ambiguity import af_distance, ambiguity_map, inner_product_map
from afretrieval.sampling import apply_mask, make_mask
from afretrieval.solver import (
    DivergenceError,
    SolverConfig,
    align_residue_phases,
    minibatch_gradient,
    run_recovery,
    smoothed_objective,
    wirtinger_gradient,
)
from afretrieval.waveform import SupportSpec, WaveformRecipe, generate, project_support, recipe_support

from conftest import delta, random_signal


def cell_gradient(z, a, mu, p, k):
    """Closed-form conj(z)-gradient of (phi_mu(|S[p,k]|) - a)^2, by loops."""
    n_len = len(z)
    S = inner_product_map(z)[p, k]
    phi = np.sqrt(abs(S) ** 2 + mu**2)
    w = lambda m: np.exp(-2j * np.pi * m / n_len)
    g = np.zeros(n_len, dtype=complex)
    for j in range(n_len):
        g[j] = (1 - a / phi) * (S * z[(j - p) % n_len] * w(-j * k) + np.conj(S) * z[(j + p) % n_len] * w((j + p) * k))
    return g


def test_objective_examples():
    x = random_signal(8, 1)
    a = np.sqrt(ambiguity_map(x))
    assert smoothed_objective(x, a, mu=0) == pytest.approx(0, abs=1e-20)
    assert smoothed_objective(delta(4), np.sqrt(ambiguity_map(delta(4))), mu=1) == pytest.approx((3 - np.sqrt(2)) / 2)
    assert (3 - np.sqrt(2)) / 2 == pytest.approx(0.79289, abs=1e-5)


@given(st.integers(0, 1000), st.floats(0.01, 50))
def test_objective_nonnegative_and_monotone_in_mu(seed, mu):
    z = random_signal(6, seed)
    a = np.sqrt(ambiguity_map(random_signal(6, seed + 1)))
    h = smoothed_objective(z, a, mu=mu)
    assert h >= 0
    # phi_mu grows with mu; the objective grows once phi exceeds the data everywhere
    big = smoothed_objective(z, a, mu=2 * mu + a.max())
    assert smoothed_objective(z, a, mu=4 * mu + 2 * a.max()) >= big


def test_objective_respects_mask():
    x = random_signal(8, 3)
    A = ambiguity_map(x)
    A_bad = A.copy()
    A_bad[1::2] = 0
    mask = make_mask("uniform_delay", {"keep_every": 2}, 8)
    assert smoothed_objective(x, np.sqrt(A_bad), mask, 0) == pytest.approx(0, abs=1e-20)
    assert smoothed_objective(x, np.sqrt(A_bad), None, 0) > 0


def fd_check(z, a, mu, delta_=1e-6):
    g = wirtinger_gradient(z, a, mu=mu)
    worst = 0.0
    for j in range(len(z)):
        e = np.zeros(len(z))
        e[j] = delta_
        d_re = (smoothed_objective(z + e, a, mu=mu) - smoothed_objective(z - e, a, mu=mu)) / (2 * delta_)
        d_im = (smoothed_objective(z + 1j * e, a, mu=mu) - smoothed_objective(z - 1j * e, a, mu=mu)) / (2 * delta_)
        fd = d_re + 1j * d_im
        worst = max(worst, abs(fd - 2 * g[j]))
    return worst / np.linalg.norm(2 * g)


@pytest.mark.parametrize("case", range(20))
def test_gradient_matches_finite_differences(case):
    rng = np.random.default_rng(case)
    n_len = int(rng.integers(2, 33))
    mu = float(rng.uniform(1, 10))
    z = random_signal(n_len, 1000 + case)
    a = np.sqrt(ambiguity_map(random_signal(n_len, 2000 + case)))
    assert fd_check(z, a, mu) <= 1e-5


def test_gradient_example_n8_mu5():
    assert fd_check(random_signal(8, 77), np.sqrt(ambiguity_map(random_signal(8, 78))), 5.0) <= 1e-5


def test_gradient_zero_at_truth():
    x = random_signal(8, 4)
    g = wirtinger_gradient(x, np.sqrt(ambiguity_map(x)), mu=0)
    assert np.linalg.norm(g) <= 1e-12 * np.linalg.norm(x) ** 3


def test_gradient_phase_equivariance():
    z = random_signal(8, 5)
    a = np.sqrt(ambiguity_map(random_signal(8, 6)))
    phase = np.exp(1j * np.pi / 3)
    np.testing.assert_allclose(wirtinger_gradient(phase * z, a, mu=2), phase * wirtinger_gradient(z, a, mu=2), atol=1e-12)


def test_full_batch_is_scaled_full_gradient():
    z = random_signal(8, 7)
    a = np.sqrt(ambiguity_map(random_signal(8, 8)))
    P, K = np.divmod(np.arange(64), 8)
    g = wirtinger_gradient(z, a, mu=3)
    np.testing.assert_allclose(minibatch_gradient(z, a, mu=3, batch=(P, K)), 64 * g, atol=1e-10)
    np.testing.assert_allclose(minibatch_gradient(z, a, mu=3, batch=(P, K), backend="numpy"), 64 * g, atol=1e-10)


def test_partition_mean_equals_full_gradient():
    n_len, Q = 4, 4
    z = random_signal(n_len, 9)
    a = np.sqrt(ambiguity_map(random_signal(n_len, 10)))
    cells = np.random.default_rng(0).permutation(n_len * n_len)
    batches = cells.reshape(-1, Q)
    # each batch scaled by N^2/Q estimates N^2 times the gradient; the mean over the partition is exact
    est = np.mean([minibatch_gradient(z, a, mu=2, batch=np.column_stack(np.divmod(b, n_len))) * (n_len**2 / Q) for b in batches], axis=0)
    np.testing.assert_allclose(est / n_len**2, wirtinger_gradient(z, a, mu=2), atol=1e-10)


@pytest.mark.parametrize("p,k", [(0, 0), (1, 2), (3, 5), (5, 1)])
def test_single_cell_matches_closed_form(p, k):
    z = random_signal(6, 11)
    a = np.sqrt(ambiguity_map(random_signal(6, 12)))
    g = minibatch_gradient(z, a, mu=1.5, batch=np.array([[p, k]]))
    np.testing.assert_allclose(g, cell_gradient(z, a[p, k], 1.5, p, k), atol=1e-12)


def test_single_cell_with_vanishing_map():
    # for the impulse every off-origin delay has S = 0, so the cell contributes nothing
    a = np.ones((4, 4))
    g = minibatch_gradient(delta(4), a, mu=1.0, batch=np.array([[2, 1]]))
    np.testing.assert_allclose(g, 0, atol=1e-15)
    np.testing.assert_allclose(g, cell_gradient(delta(4), 1.0, 1.0, 2, 1), atol=1e-15)


def test_minibatch_validation():
    z = random_signal(4)
    a = np.ones((4, 4))
    with pytest.raises(ValueError):
        minibatch_gradient(z, a, mu=1, batch=np.empty((0, 2)))
    with pytest.raises(ValueError):
        minibatch_gradient(z, a, mu=1, batch=np.array([[4, 0]]))
    with pytest.raises(ValueError):
        minibatch_gradient(z, a, make_mask("uniform_delay", {"keep_every": 2}, 4), mu=1, batch=np.array([[1, 0]]))


def test_solver_config_validation():
    for bad in ({"gamma1": 1.0}, {"alpha": 0}, {"mu0": -1}, {"mask_mode": "x"}, {"batch_size": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_start_at_truth_stays_at_truth():
    x = generate(WaveformRecipe(n_len=32, seed=1))
    A = ambiguity_map(x)
    res = run_recovery(A, x, SolverConfig(epsilon=1e-12, seed=0))
    assert res.af_distance <= 1e-10
    assert res.grad_norm_final <= 1e-9


def mu_trace_is_valid(res, cfg):
    mu = np.asarray(res.trace.mu)
    assert np.all(np.diff(mu) <= 0)
    ratios = mu[1:] / mu[:-1]
    # between samples several decays may happen, each a factor gamma1
    k = np.round(np.log(ratios) / np.log(cfg.gamma1))
    np.testing.assert_allclose(ratios, cfg.gamma1**k, rtol=1e-9)
    assert res.mu_final == pytest.approx(cfg.mu0 * cfg.gamma1 ** len(res.trace.decay_iters))


def test_recovery_from_perturbed_start():
    x = generate(WaveformRecipe(n_len=32, seed=2))
    A = ambiguity_map(x)
    cfg = SolverConfig(seed=1)
    z0 = x + 0.05 * np.linalg.norm(x) / np.sqrt(32) * random_signal(32, 3)
    res = run_recovery(A, z0, cfg, truth_af=A)
    assert res.af_distance < 1e-6
    mu_trace_is_valid(res, cfg)
    assert len(res.trace.dist_truth) == len(res.trace.t)
    assert res.trace.objective[-1] < res.trace.objective[0]


def test_phase_equivariance_of_runs():
    x = generate(WaveformRecipe(n_len=32, seed=3))
    A = ambiguity_map(x)
    z0 = x + 0.1 * np.linalg.norm(x) / np.sqrt(32) * random_signal(32, 4)
    cfg = SolverConfig(seed=2, max_iters=300)
    r0 = run_recovery(A, z0, cfg)
    r1 = run_recovery(A, np.exp(0.9j) * z0, cfg)
    assert abs(r0.af_distance - r1.af_distance) <= 1e-8


def test_recovery_is_seeded():
    x = generate(WaveformRecipe(n_len=16, seed=3))
    A = ambiguity_map(x)
    z0 = random_signal(16, 1) * 0.1
    cfg = SolverConfig(seed=5, max_iters=200)
    np.testing.assert_array_equal(run_recovery(A, z0, cfg).signal, run_recovery(A, z0, cfg).signal)


def test_divergence_guard():
    x = generate(WaveformRecipe(n_len=16, seed=3))
    A = ambiguity_map(x)
    cfg = SolverConfig(alpha=50.0, radius0=5.0, check_every=5, divergence_factor=1.5, max_iters=200)
    with pytest.raises(DivergenceError):
        run_recovery(A, x * 1.01, cfg)


def test_masked_recovery_and_modes():
    x = generate(WaveformRecipe(n_len=32, seed=6))
    A = ambiguity_map(x)
    masked = apply_mask(A, make_mask("block_delay", {"frac_first": 0.125, "frac_last": 0.125}, 32))
    z0 = x + 0.02 * np.linalg.norm(x) / np.sqrt(32) * random_signal(32, 5)
    res = run_recovery(masked, z0, SolverConfig(seed=0))
    assert res.af_distance < 1e-6
    res_zero = run_recovery(masked, z0, SolverConfig(seed=0, mask_mode="zero_fill", max_iters=200))
    assert np.all(np.isfinite(res_zero.signal))


def test_support_projection_keeps_iterates_in_window():
    recipe = WaveformRecipe(n_len=32, seed=7)
    x = generate(recipe)
    spec = recipe_support(recipe)
    res = run_recovery(ambiguity_map(x), x + 0.01 * random_signal(32, 1) * np.abs(x).max(), SolverConfig(max_iters=200), support=spec)
    np.testing.assert_allclose(project_support(res.signal, spec), res.signal, atol=1e-12)


def test_residue_alignment_undoes_phase_pattern():
    X = np.zeros(16, dtype=complex)
    X[3:11] = random_signal(8, 2)
    x = np.fft.ifft(X)
    c = np.exp(1j * np.array([0.0, 1.1]))
    scrambled = x * c[np.arange(16) % 2]
    even = make_mask("uniform_delay", {"keep_every": 2}, 16)
    assert af_distance(apply_mask(ambiguity_map(x), even), ambiguity_map(scrambled)) < 1e-12
    assert af_distance(ambiguity_map(x), ambiguity_map(scrambled)) > 0.1
    aligned = align_residue_phases(scrambled, SupportSpec("band_limited", 8), 2)
    assert af_distance(ambiguity_map(x), ambiguity_map(aligned)) < 1e-10


def test_residue_alignment_is_identity_without_grid():
    z = random_signal(8)
    np.testing.assert_array_equal(align_residue_phases(z, SupportSpec("band_limited", 4), 1), z)
