import math

import numpy as np
import pytest

import oracles
from ppdiag.core import EventSequence
from ppdiag.errors import NumericError, OutOfRangeError, UsageError, ValidationError
from ppdiag.models import (
    GeneratorMatrix,
    HawkesParams,
    LatentPath,
    MmhpParams,
    MmppParams,
    PoissonParams,
    compensator,
    decode_latent_path,
    hawkes_compensator,
    hawkes_intensity,
    intensity_path,
    loglik,
    loglik_hawkes,
    loglik_mmhp,
    loglik_mmpp,
    loglik_poisson,
    mat_exp_2x2,
    model_from_dict,
    model_to_dict,
)
from ppdiag.quadrature import adaptive_simpson
from ppdiag.rng import RandomSource
from ppdiag.simulate import simulate_hawkes, simulate_mmhp, simulate_poisson

# fixed instance; oracle outputs below were computed once with tests/oracles.py and frozen
TIMES = [0.105, 4.504, 5.569, 6.003, 6.061, 9.359, 12.502, 15.514, 15.941, 16.425, 17.471, 17.944]
FIXED = EventSequence(TIMES, 20.0)
HAWKES_LL_NAIVE = -19.711124444263543  # hawkes_loglik_naive(TIMES, 20, 0.4, 0.8, 1.5)
HAWKES_COMP_QUAD = 8.753860536366382  # hawkes_compensator_quad(TIMES, 13.1, 0.4, 0.8, 1.5)
MMPP_LL_DISCRETE = -19.605391241910574  # mmpp_loglik_discretized(TIMES, 20, 0.3, 1.2, 0.2, 0.1, h=1e-5)
EXPM_TAYLOR = [[0.5478559421478765, 0.07544668664332287], [0.2766378510255172, 0.12032471783571355]]

CASE1 = MmhpParams(1.0, 1.1, 1.6, 1.9, GeneratorMatrix(0.2, 0.4))


# ------------------------------------------------------------ parameter types


def test_param_validation():
    with pytest.raises(ValidationError):
        PoissonParams(-1.0)
    with pytest.raises(ValidationError):
        HawkesParams(0.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        HawkesParams(1.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        GeneratorMatrix(-0.1, 0.2)
    with pytest.raises(ValidationError):
        MmppParams(2.0, 1.0, GeneratorMatrix(0.1, 0.1))
    with pytest.raises(ValidationError):
        HawkesParams(float("nan"), 1.0, 1.0)


def test_branching_ratio_reported_not_enforced():
    p = HawkesParams(1.0, 3.0, 1.0)
    assert p.branching_ratio == 3.0 and not p.stationary
    assert HawkesParams(1.0, 1.6, 1.9).stationary


def test_generator():
    q = GeneratorMatrix(0.2, 0.4)
    assert np.allclose(q.matrix().sum(axis=1), 0)
    assert q.stationary() == pytest.approx((2 / 3, 1 / 3))
    with pytest.raises(ValidationError):
        GeneratorMatrix(0.0, 0.0).stationary()


def test_model_dict_round_trip():
    for m in (PoissonParams(2.0), HawkesParams(1, 1.6, 1.9), MmppParams(1, 2, GeneratorMatrix(0.1, 0.2)), CASE1):
        assert model_from_dict(model_to_dict(m)) == m
    with pytest.raises(ValidationError):
        model_from_dict({"model": "nope", "params": {}})


def test_latent_path_structure():
    path = LatentPath([1.0, 2.5], [0, 1, 0], 4.0)
    assert path.segments() == [(0.0, 1.0, 0), (1.0, 2.5, 1), (2.5, 4.0, 0)]
    # left-continuous: the state at a transition time is the earlier one
    assert path.state_at(1.0) == 0 and path.state_at(1.0001) == 1
    assert path.occupancy(1) == pytest.approx(1.5 / 4.0)
    assert LatentPath.from_dict(path.to_dict()) == path
    for bad in (([1.0], [0, 0], 4.0), ([2.0, 1.0], [0, 1, 0], 4.0), ([4.0], [0, 1], 4.0), ([1.0], [0], 4.0)):
        with pytest.raises(ValidationError):
            LatentPath(*bad)


def test_latent_path_from_grid():
    path = LatentPath.from_grid([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], 4.0)
    assert path.transition_times.tolist() == [2.0]
    assert path.states.tolist() == [0, 1]


# ------------------------------------------------------------ matrix exponential


def test_expm_trivial():
    assert np.array_equal(mat_exp_2x2(np.zeros((2, 2))), np.eye(2))
    assert np.allclose(mat_exp_2x2(np.diag([0.3, -1.2])), np.diag(np.exp([0.3, -1.2])), rtol=1e-14, atol=0)


def test_expm_frozen_oracle():
    assert np.allclose(mat_exp_2x2([[-0.7, 0.3], [1.1, -2.4]]), EXPM_TAYLOR, rtol=0, atol=1e-12)


def test_expm_random_vs_taylor():
    gen = np.random.default_rng(11)
    for _ in range(30):
        m = gen.normal(size=(2, 2)) * gen.choice([0.1, 1.0, 3.0])
        assert np.allclose(mat_exp_2x2(m), oracles.expm_taylor(m), rtol=0, atol=1e-10)


def test_expm_near_defective_and_complex():
    for m in ([[1.0, 1.0], [0.0, 1.0]], [[-2.0, 1e-10], [0.0, -2.0 + 1e-12]], [[0.0, -2.0], [3.0, 0.5]]):
        assert np.allclose(mat_exp_2x2(m), oracles.expm_taylor(m), rtol=1e-12, atol=1e-12)


def test_expm_generator_rows():
    # exp(Q t) of a generator is stochastic
    p = mat_exp_2x2(GeneratorMatrix(0.2, 0.4).matrix() * 7.5)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-14)


def test_expm_non_finite():
    with pytest.raises(NumericError):
        mat_exp_2x2([[np.inf, 0], [0, 1]])


# ------------------------------------------------------------ Hawkes intensity and compensator


def test_hawkes_intensity_examples():
    p = HawkesParams(1.0, 1.6, 1.9)
    assert hawkes_intensity(p, EventSequence([], 10.0), 5.0) == 1.0
    seq = EventSequence([0.5], 10.0)
    assert hawkes_intensity(p, seq, 0.5) == 1.0
    assert hawkes_intensity(p, seq, 1.5) == pytest.approx(1.0 + 1.6 * math.exp(-1.9), abs=1e-14)
    assert hawkes_intensity(p, seq, 1.5) == pytest.approx(oracles.hawkes_intensity_naive([0.5], 1.5, 1.0, 1.6, 1.9))
    with pytest.raises(OutOfRangeError):
        hawkes_intensity(p, seq, 10.5)


def test_hawkes_compensator_examples():
    assert hawkes_compensator(HawkesParams(1.0, 0.0, 1.9), FIXED, 7.0) == pytest.approx(7.0, abs=1e-14)
    seq = EventSequence([0.5], 10.0)
    p = HawkesParams(1.0, 1.6, 1.9)
    expected = 1.5 + (1.6 / 1.9) * (1 - math.exp(-1.9))  # 2.216153...
    assert hawkes_compensator(p, seq, 1.5) == pytest.approx(expected, abs=1e-14)
    assert hawkes_compensator(p, seq, 1.5) == pytest.approx(
        oracles.hawkes_compensator_quad([0.5], 1.5, 1.0, 1.6, 1.9), abs=1e-8)
    assert hawkes_compensator(HawkesParams(0.4, 0.8, 1.5), FIXED, 13.1) == pytest.approx(HAWKES_COMP_QUAD, abs=1e-10)
    with pytest.raises(OutOfRangeError):
        hawkes_compensator(p, seq, -1.0)


def test_hawkes_compensator_vs_adaptive_simpson():
    gen = np.random.default_rng(5)
    for _ in range(20):
        p = HawkesParams(*gen.uniform([0.2, 0.1, 0.5], [2.0, 3.0, 5.0]))
        times = np.sort(gen.uniform(0, 10, gen.integers(1, 15)))
        seq = EventSequence(times, 10.0)
        t = float(gen.uniform(0, 10))
        edges = [0.0] + [s for s in times if s < t] + [t]
        # on each inter-event cell the intensity is smooth given the events up to its left edge
        quad = sum(
            adaptive_simpson(lambda u, a=a: p.lam1 + p.alpha * np.exp(-p.beta * (u - times[times <= a])).sum(), a, b, 1e-9)
            for a, b in zip(edges[:-1], edges[1:]) if b > a
        )
        assert hawkes_compensator(p, seq, t) == pytest.approx(quad, abs=1e-6)


# ------------------------------------------------------------ log-likelihoods


def test_loglik_poisson_examples():
    assert loglik_poisson(PoissonParams(1.0), EventSequence([1.0, 2.0, 3.0], 10.0)) == pytest.approx(-10.0)
    seq = EventSequence([0.5, 1.0, 1.5, 2.0, 3.0], 4.0)
    assert loglik_poisson(PoissonParams(2.0), seq) == pytest.approx(5 * math.log(2) - 8, abs=1e-12)
    assert 5 * math.log(2) - 8 == pytest.approx(-4.53426, abs=1e-5)
    grid = np.linspace(0.5, 2.0, 1001)
    best = grid[np.argmax([loglik_poisson(PoissonParams(g), seq) for g in grid])]
    assert best == pytest.approx(5 / 4, abs=2e-3)
    assert loglik_poisson(PoissonParams(0.0), EventSequence([], 3.0)) == 0.0


def test_loglik_hawkes_frozen_naive():
    assert loglik_hawkes(HawkesParams(0.4, 0.8, 1.5), FIXED) == pytest.approx(HAWKES_LL_NAIVE, abs=1e-10)


def test_loglik_hawkes_recursion_vs_naive_simulated():
    p = HawkesParams(1.0, 1.6, 1.9)
    for seed in range(5):
        seq = simulate_hawkes(p, 15.0, RandomSource(seed))
        seq = EventSequence(seq.times[:100], seq.horizon)
        naive = oracles.hawkes_loglik_naive(seq.times.tolist(), seq.horizon, 1.0, 1.6, 1.9)
        assert abs(loglik_hawkes(p, seq) - naive) < 1e-9


def test_loglik_hawkes_small_alpha_is_poisson():
    assert loglik_hawkes(HawkesParams(0.7, 1e-12, 1.3), FIXED) == pytest.approx(
        loglik_poisson(PoissonParams(0.7), FIXED), abs=1e-6)


def test_loglik_hawkes_non_finite():
    with pytest.raises(NumericError) as err:
        loglik_hawkes(HawkesParams(1.0, 1e308, 1e-300), EventSequence([1.0, 1.5, 2.0], 3.0))
    assert err.value.index is not None


def test_loglik_hawkes_true_beats_perturbed():
    p = HawkesParams(1.0, 1.6, 1.9)
    diffs = []
    for seed in range(50):
        seq = simulate_hawkes(p, 100.0, RandomSource(seed))
        for f in (0.5, 1.5):
            diffs.append(loglik_hawkes(p, seq) - loglik_hawkes(HawkesParams(f, 1.6 * f, 1.9), seq))
    assert np.mean(diffs) > 0 and np.mean(np.array(diffs) > 0) > 0.5


def test_loglik_mmpp_equal_rates_is_poisson():
    for q in (GeneratorMatrix(0.1, 0.3), GeneratorMatrix(5.0, 0.01), GeneratorMatrix(0.0, 1.0)):
        assert loglik_mmpp(MmppParams(0.6, 0.6, q), FIXED) == pytest.approx(
            loglik_poisson(PoissonParams(0.6), FIXED), abs=1e-8)


def test_loglik_mmpp_frozen_discretized_oracle():
    assert loglik_mmpp(MmppParams(0.3, 1.2, GeneratorMatrix(0.2, 0.1)), FIXED) == pytest.approx(
        MMPP_LL_DISCRETE, abs=1e-3)


def test_loglik_mmpp_random_vs_discretized_oracle():
    gen = np.random.default_rng(21)
    times = np.round(np.sort(gen.uniform(0, 15, 30)), 4)
    seq = EventSequence(times, 15.0)
    lam0, lam1, q01, q10 = 0.8, 3.5, 0.4, 0.7
    ours = loglik_mmpp(MmppParams(lam0, lam1, GeneratorMatrix(q01, q10)), seq)
    assert abs(ours - oracles.mmpp_loglik_discretized(times, 15.0, lam0, lam1, q01, q10, h=1e-4)) < 1e-3


def test_loglik_mmpp_fast_switching_limit():
    # fast chain with fixed ratio: Poisson with the stationary-mixed rate
    lam0, lam1 = 0.5, 2.0
    target = loglik_poisson(PoissonParams(lam0 * 2 / 3 + lam1 / 3), FIXED)
    gaps = [abs(loglik_mmpp(MmppParams(lam0, lam1, GeneratorMatrix(s, 2 * s)), FIXED) - target)
            for s in (1.0, 10.0, 100.0, 1000.0)]
    assert gaps[-1] < 1e-2 and all(a > b for a, b in zip(gaps, gaps[1:]))


def test_loglik_mmhp_small_alpha_is_mmpp():
    q = GeneratorMatrix(0.2, 0.4)
    assert loglik_mmhp(MmhpParams(0.3, 1.2, 1e-9, 1.5, q), FIXED) == pytest.approx(
        loglik_mmpp(MmppParams(0.3, 1.2, q), FIXED), abs=1e-4)


def test_loglik_mmhp_absorbing_active_state_is_hawkes():
    m = MmhpParams(0.3, 0.4, 0.8, 1.5, GeneratorMatrix(0.2, 0.0))
    assert loglik_mmhp(m, FIXED, initial=(0.0, 1.0)) == pytest.approx(
        loglik_hawkes(HawkesParams(0.4, 0.8, 1.5), FIXED), abs=1e-8)
    near = MmhpParams(0.3, 0.4, 0.8, 1.5, GeneratorMatrix(0.2, 1e-9))
    assert loglik_mmhp(near, FIXED, initial=(0.0, 1.0)) == pytest.approx(HAWKES_LL_NAIVE, abs=1e-6)


def test_loglik_mmhp_grid_refinement():
    seq, _ = simulate_mmhp(CASE1, 100.0, RandomSource(42))
    base = loglik_mmhp(CASE1, seq)
    assert abs(loglik_mmhp(CASE1, seq, refine=2) - base) < 1e-4
    assert abs(loglik_mmhp(CASE1, seq, refine=8) - base) < 1e-4


def test_loglik_dispatch_and_initial_law():
    assert loglik(PoissonParams(1.0), FIXED) == loglik_poisson(PoissonParams(1.0), FIXED)
    with pytest.raises(ValidationError):
        loglik_mmhp(CASE1, FIXED, initial=(0.5, 0.6))
    with pytest.raises(UsageError):
        loglik_mmpp(CASE1, FIXED)


# ------------------------------------------------------------ decoding and plug-in intensity


def test_decode_equal_rates_single_state():
    for q in (GeneratorMatrix(0.2, 0.4), GeneratorMatrix(0.4, 0.2)):
        path = decode_latent_path(MmppParams(1.0, 1.0, q), FIXED)
        assert path.transition_times.size == 0
        assert path.states[0] == (0 if q.q10 > q.q01 else 1)


def test_decode_structure_and_accuracy():
    agree = []
    for seed in range(10):
        seq, truth = simulate_mmhp(CASE1, 100.0, RandomSource(seed))
        path = decode_latent_path(CASE1, seq)
        segs = path.segments()
        assert segs[0][0] == 0.0 and segs[-1][1] == seq.horizon
        assert all(a[1] == b[0] and a[2] != b[2] for a, b in zip(segs, segs[1:]))
        agree.append(np.mean(path.state_at(seq.times) == truth.state_at(seq.times)))
    assert np.mean(agree) > 0.8


def test_intensity_path_examples():
    grid = np.linspace(0, 20, 7)
    assert np.all(intensity_path(PoissonParams(2.0), FIXED, None, grid) == 2.0)
    m = MmhpParams(0.3, 1.2, 0.8, 1.5, GeneratorMatrix(0.2, 0.1))
    assert np.all(intensity_path(m, FIXED, LatentPath.constant(0, 20.0), grid) == 0.3)
    with pytest.raises(UsageError):
        intensity_path(m, FIXED, None, grid)
    hp = HawkesParams(0.4, 0.8, 1.5)
    pts = np.array(TIMES) + 1e-6
    expected = [oracles.hawkes_intensity_naive(TIMES, t, 0.4, 0.8, 1.5) for t in pts]
    assert np.allclose(intensity_path(hp, FIXED, None, pts), expected, rtol=1e-12)


def test_compensator_monotone_all_models():
    path = LatentPath([3.0, 9.0, 16.0], [0, 1, 0, 1], 20.0)
    grid = np.linspace(0, 20, 401)
    for model, p in (
        (PoissonParams(0.6), None),
        (HawkesParams(0.4, 0.8, 1.5), None),
        (MmppParams(0.3, 1.2, GeneratorMatrix(0.2, 0.1)), path),
        (MmhpParams(0.3, 1.2, 0.8, 1.5, GeneratorMatrix(0.2, 0.1)), path),
    ):
        values = [compensator(model, FIXED, p, t) for t in grid]
        assert np.all(np.diff(values) >= 0)


def test_true_parameters_beat_perturbed_mmhp():
    wins = 0
    for seed in range(50):
        seq, _ = simulate_mmhp(CASE1, 100.0, RandomSource(seed))
        f = 1.5 if seed % 2 else 0.5
        pert = MmhpParams(CASE1.lam0 * f, CASE1.lam1 * f, CASE1.alpha * f, CASE1.beta, CASE1.q)
        wins += loglik_mmhp(CASE1, seq) > loglik_mmhp(pert, seq)
    assert wins > 25


def test_poisson_perturbed_majority():
    wins = sum(
        loglik_poisson(PoissonParams(1.0), s) > loglik_poisson(PoissonParams(1.5 if k % 2 else 0.5), s)
        for k, s in enumerate(simulate_poisson(1.0, 100.0, RandomSource(k)) for k in range(50))
    )
    assert wins > 25
