import math
import numpy as np
import pytest

from phunmix.errors import ConfigError, InvalidArgumentError, UnsupportedRegimeError
from phunmix.lifting import phunlift
from phunmix.problem import Instance, is_exact, residual
from phunmix.solvers import (
    AltConfig, CONSTRAINED_SOLVERS, SOLVER_NAMES, alternate_batch, chain, coordinate_update,
    multistart_phunalt, mwf, nmwf, phunalt, phunalt_update, random_phase_init, run_solver,
    validate_solver_names, wiener_batch, wiener_estimate, wiener_sigma,
)
from phunmix.utils import derive_seed, make_rng
from tests.conftest import make_instance


def _scalar_instance():
    return Instance(mixing=[[1.0]], observation=[2.0], magnitudes=[1.0])


def test_mwf_scalar_closed_form():
    result = mwf(_scalar_instance(), 1.0)
    np.testing.assert_allclose(result.estimate, [1.0])
    assert result.method_name == "mwf"


def test_mwf_rejects_nonpositive_sigma():
    with pytest.raises(InvalidArgumentError):
        mwf(_scalar_instance(), 0.0)


def test_mwf_small_sigma_approaches_truth():
    instance = make_instance(4, 3, seed=21)
    estimate = mwf(instance, 1e-6).estimate
    assert np.max(np.abs(estimate - instance.ground_truth)) < 1e-6


def test_wiener_forms_agree():
    for seed in range(20):
        for m, k in ((3, 2), (4, 4), (3, 5)):
            instance = make_instance(m, k, snr_db=20.0, seed=seed)
            args = (instance.mixing, instance.observation, instance.magnitudes, 0.3)
            direct = wiener_estimate(*args, form="direct")
            dual = wiener_estimate(*args, form="dual")
            assert np.linalg.norm(direct - dual) <= 1e-8 * np.linalg.norm(direct)


def test_mwf_solves_tikhonov_system():
    instance = make_instance(5, 3, snr_db=10.0, seed=4)
    sigma = instance.noise_stddev
    estimate = mwf(instance, sigma).estimate
    a, y, b = instance.mixing, instance.observation, instance.magnitudes
    system = sigma ** 2 * np.diag(1 / b ** 2) + a.conj().T @ a
    assert np.linalg.norm(system @ estimate - a.conj().T @ y) <= 1e-9 * np.linalg.norm(a.conj().T @ y)


def test_wiener_batch_zero_column_drops_source():
    instance = make_instance(3, 3, snr_db=20.0, seed=6)
    masked = np.array(instance.mixing)
    masked[:, 1] = 0
    stacked = wiener_batch(masked[None], instance.observation[None], instance.magnitudes[None], np.array([0.2]))[0]
    reduced = wiener_estimate(instance.mixing[:, [0, 2]], instance.observation, instance.magnitudes[[0, 2]], 0.2)
    assert abs(stacked[1]) < 1e-14
    np.testing.assert_allclose(stacked[[0, 2]], reduced, rtol=1e-10)


def test_nmwf_magnitude_contract():
    instance = make_instance(2, 4, snr_db=30.0, seed=3)
    result = nmwf(instance, instance.noise_stddev)
    np.testing.assert_allclose(np.abs(result.estimate), instance.magnitudes, rtol=1e-12)
    np.testing.assert_allclose(nmwf(_scalar_instance(), 1.0).estimate, [1.0])


def test_phunalt_update_example():
    instance = Instance(mixing=[[1.0], [0.0]], observation=[2j, 5.0], magnitudes=[3.0])
    assert phunalt_update(instance, [3.0], 0) == pytest.approx(3j)


def test_phunalt_update_degenerate_keeps_value():
    mixing, observation, magnitudes = np.array([[1.0], [0.0]]), np.array([0.0, 5.0]), np.array([1.0])
    value, degenerate = coordinate_update(mixing, observation, magnitudes, np.array([1j]), 0)
    assert degenerate and value == 1j


def test_phunalt_update_is_coordinate_minimizer(rng):
    grid = np.exp(2j * math.pi * np.arange(360) / 360)
    for trial in range(200):
        instance = make_instance(3, 4, snr_db=10.0, seed=derive_seed(1, trial))
        s = random_phase_init(instance.magnitudes, rng)
        i = trial % 4
        before = residual(instance.mixing, s, instance.observation)
        updated = s.copy()
        updated[i] = phunalt_update(instance, s, i)
        after = residual(instance.mixing, updated, instance.observation)
        candidates = []
        for phasor in grid:
            moved = s.copy()
            moved[i] = instance.magnitudes[i] * phasor
            candidates.append(residual(instance.mixing, moved, instance.observation))
        assert after <= before + 1e-12 * (1 + before)
        assert after <= min(candidates) + 1e-10 * (1 + after)


def test_phunalt_examples():
    single = Instance(mixing=[[1 + 1j]], observation=[2 - 1j], magnitudes=[abs(2 - 1j) / abs(1 + 1j)])
    result = phunalt(single, [single.magnitudes[0] * 1j])
    assert result.residual_history[0] < 1e-24 and result.converged

    fixed = Instance(mixing=[[1.0, 1.0]], observation=[2.0], magnitudes=[1.0, 1.0])
    result = phunalt(fixed, [1.0, 1.0])
    np.testing.assert_allclose(result.estimate, [1.0, 1.0])
    assert result.residual == 0.0 and result.converged


def test_phunalt_rejects_infeasible_init(square_instance):
    with pytest.raises(InvalidArgumentError):
        phunalt(square_instance, 2 * square_instance.magnitudes)


def test_phunalt_monotone_and_feasible(rng):
    for trial in range(50):
        instance = make_instance(2 + trial % 4, 1 + trial % 6, snr_db=20.0, seed=derive_seed(2, trial))
        result = phunalt(instance, random_phase_init(instance.magnitudes, rng))
        history = np.array(result.residual_history)
        assert np.all(np.diff(history) <= 1e-12 * (1 + history[0]))
        np.testing.assert_allclose(np.abs(result.estimate), instance.magnitudes, rtol=1e-10)


def test_phunalt_local_optimality(wide_instance, rng):
    cfg = AltConfig(tol=1e-3)
    result = phunalt(wide_instance, random_phase_init(wide_instance.magnitudes, rng), cfg)
    for i in range(wide_instance.k):
        moved = result.estimate.copy()
        moved[i] = phunalt_update(wide_instance, moved, i)
        change = result.residual - residual(wide_instance.mixing, moved, wide_instance.observation)
        assert change <= cfg.tol * result.residual + 1e-15


def test_phunalt_above_relaxation_bound(rng):
    for seed in range(10):
        instance = make_instance(2, 3, snr_db=60.0, seed=seed)
        bound = phunlift(instance).lower_bound
        result = phunalt(instance, random_phase_init(instance.magnitudes, rng))
        assert result.residual >= bound - 1e-9


def test_alternate_batch_matches_single_runs(rng):
    instances = [make_instance(3, 4, snr_db=30.0, seed=seed) for seed in range(4)]
    inits = [random_phase_init(inst.magnitudes, rng) for inst in instances]
    state = alternate_batch(
        np.stack([inst.mixing for inst in instances]),
        np.stack([inst.observation for inst in instances]),
        np.stack([inst.magnitudes for inst in instances]),
        np.stack(inits),
        AltConfig(),
    )
    for j, (inst, init) in enumerate(zip(instances, inits)):
        single = phunalt(inst, init)
        assert state.sweeps[j] == single.iterations
        np.testing.assert_allclose(state.estimates[j], single.estimate, rtol=1e-10, atol=1e-12)


def test_random_phase_init(rng):
    np.testing.assert_allclose(np.abs(random_phase_init([1, 1, 1], rng)), 1.0)
    np.testing.assert_array_equal(random_phase_init([1, 2], make_rng(5)), random_phase_init([1, 2], make_rng(5)))
    draws = random_phase_init(np.ones(100_000), rng)
    assert abs(np.mean(draws)) < 0.02


def test_multistart_single_start_is_phunalt(wide_instance):
    multi = multistart_phunalt(wide_instance, 1, AltConfig(), make_rng(77))
    single = phunalt(wide_instance, random_phase_init(wide_instance.magnitudes, make_rng(77)))
    np.testing.assert_array_equal(multi.estimate, single.estimate)
    assert multi.method_name == "phunalt*1"


def test_multistart_keeps_the_best(wide_instance):
    result = multistart_phunalt(wide_instance, 5, AltConfig(), make_rng(8))
    rng = make_rng(8)
    runs = [phunalt(wide_instance, random_phase_init(wide_instance.magnitudes, rng)) for _ in range(5)]
    assert result.residual == min(run.residual for run in runs)
    with pytest.raises(InvalidArgumentError):
        multistart_phunalt(wide_instance, 0)


def test_nmwf_chain_never_worse():
    for seed in range(100):
        instance = make_instance(3, 4, snr_db=20.0, seed=seed)
        first = nmwf(instance, instance.noise_stddev)
        chained = chain(lambda inst: nmwf(inst, inst.noise_stddev), instance)
        assert chained.method_name == "nmwf+"
        assert chained.residual <= first.residual + 1e-12 * (1 + first.residual)


@pytest.mark.slow
def test_multistart_recovers_at_least_as_often():
    single_exact = multi_exact = 0
    for trial in range(200):
        instance = make_instance(2, 3, seed=derive_seed(6, trial))
        seed = derive_seed(6, trial, "starts")
        single = phunalt(instance, random_phase_init(instance.magnitudes, make_rng(seed)))
        multi = multistart_phunalt(instance, 5, AltConfig(), make_rng(seed))
        assert multi.residual <= single.residual
        single_exact += is_exact(single.estimate, instance.ground_truth)
        multi_exact += is_exact(multi.estimate, instance.ground_truth)
    assert multi_exact >= single_exact


def test_phunlift_chain_determined_noiseless():
    instance = make_instance(3, 3, seed=31)
    lifted = phunlift(instance)
    chained = chain(phunlift, instance)
    assert chained.method_name == "phunlift+"
    assert chained.lower_bound == lifted.lower_bound
    assert np.linalg.norm(chained.estimate - lifted.estimate) <= 1e-8 * np.linalg.norm(lifted.estimate)


def test_chain_at_fixed_point_is_unchanged():
    fixed = Instance(mixing=[[1.0, 1.0]], observation=[2.0], magnitudes=[1.0, 1.0])
    result = chain(lambda inst: phunalt(inst, [1.0, 1.0]), fixed)
    np.testing.assert_allclose(result.estimate, [1.0, 1.0])


def test_wiener_sigma_noiseless_floor():
    instance = make_instance(2, 2, seed=1)
    assert 0 < wiener_sigma(instance) < 1e-5 * np.linalg.norm(instance.observation)
    noisy = make_instance(2, 2, snr_db=20.0, seed=1)
    assert wiener_sigma(noisy) == noisy.noise_stddev


@pytest.mark.parametrize("name", SOLVER_NAMES)
def test_run_solver_dispatch(name, square_instance):
    result = run_solver(name, square_instance, make_rng(0))
    assert result.estimate.shape == (3,)
    if name in CONSTRAINED_SOLVERS:
        np.testing.assert_allclose(np.abs(result.estimate), square_instance.magnitudes, rtol=1e-10)


def test_run_solver_least_squares_regime(wide_instance):
    with pytest.raises(UnsupportedRegimeError):
        run_solver("ls", wide_instance, make_rng(0))


def test_validate_solver_names():
    assert validate_solver_names(["mwf", "phunlift+"]) == ("mwf", "phunlift+")
    with pytest.raises(ConfigError):
        validate_solver_names(["mwf", "gradient"])
