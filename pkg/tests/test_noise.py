import warnings

import numpy as np
import pytest

from holoreg.exact import ExactSystem, SectorBasis, mode_qubit_state, spin_wave_vector
from holoreg.modes import mode_overlap, select_register_modes
from holoreg.noise import (
    DIPOLAR_BROADENING,
    EXPERIMENTS,
    NoiseConfig,
    ScalingExperiment,
    coherence_half_life,
    dephasing_channel,
    echo_error_injection,
    expected_k0_gain,
    finite_polarization_commutator,
    random_excited_set,
    sample_occupations,
    scaling_sweep,
    static_echo_refocus,
    thermal_register_state,
)
from holoreg.physical import TWO_PI, collective_rabi
from holoreg.register import RegisterState, occupation, product_state, reduced_density

from conftest import uniform_geom


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(eps1=0.5)
    with pytest.raises(ValueError):
        NoiseConfig(p=1.0)
    with pytest.raises(ValueError):
        NoiseConfig(temperature=0.0)
    with pytest.raises(ValueError):
        NoiseConfig(sigma_inh=-1.0)
    assert NoiseConfig().excitation_probability(TWO_PI * 5e9) == 0.0
    assert NoiseConfig(p=1e-3).excitation_probability(TWO_PI * 5e9) == 1e-3


def test_temperature_sets_boltzmann_factor():
    p = NoiseConfig(temperature=0.02).excitation_probability(TWO_PI * 5e9)
    # hbar omega / k_B T = 12.0 at 5 GHz, 20 mK
    assert p == pytest.approx(np.exp(-12.0), rel=0.01)


@pytest.mark.parametrize("p", [1e-5, 1e-3])
def test_thermal_register_mean(p):
    s = thermal_register_state(4, p)
    for i in range(4):
        assert occupation(s, f"m{i}") == pytest.approx(p, rel=1e-3)


def test_thermal_register_warns_and_rejects():
    with pytest.warns(UserWarning):
        thermal_register_state(2, 0.05)
    with pytest.raises(ValueError):
        thermal_register_state(2, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        thermal_register_state(select_register_modes(2), 1e-3)


def test_thermal_modes_uncorrelated(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = thermal_register_state(2, 0.2, cutoff=4)
    samples = sample_occupations(s, [0, 1], 20000, rng)
    assert samples.mean(axis=0) == pytest.approx([0.2, 0.2], abs=0.02)
    cov = np.cov(samples.T)[0, 1]
    assert abs(cov) < 0.01


def test_commutator_limits(rng):
    geom = uniform_geom(200, placement="uniform-random", seed=3)
    k1, k2 = TWO_PI * 3, TWO_PI * 5
    assert finite_polarization_commutator(geom, [], k1, k2) == pytest.approx(mode_overlap(geom, k2 - k1))
    assert finite_polarization_commutator(geom, range(200), k1, k1) == pytest.approx(-1.0)
    with pytest.raises(IndexError):
        finite_polarization_commutator(geom, [200], k1, k1)


def test_commutator_diagonal_is_one_minus_2p():
    p, vals = 1e-3, []
    geom = uniform_geom(100000)
    for seed in range(100):
        ex = random_excited_set(geom.n_spins, p, np.random.default_rng(seed))
        vals.append(finite_polarization_commutator(geom, ex, 0.0, 0.0).real)
    assert np.mean(vals) == pytest.approx(1 - 2 * p, abs=1e-4)


def _echo(n=1000, eps1=0.0, eps2=0.0, phase=0.0, sigma=5.0, seed=0):
    geom = uniform_geom(n, placement="uniform-random", seed=seed)
    det = np.random.default_rng(seed).normal(0, sigma, n)
    lay = select_register_modes(3, n_spins=n)
    return echo_error_injection(geom, lay, eps1, eps2, det, 1.0, phase)


def test_perfect_echo_deposits_nothing():
    g = _echo()
    assert g.k0 < 1e-20 and g.inhomogeneous < 1e-20
    assert np.all(g.register < 1e-20)


def test_echo_gain_invariant_under_drive_phase():
    a, b = _echo(eps2=0.03), _echo(eps2=0.03, phase=1.1)
    assert a.k0 == pytest.approx(b.k0, rel=1e-9)
    np.testing.assert_allclose(a.register, b.register, rtol=1e-9)


def test_echo_gain_scales_quadratically():
    g1, g2 = _echo(eps2=0.01), _echo(eps2=0.02)
    assert g2.k0 / g1.k0 == pytest.approx(4.0, rel=0.01)


def test_register_gain_per_pulse():
    eps = 0.03
    g = _echo(eps2=eps)
    # incoherent part: each spin contributes |c_q|^2 sin^2(pi eps / 2)
    for r in g.register[1:]:
        assert eps**2 / 3 < r < 3 * eps**2


def test_k0_gain_reference_value():
    assert expected_k0_gain(1000, 0.02) == pytest.approx(1000 * (np.pi * 0.01) ** 2)
    g = _echo(eps2=0.02, sigma=0.0)
    assert g.k0 == pytest.approx(expected_k0_gain(1000, 0.02), rel=0.01)


def test_echo_injection_checks_shape():
    geom = uniform_geom(10)
    with pytest.raises(ValueError):
        echo_error_injection(geom, select_register_modes(2), 0, 0.1, np.zeros(3))


def test_register_dephasing_channel():
    v = np.array([1, 1, 0]) / np.sqrt(2)
    s = product_state(1, 3, {"m0": np.outer(v, v.conj())})
    out = dephasing_channel(s, 1e3, 1e-3)
    assert abs(reduced_density(out, ["m0"])[0, 1]) == pytest.approx(0.5 * np.exp(-1.0))
    with pytest.raises(ValueError):
        dephasing_channel(s, -1.0, 1.0)
    with pytest.raises(TypeError):
        dephasing_channel("state", 1.0, 1.0)


def test_exact_dephasing_monte_carlo():
    geom = uniform_geom(16)
    basis = SectorBasis(16, 1)
    s0 = mode_qubit_state(basis, geom, 0.0, 1 / np.sqrt(2), 1 / np.sqrt(2))
    wave = spin_wave_vector(basis, geom, 0.0)
    rng = np.random.default_rng(5)
    coh = []
    for _ in range(2000):
        s = dephasing_channel(s0, 1e3, 1e-3, rng)
        coh.append(np.vdot(wave, s.amplitudes) * np.conj(s.amplitudes[0]))
    assert abs(np.mean(coh)) == pytest.approx(0.5 * np.exp(-1.0), abs=0.02)
    with pytest.raises(ValueError):
        dephasing_channel(s0, 1.0, 1.0)
    assert dephasing_channel(s0, 0.0, 1.0) is s0


def test_half_life_from_dipolar_broadening():
    assert coherence_half_life(DIPOLAR_BROADENING) == pytest.approx(2.2e-6, rel=0.01)
    with pytest.raises(ValueError):
        coherence_half_life(0.0)


def test_static_echo_refocus(device):
    n = 200
    geom = uniform_geom(n, rate=TWO_PI * 1e6)
    offsets = np.random.default_rng(2).normal(0, 5.0 / 1e-6, n)
    system = ExactSystem(geom, device, idle_detuning=1e3 * collective_rabi(geom), static_offsets=offsets)
    res = static_echo_refocus(system, TWO_PI * 3, 1e-6)
    assert res.fidelity > 0.99
    assert res.control_fidelity < 0.1
    assert res.sigma_t == pytest.approx(5.0, rel=0.1)


def test_sweep_rejects_bad_grids():
    with pytest.raises(ValueError):
        scaling_sweep("rabi-vs-N", grid=[4, 16, 64])
    with pytest.raises(ValueError):
        scaling_sweep("rabi-vs-N", grid=[4, 4, 16, 64])
    with pytest.raises(ValueError):
        scaling_sweep("rabi-vs-N", grid=[-1, 4, 16, 64])
    with pytest.raises(KeyError):
        scaling_sweep("nope")


def test_rabi_sweep_slope():
    r = scaling_sweep("rabi-vs-N")
    assert r.slope == pytest.approx(0.5, abs=1e-6)
    assert len(r.records()) == 4


def test_custom_experiment_power_law():
    exp = ScalingExperiment("cube", "x", lambda x, rng: x**3 * (1 + 0.01 * rng.normal()), "mean", 3.0, (1, 2, 4, 8), 5)
    r = scaling_sweep(exp, seed=1)
    assert r.slope == pytest.approx(3.0, abs=0.02)


def test_sweep_independent_of_jobs():
    grid = [100, 200, 400, 800]
    a = scaling_sweep("overlap-vs-N", grid=grid, shots=6, seed=4, jobs=1)
    b = scaling_sweep("overlap-vs-N", grid=grid, shots=6, seed=4, jobs=2)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.slope == b.slope
    assert set(EXPERIMENTS) == {"rabi-vs-N", "overlap-vs-N", "echo-gain-vs-eps"}
