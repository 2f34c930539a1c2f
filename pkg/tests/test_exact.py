import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from math import comb

from holoreg.exact import (
    ExactSystem,
    SectorBasis,
    SectorState,
    TruncationError,
    apply_cpb_unitary,
    apply_frame_shift,
    apply_perfect_echo,
    block_hamiltonian,
    bosonic_two_excitation_trace,
    cavity_decay_check,
    cavity_population,
    cavity_qubit_state,
    cpb_qubit_state,
    cpb_rotation,
    energy,
    evolve,
    fit_exchange_frequency,
    fock_state,
    mode_occupation,
    mode_qubit_state,
    propagate,
    qubit_fidelity,
    segment_terms,
    spin_wave_vector,
    two_excitation_cavity_trace,
    vacuum_rabi_trace,
    vacuum_state,
)
from holoreg.modes import select_register_modes
from holoreg.physical import TWO_PI, DeviceParams, collective_rabi
from holoreg.protocols import swap_schedule
from holoreg.schedule import (
    CpbDrive,
    EchoPulse,
    GradientLimitError,
    GradientPulse,
    Measure,
    PulseSchedule,
    ResonanceWindow,
    Wait,
)

from conftest import uniform_geom


@pytest.mark.parametrize("n,m", [(1, 1), (5, 1), (5, 2), (30, 2)])
def test_basis_dimension(n, m):
    b = SectorBasis(n, m)
    # photons + cpb + spins, total excitations <= m; the CPB holds at most one
    expected = 1 + (n + 2)
    if m == 2:
        expected += comb(n, 2) + n + n + 1 + 1  # spins pairs, photon+spin, cpb+spin, 2 photons, photon+cpb
    assert b.dim == expected
    assert b.index_of(0, 0) == 0


def test_basis_rejects_bad_sizes():
    with pytest.raises(ValueError):
        SectorBasis(4, 3)
    with pytest.raises(ValueError):
        SectorBasis(0, 1)
    with pytest.raises(KeyError):
        SectorBasis(4, 1).index_of(1, 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(1, 2), st.floats(-5, 5), st.floats(-5, 5))
def test_block_hamiltonian_is_hermitian(n, m, det, cpb_det):
    geom = uniform_geom(n, rate=1.0, placement="uniform-random", seed=n)
    basis = SectorBasis(n, m)
    from holoreg.exact import HamiltonianTerms

    terms = HamiltonianTerms(np.full(n, det), cpb_det, 0.3 + 0.2j, True, 0.0)
    for blk in range(m + 1):
        H = block_hamiltonian(basis, blk, terms, geom).toarray()
        np.testing.assert_allclose(H, H.conj().T, atol=1e-12)


def test_norm_and_energy_conserved(bare_device):
    geom = uniform_geom(12, placement="uniform-random", seed=1)
    system = ExactSystem(geom, bare_device, idle_detuning=0.3 * collective_rabi(geom))
    basis = SectorBasis(12, 2)
    amps = np.random.default_rng(0).normal(size=basis.dim) + 0j
    state = SectorState(basis, amps / np.linalg.norm(amps))
    (dt, terms), = segment_terms(Wait(1e-6), system)
    e0 = energy(state, terms, geom)
    out = propagate(state, terms, 3e-6, geom)
    assert out.norm == pytest.approx(1.0, abs=1e-10)
    assert energy(out, terms, geom) == pytest.approx(e0, rel=1e-8)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_rabi_frequency_is_sqrt_n_g(n):
    geom = uniform_geom(n, rate=1.0 * np.sqrt(n))
    G = collective_rabi(geom)
    t = np.linspace(0, 10 * np.pi / G, 801)
    omega = fit_exchange_frequency(t, vacuum_rabi_trace(geom, t))
    assert omega == pytest.approx(np.sqrt(n), rel=1e-6)


def test_rabi_with_inhomogeneous_couplings_uses_rms():
    geom = uniform_geom(1, rate=1.0)
    from holoreg.physical import EnsembleSpec, build_ensemble

    g = build_ensemble(EnsembleSpec(32, 1.0, profile="cavity-mode", g_bar=0.5))
    t = np.linspace(0, 20 * np.pi / collective_rabi(g), 1601)
    assert fit_exchange_frequency(t, vacuum_rabi_trace(g, t)) == pytest.approx(np.sqrt(32) * 0.5, rel=1e-6)
    assert geom.n_spins == 1


def test_bright_transfer_is_complete(bare_device):
    geom = uniform_geom(16)
    system = ExactSystem(geom, bare_device)
    basis = SectorBasis(16, 1)
    out = evolve(fock_state(basis, photons=1), PulseSchedule((ResonanceWindow(np.pi / (2 * system.collective_rate)),)), system)
    assert mode_occupation(out, geom, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert cavity_population(out) < 1e-12


def test_cavity_decay_matches_exponential():
    geom = uniform_geom(8)
    dev = DeviceParams(omega_c=TWO_PI * 5e9, L=1.0, kappa=TWO_PI * 250e3)
    t = 1e-6
    survive = cavity_decay_check(geom, dev, t)
    assert survive == pytest.approx(np.exp(-dev.kappa * t), rel=1e-6)


def test_kappa_tracks_norm_deficit():
    geom = uniform_geom(8)
    dev = DeviceParams(omega_c=TWO_PI * 5e9, L=1.0, kappa=TWO_PI * 1e6)
    system = ExactSystem(geom, dev, idle_detuning=1e9)
    s = evolve(cavity_qubit_state(SectorBasis(8, 1), 0.6, 0.8), PulseSchedule((Wait(1e-6),)), system)
    assert s.norm + s.norm_deficit == pytest.approx(1.0, abs=1e-9)
    assert s.norm_deficit > 0.5


def test_two_excitation_matches_bosons_at_short_times():
    n = 100
    geom = uniform_geom(n)
    G = collective_rabi(geom)
    t = np.linspace(0, 2 * np.pi / G, 401)
    exact = two_excitation_cavity_trace(geom, t)
    boson = bosonic_two_excitation_trace(G, t)
    assert exact[0] == pytest.approx(2.0)
    dev = np.abs(exact - boson).max()
    assert 0 < dev < 10 / n


def test_two_excitation_deviation_shrinks_with_n():
    devs = []
    for n in (20, 80):
        geom = uniform_geom(n)
        G = collective_rabi(geom)
        t = np.linspace(0, np.pi / G, 201)
        devs.append(np.abs(two_excitation_cavity_trace(geom, t) - bosonic_two_excitation_trace(G, t)).max())
    assert devs[1] < devs[0] / 2


def test_gradient_moves_spin_wave(bare_device):
    geom = uniform_geom(32)
    system = ExactSystem(geom, bare_device)
    basis = SectorBasis(32, 1)
    k3 = TWO_PI * 3
    state = mode_qubit_state(basis, geom, 0.0)
    tau = 2e-7
    out = evolve(state, PulseSchedule((GradientPulse(k3, tau),)), system)
    assert mode_occupation(out, geom, k3) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(GradientLimitError):
        evolve(state, PulseSchedule((GradientPulse(k3, 1e-15),)), system)


def test_swap_store_retrieve_roundtrip(bare_device):
    geom = uniform_geom(32)
    system = ExactSystem(geom, bare_device, idle_detuning=1e3 * collective_rabi(geom))
    lay = select_register_modes(3, n_spins=32)
    k = lay.wavenumbers(1.0)[1]
    basis = SectorBasis(32, 1)
    s0 = mode_qubit_state(basis, geom, k, 0.6, 0.8)
    stored_then_read = evolve(s0, swap_schedule(k, system), system)
    # the qubit ends in the cavity; up to a frame phase on |1>
    a0, a1 = stored_then_read.amplitudes[0], stored_then_read.amplitudes[basis.index_of(1, 0)]
    assert abs(a0) ** 2 == pytest.approx(0.36, abs=1e-4)
    assert abs(a1) ** 2 == pytest.approx(0.64, abs=1e-4)


def test_cpb_rotation_is_unitary_and_pi_flips():
    U = cpb_rotation(1, 0, 0, np.pi)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-14)
    assert abs(U[1, 0]) == pytest.approx(1.0)
    basis = SectorBasis(4, 1)
    s = apply_cpb_unitary(vacuum_state(basis), U)
    assert abs(s.amplitudes[basis.index_of(0, 1)]) == pytest.approx(1.0)


def test_cpb_unitary_truncation_raises():
    basis = SectorBasis(3, 1)
    s = fock_state(basis, photons=1)
    with pytest.raises(TruncationError):
        apply_cpb_unitary(s, cpb_rotation(1, 0, 0, np.pi))


def test_frame_shift_and_qubit_fidelity():
    basis = SectorBasis(4, 1)
    s = cavity_qubit_state(basis, 1, 1)
    shifted = apply_frame_shift(s, "cavity", np.pi)
    assert qubit_fidelity(shifted, 1, -1) == pytest.approx(1.0)
    assert qubit_fidelity(shifted, 1, 1) == pytest.approx(0.0, abs=1e-14)
    c = cpb_qubit_state(basis, 0, 1)
    assert qubit_fidelity(c, 0, 1, target="cpb") == pytest.approx(1.0)


def test_perfect_echo_pair_refocuses_static_inhomogeneity(bare_device):
    n = 24
    geom = uniform_geom(n)
    offsets = np.random.default_rng(4).normal(0, 5e6, n)
    system = ExactSystem(geom, bare_device, static_offsets=offsets)
    basis = SectorBasis(n, 1)
    s0 = mode_qubit_state(basis, geom, TWO_PI * 3, 1, 1)
    T = 1e-6
    sched = PulseSchedule((Wait(T), EchoPulse(), Wait(T), EchoPulse()))
    out = evolve(s0, sched, system)
    assert not out.inverted
    assert abs(np.vdot(s0.amplitudes, out.amplitudes)) ** 2 > 1 - 1e-4
    half = evolve(s0, PulseSchedule((Wait(T), EchoPulse())), system)
    assert half.inverted
    with pytest.raises(ValueError):
        mode_occupation(half, geom, 0.0)
    with pytest.raises(ValueError):
        evolve(s0, PulseSchedule((EchoPulse(error=0.1),)), system)


def test_echo_pair_with_phase_is_identity_on_populations():
    basis = SectorBasis(5, 1)
    geom = uniform_geom(5)
    s = mode_qubit_state(basis, geom, 0.0, 0.6, 0.8)
    twice = apply_perfect_echo(apply_perfect_echo(s, 0.3), 0.3)
    np.testing.assert_allclose(np.abs(twice.amplitudes), np.abs(s.amplitudes))


def test_measure_logs_probability(device):
    geom = uniform_geom(4)
    system = ExactSystem(geom, device)
    basis = SectorBasis(4, 1)
    log = []
    evolve(vacuum_state(basis), PulseSchedule((CpbDrive(1, 0, 0, np.pi / 2), Measure("cpb", "x"))), system, log)
    assert log[0]["p_excited"] == pytest.approx(0.5, abs=1e-12)
    assert log[0]["label"] == "x"


def test_evolve_rejects_unnormalised(bare_device):
    geom = uniform_geom(3)
    basis = SectorBasis(3, 1)
    bad = SectorState(basis, 2 * vacuum_state(basis).amplitudes)
    with pytest.raises(ValueError):
        evolve(bad, PulseSchedule(()), ExactSystem(geom, bare_device))


def test_spin_wave_vector_normalised():
    geom = uniform_geom(7, placement="uniform-random", seed=3)
    v = spin_wave_vector(SectorBasis(7, 1), geom, TWO_PI * 2)
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_static_offsets_shape_checked(bare_device):
    with pytest.raises(ValueError):
        ExactSystem(uniform_geom(4), bare_device, static_offsets=np.zeros(3))
