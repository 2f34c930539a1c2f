import numpy as np
import pytest

from holoreg.exact import (
    ExactSystem,
    SectorBasis,
    cavity_population,
    cavity_qubit_state,
    cpb_qubit_state,
    evolve,
    mode_occupation,
    qubit_fidelity,
)
from holoreg.modes import select_register_modes
from holoreg.physical import TWO_PI, collective_rabi
from holoreg.protocols import (
    ProgramOp,
    RegisterProgram,
    bell_program,
    classical_echo_demo,
    classical_multimode_demo,
    compile,
    compile_with_frames,
    echo_maintenance,
    lower,
    swap_schedule,
)
from holoreg.register import RegisterHardware, RegisterState, fidelity_with, qubit_ket, run_program
from holoreg.schedule import EchoPulse, GradientPulse, PulseSchedule, ScheduleError, Wait

from conftest import uniform_geom


@pytest.fixture
def system(device):
    geom = uniform_geom(32)
    return ExactSystem(geom, device, idle_detuning=1e3 * collective_rabi(geom))


@pytest.fixture
def layout():
    return select_register_modes(3, n_spins=32)


def test_program_validation():
    with pytest.raises(ValueError):
        ProgramOp("fly")
    with pytest.raises(ValueError):
        ProgramOp("cz", ("a",))
    with pytest.raises(ValueError):
        ProgramOp("cz", ("a", "a"))
    with pytest.raises(ValueError):
        ProgramOp("echo")
    with pytest.raises(ValueError):
        RegisterProgram([ProgramOp("write", ("x",))], {"q": 0})
    with pytest.raises(ValueError):
        RegisterProgram([], (("a", 1), ("b", 1)))


def test_layout_check(system):
    prog = RegisterProgram([ProgramOp("write", ("q",))], {"q": 5})
    with pytest.raises(ValueError):
        compile(prog, select_register_modes(3), system, initial={"q": "cavity"})


def test_swap_schedule_shape(system):
    s = swap_schedule(TWO_PI * 3, system)
    assert [seg.kind for seg in s] == ["gradient", "window", "gradient"]
    assert s.net_delta_k() == pytest.approx(0.0)
    assert len(swap_schedule(0.0, system)) == 1


def test_store_and_retrieve_exact(system, layout):
    a, b = 0.6, 0.8j
    prog = RegisterProgram([ProgramOp("write", ("q",)), ProgramOp("retrieve", ("q",))], {"q": 1})
    comp = compile_with_frames(prog, layout, system, initial={"q": "cavity"})
    assert comp.locations["q"] == "cavity"
    s0 = cavity_qubit_state(SectorBasis(32, 1), a, b)
    mid = evolve(s0, compile(RegisterProgram(prog.ops[:1], {"q": 1}), layout, system, initial={"q": "cavity"}), system)
    assert mode_occupation(mid, system.geom, TWO_PI * 3) == pytest.approx(0.64, abs=1e-3)
    assert cavity_population(mid) < 1e-3
    end = evolve(s0, comp.schedule, system)
    assert qubit_fidelity(end, a, b) > 0.999


def test_compile_rejects_wrong_location(system, layout):
    prog = RegisterProgram([ProgramOp("retrieve", ("q",))], {"q": 1})
    with pytest.raises(ScheduleError):
        compile(prog, layout, system, initial={"q": "cavity"})
    prog = RegisterProgram([ProgramOp("prepare", ("a",)), ProgramOp("prepare", ("b",))], {"a": 0, "b": 1})
    with pytest.raises(ScheduleError):
        compile(prog, layout, system)


def test_load_from_cpb(system, layout):
    prog = RegisterProgram([ProgramOp("load", ("q",))], {"q": 0})
    comp = compile_with_frames(prog, layout, system, initial={"q": "cpb"})
    s = evolve(cpb_qubit_state(SectorBasis(32, 1), 0.6, 0.8), comp.schedule, system)
    assert qubit_fidelity(s, 0.6, 0.8, "cavity") > 0.999


def test_cool_needs_kappa(system, layout):
    prog = RegisterProgram([ProgramOp("cool", ("q",))], {"q": 1})
    with pytest.raises(ScheduleError):
        compile(prog, layout, system)


def test_bell_program_lowered_on_register_engine():
    prog = bell_program(read=False)
    ops = lower(prog)
    hw = RegisterHardware(g_cpb=TWO_PI * 20e6, collective_rate=TWO_PI * 6.3e6)
    res = run_program(RegisterState(3), ops, hw)
    bell = qubit_ket(["m0", "m1"], {(0, 0): 1, (1, 1): 1}, (3, 3))
    assert fidelity_with(res.state, ["m0", "m1"], bell) > 0.995


def test_lower_echo_is_idle():
    prog = RegisterProgram([ProgramOp("echo", duration=1e-6)], {})
    (op,) = lower(prog)
    assert op.kind == "wait" and op.duration == pytest.approx(2e-6)


def test_echo_maintenance_tiles_waits():
    s = PulseSchedule((Wait(5.0), GradientPulse(1.0, 1e-7, 1e-4)))
    out = echo_maintenance(s, 1.0)
    assert sum(isinstance(x, EchoPulse) for x in out) == 4
    assert out.duration == pytest.approx(s.duration)


def test_echo_maintenance_at_start():
    s = PulseSchedule((Wait(1.0), Wait(5.0)))
    out = echo_maintenance(s, 1.0, start=2.0)
    assert out.duration == pytest.approx(6.0)
    pulses = [i for i, x in enumerate(out) if isinstance(x, EchoPulse)]
    assert len(pulses) == 2
    with pytest.raises(ScheduleError):
        echo_maintenance(PulseSchedule((Wait(1.0), GradientPulse(1.0, 1.0, 1e-4), Wait(1.0))), 0.5, start=0.5)
    with pytest.raises(ScheduleError):
        echo_maintenance(s, 1.0, start=10.0)
    with pytest.raises(ValueError):
        echo_maintenance(s, 0.0)


def test_classical_tilt_amplitude():
    geom = uniform_geom(400)
    tr = classical_echo_demo(geom, 0.05, [("tilt",)])
    assert tr.signal[1] == pytest.approx(np.sqrt(400) * np.sin(0.05) / 2, rel=1e-9)
    with pytest.raises(ValueError):
        classical_echo_demo(geom, 0.5, [("tilt",)])
    with pytest.raises(ValueError):
        classical_echo_demo(geom, 0.05, [("twist",)])


def test_classical_gradient_hides_and_revives():
    geom = uniform_geom(400)
    k = TWO_PI * 3
    tr = classical_echo_demo(geom, 0.05, [("tilt",), ("gradient", k), ("gradient", -k)], probe_windings=(3,))
    mid = 1 + 8
    assert tr.signal[mid] < 1e-9 * tr.signal[1]
    assert tr.signal[-1] == pytest.approx(tr.signal[1], rel=1e-12)


def test_classical_multimode_revival():
    demo = classical_multimode_demo(uniform_geom(1000), 0.05, (6, 3))
    for w in demo.windings:
        assert demo.revival[w] >= 0.99
        assert demo.leakage[w] <= demo.bound[w] + 1e-9
    with pytest.raises(ValueError):
        classical_multimode_demo(uniform_geom(100), 0.05, (3, 3))
