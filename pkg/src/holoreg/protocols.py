"""Register programs and their lowering to pulse schedules or gate ops.

``compile`` produces a timed PulseSchedule for the exact engine. It keeps
a frame tracker: every qubit's |1> amplitude accumulates deterministic
phases (idle detuning, dispersive shifts, the -i of each resonant swap),
and whenever a qubit lands in the cavity or the CPB a virtual Z cancels
what it has picked up. ``lower`` produces GateOps for the register engine,
where swaps are ideal and no frame bookkeeping is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from . import bloch
from .modes import RegisterLayout, gradient_pulse_duration, gradient_pulse_params, mode_overlap
from .register import GateOp, HADAMARD, calibrate_conditional_phase
from .schedule import (
    CpbDrive,
    EchoPulse,
    FrameShift,
    GradientLimitError,
    GradientPulse,
    Measure,
    PulseSchedule,
    ResonanceWindow,
    ScheduleError,
    Wait,
)

PROGRAM_KINDS = ("prepare", "load", "write", "retrieve", "gate1", "cz", "read", "cool", "wait", "echo")
_ARITY = {"prepare": 1, "load": 1, "write": 1, "retrieve": 1, "gate1": 1, "cz": 2, "read": 1, "cool": 1}


@dataclass(frozen=True)
class ProgramOp:
    """One abstract register instruction.

    prepare q: rotate the CPB (axis, angle) to create qubit q there.
    load q: CPB -> cavity. write q: cavity -> q's mode. retrieve q: back.
    gate1 q: single-qubit gate via the CPB. cz a b: controlled-Z.
    read q: projective readout through the CPB. cool q: cool q's mode.
    wait: idle ``duration``. echo: Hahn pair with interval ``duration``.
    """

    kind: str
    qubits: tuple = ()
    axis: tuple = (0.0, 0.0, 1.0)
    angle: float = 0.0
    duration: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in PROGRAM_KINDS:
            raise ValueError(f"unknown program op {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(self.qubits))
        need = _ARITY.get(self.kind, 0)
        if len(self.qubits) != need:
            raise ValueError(f"{self.kind} takes {need} qubit(s), got {len(self.qubits)}")
        if self.kind == "cz" and self.qubits[0] == self.qubits[1]:
            raise ValueError("cz needs two distinct qubits")
        if self.duration < 0:
            raise ValueError("negative duration")
        if self.kind == "echo" and not self.duration > 0:
            raise ValueError("echo interval must be positive")


@dataclass(frozen=True)
class RegisterProgram:
    ops: tuple
    qubit_modes: tuple  # ((name, mode index), ...)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        pairs = tuple((str(n), int(m)) for n, m in dict(self.qubit_modes).items())
        object.__setattr__(self, "qubit_modes", pairs)
        modes = [m for _, m in pairs]
        if len(set(modes)) != len(modes):
            raise ValueError("qubit-to-mode mapping must be injective")
        known = set(self.mapping)
        for i, op in enumerate(self.ops):
            missing = [q for q in op.qubits if q not in known]
            if missing:
                raise ValueError(f"op {i} ({op.kind}) uses unmapped qubit(s) {missing}")

    @property
    def mapping(self) -> dict:
        return dict(self.qubit_modes)

    def check_layout(self, layout: RegisterLayout) -> None:
        for name, m in self.qubit_modes:
            if not 0 <= m < layout.n_modes:
                raise ValueError(f"qubit {name!r} maps to mode {m}, layout has {layout.n_modes}")


# --------------------------------------------------------------------------
# schedule building blocks


def _gradient(k: float, system, tau: Optional[float]) -> GradientPulse:
    c, L = system.constants, system.geom.length
    if tau is None:
        tau = gradient_pulse_duration(c, L, k, system.max_delta_B)
    params = gradient_pulse_params(c, L, k, tau)
    if abs(params.delta_B) > system.max_delta_B * (1 + 1e-12):
        raise GradientLimitError(
            f"(k) pulse with k = {k:.4g} rad/m in {tau:.3g} s needs |dB| = "
            f"{abs(params.delta_B):.4g} T > {system.max_delta_B:.4g} T"
        )
    return GradientPulse(delta_k=k, duration=tau, delta_B=params.delta_B)


def ramp_defaults(rate: float) -> tuple:
    """(span, duration) of the adiabatic window: +-20 G over 200 / G."""
    return 20.0 * rate, 200.0 / rate


def cavity_pull_by_cpb(system) -> float:
    """Dispersive shift of the cavity from the idle CPB (rad/s)."""
    g, d = system.device.g_cpb, system.cpb_idle_detuning
    return -g * g / d if g > 0 and d != 0 else 0.0


def cavity_pull_by_spins(system) -> float:
    """Dispersive shift of the cavity from the idle ensemble (rad/s)."""
    d = system.idle_detuning + system.static_offsets
    return -float(np.sum(np.abs(system.geom.couplings) ** 2 / d))


def spin_window(system, profile: str = "square", ramp_span: Optional[float] = None, ramp_time: Optional[float] = None) -> ResonanceWindow:
    """Bring the spins onto the dressed cavity frequency."""
    G = system.collective_rate
    centre = cavity_pull_by_cpb(system)
    if profile == "square":
        return ResonanceWindow(duration=np.pi / (2 * G), detuning=centre)
    if profile == "ramp":
        span, dur = ramp_defaults(G)
        return ResonanceWindow(
            duration=ramp_time or dur, profile="ramp", detuning=centre, ramp_span=ramp_span or span
        )
    raise ValueError(f"unknown window profile {profile!r}")


def swap_schedule(
    k: float,
    system,
    profile: str = "square",
    gradient_time: Optional[float] = None,
    ramp_span: Optional[float] = None,
    ramp_time: Optional[float] = None,
) -> PulseSchedule:
    """(-k) pulse, resonance window, (+k) pulse; k = 0 leaves only the window."""
    win = spin_window(system, profile, ramp_span, ramp_time)
    if k == 0:
        return PulseSchedule((win,))
    return PulseSchedule((_gradient(-k, system, gradient_time), win, _gradient(k, system, gradient_time)))


def cpb_window(system, phase: float = 0.0) -> ResonanceWindow:
    g = system.device.g_cpb
    if not g > 0:
        raise ValueError("CPB operations need g_cpb > 0")
    return ResonanceWindow(
        duration=np.pi / (2 * g), target="cpb", detuning=cavity_pull_by_spins(system), phase=phase
    )


def cz_segments(system) -> list:
    cal = calibrate_conditional_phase()
    g = system.device.g_cpb
    if not g > 0:
        raise ValueError("CPB operations need g_cpb > 0")
    t, delta = cal.segment_time(g), cal.detuning(g)
    segs = [ResonanceWindow(duration=t, target="cpb", detuning=delta, phase=p) for p in cal.phases]
    cav, cpb = cal.local_phases
    return segs + [FrameShift("cavity", cav), FrameShift("cpb", cpb)]


# --------------------------------------------------------------------------
# frame tracking


def _ramp_propagator(G: float, seg: ResonanceWindow, steps: int) -> np.ndarray:
    """2x2 (cavity, bright mode) propagator of a ramped window."""
    U = np.eye(2, dtype=complex)
    dt = seg.duration / steps
    for d in seg.ramp_span * (1.0 - 2.0 * (np.arange(steps) + 0.5) / steps):
        H = np.array([[0.0, G], [G, seg.detuning + d]])
        U = expm(-1j * H * dt) @ U
    return U


class FrameTracker:
    """Deterministic phase of each qubit's |1> amplitude along a schedule."""

    def __init__(self, system, layout: RegisterLayout, mapping: dict):
        self.system = system
        self.k_reg = dict(zip(mapping, layout.wavenumbers(system.geom.length)[list(mapping.values())]))
        self.loc: dict = {}
        self.phase: dict = {}
        self.shift = 0.0
        self.inverted = False
        geom = system.geom
        self._g2 = np.abs(geom.couplings) ** 2
        self._mean_offset = float(geom.weights @ system.static_offsets)
        self._tol = 1e-9 / geom.length

    # rates (energy of the qubit's |1> relative to vacuum) ------------
    def _cavity_rate(self, detunings: Optional[np.ndarray] = None) -> float:
        s = self.system
        rate = 0.0
        if not self.inverted:
            d = s.idle_detuning + s.static_offsets if detunings is None else detunings
            if np.all(np.abs(d) > 0):
                rate -= float(np.sum(self._g2 / d))
        rate += self._cpb_dispersive_on_cavity()
        return rate

    def _cpb_dispersive_on_cavity(self) -> float:
        s = self.system
        if s.device.g_cpb > 0 and s.cpb_idle_detuning != 0:
            return -s.device.g_cpb**2 / s.cpb_idle_detuning
        return 0.0

    def _cpb_rate(self) -> float:
        s = self.system
        rate = s.cpb_idle_detuning
        if s.device.g_cpb > 0 and s.cpb_idle_detuning != 0:
            rate += s.device.g_cpb**2 / s.cpb_idle_detuning
        return rate

    def _spin_rate(self, k_current: float, base: float) -> float:
        sign = -1.0 if self.inverted else 1.0
        rate = sign * (base + self._mean_offset)
        s = self.system
        if not self.inverted and base != 0:
            bright = abs(mode_overlap(s.geom, k_current)) ** 2
            rate += bright * s.collective_rate**2 / base
        return rate

    def _accrue(self, seg, spin_base: Optional[float] = None, cavity_rate=None, spin_ks=None):
        t = seg.duration
        for q, where in self.loc.items():
            if where == "cavity":
                r = self._cavity_rate() if cavity_rate is None else cavity_rate
            elif where == "cpb":
                r = self._cpb_rate()
            else:
                base = self.system.idle_detuning if spin_base is None else spin_base
                if spin_ks is not None:
                    # average the bright fraction over the sweep
                    r = np.mean([self._spin_rate(self.k_reg[q] + s, base) for s in spin_ks])
                else:
                    r = self._spin_rate(self.k_reg[q] + self.shift, base)
            self.phase[q] -= r * t

    # public API ------------------------------------------------------
    def place(self, qubit: str, where: str) -> None:
        self.loc[qubit] = where
        self.phase[qubit] = 0.0

    def holder(self, where: str) -> Optional[str]:
        for q, w in self.loc.items():
            if w == where:
                return q
        return None

    def spin_at_zero(self) -> Optional[str]:
        for q, w in self.loc.items():
            if w == "spins" and abs(self.k_reg[q] + self.shift) < self._tol:
                return q
        return None

    def correction(self, qubit: str) -> FrameShift:
        # advance() applies it to the tracked phase
        return FrameShift(self.loc[qubit], float(-self.phase[qubit]))

    def advance(self, seg) -> None:
        s = self.system
        if isinstance(seg, (Wait, Measure, CpbDrive)):
            self._accrue(seg)
        elif isinstance(seg, GradientPulse):
            slope = s.constants.m0 * seg.delta_B / (s.geom.length * s.constants.hbar)
            det = s.idle_detuning + s.static_offsets + slope * s.geom.positions
            ks = self.shift + seg.delta_k * (np.arange(16) + 0.5) / 16
            self._accrue(seg, cavity_rate=self._cavity_rate(det), spin_ks=ks)
            self.shift += seg.delta_k
            if abs(self.shift) < self._tol:
                self.shift = 0.0
        elif isinstance(seg, EchoPulse):
            self.inverted = not self.inverted
            self._accrue(seg)
        elif isinstance(seg, FrameShift):
            for q, w in self.loc.items():
                if w == seg.target:
                    self.phase[q] += seg.phase
        elif isinstance(seg, ResonanceWindow) and seg.target == "spins":
            self._spin_window(seg)
        elif isinstance(seg, ResonanceWindow):
            self._accrue(seg, cavity_rate=0.0)
        else:
            raise TypeError(f"cannot track {seg!r}")

    def _spin_window(self, seg: ResonanceWindow) -> None:
        if self.inverted:
            raise ScheduleError("spin window while the ensemble is inverted")
        s = self.system
        G = s.collective_rate
        if seg.profile == "square":
            if abs(seg.duration * G - np.pi / 2) > 1e-9:
                raise ScheduleError("only pi/2 square windows are tracked")
            to_spins = to_cav = -1j * np.exp(-1j * seg.detuning * seg.duration)
        else:
            U = _ramp_propagator(G, seg, s.ramp_steps)
            to_spins, to_cav = U[1, 0], U[0, 1]
        in_cav = self.holder("cavity")
        in_bright = self.spin_at_zero()
        movers = {in_cav, in_bright} - {None}
        others = {q: w for q, w in self.loc.items() if q not in movers}
        saved = self.loc
        self.loc = others
        self._accrue(seg, spin_base=seg.detuning)
        self.loc = saved
        if in_cav is not None:
            self.loc[in_cav] = "spins"
            self.k_reg[in_cav] = -self.shift
            self.phase[in_cav] += float(np.angle(to_spins))
        if in_bright is not None:
            self.loc[in_bright] = "cavity"
            self.phase[in_bright] += float(np.angle(to_cav))

    def cpb_swap(self, seg: ResonanceWindow) -> None:
        """Resonant pi/2 CPB window: exchange the cavity and CPB qubits."""
        in_cav, in_cpb = self.holder("cavity"), self.holder("cpb")
        others = {q: w for q, w in self.loc.items() if q not in (in_cav, in_cpb)}
        saved = self.loc
        self.loc = others
        self._accrue(seg)
        self.loc = saved
        common = -np.pi / 2 - seg.detuning * seg.duration
        if in_cav is not None:
            self.loc[in_cav] = "cpb"
            self.phase[in_cav] += common + seg.phase
        if in_cpb is not None:
            self.loc[in_cpb] = "cavity"
            self.phase[in_cpb] += common - seg.phase

    def cz_window(self, seg: ResonanceWindow) -> None:
        """Calibrated CZ segment: only the spin-induced shift of the photon is tracked."""
        self._accrue(seg, cavity_rate=cavity_pull_by_spins(self.system))
        # the CPB's own detuning is part of the calibration
        q = self.holder("cpb")
        if q is not None:
            self.phase[q] += self._cpb_rate() * seg.duration


@dataclass
class CompiledProgram:
    schedule: PulseSchedule
    phases: dict = field(default_factory=dict)
    locations: dict = field(default_factory=dict)


def compile_with_frames(
    program: RegisterProgram,
    layout: RegisterLayout,
    system,
    profile: str = "square",
    gradient_time: Optional[float] = None,
    initial: Optional[dict] = None,
) -> CompiledProgram:
    """Lower ``program`` to a PulseSchedule and report residual frames.

    ``initial`` maps qubits already present at t = 0 to 'cavity' or 'cpb'.
    """
    program.check_layout(layout)
    mapping = program.mapping
    kvals = layout.wavenumbers(system.geom.length)
    tr = FrameTracker(system, layout, mapping)
    for q, where in (initial or {}).items():
        if q not in mapping:
            raise ValueError(f"unknown qubit {q!r}")
        tr.place(q, where)
    out: list = []

    def emit(seg):
        tr.advance(seg)
        out.append(seg)

    def emit_cpb_swap(phase=0.0):
        seg = cpb_window(system, phase)
        tr.cpb_swap(seg)
        out.append(seg)

    def swap(q):
        for seg in swap_schedule(kvals[mapping[q]], system, profile, gradient_time):
            emit(seg)

    def settle(q):
        if tr.loc.get(q) in ("cavity", "cpb") and abs(tr.phase[q]) > 0:
            emit(tr.correction(q))

    def require(q, where):
        if tr.loc.get(q) != where:
            raise ScheduleError(f"qubit {q!r} is in {tr.loc.get(q)!r}, expected {where!r}")

    for i, op in enumerate(program.ops):
        qs = op.qubits
        if op.kind == "prepare":
            if tr.holder("cpb") is not None:
                raise ScheduleError(f"op {i}: CPB already holds {tr.holder('cpb')!r}")
            tr.place(qs[0], "cpb")
            emit(CpbDrive(*op.axis, op.angle))
        elif op.kind == "load":
            require(qs[0], "cpb")
            settle(qs[0])
            emit_cpb_swap()
            settle(qs[0])
        elif op.kind == "write":
            require(qs[0], "cavity")
            swap(qs[0])
        elif op.kind == "retrieve":
            require(qs[0], "spins")
            swap(qs[0])
            settle(qs[0])
        elif op.kind == "gate1":
            require(qs[0], "spins")
            swap(qs[0])
            emit_cpb_swap()
            settle(qs[0])
            emit(CpbDrive(*op.axis, op.angle))
            emit_cpb_swap()
            settle(qs[0])
            swap(qs[0])
        elif op.kind == "cz":
            a, b = qs
            require(a, "spins")
            require(b, "spins")
            swap(a)
            emit_cpb_swap()
            settle(a)
            swap(b)
            settle(b)
            for seg in cz_segments(system):
                if isinstance(seg, ResonanceWindow):
                    tr.cz_window(seg)
                    out.append(seg)
                else:
                    out.append(seg)
            settle(a)
            settle(b)
            swap(b)
            emit_cpb_swap()
            settle(a)
            swap(a)
        elif op.kind == "read":
            require(qs[0], "spins")
            swap(qs[0])
            emit_cpb_swap()
            settle(qs[0])
            emit(Measure("cpb", label=op.label or qs[0]))
            emit_cpb_swap()
            settle(qs[0])
            swap(qs[0])
        elif op.kind == "cool":
            if not system.device.kappa > 0:
                raise ScheduleError("cooling needs kappa > 0")
            swap(qs[0])
            emit(Wait(10.0 / system.device.kappa))
            swap(qs[0])
        elif op.kind == "wait":
            emit(Wait(op.duration))
        elif op.kind == "echo":
            T = op.duration
            for seg in (Wait(T), EchoPulse(), Wait(T), EchoPulse()):
                emit(seg)
    sched = PulseSchedule(tuple(out))
    if abs(sched.net_delta_k()) > 1e-9 / system.geom.length:
        raise ScheduleError("compiled schedule leaves a net wavenumber shift")
    return CompiledProgram(sched, dict(tr.phase), dict(tr.loc))


def compile(program: RegisterProgram, layout: RegisterLayout, system, **kw) -> PulseSchedule:
    return compile_with_frames(program, layout, system, **kw).schedule


def lower(program: RegisterProgram) -> list:
    """GateOps for the register engine."""
    m = program.mapping
    ops: list = []
    for op in program.ops:
        qs = [m[q] for q in op.qubits]
        if op.kind == "prepare":
            ops.append(GateOp("one_qubit", axis=op.axis, angle=op.angle))
        elif op.kind == "load":
            ops.append(GateOp("cpb_swap"))
        elif op.kind in ("write", "retrieve"):
            ops.append(GateOp("swap", (qs[0],)))
        elif op.kind == "gate1":
            ops += [
                GateOp("swap", (qs[0],)),
                GateOp("cpb_swap"),
                GateOp("one_qubit", axis=op.axis, angle=op.angle),
                GateOp("cpb_swap"),
                GateOp("swap", (qs[0],)),
            ]
        elif op.kind == "cz":
            ops.append(GateOp("two_qubit", tuple(qs)))
        elif op.kind == "read":
            ops.append(GateOp("read", (qs[0],), label=op.label or op.qubits[0]))
        elif op.kind == "cool":
            ops.append(GateOp("cool", (qs[0],)))
        elif op.kind == "wait":
            ops.append(GateOp("wait", duration=op.duration))
        elif op.kind == "echo":
            ops.append(GateOp("wait", duration=2 * op.duration))
    return ops


def bell_program(q0: int = 0, q1: int = 1, read: bool = True) -> RegisterProgram:
    """Two |+> qubits stored, CZ, then H on the second: (|00> + |11>)/sqrt 2."""
    axis, angle = HADAMARD
    ops = [
        ProgramOp("prepare", ("a",), axis=axis, angle=angle),
        ProgramOp("load", ("a",)),
        ProgramOp("write", ("a",)),
        ProgramOp("prepare", ("b",), axis=axis, angle=angle),
        ProgramOp("load", ("b",)),
        ProgramOp("write", ("b",)),
        ProgramOp("cz", ("a", "b")),
        ProgramOp("gate1", ("b",), axis=axis, angle=angle),
    ]
    if read:
        ops += [ProgramOp("read", ("a",)), ProgramOp("read", ("b",))]
    return RegisterProgram(tuple(ops), (("a", q0), ("b", q1)))


# --------------------------------------------------------------------------
# echo maintenance


def echo_maintenance(
    schedule: PulseSchedule,
    interval: float,
    eps1: float = 0.0,
    eps2: float = 0.0,
    start: Optional[float] = None,
    phase: float = 0.0,
) -> PulseSchedule:
    """Insert Hahn pairs (pulses at T and 2T) into idle time.

    Without ``start``, every Wait of at least 2T is tiled with pairs. With
    ``start``, one pair is placed at start + T and start + 2T; the interval
    must be covered by Wait segments.
    """
    if not interval > 0:
        raise ValueError("echo interval must be positive")
    T = interval
    pair = [Wait(T), EchoPulse(eps1, phase), Wait(T), EchoPulse(eps2, phase)]
    if start is None:
        out = []
        for seg in schedule:
            if isinstance(seg, Wait) and seg.duration >= 2 * T * (1 - 1e-12):
                n = int(np.floor(seg.duration / (2 * T) + 1e-9))
                out += pair * n
                rest = seg.duration - 2 * T * n
                if rest > 1e-15 * seg.duration:
                    out.append(Wait(rest))
            else:
                out.append(seg)
        return PulseSchedule(tuple(out))
    t0, t1 = start, start + 2 * T
    out, t = [], 0.0
    placed = False
    for seg in schedule:
        a, b = t, t + seg.duration
        t = b
        if b <= t0 or a >= t1 or placed and a >= t1:
            out.append(seg)
            continue
        if not isinstance(seg, Wait):
            raise ScheduleError(f"echo pair at {t0:.3g}..{t1:.3g} s overlaps an active {seg.kind} segment")
        if placed:
            if b > t1:
                out.append(Wait(b - t1))
            continue
        if b < t1 - 1e-15:
            # the Wait must cover the whole pair
            raise ScheduleError(f"echo pair at {t0:.3g}..{t1:.3g} s does not fit in idle time")
        if t0 > a:
            out.append(Wait(t0 - a))
        out += pair
        if b > t1:
            out.append(Wait(b - t1))
        placed = True
    if not placed:
        raise ScheduleError("echo start lies beyond the end of the schedule")
    return PulseSchedule(tuple(out))


# --------------------------------------------------------------------------
# classical magnetisation demo


@dataclass
class ClassicalTrace:
    labels: list
    signal: np.ndarray  # |<b(0)>| after each step
    amplitudes: dict  # final <b(k)> for probed winding numbers


def classical_echo_demo(
    geom,
    theta: float,
    pattern: Sequence,
    probe_windings: Sequence[int] = (),
    samples: int = 8,
) -> ClassicalTrace:
    """Tilt / gradient sequence on classical Bloch vectors.

    ``pattern`` items are ("tilt",), ("tilt", angle) or ("gradient", dk).
    A tilt uses the cavity-shaped drive profile, so the k = 0 amplitude is
    sqrt(N) sin(theta)/2 for a uniform ensemble. Gradient pulses are
    sampled ``samples`` times so the trace shows the signal vanishing and
    reviving.
    """
    if abs(theta) > 0.1:
        raise ValueError("the classical demo assumes small tilts, |theta| <= 0.1 rad")
    s = bloch.polarized(geom.n_spins)
    area, axis_phase = bloch.drive_profile(geom)
    c0 = bloch.k_mode(geom, 0.0)
    labels, signal = ["start"], [abs(bloch.mode_amplitude(s, c0))]
    for step in pattern:
        kind = step[0]
        if kind == "tilt":
            angle = step[1] if len(step) > 1 else theta
            if abs(angle) > 0.1:
                raise ValueError("tilt angle above 0.1 rad")
            s = bloch.rotate(s, angle * area, axis_phase)
            labels.append("tilt")
            signal.append(abs(bloch.mode_amplitude(s, c0)))
        elif kind == "gradient":
            dk = float(step[1])
            for j in range(samples):
                s = bloch.precess(s, -dk / samples * geom.positions)
                labels.append(f"gradient {j + 1}/{samples}")
                signal.append(abs(bloch.mode_amplitude(s, c0)))
        else:
            raise ValueError(f"unknown classical step {kind!r}")
    amps = {
        int(w): bloch.mode_amplitude(s, bloch.k_mode(geom, 2 * np.pi * w / geom.length))
        for w in probe_windings
    }
    return ClassicalTrace(labels, np.array(signal), amps)


@dataclass
class MultimodeDemo:
    windings: tuple
    revival: dict  # winding -> retrieved |<b(0)>| / freshly tilted |<b(0)>|
    leakage: dict  # winding -> other excitation's share of the readout
    bound: dict  # winding -> |M| between the retrieved and the parked mode
    trace: ClassicalTrace


def classical_multimode_demo(geom, theta: float = 0.05, windings: Sequence[int] = (6, 3), samples: int = 8) -> MultimodeDemo:
    """Park two classical tilts at windings (wa, wb), wa > wb, then read each back.

    Sequence: tilt A, gradient (wa - wb), tilt B, gradient wb; retrieve B
    with -wb and then A with -(wa - wb). Cross-leakage is measured from
    runs with only one of the two tilts applied.
    """
    wa, wb = (int(w) for w in sorted(windings, reverse=True))
    if not wa > wb > 0:
        raise ValueError("need two distinct positive winding numbers")
    step = 2 * np.pi / geom.length

    def run(a, b):
        pattern = [
            ("tilt", a),
            ("gradient", (wa - wb) * step),
            ("tilt", b),
            ("gradient", wb * step),
            ("gradient", -wb * step),
            ("gradient", -(wa - wb) * step),
        ]
        return classical_echo_demo(geom, theta, pattern, samples=samples)

    both, only_a, only_b = run(theta, theta), run(theta, 0.0), run(0.0, theta)
    ref = only_a.signal[1]
    read_b = 2 + 3 * samples  # end of the third gradient
    read_a = read_b + samples
    cross = abs(mode_overlap(geom, (wa - wb) * step))
    return MultimodeDemo(
        windings=(wa, wb),
        revival={wb: float(both.signal[read_b] / ref), wa: float(both.signal[read_a] / ref)},
        leakage={wb: float(only_a.signal[read_b] / ref), wa: float(only_b.signal[read_a] / ref)},
        bound={wb: cross, wa: cross},
        trace=both,
    )
