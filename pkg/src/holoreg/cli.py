"""Command line entry point: ``holoreg overlap|simulate|sweep|validate``.

Exit codes: 0 success, 1 the simulation itself failed, 2 the config (or a
report handed to ``validate``) is invalid.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .exact import (
    ExactSystem,
    SectorBasis,
    cavity_population,
    cavity_qubit_state,
    evolve,
    mode_occupation,
    qubit_fidelity,
    vacuum_state,
)
from .modes import (
    centered_overlap,
    continuum_overlap,
    gram_matrix,
    layout_for_geometry,
    mode_vector,
    select_register_modes,
)
from .noise import coherence_half_life, scaling_sweep, static_echo_refocus, thermal_register_state
from .physical import build_ensemble, collective_rabi, EnsembleSpec
from .protocols import (
    ProgramOp,
    RegisterProgram,
    bell_program,
    classical_multimode_demo,
    compile_with_frames,
    lower,
)
from .register import (
    CZ,
    GateOp,
    RegisterHardware,
    RegisterState,
    cpb_cavity_cz_fidelity,
    fidelity_with,
    mode_name,
    occupation,
    physical_occupation,
    process_fidelity,
    product_state,
    program_channel,
    qubit_ket,
    run_program,
)
from .report import SimReport, dumps, tables_to_csv, validate_report, write_atomic

log = logging.getLogger("holoreg")

EXIT_OK, EXIT_SIM, EXIT_CONFIG = 0, 1, 2


# --------------------------------------------------------------------------
# shared setup


class Setup:
    """Objects every command derives from a validated config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.geom = build_ensemble(cfg.ensemble, seed=cfg.ensemble_seed)
        n = self.geom.n_spins
        lay = cfg.layout
        # aliasing only matters on a regular lattice
        self.layout = select_register_modes(
            lay.count, lay.scheme, n_spins=n if cfg.ensemble.placement == "grid" else None, crosstalk_budget=1.0
        )
        discrete = layout_for_geometry(self.layout, self.geom) if max(self.layout.winding) < n / 2 else None
        self.discrete_gram = None if discrete is None else np.asarray(discrete.gram)
        off = 0.0
        if self.discrete_gram is not None and lay.count > 1:
            off = float(np.abs(self.discrete_gram - np.eye(lay.count)).max())
        self.discrete_crosstalk = off
        self.rate = collective_rabi(self.geom)

    def register_gram(self):
        g = self.discrete_gram
        if g is None or self.discrete_crosstalk < 1e-12:
            return None
        return g

    def exact_system(self, static_offsets=None) -> ExactSystem:
        e = self.cfg.engine
        return ExactSystem(
            self.geom,
            self.cfg.device,
            idle_detuning=e.idle_factor * self.rate,
            static_offsets=static_offsets,
            ramp_steps=e.ramp_steps,
        )

    def hardware(self, **kw) -> RegisterHardware:
        dev = self.cfg.device
        g = dev.g_cpb if dev.g_cpb > 0 else self.rate
        return RegisterHardware(
            g_cpb=g, kappa=dev.kappa, collective_rate=self.rate, cpb_t1=dev.cpb_t1, cpb_t2=dev.cpb_t2, **kw
        )


def _wind(setup: Setup) -> list:
    return [int(round(w)) for w in setup.layout.winding]


def _schedule_log(schedule) -> list:
    return [{"index": i, "segment": line} for i, line in enumerate(schedule.to_text().splitlines())]


def _base_report(cfg: ExperimentConfig) -> SimReport:
    return SimReport(name=cfg.name, command=cfg.command, config=cfg.to_dict())


# --------------------------------------------------------------------------
# overlap


def cmd_overlap(cfg: ExperimentConfig) -> SimReport:
    rep = _base_report(cfg)
    ov = cfg.overlap
    dw = np.arange(ov.delta_w_min, ov.delta_w_max + 0.5 * ov.delta_w_step, ov.delta_w_step)
    geom = build_ensemble(
        EnsembleSpec(ov.n_spins, cfg.ensemble.length, ov.profile, ov.placement), seed=cfg.ensemble_seed
    )
    step = 2 * np.pi / geom.length
    cont = continuum_overlap(dw)
    disc = centered_overlap(geom, dw * step)
    rep.tables["overlap"] = [
        {"delta_w": float(x), "continuum": float(c), "discrete_re": float(d.real), "discrete_im": float(d.imag), "abs_error": float(abs(d - c))}
        for x, c, d in zip(dw, cont, disc)
    ]
    rep.add_trace("continuum_overlap", dw, cont, "delta_w", "M")
    rep.add_trace("discrete_overlap_abs", dw, np.abs(disc), "delta_w", "|M|")

    try:
        setup = Setup(cfg)
        lay = select_register_modes(cfg.layout.count, cfg.layout.scheme, crosstalk_budget=cfg.layout.crosstalk_budget)
    except ValueError as e:
        raise ConfigError(f"invalid layout: {e}") from None
    G = np.asarray(lay.gram)
    ks = lay.wavenumbers(setup.geom.length)
    Gd = gram_matrix(setup.geom, ks)
    rep.tables["gram"] = [
        {"i": i, "j": j, "w_i": lay.winding[i], "w_j": lay.winding[j], "continuum": float(G[i, j].real), "discrete_abs": float(abs(Gd[i, j]))}
        for i in range(lay.n_modes)
        for j in range(lay.n_modes)
    ]
    offd = ~np.eye(lay.n_modes, dtype=bool)
    at2 = np.isclose(dw, 2.0)
    rep.results = {
        "winding_numbers": list(lay.winding),
        "layout": lay.to_dict(),
        "continuum_gram_max_offdiag": float(np.abs(G - np.eye(lay.n_modes)).max()),
        "discrete_gram_max_offdiag": float(np.abs(Gd[offd]).max()) if lay.n_modes > 1 else 0.0,
        "max_abs_error": float(np.abs(disc - cont).max()),
        "M_at_2": float(cont[at2][0]) if at2.any() else None,
        "discrete_M_at_2": float(disc[at2][0].real) if at2.any() else None,
        "overlap_n_spins": ov.n_spins,
    }
    return rep


# --------------------------------------------------------------------------
# simulate


def _store_retrieve(setup: Setup, rep: SimReport) -> None:
    cfg = setup.cfg
    p = cfg.program
    if not 0 <= p.mode < setup.layout.n_modes:
        raise ConfigError(f"program.mode {p.mode} outside the {setup.layout.n_modes}-mode layout")
    norm = np.sqrt(abs(p.alpha) ** 2 + abs(p.beta) ** 2)
    a, b = p.alpha / norm, p.beta / norm
    wind = _wind(setup)
    store = [ProgramOp("write", ("q",))]
    full = store + ([ProgramOp("wait", duration=p.hold)] if p.hold > 0 else []) + [ProgramOp("retrieve", ("q",))]
    if cfg.engine.kind == "exact":
        system = setup.exact_system()
        basis = SectorBasis(setup.geom.n_spins, cfg.engine.max_excitations)
        ks = setup.layout.wavenumbers(setup.geom.length)
        s0 = cavity_qubit_state(basis, a, b)
        c_store = compile_with_frames(RegisterProgram(store, {"q": p.mode}), setup.layout, system, profile=cfg.engine.window, initial={"q": "cavity"})
        c_full = compile_with_frames(RegisterProgram(full, {"q": p.mode}), setup.layout, system, profile=cfg.engine.window, initial={"q": "cavity"})
        mid = evolve(s0, c_store.schedule, system)
        end = evolve(s0, c_full.schedule, system)
        occ_mid = {w: mode_occupation(mid, setup.geom, k) for w, k in zip(wind, ks)}
        occ_end = {w: mode_occupation(end, setup.geom, k) for w, k in zip(wind, ks)}
        fid = qubit_fidelity(end, a, b)
        rep.log = _schedule_log(c_full.schedule)
        rep.diagnostics.update(
            {"norm_after_store": mid.norm, "norm_final": end.norm, "norm_deficit": end.norm_deficit, "basis_dim": basis.dim}
        )
        cav_mid = cavity_population(mid)
    else:
        hw = setup.hardware()
        n = setup.layout.n_modes
        d = cfg.engine.cutoff
        ket = np.zeros(d, dtype=complex)
        ket[0], ket[1] = a, b
        s0 = product_state(n, d, {"cav": ket}, gram=setup.register_gram())
        ops = [GateOp("swap", (p.mode,))]
        mid = run_program(s0, ops, hw).state
        ops_full = ops + ([GateOp("wait", duration=p.hold)] if p.hold > 0 else []) + [GateOp("swap", (p.mode,))]
        res = run_program(s0, ops_full, hw)
        end = res.state
        occ_mid = {w: physical_occupation(mid, i) for i, w in enumerate(wind)}
        occ_end = {w: physical_occupation(end, i) for i, w in enumerate(wind)}
        fid = fidelity_with(end, ["cav"], ket)
        rep.log = res.log
        cav_mid = occupation(mid, "cav")
    target = wind[p.mode]
    spect = {w: max(occ_mid[w], occ_end[w]) for w in wind if w != target}
    rep.results.update(
        {
            "fidelity": fid,
            "stored_winding": target,
            "stored_occupation": occ_mid[target],
            "expected_stored_occupation": abs(b) ** 2,
            "cavity_after_store": cav_mid,
            "spectator_occupation": {str(w): v for w, v in spect.items()},
            "max_spectator_occupation": max(spect.values()) if spect else 0.0,
            "mode_occupation_after_store": {str(w): v for w, v in occ_mid.items()},
            "mode_occupation_final": {str(w): v for w, v in occ_end.items()},
        }
    )
    rep.tables["occupations"] = [
        {"winding": w, "after_store": occ_mid[w], "final": occ_end[w]} for w in wind
    ]


def _bell_modes(setup: Setup) -> tuple:
    q = setup.cfg.program.qubits or {"a": 1, "b": 2}
    if set(q) != {"a", "b"}:
        raise ConfigError("bell-pair needs program.qubits = {a = i, b = j}")
    for name, m in q.items():
        if not 0 <= m < setup.layout.n_modes:
            raise ConfigError(f"qubit {name} maps to mode {m} outside the layout")
    if q["a"] == q["b"]:
        raise ConfigError("bell-pair qubits need distinct modes")
    return q["a"], q["b"]


def _bell_pair(setup: Setup, rep: SimReport) -> None:
    cfg = setup.cfg
    ma, mb = _bell_modes(setup)
    prog = bell_program(ma, mb, read=False)
    if cfg.engine.kind == "exact":
        if cfg.engine.max_excitations < 2:
            raise ConfigError("bell-pair on the exact engine needs engine.max_excitations >= 2")
        system = setup.exact_system()
        basis = SectorBasis(setup.geom.n_spins, 2)
        comp = compile_with_frames(prog, setup.layout, system, profile=cfg.engine.window)
        end = evolve(vacuum_state(basis), comp.schedule, system)
        ks = setup.layout.wavenumbers(setup.geom.length)
        ideal = _exact_two_mode_bell(basis, setup.geom, ks[ma], ks[mb], comp.phases["a"] + comp.phases["b"])
        fid = float(abs(np.vdot(ideal, end.amplitudes)) ** 2)
        rep.log = _schedule_log(comp.schedule)
        rep.diagnostics.update({"norm_final": end.norm, "leaked": end.leaked, "basis_dim": basis.dim})
        rep.results["bell_fidelity"] = fid
        rep.results["mode_occupation_final"] = {str(w): mode_occupation(end, setup.geom, k) for w, k in zip(_wind(setup), ks)}
        return
    hw = setup.hardware()
    n, d = setup.layout.n_modes, cfg.engine.cutoff
    gram = setup.register_gram()
    res = run_program(RegisterState(n, d, gram=gram), lower(prog), hw)
    names = [mode_name(ma), mode_name(mb)]
    bell = qubit_ket(names, {(0, 0): 1.0, (1, 1): 1.0}, (d, d))
    chan = program_channel([GateOp("two_qubit", (ma, mb))], hw, [ma, mb], n, d, gram)
    reads = run_program(RegisterState(n, d, gram=gram), lower(bell_program(ma, mb, read=True)), hw)
    rep.log = res.log
    rep.results.update(
        {
            "bell_fidelity": fidelity_with(res.state, names, bell),
            "cz_process_fidelity": process_fidelity(chan, CZ),
            "readout_p_excited": reads.readouts,
        }
    )


def _exact_two_mode_bell(basis, geom, k1, k2, phase) -> np.ndarray:
    c1 = mode_vector(geom, k1).coefficients
    c2 = mode_vector(geom, k2).coefficients
    blk = basis.blocks[2]
    v = np.zeros(basis.dim, dtype=complex)
    for i, (ph, cp, spins) in enumerate(blk.keys):
        if ph == 0 and cp == 0:
            q, r = spins
            v[blk.offset + i] = c1[q] * c2[r] + c1[r] * c2[q]
    vac = vacuum_state(basis).amplitudes
    return (vac + np.exp(1j * phase) * v / np.linalg.norm(v)) / np.sqrt(2)


def _cz_process(setup: Setup, rep: SimReport) -> None:
    cfg = setup.cfg
    if cfg.engine.kind != "register":
        raise ConfigError("cz-process runs on the register engine")
    ma, mb = _bell_modes(setup)
    n, d = setup.layout.n_modes, cfg.engine.cutoff
    gram = setup.register_gram()
    hw = setup.hardware()
    hw0 = RegisterHardware(g_cpb=hw.g_cpb, collective_rate=hw.collective_rate)
    op = [GateOp("two_qubit", (ma, mb))]
    rep.results.update(
        {
            "cz_process_fidelity": process_fidelity(program_channel(op, hw, [ma, mb], n, d, gram), CZ),
            "cz_process_fidelity_lossless": process_fidelity(program_channel(op, hw0, [ma, mb], n, d, gram), CZ),
            "cpb_cavity_cz_fidelity": cpb_cavity_cz_fidelity(hw, d),
            "kappa": hw.kappa,
            "g_cpb": hw.g_cpb,
        }
    )


def _classical_demo(setup: Setup, rep: SimReport) -> None:
    p = setup.cfg.program
    if len(p.windings) != 2:
        raise ConfigError("classical-demo needs exactly two windings")
    demo = classical_multimode_demo(setup.geom, p.theta, p.windings)
    rep.results.update(
        {
            "windings": list(demo.windings),
            "revival": {str(k): v for k, v in demo.revival.items()},
            "leakage": {str(k): v for k, v in demo.leakage.items()},
            "gram_bound": {str(k): v for k, v in demo.bound.items()},
            "min_revival": min(demo.revival.values()),
        }
    )
    rep.add_trace("k0_signal", np.arange(demo.trace.signal.size), demo.trace.signal, "step", "|<b(0)>|")
    rep.log = [{"index": i, "step": lab, "k0_signal": float(v)} for i, (lab, v) in enumerate(zip(demo.trace.labels, demo.trace.signal))]


def _echo_refocus(setup: Setup, rep: SimReport) -> None:
    cfg = setup.cfg
    p = cfg.program
    if not p.hold > 0:
        raise ConfigError("echo-refocus needs program.hold (the echo interval T)")
    if not 0 <= p.mode < setup.layout.n_modes:
        raise ConfigError("program.mode outside the layout")
    rng = np.random.default_rng([cfg.seed, 1])
    offsets = rng.normal(0.0, cfg.noise.sigma_inh, size=setup.geom.n_spins)
    system = setup.exact_system(static_offsets=offsets)
    k = setup.layout.wavenumbers(setup.geom.length)[p.mode]
    res = static_echo_refocus(system, k, p.hold, p.alpha, p.beta)
    rep.results.update(
        {
            "fidelity": res.fidelity,
            "control_fidelity": res.control_fidelity,
            "sigma_t": res.sigma_t,
            "interval": p.hold,
        }
    )


def _custom(setup: Setup, rep: SimReport) -> None:
    cfg = setup.cfg
    p = cfg.program
    try:
        ops = [ProgramOp(o["kind"], tuple(o.get("qubits", ())), tuple(o.get("axis", (0.0, 0.0, 1.0))), o.get("angle", 0.0), o.get("duration", 0.0), o.get("label", "")) for o in p.ops]
        prog = RegisterProgram(tuple(ops), p.qubits)
        prog.check_layout(setup.layout)
    except ValueError as e:
        raise ConfigError(f"program: {e}") from None
    wind = _wind(setup)
    if cfg.engine.kind == "exact":
        system = setup.exact_system()
        basis = SectorBasis(setup.geom.n_spins, cfg.engine.max_excitations)
        comp = compile_with_frames(prog, setup.layout, system, profile=cfg.engine.window)
        events: list = []
        end = evolve(vacuum_state(basis), comp.schedule, system, log=events)
        ks = setup.layout.wavenumbers(setup.geom.length)
        rep.log = _schedule_log(comp.schedule) + [dict(e, event="measure") for e in events]
        rep.results["mode_occupation_final"] = {str(w): mode_occupation(end, setup.geom, k) for w, k in zip(wind, ks)}
        rep.results["cavity_population"] = cavity_population(end)
        rep.results["residual_phases"] = comp.phases
        rep.diagnostics.update({"norm_final": end.norm, "leaked": end.leaked})
        return
    kw = {}
    if "gamma_dd" in cfg.noise_keys:
        kw["mode_dephasing"] = cfg.noise.gamma_dd
    hw = setup.hardware(**kw)
    n, d = setup.layout.n_modes, cfg.engine.cutoff
    if "p" in cfg.noise_keys or "temperature" in cfg.noise_keys:
        p_th = cfg.noise.excitation_probability(
            cfg.device.omega_c
        )
        start = thermal_register_state(n, p_th, d)
        start = RegisterState(n, d, start.groups, setup.register_gram())
        rep.results["thermal_p"] = p_th
    else:
        start = RegisterState(n, d, gram=setup.register_gram())
    res = run_program(start, lower(prog), hw)
    rep.log = res.log
    rep.results["readouts"] = res.readouts
    rep.results["mode_occupation_final"] = {str(w): physical_occupation(res.state, i) for i, w in enumerate(wind)}


RECIPE_RUNNERS = {
    "store-retrieve": _store_retrieve,
    "bell-pair": _bell_pair,
    "cz-process": _cz_process,
    "classical-demo": _classical_demo,
    "echo-refocus": _echo_refocus,
    "custom": _custom,
}

_RECIPE_ENGINES = {
    "store-retrieve": ("exact", "register"),
    "bell-pair": ("exact", "register"),
    "cz-process": ("register",),
    "classical-demo": ("classical",),
    "echo-refocus": ("exact",),
    "custom": ("exact", "register"),
}


def cmd_simulate(cfg: ExperimentConfig) -> SimReport:
    recipe = cfg.program.recipe
    if cfg.engine.kind not in _RECIPE_ENGINES[recipe]:
        raise ConfigError(f"recipe {recipe!r} does not run on the {cfg.engine.kind} engine")
    try:
        setup = Setup(cfg)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rep = _base_report(cfg)
    rep.results["engine"] = cfg.engine.kind
    rep.results["recipe"] = recipe
    rep.results["collective_rate"] = setup.rate
    rep.results["discrete_crosstalk"] = setup.discrete_crosstalk
    rep.results["coherence_half_life"] = coherence_half_life(cfg.noise.gamma_dd) if cfg.noise.gamma_dd > 0 else None
    rep.results["layout"] = setup.layout.to_dict()
    RECIPE_RUNNERS[recipe](setup, rep)
    return rep


# --------------------------------------------------------------------------
# sweep


def cmd_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SimReport:
    rep = _base_report(cfg)
    sw = cfg.sweep
    try:
        res = scaling_sweep(sw.experiment, sw.grid, sw.shots, seed=cfg.seed, jobs=jobs)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rep.scalings.append(
        {
            "name": res.name,
            "variable": res.variable,
            "slope": res.slope,
            "slope_stderr": res.slope_stderr,
            "intercept": res.intercept,
            "shots": res.shots,
        }
    )
    rep.tables["sweep"] = res.records()
    rep.add_trace(res.name, res.grid, res.values, res.variable, "statistic")
    rep.results = {"slope": res.slope, "slope_stderr": res.slope_stderr}
    if res.name == "echo-gain-vs-eps":
        rep.notes.append("inhomogeneous mode normalised to unit norm before projection")
    return rep


# --------------------------------------------------------------------------
# driver


def _summary(rep: SimReport) -> list:
    r = rep.results
    lines = [f"{rep.name}: {rep.command} {rep.status}"]
    for key in ("fidelity", "bell_fidelity", "cz_process_fidelity", "max_spectator_occupation", "control_fidelity", "min_revival", "M_at_2", "max_abs_error", "continuum_gram_max_offdiag"):
        if r.get(key) is not None:
            lines.append(f"  {key} = {r[key]:.6g}")
    for s in rep.scalings:
        lines.append(f"  slope({s['name']}) = {s['slope']:.4f} +/- {s['slope_stderr']:.4f}")
    if rep.error:
        lines.append(f"  error: {rep.error}")
    return lines


def _outputs(rep: SimReport, cfg: ExperimentConfig, formats) -> dict:
    files = {}
    d = rep.to_dict()
    validate_report(d)
    if "structured" in formats:
        files[f"{cfg.output.stem}.json"] = dumps(d)
    if "tabular" in formats:
        for name, text in tables_to_csv(d["tables"]).items():
            files[f"{cfg.output.stem}.{name}.csv"] = text
    return files


def run(cfg: ExperimentConfig, jobs: int = 1) -> SimReport:
    """Run the command named in ``cfg``; failures after validation become a failed report."""
    t0 = time.perf_counter()
    commands = {"overlap": cmd_overlap, "simulate": cmd_simulate, "sweep": lambda c: cmd_sweep(c, jobs)}
    try:
        rep = commands[cfg.command](cfg)
    except ConfigError:
        raise
    except Exception as exc:  # simulation-level failure
        log.debug("simulation failed", exc_info=True)
        rep = _base_report(cfg)
        rep.status = "failed"
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.wall_clock_s = time.perf_counter() - t0
    return rep


def _validate_files(paths) -> int:
    code = EXIT_OK
    for p in paths:
        try:
            d = json.loads(Path(p).read_text(encoding="utf-8"))
            validate_report(d)
            print(f"{p}: valid report (schema {d['schema_version']})")
        except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as e:
            msg = e.message if isinstance(e, jsonschema.ValidationError) else str(e)
            print(f"{p}: invalid report: {msg}", file=sys.stderr)
            code = EXIT_CONFIG
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holoreg", description="Spin-ensemble quantum register simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("overlap", "overlap tables and register Gram matrix"),
        ("simulate", "run a register program on an engine"),
        ("sweep", "Monte Carlo scaling sweep with a log-log fit"),
        ("validate", "check a config and/or report files"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, required=name != "validate")
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--format", choices=("structured", "tabular"), action="append", dest="formats")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "validate":
            p.add_argument("reports", nargs="*", type=Path)
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        code = EXIT_OK
        if args.config is None and not args.reports:
            print("error: give --config and/or report files", file=sys.stderr)
            return EXIT_CONFIG
        if args.config is not None:
            try:
                cfg = load_config(args.config, args.seed)
                print(f"{args.config}: valid {cfg.command} config")
            except ConfigError as e:
                print(f"{args.config}: {e}", file=sys.stderr)
                code = EXIT_CONFIG
        return max(code, _validate_files(args.reports))

    try:
        cfg = load_config(args.config, args.seed)
        if cfg.command != args.command:
            # the subcommand wins; the config only supplies parameters
            cfg.command = args.command
        rep = run(cfg, jobs=args.jobs)
        files = _outputs(rep, cfg, args.formats or cfg.output.formats)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    write_atomic(files, args.out)
    for line in _summary(rep):
        print(line)
    return EXIT_OK if rep.status == "ok" else EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
