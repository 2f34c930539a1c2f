"""Experiment configuration files.

TOML documents with nested sections. Every physical quantity is a string
carrying its unit ("5 GHz", "180 mT", "100 ns"); frequencies given in Hz
are converted to rad/s on load. Bare numbers are accepted only for
dimensionless fields.
"""

from __future__ import annotations

import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .physical import TWO_PI, DeviceParams, EnsembleSpec, PLACEMENTS, PROFILES
from .modes import SCHEMES
from .noise import EXPERIMENTS, NoiseConfig
from .protocols import PROGRAM_KINDS


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


# unit -> (dimension, factor to SI / rad s^-1)
UNITS = {
    "Hz": ("frequency", TWO_PI),
    "kHz": ("frequency", TWO_PI * 1e3),
    "MHz": ("frequency", TWO_PI * 1e6),
    "GHz": ("frequency", TWO_PI * 1e9),
    "rad/s": ("frequency", 1.0),
    "krad/s": ("frequency", 1e3),
    "Mrad/s": ("frequency", 1e6),
    "Grad/s": ("frequency", 1e9),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "µs": ("time", 1e-6),
    "μs": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "ps": ("time", 1e-12),
    "T": ("field", 1.0),
    "mT": ("field", 1e-3),
    "uT": ("field", 1e-6),
    "µT": ("field", 1e-6),
    "m": ("length", 1.0),
    "cm": ("length", 1e-2),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "µm": ("length", 1e-6),
    "K": ("temperature", 1.0),
    "mK": ("temperature", 1e-3),
    "rad": ("angle", 1.0),
    "deg": ("angle", np.pi / 180),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)\s*$")


def parse_quantity(value: Any, dimension: str, where: str = "") -> float:
    """'5 GHz' -> 2 pi 5e9 rad/s. Raises ConfigError on a missing or wrong unit."""
    label = f"{where}: " if where else ""
    if dimension == "angle" and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{label}expected a {dimension} with a unit, e.g. '1 {_example_unit(dimension)}', got {value!r}")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{label}cannot parse quantity {value!r}")
    number, unit = m.groups()
    if unit not in UNITS:
        raise ConfigError(f"{label}unknown unit {unit!r}")
    dim, factor = UNITS[unit]
    if dim != dimension:
        raise ConfigError(f"{label}{unit!r} is a {dim}, expected a {dimension}")
    return float(number) * factor


def _example_unit(dimension: str) -> str:
    return {"frequency": "MHz", "time": "us", "field": "mT", "length": "cm", "temperature": "mK"}.get(dimension, "")


# --------------------------------------------------------------------------
# sections


@dataclass
class LayoutSpec:
    scheme: str = "stride3"
    count: int = 4
    crosstalk_budget: float = 1e-12


@dataclass
class EngineSpec:
    kind: str = "register"  # exact | register | classical
    idle_factor: float = 100.0  # idle spin-cavity detuning in units of sqrt(N) g_bar
    window: str = "square"  # square | ramp
    ramp_steps: int = 64
    cutoff: int = 3
    max_excitations: int = 1


@dataclass
class ProgramSpec:
    recipe: str = "custom"  # store-retrieve | bell-pair | cz-process | classical-demo | custom
    ops: list = field(default_factory=list)  # list of dicts for ProgramOp
    qubits: dict = field(default_factory=dict)  # name -> mode index
    mode: int = 1  # register mode for store-retrieve
    alpha: complex = 0.6
    beta: complex = 0.8j
    hold: float = 0.0  # s
    theta: float = 0.05  # classical tilt, rad
    windings: list = field(default_factory=lambda: [3, 6])


@dataclass
class SweepSpec:
    experiment: str = "rabi-vs-N"
    grid: Optional[list] = None
    shots: Optional[int] = None


@dataclass
class OverlapSpec:
    delta_w_min: float = -6.0
    delta_w_max: float = 6.0
    delta_w_step: float = 0.25
    n_spins: int = 1000
    placement: str = "grid"
    profile: str = "cavity-mode"


@dataclass
class OutputSpec:
    formats: list = field(default_factory=lambda: ["structured"])
    stem: str = ""


@dataclass
class ExperimentConfig:
    name: str
    command: str
    seed: int
    device: DeviceParams
    ensemble: EnsembleSpec
    ensemble_seed: Optional[int]
    layout: LayoutSpec
    engine: EngineSpec
    program: ProgramSpec
    noise: NoiseConfig
    sweep: SweepSpec
    overlap: OverlapSpec
    output: OutputSpec
    source: str = ""
    noise_keys: tuple = ()  # keys given explicitly in [noise]

    def to_dict(self) -> dict:
        """Fully resolved config (SI / rad s^-1) for provenance."""
        d = {
            "name": self.name,
            "command": self.command,
            "seed": self.seed,
            "device": asdict(self.device),
            "ensemble": {**asdict(self.ensemble), "seed": self.ensemble_seed},
            "layout": asdict(self.layout),
            "engine": asdict(self.engine),
            "program": asdict(self.program),
            "noise": asdict(self.noise),
            "sweep": asdict(self.sweep),
            "overlap": asdict(self.overlap),
            "output": asdict(self.output),
        }
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.generic):
        return x.item()
    return x


# --------------------------------------------------------------------------
# loading

COMMANDS = ("overlap", "simulate", "sweep")
ENGINES = ("exact", "register", "classical")
RECIPES = ("store-retrieve", "bell-pair", "cz-process", "classical-demo", "echo-refocus", "custom")

_DEVICE_FIELDS = {
    "omega_c": "frequency",
    "L": "length",
    "kappa": "frequency",
    "B_bias": "field",
    "g_cpb": "frequency",
    "delta_cpb": "frequency",
    "cpb_t1": "time",
    "cpb_t2": "time",
    "max_delta_B": "field",
}


def _take(section: dict, allowed: set, where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"[{where}] must be a table")
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"[{where}] has unknown keys {sorted(extra)}")
    return dict(section)


def _complex(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"{where}: amplitude must be a number or [re, im]")


def _int(v, where, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}")
    return v


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def parse_device(raw: dict) -> DeviceParams:
    raw = _take(raw, set(_DEVICE_FIELDS), "device")
    for key in ("omega_c", "L"):
        if key not in raw:
            raise ConfigError(f"[device] needs {key}")
    kw = {k: parse_quantity(v, _DEVICE_FIELDS[k], f"device.{k}") for k, v in raw.items()}
    try:
        return DeviceParams(**kw)
    except ValueError as e:
        raise ConfigError(f"[device] {e}") from None


def parse_ensemble(raw: dict, device: DeviceParams) -> tuple:
    raw = _take(raw, {"n_spins", "length", "profile", "placement", "g_bar", "collective_rate", "table", "seed"}, "ensemble")
    if "n_spins" not in raw:
        raise ConfigError("[ensemble] needs n_spins")
    n = _int(raw["n_spins"], "ensemble.n_spins", 1)
    length = parse_quantity(raw["length"], "length", "ensemble.length") if "length" in raw else device.L
    if "g_bar" in raw and "collective_rate" in raw:
        raise ConfigError("[ensemble] give g_bar or collective_rate, not both")
    if "collective_rate" in raw:
        g_bar = parse_quantity(raw["collective_rate"], "frequency", "ensemble.collective_rate") / np.sqrt(n)
    elif "g_bar" in raw:
        g_bar = parse_quantity(raw["g_bar"], "frequency", "ensemble.g_bar")
    else:
        g_bar = TWO_PI * 20.0
    table = None
    if "table" in raw:
        table = [parse_quantity(v, "frequency", "ensemble.table") for v in raw["table"]]
    profile = raw.get("profile", "uniform")
    placement = raw.get("placement", "grid")
    if profile not in PROFILES:
        raise ConfigError(f"ensemble.profile must be one of {PROFILES}")
    if placement not in PLACEMENTS:
        raise ConfigError(f"ensemble.placement must be one of {PLACEMENTS}")
    seed = raw.get("seed")
    if seed is not None:
        seed = _int(seed, "ensemble.seed", 0)
    try:
        spec = EnsembleSpec(n, length, profile, placement, g_bar, table)
    except ValueError as e:
        raise ConfigError(f"[ensemble] {e}") from None
    return spec, seed


def parse_noise(raw: dict, seed: int) -> NoiseConfig:
    raw = _take(raw, {"temperature", "p", "sigma_inh", "gamma_dd", "eps1", "eps2", "shots"}, "noise")
    kw: dict = {"seed": seed}
    if "temperature" in raw:
        kw["temperature"] = parse_quantity(raw["temperature"], "temperature", "noise.temperature")
    if "p" in raw:
        kw["p"] = _number(raw["p"], "noise.p")
    for key in ("sigma_inh", "gamma_dd"):
        if key in raw:
            kw[key] = parse_quantity(raw[key], "frequency", f"noise.{key}")
    for key in ("eps1", "eps2"):
        if key in raw:
            kw[key] = _number(raw[key], f"noise.{key}")
    if "shots" in raw:
        kw["shots"] = _int(raw["shots"], "noise.shots", 1)
    try:
        return NoiseConfig(**kw)
    except ValueError as e:
        raise ConfigError(f"[noise] {e}") from None


def parse_program(raw: dict) -> ProgramSpec:
    raw = _take(raw, {"recipe", "ops", "qubits", "mode", "alpha", "beta", "hold", "theta", "windings"}, "program")
    spec = ProgramSpec()
    spec.recipe = raw.get("recipe", spec.recipe)
    if spec.recipe not in RECIPES:
        raise ConfigError(f"program.recipe must be one of {RECIPES}")
    if "mode" in raw:
        spec.mode = _int(raw["mode"], "program.mode", 0)
    if "alpha" in raw:
        spec.alpha = _complex(raw["alpha"], "program.alpha")
    if "beta" in raw:
        spec.beta = _complex(raw["beta"], "program.beta")
    if abs(spec.alpha) == 0 and abs(spec.beta) == 0:
        raise ConfigError("program: alpha and beta cannot both vanish")
    if "hold" in raw:
        spec.hold = parse_quantity(raw["hold"], "time", "program.hold")
    if "theta" in raw:
        spec.theta = parse_quantity(raw["theta"], "angle", "program.theta")
    if "windings" in raw:
        spec.windings = [_int(w, "program.windings", 1) for w in raw["windings"]]
    if "qubits" in raw:
        q = raw["qubits"]
        if not isinstance(q, dict):
            raise ConfigError("program.qubits must map names to mode indices")
        spec.qubits = {str(k): _int(v, f"program.qubits.{k}", 0) for k, v in q.items()}
    ops = raw.get("ops", [])
    if not isinstance(ops, list):
        raise ConfigError("program.ops must be an array of tables")
    for i, op in enumerate(ops):
        where = f"program.ops[{i}]"
        op = _take(op, {"kind", "qubits", "axis", "angle", "duration", "label"}, where)
        if op.get("kind") not in PROGRAM_KINDS:
            raise ConfigError(f"{where}: kind must be one of {PROGRAM_KINDS}")
        out = {"kind": op["kind"], "qubits": [str(q) for q in op.get("qubits", [])]}
        if "axis" in op:
            axis = [_number(a, f"{where}.axis") for a in op["axis"]]
            if len(axis) != 3 or not np.linalg.norm(axis) > 0:
                raise ConfigError(f"{where}: axis must be a non-zero 3-vector")
            out["axis"] = axis
        if "angle" in op:
            out["angle"] = parse_quantity(op["angle"], "angle", f"{where}.angle")
        if "duration" in op:
            out["duration"] = parse_quantity(op["duration"], "time", f"{where}.duration")
        if "label" in op:
            out["label"] = str(op["label"])
        spec.ops.append(out)
    return spec


def load_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_config(text, seed_override, source=str(path.name))


def parse_config(text: str, seed_override: Optional[int] = None, source: str = "") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}") from None
    top = {"name", "command", "seed", "device", "ensemble", "layout", "engine", "program", "noise", "sweep", "overlap", "output"}
    raw = _take(raw, top, "top level")
    command = raw.get("command", "simulate")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}")
    seed = _int(raw.get("seed", 0), "seed", 0)
    if seed_override is not None:
        seed = int(seed_override)
    if "device" not in raw:
        raise ConfigError("missing [device] section")
    device = parse_device(raw["device"])
    ensemble, ens_seed = parse_ensemble(raw.get("ensemble", {"n_spins": 64}), device)
    if ens_seed is None:
        ens_seed = seed

    lay_raw = _take(raw.get("layout", {}), {"scheme", "count", "crosstalk_budget"}, "layout")
    layout = LayoutSpec(
        scheme=lay_raw.get("scheme", "stride3"),
        count=_int(lay_raw.get("count", 4), "layout.count"),
        crosstalk_budget=_number(lay_raw.get("crosstalk_budget", 1e-12), "layout.crosstalk_budget"),
    )
    if layout.scheme not in SCHEMES:
        raise ConfigError(f"layout.scheme must be one of {SCHEMES}")
    if layout.count < 1:
        raise ConfigError("layout.count must be at least 1 (empty mode list)")

    eng_raw = _take(raw.get("engine", {}), {"kind", "idle_factor", "window", "ramp_steps", "cutoff", "max_excitations"}, "engine")
    engine = EngineSpec(
        kind=eng_raw.get("kind", "register"),
        idle_factor=_number(eng_raw.get("idle_factor", 100.0), "engine.idle_factor"),
        window=eng_raw.get("window", "square"),
        ramp_steps=_int(eng_raw.get("ramp_steps", 64), "engine.ramp_steps", 1),
        cutoff=_int(eng_raw.get("cutoff", 3), "engine.cutoff", 2),
        max_excitations=_int(eng_raw.get("max_excitations", 1), "engine.max_excitations", 1),
    )
    if engine.kind not in ENGINES:
        raise ConfigError(f"engine.kind must be one of {ENGINES}")
    if engine.window not in ("square", "ramp"):
        raise ConfigError("engine.window must be 'square' or 'ramp'")
    if not engine.idle_factor > 0:
        raise ConfigError("engine.idle_factor must be positive")

    program = parse_program(raw.get("program", {}))
    if command == "simulate" and program.recipe == "custom" and not program.ops:
        raise ConfigError("a custom program needs at least one op")
    noise = parse_noise(raw.get("noise", {}), seed)

    sw_raw = _take(raw.get("sweep", {}), {"experiment", "grid", "shots"}, "sweep")
    sweep = SweepSpec(experiment=sw_raw.get("experiment", "rabi-vs-N"))
    if sweep.experiment not in EXPERIMENTS:
        raise ConfigError(f"sweep.experiment must be one of {sorted(EXPERIMENTS)}")
    if "grid" in sw_raw:
        grid = [_number(v, "sweep.grid") for v in sw_raw["grid"]]
        if len(grid) < 4:
            raise ConfigError("sweep.grid needs at least 4 points")
        if len(set(grid)) != len(grid) or min(grid) <= 0:
            raise ConfigError("sweep.grid values must be positive and distinct")
        sweep.grid = grid
    if "shots" in sw_raw:
        sweep.shots = _int(sw_raw["shots"], "sweep.shots", 1)

    ov_raw = _take(
        raw.get("overlap", {}), {"delta_w_min", "delta_w_max", "delta_w_step", "n_spins", "placement", "profile"}, "overlap"
    )
    overlap = OverlapSpec()
    for key in ("delta_w_min", "delta_w_max", "delta_w_step"):
        if key in ov_raw:
            setattr(overlap, key, _number(ov_raw[key], f"overlap.{key}"))
    if "n_spins" in ov_raw:
        overlap.n_spins = _int(ov_raw["n_spins"], "overlap.n_spins", 1)
    overlap.placement = ov_raw.get("placement", overlap.placement)
    overlap.profile = ov_raw.get("profile", overlap.profile)
    if overlap.placement not in PLACEMENTS or overlap.profile not in ("uniform", "cavity-mode"):
        raise ConfigError("overlap placement/profile not recognised")
    if not overlap.delta_w_step > 0 or overlap.delta_w_max < overlap.delta_w_min:
        raise ConfigError("overlap Δw range is empty")

    out_raw = _take(raw.get("output", {}), {"formats", "stem"}, "output")
    output = OutputSpec(formats=list(out_raw.get("formats", ["structured"])), stem=str(out_raw.get("stem", "")))
    bad = set(output.formats) - {"structured", "tabular"}
    if bad or not output.formats:
        raise ConfigError("output.formats must be a non-empty subset of ['structured', 'tabular']")

    name = str(raw.get("name", Path(source).stem or "experiment"))
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError("name may only use letters, digits, '.', '_' and '-'")
    if not output.stem:
        output.stem = name
    return ExperimentConfig(
        name, command, seed, device, ensemble, ens_seed, layout, engine, program, noise, sweep, overlap, output, source,
        tuple(sorted(raw.get("noise", {}))),
    )
