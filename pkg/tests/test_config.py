from pathlib import Path

import numpy as np
import pytest

import holoreg
from holoreg.config import ConfigError, load_config, parse_config, parse_quantity
from holoreg.physical import TWO_PI

EXAMPLES = sorted((Path(holoreg.__file__).parent / "examples").glob("*.toml"))

MINIMAL = """
command = "simulate"
[device]
omega_c = "5 GHz"
L = "2.75 cm"
[ensemble]
n_spins = 16
collective_rate = "1 MHz"
[program]
recipe = "store-retrieve"
"""


@pytest.mark.parametrize(
    "text,dim,value",
    [
        ("5 GHz", "frequency", TWO_PI * 5e9),
        ("250 kHz", "frequency", TWO_PI * 250e3),
        ("3 rad/s", "frequency", 3.0),
        ("100 ns", "time", 1e-7),
        ("2.5us", "time", 2.5e-6),
        ("180 mT", "field", 0.18),
        ("2.75 cm", "length", 0.0275),
        ("20 mK", "temperature", 0.02),
        ("90 deg", "angle", np.pi / 2),
        ("-1e-3 T", "field", -1e-3),
    ],
)
def test_parse_quantity(text, dim, value):
    assert parse_quantity(text, dim) == pytest.approx(value)


def test_parse_quantity_errors():
    assert parse_quantity(1.5, "angle") == 1.5
    for bad, dim in [(5e9, "frequency"), ("5 parsecs", "length"), ("5 GHz", "time"), ("GHz", "frequency"), (True, "angle")]:
        with pytest.raises(ConfigError):
            parse_quantity(bad, dim)


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.command == "simulate"
    assert cfg.seed == 0
    assert cfg.engine.kind == "register"
    assert cfg.layout.count == 4
    assert cfg.device.omega_c == pytest.approx(TWO_PI * 5e9)
    assert parse_config(MINIMAL, seed_override=7).seed == 7


@pytest.mark.parametrize(
    "edit",
    [
        lambda t: t + "\nbogus = 1\n",
        lambda t: t.replace('omega_c = "5 GHz"', "omega_c = 5e9"),
        lambda t: t.replace('"5 GHz"', '"5 T"'),
        lambda t: t.replace("n_spins = 16", "n_spins = 0"),
        lambda t: t.replace('command = "simulate"', 'command = "dance"'),
        lambda t: t.replace('recipe = "store-retrieve"', 'recipe = "custom"'),
        lambda t: t + "[layout]\ncount = 0\n",
        lambda t: t + "[engine]\nkind = \"quantum\"\n",
        lambda t: t + "[sweep]\ngrid = [1, 2, 3]\n",
        lambda t: t + "[noise]\neps1 = 0.7\n",
        lambda t: t + "[output]\nformats = [\"pdf\"]\n",
        lambda t: t.replace("[device]", "[devices]"),
        lambda t: t + "[[[",
    ],
)
def test_malformed_configs_raise(edit):
    with pytest.raises(ConfigError):
        parse_config(edit(MINIMAL))


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/holoreg.toml")


@pytest.mark.parametrize("path", EXAMPLES, ids=lambda p: p.stem)
def test_bundled_examples_parse(path):
    cfg = load_config(path)
    d = cfg.to_dict()
    assert d["name"] == cfg.name


def test_examples_present():
    names = {p.stem for p in EXAMPLES}
    assert {"store-retrieve", "bell-pair", "overlap", "rabi-vs-N"} <= names
