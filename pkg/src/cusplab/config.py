"""Strict INI-style experiment configuration.

Example::

    [experiment]
    kind = square-sanity
    output = runs/square

    [geometry]
    h0 = 0.015625

    [solver]
    k = 11
    tol = 1e-8
    seed = 0

Unknown sections or keys, malformed numbers and out-of-range values are
rejected with the offending key and line number.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

KINDS = (
    "square-sanity",
    "cusp-hardy",
    "cusp-heatkernel",
    "manifold-breakdown",
    "manifold-hardy",
    "ball-volume",
    "inequality-suite",
)


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None, source: str = "<config>"):
        where = source
        if line is not None:
            where += f":{line}"
        if key is not None:
            where += f" [{key}]"
        super().__init__(f"{where}: {message}")
        self.key = key
        self.line = line


@dataclass
class GeometryParams:
    A: float = 1.0
    alpha: float = 2.0
    beta: float = 0.75
    # None: the experiment's own default
    w_min: list | None = None
    h0: list | None = None
    ratio: float = 0.7


@dataclass
class ModelParams:
    alpha: list | None = None
    n_mode: list | None = None
    U_max: list | None = None
    N_grid: int = 0  # 0: points per decade default
    eps: list | None = None


@dataclass
class SolverParams:
    k: int | None = None
    tol: float = 1e-8
    seed: int = 0
    cache: bool = True


@dataclass
class ExperimentConfig:
    kind: str
    output: str
    geometry: GeometryParams = field(default_factory=GeometryParams)
    model: ModelParams = field(default_factory=ModelParams)
    solver: SolverParams = field(default_factory=SolverParams)
    source: str = "<config>"

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d


# key -> (parser, range check, message)
def _real(lo, hi, lo_open=False):
    def check(x):
        ok = (x > lo if lo_open else x >= lo) and x <= hi
        return ok, f"must lie in {'(' if lo_open else '['}{lo:g}, {hi:g}]"

    return check


def _int_range(lo, hi):
    def check(x):
        return lo <= x <= hi, f"must be an integer in [{lo}, {hi}]"

    return check


_SCHEMA = {
    "experiment": {"kind": ("kind", None), "output": ("str", None)},
    "geometry": {
        "A": ("float", _real(0, 100, True)),
        "alpha": ("float", _real(0.5, 10)),
        "beta": ("float", _real(0, 1, True)),
        "w_min": ("floats", _real(1e-8, 0.5)),
        "h0": ("floats", _real(1 / 512, 0.5)),
        "ratio": ("float", _real(0.3, 0.95)),
    },
    "model": {
        "alpha": ("floats", _real(0, 10, True)),
        "n_mode": ("ints", _int_range(0, 10)),
        "U_max": ("floats", _real(10, 1e12)),
        "N_grid": ("int", lambda x: (x == 0 or 50 <= x <= 10**7, "must be 0 or in [50, 1e7]")),
        "eps": ("floats", _real(0, 1, True)),
    },
    "solver": {
        "k": ("int", _int_range(1, 20000)),
        "tol": ("float", _real(1e-14, 1e-2)),
        "seed": ("int", _int_range(0, 2**32 - 1)),
        "cache": ("bool", None),
    },
}


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus section header lines."""
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]*)\]$", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), i)
    return out


def _parse_value(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        if not raw:
            raise ValueError("must not be empty")
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in ("float", "floats"):
        parts = [p.strip() for p in raw.split(",")] if kind == "floats" else [raw]
        vals = []
        for p in parts:
            x = float(p)
            if not math.isfinite(x):
                raise ValueError(f"not finite: {p!r}")
            vals.append(x)
        if not vals or any(p == "" for p in parts):
            raise ValueError("empty list")
        return vals if kind == "floats" else vals[0]
    if kind in ("int", "ints"):
        parts = [p.strip() for p in raw.split(",")] if kind == "ints" else [raw]
        vals = [int(p) for p in parts]
        return vals if kind == "ints" else vals[0]
    raise AssertionError(kind)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00none")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", exc.option, exc.lineno, source) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno, source) from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse: {exc.message.splitlines()[0]}", None, getattr(exc, "lineno", None), source) from None

    values: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section, lines.get((section, None)), source)
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown key", f"{section}.{key}", line, source)
            kind, check = _SCHEMA[section][key]
            name = f"{section}.{key}"
            if kind == "kind":
                if raw.strip() not in KINDS:
                    raise ConfigError(f"unknown experiment kind {raw.strip()!r}; expected one of {', '.join(KINDS)}", name, line, source)
                values[name] = raw.strip()
                continue
            try:
                val = _parse_value(kind, raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw.strip()!r}: {exc}", name, line, source) from None
            if check is not None:
                for x in val if isinstance(val, list) else [val]:
                    ok, msg = check(x)
                    if not ok:
                        raise ConfigError(f"value {x!r} {msg}", name, line, source)
            values[name] = val

    for req in ("experiment.kind", "experiment.output"):
        if req not in values:
            raise ConfigError("required key missing", req, None, source)

    cfg = ExperimentConfig(values.pop("experiment.kind"), values.pop("experiment.output"), source=source)
    for name, val in values.items():
        section, key = name.split(".")
        setattr(getattr(cfg, section), key, val)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, None, str(path)) from None
    return parse_config(text, str(path))
