"""Run configuration (TOML) and CSV serialisation of profiles and lattice states.

A configuration has a few top-level keys and optional tables::

    system = "burgers-shifted"      # required: linear | burgers-shifted | chromatography
    scheme = "semidiscrete"         # required: backward | semidiscrete
    t_final = 10.0                  # lattice runs
    steps = 20                      # backward runs
    dt = 0.05
    snapshot_stride = 1
    tv_budget = 0.1
    seed = 0

    [system_params]                 # forwarded to the system constructor
    [grid]    x_min, x_max, dx      # backward runs
    [window]  n_min, n_max          # lattice runs
    [initial] kind = "riemann" | "spike" | "file", plus left/right/jump_at,
              center/width/mass/direction/base, or path
    [diagnose] c0 = [1, 5, 10, 50], slack = 1e-4
    [study]   epsilons, t_physical, left, right, dx, pairs, pair_distance

Every CSV file starts with one ``#`` line of ``key=value`` metadata,
followed by a column header and the data rows, all floats written with 17
significant digits so that a round trip is bit exact.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from .backward import TV_BUDGET, GridFunction
from .errors import ConfigError
from .functionals import DEFAULT_C0_SCAN, DEFAULT_SLACK
from .harness import DEFAULT_EPSILONS, SCHEMES
from .semidiscrete import DEFAULT_DT, LatticeState
from .systems import BUILTIN_SYSTEMS

INITIAL_KINDS = ("riemann", "spike", "file")
TOP_LEVEL = {"system", "scheme", "t_final", "steps", "dt", "snapshot_stride", "tv_budget",
             "seed", "out", "system_params", "grid", "window", "initial", "diagnose", "study"}
SECTION_KEYS = {
    "grid": {"x_min", "x_max", "dx"},
    "window": {"n_min", "n_max"},
    "initial": {"kind", "left", "right", "jump_at", "center", "width", "mass", "direction",
                "base", "path"},
    "diagnose": {"c0", "slack"},
    "study": {"epsilons", "t_physical", "left", "right", "dx", "pairs", "pair_distance",
              "epsilon"},
}


@dataclass
class InitialData:
    kind: str = "riemann"
    left: Optional[list] = None
    right: Optional[list] = None
    jump_at: float = 0.0
    center: float = 0.0
    width: Optional[float] = None
    mass: float = 1.0
    direction: Optional[list] = None
    base: Optional[list] = None
    path: Optional[str] = None


@dataclass
class StudyConfig:
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    t_physical: float = 1.0
    left: Optional[list] = None
    right: Optional[list] = None
    dx: Optional[float] = None
    pairs: int = 5
    pair_distance: float = 0.005
    epsilon: float = 1.0


@dataclass
class RunConfig:
    """Validated configuration; unset optional knobs carry the documented defaults."""

    system: str
    scheme: str
    system_params: dict = field(default_factory=dict)
    t_final: Optional[float] = None
    steps: Optional[int] = None
    dt: float = DEFAULT_DT
    snapshot_stride: int = 1
    tv_budget: float = TV_BUDGET
    seed: int = 0
    out: Optional[str] = None
    grid: Optional[dict] = None
    window: Optional[dict] = None
    initial: InitialData = field(default_factory=InitialData)
    c0: list = field(default_factory=lambda: list(DEFAULT_C0_SCAN))
    slack: float = DEFAULT_SLACK
    study: StudyConfig = field(default_factory=StudyConfig)

    def to_dict(self):
        return asdict(self)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _vector(v):
    if _is_number(v):
        return [float(v)]
    if isinstance(v, list) and v and all(_is_number(x) for x in v):
        return [float(x) for x in v]
    return None


class _Checker:
    def __init__(self):
        self.errors = []

    def number(self, table, key, path, positive=False, nonnegative=False, integer=False,
               default=None):
        if key not in table:
            return default
        value = table[key]
        if integer and not (isinstance(value, int) and not isinstance(value, bool)):
            self.errors.append(f"{path}: expected an integer, got {value!r}")
            return default
        if not _is_number(value):
            self.errors.append(f"{path}: expected a number, got {value!r}")
            return default
        if positive and not value > 0:
            self.errors.append(f"{path}: must be > 0 (got {value!r})")
            return default
        if nonnegative and value < 0:
            self.errors.append(f"{path}: must be >= 0 (got {value!r})")
            return default
        return value if integer else float(value)

    def vector(self, table, key, path):
        if key not in table:
            return None
        vec = _vector(table[key])
        if vec is None:
            self.errors.append(f"{path}: expected a number or a list of numbers")
        return vec

    def unknown(self, table, allowed, prefix=""):
        for key in table:
            if key not in allowed:
                self.errors.append(f"{prefix}{key}: unknown key")


def parse_config(text: str, study: bool = False) -> RunConfig:
    """Parse and validate configuration text; raises ConfigError listing every problem.

    With ``study=True`` (the converge, cross and stability commands) the run
    sections ``grid``, ``window``, ``initial`` and the run length are optional.
    """
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    chk = _Checker()
    chk.unknown(raw, TOP_LEVEL)
    for section, allowed in SECTION_KEYS.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                chk.errors.append(f"{section}: expected a table")
                raw[section] = {}
            chk.unknown(raw[section], allowed, prefix=f"{section}.")

    system = raw.get("system")
    if system is None:
        chk.errors.append("system: missing required key")
    elif system not in BUILTIN_SYSTEMS:
        chk.errors.append(f"system: unknown system {system!r} (choose from {sorted(BUILTIN_SYSTEMS)})")
    scheme = raw.get("scheme")
    if scheme is None:
        chk.errors.append("scheme: missing required key")
    elif scheme not in SCHEMES:
        chk.errors.append(f"scheme: must be one of {list(SCHEMES)}")

    params = raw.get("system_params", {})
    if not isinstance(params, dict):
        chk.errors.append("system_params: expected a table")
        params = {}

    cfg = dict(
        t_final=chk.number(raw, "t_final", "t_final", nonnegative=True),
        steps=chk.number(raw, "steps", "steps", positive=True, integer=True),
        dt=chk.number(raw, "dt", "dt", positive=True, default=DEFAULT_DT),
        snapshot_stride=chk.number(raw, "snapshot_stride", "snapshot_stride", positive=True,
                                   integer=True, default=1),
        tv_budget=chk.number(raw, "tv_budget", "tv_budget", positive=True, default=TV_BUDGET),
        seed=chk.number(raw, "seed", "seed", nonnegative=True, integer=True, default=0),
    )
    if "out" in raw and not isinstance(raw["out"], str):
        chk.errors.append("out: expected a string")

    grid = window = None
    if study:
        pass
    elif scheme == "backward":
        if cfg["steps"] is None and "steps" not in raw:
            chk.errors.append("steps: missing required key for the backward scheme")
        g = raw.get("grid")
        if g is None:
            chk.errors.append("grid: missing required table for the backward scheme")
        else:
            grid = {}
            for key in ("x_min", "x_max", "dx"):
                if key not in g:
                    chk.errors.append(f"grid.{key}: missing required key")
            grid["x_min"] = chk.number(g, "x_min", "grid.x_min")
            grid["x_max"] = chk.number(g, "x_max", "grid.x_max")
            grid["dx"] = chk.number(g, "dx", "grid.dx", positive=True)
            if None not in grid.values() and grid["x_max"] <= grid["x_min"] + grid["dx"]:
                chk.errors.append("grid.x_max: must exceed grid.x_min by more than one dx")
    elif scheme == "semidiscrete":
        if cfg["t_final"] is None and "t_final" not in raw:
            chk.errors.append("t_final: missing required key for the semidiscrete scheme")
        w = raw.get("window")
        if w is None:
            chk.errors.append("window: missing required table for the semidiscrete scheme")
        else:
            window = {}
            for key in ("n_min", "n_max"):
                if key not in w:
                    chk.errors.append(f"window.{key}: missing required key")
                window[key] = chk.number(w, key, f"window.{key}", integer=True)
            if None not in window.values() and window["n_max"] <= window["n_min"]:
                chk.errors.append("window.n_max: must exceed window.n_min")

    ini = raw.get("initial")
    initial = InitialData()
    if ini is None:
        if not study:
            chk.errors.append("initial: missing required table")
    else:
        kind = ini.get("kind")
        if kind is None:
            chk.errors.append("initial.kind: missing required key")
        elif kind not in INITIAL_KINDS:
            chk.errors.append(f"initial.kind: must be one of {list(INITIAL_KINDS)}")
        initial.kind = kind
        if kind == "riemann":
            for key in ("left", "right"):
                if key not in ini:
                    chk.errors.append(f"initial.{key}: missing required key for riemann data")
        if kind == "file" and not isinstance(ini.get("path"), str):
            chk.errors.append("initial.path: missing required key for file data")
        initial.left = chk.vector(ini, "left", "initial.left")
        initial.right = chk.vector(ini, "right", "initial.right")
        initial.direction = chk.vector(ini, "direction", "initial.direction")
        initial.base = chk.vector(ini, "base", "initial.base")
        initial.jump_at = chk.number(ini, "jump_at", "initial.jump_at", default=0.0)
        initial.center = chk.number(ini, "center", "initial.center", default=0.0)
        initial.width = chk.number(ini, "width", "initial.width", positive=True)
        initial.mass = chk.number(ini, "mass", "initial.mass", default=1.0)
        initial.path = ini.get("path")

    diag = raw.get("diagnose", {})
    c0 = diag.get("c0", list(DEFAULT_C0_SCAN))
    c0_vec = _vector(c0)
    if c0_vec is None or any(v <= 0 for v in c0_vec):
        chk.errors.append("diagnose.c0: expected positive numbers")
        c0_vec = list(DEFAULT_C0_SCAN)
    slack = chk.number(diag, "slack", "diagnose.slack", nonnegative=True, default=DEFAULT_SLACK)

    st = raw.get("study", {})
    study = StudyConfig()
    if "epsilons" in st:
        eps = _vector(st["epsilons"])
        if eps is None or any(v <= 0 for v in eps):
            chk.errors.append("study.epsilons: expected positive numbers")
        else:
            study.epsilons = eps
    study.t_physical = chk.number(st, "t_physical", "study.t_physical", positive=True, default=1.0)
    study.left = chk.vector(st, "left", "study.left")
    study.right = chk.vector(st, "right", "study.right")
    study.dx = chk.number(st, "dx", "study.dx", positive=True)
    study.pairs = chk.number(st, "pairs", "study.pairs", positive=True, integer=True, default=5)
    study.pair_distance = chk.number(st, "pair_distance", "study.pair_distance", positive=True,
                                     default=0.005)
    study.epsilon = chk.number(st, "epsilon", "study.epsilon", positive=True, default=1.0)

    if chk.errors:
        raise ConfigError(chk.errors)
    return RunConfig(system=system, scheme=scheme, system_params=dict(params), grid=grid,
                     window=window, initial=initial, c0=c0_vec, slack=slack, study=study,
                     out=raw.get("out"), **cfg)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

class CSVFormatError(ValueError):
    """Malformed CSV file; ``line`` is 1-based."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(value) -> str:
    return format(float(value), ".17g")


def _fmt_vector(vec) -> str:
    return ";".join(_fmt(v) for v in np.ravel(vec))


def _parse_vector(text):
    return np.array([float(v) for v in text.split(";")])


def _write(path, meta, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_profile(path, profile: GridFunction, system: str = "", step: int = 0):
    """Write a backward-scheme profile (values and, when known, exact slopes)."""
    n = profile.dimension
    meta = {"kind": "profile", "system": system or "-", "x_min": _fmt(profile.x_min),
            "dx": _fmt(profile.dx), "step": int(step),
            "left_state": _fmt_vector(profile.left_state)}
    header = ["x"] + [f"u{k}" for k in range(n)]
    cols = [profile.x[:, None], profile.values]
    if profile.slope is not None:
        header += [f"du{k}" for k in range(n)]
        cols.append(profile.slope)
    _write(path, meta, header, np.hstack(cols))


def write_lattice(path, state: LatticeState, system: str = ""):
    """Write a lattice state, including its outflow ledger."""
    n = state.dimension
    meta = {"kind": "lattice", "system": system or "-", "n_min": int(state.n_min),
            "time": _fmt(state.time), "left_state": _fmt_vector(state.left_state),
            "outflow": _fmt_vector(state.outflow)}
    header = ["n"] + [f"u{k}" for k in range(n)]
    _write(path, meta, header, np.hstack([state.indices[:, None], state.cells]))


def _read(path, expected_system=None):
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise CSVFormatError("empty file", 1)
    first = lines[0]
    if not first.startswith("#"):
        raise CSVFormatError("missing '# key=value' metadata line", 1)
    meta = {}
    for item in first[1:].split():
        if "=" not in item:
            raise CSVFormatError(f"bad metadata entry {item!r}", 1)
        key, value = item.split("=", 1)
        meta[key] = value
    if len(lines) < 2:
        raise CSVFormatError("missing column header", 2)
    header = next(csv.reader([lines[1]]))
    rows = []
    for number, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = next(csv.reader([line]))
        if len(fields) != len(header):
            raise CSVFormatError(f"expected {len(header)} fields, found {len(fields)}", number)
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise CSVFormatError(f"non-numeric field in {line!r}", number) from None
    if not rows:
        raise CSVFormatError("no data rows", len(lines) + 1)
    if expected_system and meta.get("system", "-") not in ("-", expected_system):
        warnings.warn(f"{path.name}: written for system {meta['system']!r}, "
                      f"reading for {expected_system!r}", stacklevel=3)
    return meta, header, np.array(rows)


def _meta(meta, key, convert, line=1):
    try:
        return convert(meta[key])
    except (KeyError, ValueError):
        raise CSVFormatError(f"missing or invalid metadata {key!r}", line) from None


def read_profile(path, expected_system: Optional[str] = None):
    """Read :func:`write_profile` output; returns ``(GridFunction, metadata dict)``."""
    meta, header, data = _read(path, expected_system)
    if meta.get("kind") != "profile":
        raise CSVFormatError("not a profile file", 1)
    n = sum(1 for h in header if h.startswith("u"))
    values = data[:, 1:1 + n]
    slope = data[:, 1 + n:1 + 2 * n] if len(header) >= 1 + 2 * n else None
    profile = GridFunction(_meta(meta, "x_min", float), _meta(meta, "dx", float), values,
                           _meta(meta, "left_state", _parse_vector), slope)
    return profile, meta


def read_lattice(path, expected_system: Optional[str] = None):
    """Read :func:`write_lattice` output; returns ``(LatticeState, metadata dict)``."""
    meta, header, data = _read(path, expected_system)
    if meta.get("kind") != "lattice":
        raise CSVFormatError("not a lattice file", 1)
    state = LatticeState(_meta(meta, "n_min", int), data[:, 1:], _meta(meta, "left_state", _parse_vector),
                         _meta(meta, "time", float), _meta(meta, "outflow", _parse_vector))
    return state, meta


def write_table(path, header, rows):
    """Plain CSV table (numbers at 17 digits, strings verbatim)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else ("" if v is None else _fmt(v))
                             for v in row])


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
