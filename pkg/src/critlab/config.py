"""Run configuration: YAML document -> validated :class:`RunConfig`."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np
import yaml

from . import operators as ops

COMMANDS = ("spectrum", "gap-scan", "corr-sweep", "table1", "eft-mc", "matsubara-check")


class ConfigError(ValueError):
    """Malformed or invalid configuration; the message names the offending field."""


def default_omega_grid(n: int = 6, high: float = 0.2, low: float = 0.0125) -> list[float]:
    return [float(w) for w in np.geomspace(high, low, n)]


@dataclass
class ModelConfig:
    family: str = "rabi"
    omega: float = 1.0
    gap_atom: float = 1.0
    # a number, or "critical" to pin the coupling at its critical value
    coupling: Any = "critical"
    n_atoms: int = 1


@dataclass
class GridConfig:
    omega: list | None = None
    n_atoms: list | None = None
    z_prime: list | None = None
    coupling: list | None = None


@dataclass
class ToleranceConfig:
    convergence_tol: float = 1e-6
    r2_min: float = 0.995
    resid_max: float = 0.05
    exponent_tol: float = 0.05
    delta_tol: float = 0.10
    delta_tol_marginal: float = 0.15
    matsubara_rtol: float = 1e-5
    mc_sigma: float = 3.0


@dataclass
class TruncationConfig:
    n0: int | None = None
    max_fock: int = 8192


@dataclass
class TargetConfig:
    slope: float | None = None


@dataclass
class SpectrumConfig:
    n_levels: int = 20


@dataclass
class McConfig:
    source: str = "explicit"  # or "model": coefficients from the Hamiltonian
    beta: float = 8.0
    n_sites: int = 64
    kinetic: float = 1.0
    mass2: float = 1.0
    quartic: float = 0.0
    sextic: float = 0.0
    n_therm: int = 2000
    n_sweeps: int = 100_000
    bin_size: int = 100
    seed: int = 0


@dataclass
class MatsubaraConfig:
    beta: float = 5.0
    cutoff: int = 1_000_000
    p_index: list = field(default_factory=lambda: [0, 1, 2])


@dataclass
class OutputConfig:
    csv_path: str | None = None
    json_path: str | None = None


SECTIONS = {
    "model": ModelConfig,
    "grids": GridConfig,
    "tolerances": ToleranceConfig,
    "truncation": TruncationConfig,
    "targets": TargetConfig,
    "spectrum": SpectrumConfig,
    "mc": McConfig,
    "matsubara": MatsubaraConfig,
    "output": OutputConfig,
}
# The document says "lambda"; Python reserves the word.
KEY_ALIASES = {"lambda": "coupling"}


@dataclass
class RunConfig:
    command: str
    model: ModelConfig = field(default_factory=ModelConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    mc: McConfig = field(default_factory=McConfig)
    matsubara: MatsubaraConfig = field(default_factory=MatsubaraConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        out = {"command": self.command}
        for name in SECTIONS:
            section = asdict(getattr(self, name))
            out[name] = {("lambda" if k == "coupling" else k): v for k, v in section.items()}
        return out

    def hamiltonian_spec(self, **changes) -> ops.HamiltonianSpec:
        m = self.model
        lam = changes.pop("lam", m.coupling)
        if lam == "critical":
            lam = ops.critical_coupling(m.family, changes.get("omega", m.omega), m.gap_atom)
        kwargs = dict(family=m.family, omega=m.omega, gap_atom=m.gap_atom, lam=lam,
                      n_atoms=m.n_atoms)
        kwargs.update(changes)
        return ops.HamiltonianSpec(**kwargs)


# ---------------------------------------------------------------- coercion

def _as_float(path: str, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{path}: must be finite, got {value!r}")
    return out


def _as_int(path: str, value) -> int:
    out = _as_float(path, value)
    if out != int(out):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return int(out)


def _as_list(path: str, value, item) -> list:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{path}: expected a list, got {value!r}")
    return [item(f"{path}[{i}]", v) for i, v in enumerate(value)]


def _coerce(section: str, key: str, value):
    path = f"{section}.{'lambda' if key == 'coupling' else key}"
    kind = {f.name: f.type for f in fields(SECTIONS[section])}[key]
    if section == "model" and key == "coupling":
        if value == "critical":
            return value
        return _as_float(path, value)
    if section == "model" and key == "family":
        try:
            return ops.Family(str(value).lower()).value
        except ValueError:
            raise ConfigError(f"{path}: expected 'rabi' or 'dicke', got {value!r}") from None
    if section == "grids":
        item = _as_int if key == "n_atoms" else _as_float
        return _as_list(path, value, item)
    if section == "matsubara" and key == "p_index":
        return _as_list(path, value, _as_int)
    if value is None and ("None" in kind):
        return None
    if kind.startswith("int"):
        return _as_int(path, value)
    if kind.startswith("float"):
        return _as_float(path, value)
    if kind.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(command: str, doc: dict) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}; expected one of {COMMANDS}")
    cfg = RunConfig(command=command)
    for section, body in doc.items():
        if section == "command":
            continue
        if section not in SECTIONS:
            raise ConfigError(f"{section}: unknown section")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a mapping")
        target = getattr(cfg, section)
        known = {f.name for f in fields(target)}
        for key, value in body.items():
            name = KEY_ALIASES.get(key, key)
            if name not in known:
                raise ConfigError(f"{section}.{key}: unknown key")
            setattr(target, name, _coerce(section, name, value))
    _validate(cfg)
    return cfg


def _positive(path: str, value) -> None:
    if not value > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")


def _validate(cfg: RunConfig) -> None:
    m, g, t = cfg.model, cfg.grids, cfg.tolerances
    _positive("model.omega", m.omega)
    _positive("model.gap_atom", m.gap_atom)
    if m.coupling != "critical" and m.coupling < 0:
        raise ConfigError(f"model.lambda: must be non-negative, got {m.coupling!r}")
    _positive("model.n_atoms", m.n_atoms)
    for name in ("omega", "z_prime", "n_atoms"):
        for i, v in enumerate(getattr(g, name) or []):
            _positive(f"grids.{name}[{i}]", v)
    for i, v in enumerate(g.coupling or []):
        if v < 0:
            raise ConfigError(f"grids.lambda[{i}]: must be non-negative, got {v!r}")
    for f in fields(t):
        _positive(f"tolerances.{f.name}", getattr(t, f.name))
    if t.r2_min > 1:
        raise ConfigError("tolerances.r2_min: must not exceed 1")
    if cfg.truncation.n0 is not None and cfg.truncation.n0 < 4:
        raise ConfigError("truncation.n0: must be >= 4")
    _positive("truncation.max_fock", cfg.truncation.max_fock)
    _positive("spectrum.n_levels", cfg.spectrum.n_levels)

    cmd = cfg.command
    if cmd in ("gap-scan", "corr-sweep", "table1"):
        if g.omega is None and not (cmd == "gap-scan" and m.family == "dicke"):
            g.omega = default_omega_grid()
        if g.omega is not None and any(b >= a for a, b in zip(g.omega, g.omega[1:])):
            raise ConfigError("grids.omega: must be strictly descending")
    if cmd == "gap-scan":
        if m.family == "dicke":
            if not g.n_atoms:
                raise ConfigError("grids.n_atoms: required for a Dicke gap-scan")
            if len(g.n_atoms) < 4:
                raise ConfigError("grids.n_atoms: need at least 4 values")
        elif len(g.omega) < 4:
            raise ConfigError("grids.omega: need at least 4 values")
    if cmd == "corr-sweep":
        if m.coupling == "critical":
            m.coupling = ops.critical_coupling(m.family, m.omega, m.gap_atom)
        if g.z_prime is None:
            g.z_prime = [1.0]
    if cmd == "table1":
        if m.family != "rabi":
            raise ConfigError("model.family: table1 is defined for the Rabi model")
        if g.z_prime is None:
            g.z_prime = [0.75, 1.0, 1.25, 1.5]
        if g.coupling is None:
            g.coupling = [0.8, 1.0, 1.2]
    if cmd in ("corr-sweep", "table1") and len(g.omega) < 3:
        raise ConfigError("grids.omega: need at least 3 values")
    if cmd == "eft-mc":
        mc = cfg.mc
        if mc.source not in ("explicit", "model"):
            raise ConfigError(f"mc.source: expected 'explicit' or 'model', got {mc.source!r}")
        _positive("mc.beta", mc.beta)
        if mc.n_sites < 8 or mc.n_sites % 2:
            raise ConfigError("mc.n_sites: must be an even integer >= 8")
        _positive("mc.kinetic", mc.kinetic)
        _positive("mc.bin_size", mc.bin_size)
        if mc.n_therm < 0:
            raise ConfigError("mc.n_therm: must be non-negative")
        if mc.n_sweeps < 10 * mc.bin_size:
            raise ConfigError("mc.n_sweeps: must be at least 10 * mc.bin_size")
        if mc.source == "explicit" and mc.mass2 <= 0 and mc.quartic <= 0:
            raise ConfigError("mc.mass2: non-positive mass needs mc.quartic > 0")
        if mc.seed < 0:
            raise ConfigError("mc.seed: must be non-negative")
    if cmd == "matsubara-check":
        _positive("matsubara.beta", cfg.matsubara.beta)
        if cfg.matsubara.cutoff < 1000:
            raise ConfigError("matsubara.cutoff: must be >= 1000")
    try:
        cfg.hamiltonian_spec()
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


# ---------------------------------------------------------------- entry points

def load_document(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"parse error at {where}{problem}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping of sections")
    return doc


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply ``section.key=value``; the value is read as a YAML scalar or flow list."""
    if "=" not in assignment:
        raise ConfigError(f"--set {assignment!r}: expected section.key=value")
    lhs, rhs = assignment.split("=", 1)
    parts = lhs.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"--set {assignment!r}: expected section.key=value")
    try:
        value = yaml.safe_load(rhs)
    except yaml.YAMLError:
        raise ConfigError(f"--set {assignment!r}: cannot parse value") from None
    doc = copy.deepcopy(doc)
    section = doc.setdefault(parts[0], {})
    if section is None:
        section = doc[parts[0]] = {}
    if not isinstance(section, dict):
        raise ConfigError(f"{parts[0]}: expected a mapping")
    section[parts[1]] = value
    return doc


def parse_config(text: str, command: str | None = None, overrides=()) -> RunConfig:
    doc = load_document(text)
    for assignment in overrides:
        doc = apply_override(doc, assignment)
    doc_cmd = doc.get("command")
    if command is None:
        if doc_cmd is None:
            raise ConfigError("command: missing")
        command = doc_cmd
    elif doc_cmd is not None and doc_cmd != command:
        raise ConfigError(f"command: document says {doc_cmd!r} but {command!r} was requested")
    return _build(str(command), doc)


def scan_plan(cfg: RunConfig) -> list[tuple[float, float]]:
    """(lambda, z') cells of a table1 run, row-major in lambda."""
    return [(lam, zp) for lam in cfg.grids.coupling for zp in cfg.grids.z_prime]
