"""Experiment configuration: TOML recipes with a JSON mirror.

Every section is a frozen dataclass; parsing checks types and ranges and
names the offending field (``lattice.V_X``) in the error.  The canonical
form is the fully populated dictionary, whose hash stamps every output.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .lattice import TABLE_A1

DEFAULT_F1 = 216.5


@dataclass(frozen=True)
class LatticeSection:
    depth_set: str = "fig3"
    V_X: float | None = None
    V_Xint: float | None = None
    V_Z: float | None = None
    I_XZ: float = 0.777
    theta: float = math.pi

    def resolved(self) -> dict:
        row = dict(TABLE_A1[self.depth_set]) if self.depth_set else {}
        for name in ("V_X", "V_Xint", "V_Z"):
            if getattr(self, name) is not None:
                row[name] = getattr(self, name)
        if isinstance(row.get("V_X"), tuple):
            raise ConfigError(f"lattice.V_X: depth set {self.depth_set!r} scans V_X, give a value")
        for name in ("V_X", "V_Xint", "V_Z"):
            if name not in row:
                raise ConfigError(f"lattice.{name}: missing")
            if row[name] < 0:
                raise ConfigError(f"lattice.{name}: depth must be >= 0, got {row[name]}")
        return {"V_X": row["V_X"], "V_Xint": row["V_Xint"], "V_Z": row["V_Z"], "I_XZ": self.I_XZ, "theta": self.theta}

    def validate(self):
        if self.depth_set and self.depth_set not in TABLE_A1:
            raise ConfigError(f"lattice.depth_set: unknown set {self.depth_set!r}; choose from {sorted(TABLE_A1)}")
        if not 0.0 <= self.I_XZ <= 1.0:
            raise ConfigError(f"lattice.I_XZ: must lie in [0, 1], got {self.I_XZ}")
        self.resolved()


@dataclass(frozen=True)
class PumpSection:
    T: float = 1.2e-3
    direction: int = 1
    n_samples: int = 64
    enabled: bool = True

    def validate(self):
        if not self.T > 0:
            raise ConfigError(f"pump.T: period must be positive, got {self.T}")
        if self.direction not in (1, -1):
            raise ConfigError(f"pump.direction: must be +1 or -1, got {self.direction}")
        if self.n_samples < 8:
            raise ConfigError(f"pump.n_samples: need at least 8, got {self.n_samples}")


@dataclass(frozen=True)
class HubbardSection:
    U: float = 1.5

    def validate(self):
        if not self.U > 0:
            raise ConfigError(f"hubbard.U: must be positive, got {self.U}")


@dataclass(frozen=True)
class SolverSection:
    n_max: int = 12
    nq: int = 16
    n_phase: int = 64

    def validate(self):
        if 2 * self.n_max + 1 < 16:
            raise ConfigError(f"solver.n_max: plane-wave cutoff 2*n_max+1 must be >= 16, got n_max={self.n_max}")
        if self.nq < 4:
            raise ConfigError(f"solver.nq: need at least 4 quasimomenta, got {self.nq}")
        if self.n_phase < 8:
            raise ConfigError(f"solver.n_phase: need at least 8 phase samples, got {self.n_phase}")


@dataclass(frozen=True)
class CalibrationSection:
    targets: tuple = (0.5, 1.0, 1.5, 2.0)
    T_range: tuple = (2e-4, 5e-3)
    n_T: int = 9
    V_X_range: tuple = (4.5, 8.4)
    n_V_X: int = 7

    def validate(self):
        for name in ("T_range", "V_X_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ConfigError(f"calibration.{name}: need 0 < low < high, got {(lo, hi)}")
        if any(not a > 0 for a in self.targets):
            raise ConfigError("calibration.targets: gate exponents must be positive")


@dataclass(frozen=True)
class CircuitSection:
    file: str = ""
    layers: tuple = (1.0,) * 5

    def validate(self):
        if not self.file and any(not math.isfinite(a) for a in self.layers):
            raise ConfigError("circuit.layers: gate exponents must be finite")


@dataclass(frozen=True)
class STOSection:
    f1: float | None = None
    gradient: float | None = None
    f1_per_gradient: float = 216.5
    periods: float = 2.0
    n_tau: int = 200
    s_max: int = 12

    @property
    def base_frequency(self) -> float:
        if self.f1 is not None:
            return self.f1
        if self.gradient is not None:
            return self.gradient * self.f1_per_gradient
        return DEFAULT_F1

    def validate(self):
        if self.f1 is not None and self.gradient is not None:
            raise ConfigError("sto.f1: give either f1 or gradient, not both")
        if not self.base_frequency > 0:
            raise ConfigError(f"sto.f1: base frequency must be positive, got {self.base_frequency}")
        if self.n_tau < 8:
            raise ConfigError(f"sto.n_tau: need at least 8 samples, got {self.n_tau}")
        if not self.periods > 0:
            raise ConfigError("sto.periods: must be positive")


@dataclass(frozen=True)
class EnsembleSection:
    n_tubes: int = 200
    L: int = 80
    filling: float = 0.65
    margin: int = 10
    boundary: str = "hold"
    singles: float = 0.0
    engine: str = "auto"

    def validate(self):
        if self.n_tubes < 1:
            raise ConfigError(f"ensemble.n_tubes: must be >= 1, got {self.n_tubes}")
        if self.L <= 0 or self.L % 2:
            raise ConfigError(f"ensemble.L: must be a positive even number, got {self.L}")
        if self.margin < 0 or self.margin % 2 or 2 * self.margin > self.L:
            raise ConfigError(f"ensemble.margin: must be even and fit the tube, got {self.margin}")
        if not 0 <= self.filling <= 1:
            raise ConfigError(f"ensemble.filling: must lie in [0, 1], got {self.filling}")
        if not 0 <= self.singles <= 1:
            raise ConfigError(f"ensemble.singles: must lie in [0, 1], got {self.singles}")
        if self.boundary not in ("hold", "mirror"):
            raise ConfigError(f"ensemble.boundary: 'hold' or 'mirror', got {self.boundary!r}")
        if self.engine not in ("auto", "pair", "statevector"):
            raise ConfigError(f"ensemble.engine: unknown engine {self.engine!r}")


@dataclass(frozen=True)
class NoiseSection:
    alpha_sigma: float = 0.0
    survival: float = 1.0

    def validate(self):
        if self.alpha_sigma < 0:
            raise ConfigError(f"noise.alpha_sigma: must be >= 0, got {self.alpha_sigma}")
        if not 0 <= self.survival <= 1:
            raise ConfigError(f"noise.survival: must lie in [0, 1], got {self.survival}")


@dataclass(frozen=True)
class ShuttleSection:
    enabled: bool = False
    fidelity: float = 0.9978
    n_cycles: int = 100
    reversal: int = 50

    def validate(self):
        if not 0 < self.fidelity <= 1:
            raise ConfigError(f"shuttle.fidelity: must lie in (0, 1], got {self.fidelity}")
        if self.n_cycles < 2:
            raise ConfigError(f"shuttle.n_cycles: must be >= 2, got {self.n_cycles}")


_SECTIONS = {
    "lattice": LatticeSection,
    "pump": PumpSection,
    "hubbard": HubbardSection,
    "solver": SolverSection,
    "calibration": CalibrationSection,
    "circuit": CircuitSection,
    "sto": STOSection,
    "ensemble": EnsembleSection,
    "noise": NoiseSection,
    "shuttle": ShuttleSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    lattice: LatticeSection = field(default_factory=LatticeSection)
    pump: PumpSection = field(default_factory=PumpSection)
    hubbard: HubbardSection = field(default_factory=HubbardSection)
    solver: SolverSection = field(default_factory=SolverSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    circuit: CircuitSection = field(default_factory=CircuitSection)
    sto: STOSection = field(default_factory=STOSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    shuttle: ShuttleSection = field(default_factory=ShuttleSection)
    seed: int = 0
    output: str = "run"
    base_dir: str = field(default=".", compare=False)

    def validate(self):
        for name in _SECTIONS:
            getattr(self, name).validate()
        if self.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {self.seed}")
        return self

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "output": self.output}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = {
                f.name: list(v) if isinstance(v, tuple) else v
                for f in dataclasses.fields(sec)
                if (v := getattr(sec, f.name)) is not None
            }
        return out

    def digest(self) -> str:
        """Hash of the canonical form; stamps every emitted file.

        The output directory is left out so that relocating a run does not
        change its outputs.
        """
        canon = {k: v for k, v in self.to_dict().items() if k != "output"}
        return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, seed: int | None = None, output: str | None = None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if output is not None:
            changes["output"] = output
        return dataclasses.replace(self, **changes).validate()

    def resolve_path(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _coerce(section: str, name: str, value, annotation: str):
    where = f"{section}.{name}"
    kinds = annotation.replace(" ", "").split("|")
    if value is None:
        if "None" in kinds:
            return None
        raise ConfigError(f"{where}: value required")
    if "bool" in kinds:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if "int" in kinds:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if "float" in kinds:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if "tuple" in kinds:
        if not isinstance(value, (list, tuple)) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
        ):
            raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    if "str" in kinds:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {annotation}")


def config_from_dict(data: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    kwargs = {}
    for key, value in data.items():
        if key in ("seed",):
            kwargs[key] = _coerce("config", key, value, "int")
        elif key == "output":
            kwargs[key] = _coerce("config", key, value, "str")
        elif key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a table")
            known = {f.name: f for f in dataclasses.fields(cls)}
            fields = {}
            for name, v in value.items():
                if name not in known:
                    raise ConfigError(f"{key}.{name}: unknown field")
                fields[name] = _coerce(key, name, v, str(known[name].type))
            kwargs[key] = cls(**fields)
        else:
            raise ConfigError(f"{key}: unknown section")
    return ExperimentConfig(**kwargs, base_dir=base_dir).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, base_dir=str(path.parent))


def dump_toml(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def dump_json(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
