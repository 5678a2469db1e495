"""INI run configuration and generator specs.

Run configs look like::

    [run]
    method = tnll-anchor
    seed = 0

    [network]
    num_layers = 4
    hidden_dim = 32

    [prior]
    variance = 0.01        ; or per block: input_i = 0.02, head = 0.05, ...

Unknown keys and invalid values are all collected and reported together.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .data import SYNTHETIC_FEATURES, SYNTHETIC_TARGET, CycleSpec, NoiseSpec, VehicleSpec
from .estimator import METHODS, AnchoredLSTMRegressor
from .exceptions import ConfigError
from .lstm import GateBlock
from .training import PENALTY_SCALINGS

_SECTIONS = {
    "run": ("method", "seed"),
    "network": ("num_layers", "hidden_dim", "window_length", "dropout_rate", "scale_floor"),
    "training": ("n_members", "epochs", "learning_rate", "batch_size", "mc_samples", "penalty_scaling"),
    "likelihood": ("nu",),
    "data": ("features", "target"),
    "evaluation": ("alpha",),
}


def _default_prior() -> dict:
    return {b.value: 0.01 for b in GateBlock}


@dataclass
class RunConfig:
    method: str = "tnll-anchor"
    seed: int = 0
    num_layers: int = 4
    hidden_dim: int = 32
    window_length: int = 16
    dropout_rate: float = 0.1
    scale_floor: float = 1e-4
    n_members: int = 30
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 32
    mc_samples: int = 30
    penalty_scaling: str = "per_sample"
    nu: float = 4.0
    prior_variance: dict = field(default_factory=_default_prior)
    features: list = field(default_factory=lambda: list(SYNTHETIC_FEATURES))
    target: str = SYNTHETIC_TARGET
    alpha: float = 0.1

    def validate(self) -> None:
        problems = []
        if self.method not in METHODS:
            problems.append(f"run.method: unknown preset {self.method!r} (choose from {', '.join(sorted(METHODS))})")
        for name in ("num_layers", "hidden_dim", "window_length", "n_members", "epochs", "batch_size", "mc_samples"):
            if getattr(self, name) < 1:
                problems.append(f"{name}: must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            problems.append("dropout_rate: must lie in [0, 1)")
        if self.method in METHODS and METHODS[self.method][1] == "mc_dropout" and not self.dropout_rate > 0:
            problems.append("dropout_rate: dropout methods require a rate > 0")
        if self.penalty_scaling not in PENALTY_SCALINGS:
            problems.append(f"penalty_scaling: must be one of {', '.join(PENALTY_SCALINGS)}")
        if not self.scale_floor > 0:
            problems.append("scale_floor: must be positive")
        if self.learning_rate < 0:
            problems.append("learning_rate: must be >= 0")
        if not self.nu > 0:
            problems.append("nu: must be positive")
        elif self.method in METHODS and METHODS[self.method][0] == "t" and not self.nu > 2:
            problems.append("nu: t-head intervals need nu > 2")
        for block in GateBlock:
            v = self.prior_variance.get(block.value)
            if v is None or not v > 0:
                problems.append(f"prior.{block.value}: variance must be positive")
        if not self.features:
            problems.append("data.features: at least one feature required")
        if self.target in self.features:
            problems.append("data.target: target cannot also be a feature")
        if not 0 < self.alpha < 1:
            problems.append("alpha: must lie in (0, 1)")
        if problems:
            raise ConfigError("invalid configuration: " + "; ".join(problems))

    def estimator(self, verbose: int = 0) -> AnchoredLSTMRegressor:
        return AnchoredLSTMRegressor(
            method=self.method,
            n_members=self.n_members,
            num_layers=self.num_layers,
            hidden_dim=self.hidden_dim,
            nu=self.nu,
            prior_variance=dict(self.prior_variance),
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            dropout_rate=self.dropout_rate,
            mc_samples=self.mc_samples,
            penalty_scaling=self.penalty_scaling,
            scale_floor=self.scale_floor,
            random_state=self.seed,
            verbose=verbose,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_ini(self) -> str:
        lines = []
        for section, keys in _SECTIONS.items():
            lines.append(f"[{section}]")
            for k in keys:
                v = getattr(self, k)
                lines.append(f"{k} = {', '.join(v) if isinstance(v, list) else v}")
            lines.append("")
        lines.append("[prior]")
        lines += [f"{k} = {v}" for k, v in self.prior_variance.items()]
        return "\n".join(lines) + "\n"


def _coerce(cfg: RunConfig, key: str, raw: str, problems: list) -> None:
    kind = {f.name: f.type for f in fields(RunConfig)}[key]
    try:
        if key == "features":
            value = [s.strip() for s in raw.split(",") if s.strip()]
        elif kind == "int":
            value = int(raw)
        elif kind == "float":
            value = float(raw)
        else:
            value = raw.strip()
    except ValueError:
        problems.append(f"{key}: cannot parse {raw!r}")
        return
    setattr(cfg, key, value)


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}".replace("\n", " ")) from exc
    cfg = RunConfig()
    problems: list[str] = []
    for section in parser.sections():
        items = parser[section]
        if section == "prior":
            for key, raw in items.items():
                try:
                    value = float(raw)
                except ValueError:
                    problems.append(f"prior.{key}: cannot parse {raw!r}")
                    continue
                if key == "variance":
                    cfg.prior_variance = {b.value: value for b in GateBlock}
            for key, raw in items.items():
                if key == "variance":
                    continue
                if key not in cfg.prior_variance:
                    problems.append(f"prior.{key}: unknown gate block")
                else:
                    try:
                        cfg.prior_variance[key] = float(raw)
                    except ValueError:
                        pass
            continue
        allowed = _SECTIONS.get(section)
        if allowed is None:
            problems.append(f"[{section}]: unknown section")
            continue
        for key, raw in items.items():
            if key not in allowed:
                problems.append(f"{section}.{key}: unknown key")
            else:
                _coerce(cfg, key, raw, problems)
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))
    cfg.validate()
    return cfg


def load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_run_config(Path(path).read_text(encoding="utf-8"), str(path))


def load_generator_spec(path: Optional[str]) -> tuple[CycleSpec, NoiseSpec, VehicleSpec]:
    """Read ``[cycle]``, ``[noise]`` and ``[vehicle]`` sections; all optional."""
    if path is None:
        return CycleSpec(), NoiseSpec(), VehicleSpec()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(Path(path).read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from exc
    built = {}
    problems = []
    for section, cls in (("cycle", CycleSpec), ("noise", NoiseSpec), ("vehicle", VehicleSpec)):
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        if parser.has_section(section):
            for key, raw in parser[section].items():
                if key not in kinds or key == "knots":
                    problems.append(f"{section}.{key}: unknown key")
                    continue
                try:
                    if kinds[key] == "bool":
                        kwargs[key] = parser[section].getboolean(key)
                    elif kinds[key] == "int":
                        kwargs[key] = int(raw)
                    else:
                        kwargs[key] = float(raw)
                except ValueError:
                    problems.append(f"{section}.{key}: cannot parse {raw!r}")
        built[section] = cls(**kwargs)
    unknown = [s for s in parser.sections() if s not in built]
    problems += [f"[{s}]: unknown section" for s in unknown]
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))
    for spec in built.values():
        spec.validate()
    return built["cycle"], built["noise"], built["vehicle"]
