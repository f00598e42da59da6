from __future__ import annotations

import configparser
import os
import re
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from whoeffding.errors import ConfigError
from whoeffding.services.markov_core import FUNCTIONAL_NAMES
from whoeffding.services.markov_models import MODEL_NAMES
from whoeffding.utils import parse_float, parse_float_list, stable_hash

DEFAULT_CONFIG_PATH = "experiment.conf"
DEFAULT_SECTION = "experiment"


class GammaSettings(BaseModel):
    value: Optional[float] = None
    horizon: Optional[float] = None
    grid: Optional[List[float]] = None

    @field_validator("value", "horizon")
    @classmethod
    def _non_negative(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("grid")
    @classmethod
    def _grid_not_empty(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and not v:
            raise ValueError("gamma grid must not be empty")
        return v


class OutputSettings(BaseModel):
    path: str = "certify.csv"
    format: Literal["csv", "json"] = "csv"


class ExperimentConfig(BaseModel):
    model: str
    alpha: float = 1.0
    functional: str = "identity"
    functional_clip: Optional[float] = None
    functional_value: Optional[float] = None
    x0: float = 0.0
    t: List[float] = Field(default_factory=list)
    eps: List[float] = Field(default_factory=list)
    samples: int = 10_000
    seed: int = 0
    subordinator: Optional[str] = None
    one_sided: bool = False
    gamma: GammaSettings = Field(default_factory=GammaSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @field_validator("model")
    @classmethod
    def _known_model(cls, v: str) -> str:
        key = v.strip().lower()
        if key not in MODEL_NAMES:
            raise ValueError(f"unknown model {v!r}; expected one of {', '.join(MODEL_NAMES)}")
        return key

    @field_validator("functional")
    @classmethod
    def _known_functional(cls, v: str) -> str:
        key = v.strip().lower().replace("_", "-")
        if key not in FUNCTIONAL_NAMES:
            raise ValueError(f"unknown functional {v!r}; expected one of {', '.join(FUNCTIONAL_NAMES)}")
        return key

    @field_validator("t", "eps")
    @classmethod
    def _positive_grid(cls, v: List[float]) -> List[float]:
        if any(not (p > 0) for p in v):
            raise ValueError("grid points must be > 0")
        return v

    @field_validator("samples")
    @classmethod
    def _enough_samples(cls, v: int) -> int:
        if v < 100:
            raise ValueError("samples must be >= 100")
        return v

    @field_validator("seed")
    @classmethod
    def _unsigned_seed(cls, v: int) -> int:
        if v < 0:
            raise ValueError("seed must be >= 0")
        return v

    @property
    def config_hash(self) -> str:
        return stable_hash(self.model_dump(mode="json"))


# key in the file -> (field path in ExperimentConfig, kind)
_EXPERIMENT_KEYS: Dict[str, Tuple[str, str]] = {
    "model": ("model", "str"),
    "alpha": ("alpha", "float"),
    "functional": ("functional", "str"),
    "functional_clip": ("functional_clip", "float"),
    "functional_value": ("functional_value", "float"),
    "x0": ("x0", "float"),
    "t": ("t", "list"),
    "eps": ("eps", "list"),
    "samples": ("samples", "int"),
    "seed": ("seed", "int"),
    "subordinator": ("subordinator", "str"),
    "one_sided": ("one_sided", "bool"),
    "gamma": ("gamma.value", "float"),
    "gamma_horizon": ("gamma.horizon", "float"),
    "gamma_grid": ("gamma.grid", "list"),
    "output": ("output.path", "str"),
    "format": ("output.format", "str"),
}

_SECTION_KEYS: Dict[str, Dict[str, Tuple[str, str]]] = {
    DEFAULT_SECTION: _EXPERIMENT_KEYS,
    "gamma": {
        "value": ("gamma.value", "float"),
        "horizon": ("gamma.horizon", "float"),
        "grid": ("gamma.grid", "list"),
    },
    "output": {
        "path": ("output.path", "str"),
        "format": ("output.format", "str"),
    },
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^([^\s=:#;\[][^=:]*?)\s*[=:]")

_cached_configs: Dict[str, Tuple[ExperimentConfig, float]] = {}


def resolve_config_path(path: Optional[Union[str, Path]] = None) -> Path:
    if path is not None and str(path).strip():
        return Path(path)
    override = (os.getenv("WHOEFFDING_CONFIG_PATH") or "").strip()
    return Path(override or DEFAULT_CONFIG_PATH)


def _key_lines(text: str) -> Dict[Tuple[str, str], int]:
    lines: Dict[Tuple[str, str], int] = {}
    section = DEFAULT_SECTION
    for number, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip().lower()
            lines.setdefault((section, ""), number)
            continue
        k = _KEY_RE.match(raw)
        if k:
            lines.setdefault((section, k.group(1).strip().lower()), number)
    return lines


def _is_flat(text: str) -> bool:
    for raw in text.splitlines():
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        return not stripped.startswith("[")
    return True


def _convert(raw: str, kind: str, line: Optional[int]) -> object:
    value = raw.strip()
    try:
        if kind == "float":
            return parse_float(value) if value else None
        if kind == "int":
            try:
                return int(value)
            except ValueError:
                number = parse_float(value)
                if number != int(number):
                    raise
                return int(number)
        if kind == "list":
            return parse_float_list(value)
        if kind == "bool":
            lowered = value.lower()
            if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(f"not a boolean: {value!r}")
            return lowered in ("1", "true", "yes", "on")
    except ValueError as exc:
        raise ConfigError(f"invalid value {value!r}: {exc}", line) from exc
    return value or None


def _assign(data: Dict[str, object], field_path: str, value: object) -> None:
    head, _, tail = field_path.partition(".")
    if not tail:
        data[head] = value
        return
    nested = data.setdefault(head, {})
    assert isinstance(nested, dict)
    nested[tail] = value


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse a flat or sectioned key-value experiment file."""
    flat = _is_flat(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    source = f"[{DEFAULT_SECTION}]\n{text}" if flat else text
    try:
        parser.read_string(source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        if line is not None and flat:
            line -= 1
        raise ConfigError(f"cannot parse config: {getattr(exc, 'message', exc)}".splitlines()[0], line) from exc

    lines = _key_lines(text)
    data: Dict[str, object] = {}
    origin: Dict[str, Optional[int]] = {}
    for section in parser.sections():
        name = section.strip().lower()
        known = _SECTION_KEYS.get(name)
        if known is None:
            header = lines.get((name, ""))
            raise ConfigError(f"unknown section [{section}]", header)
        for key, raw in parser.items(section):
            line = lines.get((name, key))
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]", line)
            field_path, kind = known[key]
            value = _convert(raw, kind, line)
            if value is not None:
                _assign(data, field_path, value)
                origin[field_path] = line

    if "model" not in data:
        raise ConfigError("missing required key 'model'")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        field_path = ".".join(str(p) for p in err.get("loc", ()) if not isinstance(p, int))
        message = str(err.get("msg", "invalid value")).removeprefix("Value error, ")
        raise ConfigError(f"{field_path or 'config'}: {message}", origin.get(field_path)) from exc


def load_experiment_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    global _cached_configs

    cfg_path = resolve_config_path(path)
    key = str(cfg_path)
    try:
        mtime = float(cfg_path.stat().st_mtime)
    except OSError as exc:
        raise ConfigError(f"config file not found: {cfg_path}") from exc

    cached = _cached_configs.get(key)
    if cached is not None and cached[1] == mtime:
        return cached[0]

    try:
        text = cfg_path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {cfg_path}: {exc}") from exc
    cfg = parse_experiment_config(text)
    _cached_configs[key] = (cfg, mtime)
    return cfg
