"""Run configuration: flat key=value files, overrides, validation and hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .circle_rotation import GOLDEN, build_omega_from_coeffs


class ConfigError(ValueError):
    """Bad or missing configuration value (CLI exit code 2)."""


NAMED_OMEGA = {
    "golden": GOLDEN,
    "silver": math.sqrt(2.0) - 1.0,
}


@dataclass
class RunConfig:
    family: str = "tanh"
    alpha: float = 5.0
    split: Optional[str] = None
    ref_a: float = 8.0
    ref_b: float = 0.2
    omega: str = "golden"
    grid_n: int = 100_000
    n_max: int = 200
    tol: float = 1e-10
    l1_tol: Optional[float] = 1e-9
    seed: int = 0
    out: str = "out"
    svg: bool = False
    # check
    dio_n: int = 10_000
    a: Optional[float] = None
    b: Optional[str] = None
    m: Optional[int] = None
    find_alpha0: bool = False
    worked_example: bool = False
    # probe
    n_samples: int = 200
    delta: float = 5e-3
    epsilon: float = 5e-3
    # counterexample
    coeff_rule: str = "square"
    base_a: float = 3.0
    depth_k: int = 25
    n_iter: int = 500
    smooth: bool = False
    explicit: set = field(default_factory=set, repr=False, compare=False)

    def resolved_omega(self) -> float:
        text = str(self.omega).strip()
        if not text:
            raise ConfigError("omega is missing")
        if text in NAMED_OMEGA:
            return NAMED_OMEGA[text]
        if text.startswith("cf:"):
            try:
                coeffs = [int(c) for c in text[3:].split(",") if c.strip()]
                return build_omega_from_coeffs(coeffs, strict=False)
            except ValueError as exc:
                raise ConfigError(f"bad continued fraction {text!r}: {exc}") from None
        try:
            w = float(text)
        except ValueError:
            raise ConfigError(f"cannot read omega {text!r}") from None
        if not 0.0 < w < 1.0:
            raise ConfigError("omega must lie in (0, 1)")
        return w

    def resolved_split(self) -> Optional[tuple]:
        if self.split in (None, "", "none"):
            return None
        try:
            outer, inner = (float(v) for v in str(self.split).split(","))
        except ValueError:
            raise ConfigError(f"split must be 'a1,a2', got {self.split!r}") from None
        return outer, inner

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("explicit")
        return d

    def hash(self) -> str:
        """sha256 of the canonical JSON form, without the output directory."""
        d = self.as_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "explicit"}


def _coerce(name: str, text: str):
    f = _FIELDS[name]
    default = f.default
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    text = text.strip()
    try:
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "Optional" in kind and text.lower() in ("", "none"):
            return None
        if "int" in kind:
            return int(float(text)) if "e" in text.lower() else int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text if default is not None or "str" in kind else text


def apply_pairs(cfg: RunConfig, pairs) -> RunConfig:
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_").lower()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, value))
        cfg.explicit.add(key)
    return cfg


def load_config_file(path) -> list:
    """Lines of key=value; blank lines and '#' comments ignored."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return [ln.split("#", 1)[0].strip() for ln in lines if ln.split("#", 1)[0].strip()]


def validate(cfg: RunConfig) -> RunConfig:
    cfg.resolved_omega()
    cfg.resolved_split()
    if cfg.family not in ("tanh", "reference", "counterexample"):
        raise ConfigError(f"unknown family {cfg.family!r}")
    if cfg.grid_n < 2:
        raise ConfigError("grid_n must be >= 2")
    if cfg.n_max < 0:
        raise ConfigError("n_max must be >= 0")
    if not cfg.tol > 0:
        raise ConfigError("tol must be positive")
    if not cfg.alpha > 0:
        raise ConfigError("alpha must be positive")
    return cfg
