"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

from .features import FeatureConfig
from .kcf import KcfConfig
from .pipeline import Mode, TrackerConfig, ablation_mode


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # input: either a sequence directory or a synthetic preset name
    sequence: str = ""
    synthetic: str = ""
    detections: str = ""
    gt: str = ""
    output: str = "results.txt"
    # policies: a weights file, "bundled" (shipped defaults) or "none"
    refresh_policy: str = "bundled"
    pair_scorer: str = "bundled"
    seed: int = 0
    mode: str = "full"

    template_rows: int = 32
    template_cols: int = 16
    cell_size: int = 4
    padding: float = 2.5
    det_gain: float = 1.0
    id_gain: float = 1.0

    lam: float = 1e-4
    sigma: float = 0.5
    label_sigma_factor: float = 0.1

    big_c: float = 1e6
    s_min: float = 0.1
    t_v: float = 4
    retrack_iou: float = 0.3
    accept_threshold: float = 0.0

    iou_threshold: float = 0.5

    # training
    train_on: str = "refresh_training:0,refresh_training:1"
    train_margin: float = 0.2
    train_max_epochs: int = 50
    pair_reg: float = 1e-3

    def __post_init__(self):
        try:
            Mode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {[m.value for m in Mode]}") from None
        if self.sequence and self.synthetic:
            raise ConfigError("set either 'sequence' or 'synthetic', not both")
        try:
            self.tracker()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def features(self) -> FeatureConfig:
        return FeatureConfig(
            template_size=(self.template_rows, self.template_cols),
            cell_size=self.cell_size,
            padding=self.padding,
            det_gain=self.det_gain,
            id_gain=self.id_gain,
        )

    def tracker(self) -> TrackerConfig:
        base = TrackerConfig(
            features=self.features(),
            kcf=KcfConfig(self.lam, self.sigma, self.label_sigma_factor),
            big_c=self.big_c,
            s_min=self.s_min,
            t_v=self.t_v,
            retrack_iou=self.retrack_iou,
            accept_threshold=self.accept_threshold,
        )
        return ablation_mode(base, self.mode)

    def with_overrides(self, **kw: Any) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str) -> Any:
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if math.isnan(v):
                raise ValueError("nan")
            return v
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None
    return raw


def _render(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def loads(text: str, origin: str = "<config>") -> RunConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values)


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {_render(getattr(cfg, f.name))}\n" for f in fields(cfg))


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = loads(path.read_text(), str(path))
    return _resolve_paths(cfg, path.parent)


def save(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))


def _resolve_paths(cfg: RunConfig, base: Path) -> RunConfig:
    """Relative paths in a config file are taken relative to that file."""
    changes: dict[str, str] = {}
    for key in ("sequence", "detections", "gt", "output", "refresh_policy", "pair_scorer"):
        v: str = getattr(cfg, key)
        if v and v not in ("bundled", "none") and not Path(v).is_absolute():
            changes[key] = str(base / v)
    return replace(cfg, **changes) if changes else cfg


def parse_tv_list(text: Optional[str]) -> list[float]:
    if not text:
        return [0, 1, 2, 4, 8, 20]
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad T_V list {text!r}") from None
    if not out or any(v < 0 or math.isnan(v) for v in out):
        raise ConfigError(f"bad T_V list {text!r}")
    return out
