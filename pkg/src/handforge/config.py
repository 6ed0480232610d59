"""JSON run configuration with field-level validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .dataset_io.adapt import MASK_RULES, AdapterSpec
from .randomizer import GenerationPolicy
from .scene_core import CameraModel

TOP_LEVEL_KEYS = ("policy", "camera", "assets", "adapter")


class ConfigError(ValueError):
    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    policy: GenerationPolicy = field(default_factory=GenerationPolicy)
    camera: CameraModel = field(default_factory=CameraModel)
    assets: Optional[dict] = None
    adapter: AdapterSpec = field(default_factory=AdapterSpec)
    base_dir: Path = Path(".")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(prefix: str, name: str, default, value, problems: List[str]):
    where = f"{prefix}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true or false")
            return None
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            problems.append(f"{where}: expected an integer")
            return None
        return value
    if isinstance(default, float):
        if not _is_number(value):
            problems.append(f"{where}: expected a number")
            return None
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or (default and len(value) != len(default)):
            n = len(default)
            problems.append(f"{where}: expected a list of {n} values" if n else f"{where}: expected a list")
            return None
        if default and not all(_is_number(v) for v in value):
            problems.append(f"{where}: expected numbers")
            return None
        if default and all(isinstance(v, int) for v in default):
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                problems.append(f"{where}: expected integers")
                return None
            return tuple(value)
        return tuple(float(v) if default else v for v in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            problems.append(f"{where}: expected a string")
            return None
        return value
    return value


def _section(prefix: str, cls, raw, problems: List[str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        problems.append(f"{prefix}: expected an object")
        return {}
    defaults = {f.name: (f.default if f.default is not dataclasses.MISSING else None) for f in dataclasses.fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in defaults:
            problems.append(f"{prefix}.{key}: unknown field")
            continue
        default = defaults[key]
        if key == "known_labels":
            if value is not None and not (isinstance(value, list) and all(isinstance(v, int) for v in value)):
                problems.append(f"{prefix}.{key}: expected null or a list of integers")
                continue
            out[key] = None if value is None else tuple(value)
            continue
        if key == "categories":
            default = (0,)
            if not (isinstance(value, list) and all(isinstance(v, int) for v in value)):
                problems.append(f"{prefix}.{key}: expected a list of integers")
                continue
            out[key] = tuple(value)
            continue
        checked = _check_value(prefix, key, default, value, problems)
        if checked is not None:
            out[key] = checked
    return out


def parse_config(raw, base_dir=".") -> RunConfig:
    """Validate a config dict; raises ConfigError listing every problem."""
    problems: List[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    for key in raw:
        if key not in TOP_LEVEL_KEYS:
            problems.append(f"{key}: unknown field")
    sections = {}
    for name, cls in (("policy", GenerationPolicy), ("camera", CameraModel), ("adapter", AdapterSpec)):
        before = len(problems)
        kw = _section(name, cls, raw.get(name), problems)
        sections[name] = kw if len(problems) == before else None  # None: skip range checks
    assets = raw.get("assets")
    if assets is not None and not isinstance(assets, dict):
        problems.append("assets: expected an object")

    # range checks for every section whose fields all have the right type
    policy = camera = adapter = None
    if sections["policy"] is not None:
        try:
            policy = GenerationPolicy(**sections["policy"])
        except ValueError as exc:
            problems.extend(f"policy.{p}" for p in str(exc).split("; "))
    if sections["camera"] is not None:
        try:
            camera = CameraModel(**sections["camera"])
        except ValueError as exc:
            problems.append(f"camera: {exc}")
    if sections["adapter"] is not None:
        if sections["adapter"].get("mask_rule", "binarize") not in MASK_RULES:
            problems.append(f"adapter.mask_rule: must be one of {', '.join(MASK_RULES)}")
        else:
            try:
                adapter = AdapterSpec(**sections["adapter"])
            except ValueError as exc:
                problems.append(f"adapter: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(policy, camera, assets, adapter, Path(base_dir))


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"{p.name}: cannot read: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{p.name}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return parse_config(raw, p.parent)


def config_dict(cfg: RunConfig) -> Dict:
    return {"policy": cfg.policy.to_dict(), "camera": dataclasses.asdict(cfg.camera),
            "adapter": cfg.adapter.to_dict()}
