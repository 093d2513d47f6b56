"""Pipeline-wide settings and the ``key=value`` config file format.

A config file holds one assignment per line; ``#`` starts a comment. Keys are
``section.field`` where section is ``pcf``, ``net``, ``gripper`` or
``eval``, plus the bare key ``seed``. Values are Python literals, so tuples
are written as ``0.04, 0.08, 0.16`` or ``(0.04, 0.08, 0.16)``::

    seed = 3
    net.n_points = 512
    pcf.fanouts = 16, 16, 32
    eval.k = 10
"""

from __future__ import annotations

import ast
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ArgumentError
from .evaluate import Thresholds
from .grasp import GripperModel
from .net import NetConfig
from .pcf import PcfConfig

SECTIONS = {"pcf": PcfConfig, "net": NetConfig, "gripper": GripperModel, "eval": Thresholds}


@dataclass(frozen=True)
class PipelineConfig:
    pcf: PcfConfig = field(default_factory=PcfConfig)
    net: NetConfig = field(default_factory=NetConfig)
    gripper: GripperModel = field(default_factory=GripperModel)
    eval: Thresholds = field(default_factory=Thresholds)
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "pcf": dataclasses.asdict(self.pcf),
            "net": dataclasses.asdict(self.net),
            "gripper": dataclasses.asdict(self.gripper),
            "eval": dataclasses.asdict(self.eval),
            "seed": self.seed,
        }

    def digest(self) -> str:
        """Short stable hash of every setting, for provenance records."""
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict[str, object]) -> "PipelineConfig":
        by_section: dict[str, dict] = {}
        seed = self.seed
        for key, value in overrides.items():
            if key == "seed":
                seed = int(value)
                continue
            section, _, name = key.partition(".")
            if section not in SECTIONS or not name:
                raise ArgumentError(f"unknown config key {key!r}")
            if name not in {f.name for f in fields(SECTIONS[section])}:
                raise ArgumentError(f"unknown config key {key!r}")
            by_section.setdefault(section, {})[name] = _coerce(value)
        if "pcf" in by_section and "feature_channels" not in by_section.get("net", {}):
            pcf = replace(self.pcf, **by_section["pcf"])
            by_section.setdefault("net", {})["feature_channels"] = pcf.out_channels
        return PipelineConfig(
            **{s: replace(getattr(self, s), **by_section[s]) if s in by_section else getattr(self, s)
               for s in SECTIONS},
            seed=seed,
        )


def _coerce(value):
    # nested lists from literal_eval become tuples so configs stay hashable
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ArgumentError(f"{source}:{lineno}: expected key = value")
        try:
            out[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError):
            out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides: dict[str, object] | None = None) -> PipelineConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    cfg = PipelineConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ArgumentError(f"config file not found: {p}")
        cfg = cfg.with_overrides(parse_config_text(p.read_text(), str(p)))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
