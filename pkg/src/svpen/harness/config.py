"""Run configuration: one INI file with [problem], [svpen], [files] and [scenario] sections."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..engine import SvpenConfig

PROBLEMS = ("mas", "turbofan")
SVPEN_KEYS = {
    "epsilon": float, "max_iters": int, "g2_delay": int, "g2_gate": float,
    "noise_sigma": float, "buffer_capacity": int, "seed": int,
}
FILE_KEYS = ("line_db", "dataset_dir", "checkpoint", "engine_config", "out_dir")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "mas"
    scenario: str = "ii_low"
    seed: int = 0
    svpen: dict = field(default_factory=dict)  # overrides of SvpenConfig fields
    files: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)  # free-form [scenario] keys
    pretrain: dict = field(default_factory=dict)  # epochs, batch_size, channel_scale, n_samples

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        unknown = set(self.svpen) - set(SVPEN_KEYS)
        if unknown:
            raise ConfigError(f"unknown [svpen] keys {sorted(unknown)}")
        unknown = set(self.files) - set(FILE_KEYS)
        if unknown:
            raise ConfigError(f"unknown [files] keys {sorted(unknown)}")

    def svpen_config(self, **extra):
        values = {"seed": self.seed, **{k: SVPEN_KEYS[k](v) for k, v in self.svpen.items()}, **extra}
        return SvpenConfig(**values)

    def path(self, key, default=None):
        value = self.files.get(key, default)
        return None if value is None else Path(value)

    def with_overrides(self, seed=None, epsilon=None, max_iters=None, out=None):
        svpen = dict(self.svpen)
        if epsilon is not None:
            svpen["epsilon"] = epsilon
        if max_iters is not None:
            svpen["max_iters"] = max_iters
        files = dict(self.files)
        if out is not None:
            files["out_dir"] = str(out)
        return replace(self, seed=self.seed if seed is None else seed, svpen=svpen, files=files)

    # ----------------------------------------------------------------- text io

    def to_parser(self):
        cp = configparser.ConfigParser()
        cp["problem"] = {"name": self.problem, "scenario": self.scenario, "seed": str(self.seed)}
        cp["svpen"] = {k: str(v) for k, v in self.svpen.items()}
        cp["files"] = {k: str(v) for k, v in self.files.items()}
        cp["scenario"] = {k: str(v) for k, v in self.overrides.items()}
        if self.pretrain:
            cp["pretrain"] = {k: str(v) for k, v in self.pretrain.items()}
        return cp

    def dumps(self):
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text):
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        if not cp.has_section("problem"):
            raise ConfigError("config lacks a [problem] section")
        prob = cp["problem"]
        section = lambda name: dict(cp[name]) if cp.has_section(name) else {}
        return cls(
            problem=prob.get("name", "mas"),
            scenario=prob.get("scenario", "ii_low"),
            seed=prob.getint("seed", 0),
            svpen=section("svpen"),
            files=section("files"),
            overrides=section("scenario"),
            pretrain=section("pretrain"),
        )

    @classmethod
    def load(cls, path):
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        return cls.loads(p.read_text())

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        norm = lambda d: {k: str(v) for k, v in d.items()}
        return all(
            (norm(getattr(self, f.name)) if isinstance(getattr(self, f.name), dict) else getattr(self, f.name))
            == (norm(getattr(other, f.name)) if isinstance(getattr(other, f.name), dict) else getattr(other, f.name))
            for f in fields(self)
        )
