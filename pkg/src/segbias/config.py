"""Run configuration: one JSON file whose leaf keys are mirrored by
``--section.key`` command-line flags (flags override the file)."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .corpus import GenConfig
from .errors import ConfigError
from .inject import BiasSpec
from .learner import TrainConfig

DEFAULT_MODES = ["none", "conditioned", "combined", "auto"]


def default_config() -> dict:
    return {
        "out": "runs/out",
        "seeds": [1],
        "gen": {
            "n_samples": 200,
            "width": 64,
            "height": 64,
            "shape": "ellipse",
            "contrast": 0.5,
            "noise_sigma": 0.1,
            "cue_shift": 0.06,
            "group_balance": 0.5,
            "clean_group": 0,
            "seed": 0,
        },
        "bias": {
            "target_group": 1,
            "beta": 0.5,
            "operator": "erosion",
            "radius": 2,
            "seed": 0,
        },
        "train": {
            "epochs": 40,
            "warmup_epochs": 5,
            "learning_rate": 0.05,
            "batch": 16,
            "boundary_width": 2,
            "mitigation": "none",
            "penalty": "none",
            "penalty_weight": 1.0,
            "dice_weight": 1.0,
            "hidden_dim": 16,
            "patch_half": 2,
            "seed": 0,
        },
        "audit": {"folds": 5, "epochs": 20, "save_maps": False},
        "separability": {"folds": 5, "n_permutations": 500},
        "pipeline": {"modes": list(DEFAULT_MODES)},
    }


@dataclass
class RunConfig:
    raw: dict = field(default_factory=default_config)

    @property
    def out(self) -> str:
        return self.raw["out"]

    @property
    def seeds(self) -> list:
        seeds = self.raw["seeds"]
        if not seeds:
            raise ConfigError("at least one seed is required")
        return [int(s) for s in seeds]

    def gen_config(self, seed=None) -> GenConfig:
        g = dict(self.raw["gen"])
        if seed is not None:
            g["seed"] = derive_seed(seed, "gen")
        cfg = GenConfig(**g)
        cfg.validate()
        return cfg

    def bias_spec(self, seed=None) -> BiasSpec:
        b = dict(self.raw["bias"])
        if seed is not None:
            b["seed"] = derive_seed(seed, "bias")
        spec = BiasSpec(**b)
        spec.validate()
        return spec

    def train_config(self, seed=None, **overrides) -> TrainConfig:
        t = dict(self.raw["train"])
        if seed is not None:
            t["seed"] = derive_seed(seed, "train")
        t.update(overrides)
        cfg = TrainConfig(**t)
        cfg.validate()
        return cfg

    def audit_train_config(self, seed=None) -> TrainConfig:
        epochs = int(self.raw["audit"].get("epochs", self.raw["train"]["epochs"]))
        return self.train_config(seed=seed, epochs=epochs, mitigation="none", penalty="none")


def derive_seed(base_seed: int, label: str) -> int:
    """Stable per-stage sub-seed from a run seed."""
    import numpy as np

    key = sum(ord(c) * 31**i for i, c in enumerate(label)) % (2**31)
    return int(np.random.SeedSequence((int(base_seed), key)).generate_state(1)[0] % 2**31)


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults <- JSON file <- flag overrides, validated leaf by leaf."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "r", encoding="ascii") as f:
                user = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        _merge(cfg, user, source=str(path))
    for dotted, value in (overrides or {}).items():
        _apply_override(cfg, dotted, value)
    return RunConfig(raw=cfg)


def _merge(base: dict, user: dict, source: str, prefix=""):
    for key, value in user.items():
        if key not in base:
            raise ConfigError(f"{source}: unknown config key {prefix}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{source}: section {prefix}{key!r} must be an object")
            _merge(base[key], value, source, prefix=f"{prefix}{key}.")
        else:
            base[key] = copy.deepcopy(value)


def _apply_override(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config section {dotted!r}")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[leaf] = _coerce(node[leaf], value, dotted)


def _coerce(current, value, dotted):
    if isinstance(value, str):
        if isinstance(current, bool):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ConfigError(f"{dotted}: expected a boolean, got {value!r}")
        if isinstance(current, int) and not isinstance(current, bool):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            return [v.strip() for v in value.split(",") if v.strip()]
    return value


def write_config(cfg: RunConfig, path):
    with open(path, "w", encoding="ascii") as f:
        json.dump(cfg.raw, f, indent=2)
        f.write("\n")
