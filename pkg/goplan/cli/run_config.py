from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Any

from goplan.env.env_spec import EnvSpec
from goplan.errors import ConfigurationError

PRESET_TRANSITIONS = {"normal": 20_000, "small": 2_000}
PRESETS = (*PRESET_TRANSITIONS, "custom")
EVAL_POLICIES = ("gan", "bc")
EVAL_CHECKPOINTS = ("auto", "pretrained", "finetuned")

_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


def get_settings_defaults() -> dict[str, Any]:
    return {
        "run_id": "goplan",
        "seed": 0,
        "env.name": "two_corridor_reach",
        "env.horizon": 50,
        "env.success_radius": 0.05,
        "env.action_bound": 0.05,
        "dataset.preset": "normal",
        "dataset.n_transitions": 20_000,
        "dataset.noise_std": 0.2,
        "dataset.random_action_prob": 0.0,
        "dataset.ood_split": False,
        "dataset.path": "",
        "network.hidden": [256, 256],
        "network.activation": "relu",
        "network.lr": 1e-3,
        "train.batch_size": 256,
        "train.future_ratio": 0.8,
        "critic.gamma": 0.98,
        "critic.polyak": 0.995,
        "critic.beta": 1.0,
        "critic.weight_max": 10.0,
        "policy.noise_dim": 8,
        "policy.minimax": False,
        "dynamics.members": 5,
        "dynamics.epochs": 20,
        "dynamics.batch_size": 256,
        "dynamics.holdout_fraction": 0.1,
        "dynamics.bootstrap": True,
        "dynamics.uncertainty_quantile": 0.9,
        "pretrain.steps": 5_000,
        "pretrain.bc_steps": 5_000,
        "planner.candidates": 64,
        "planner.rollouts": 4,
        "planner.depth": 10,
        "planner.kappa": 5.0,
        "planner.discount": 1.0,
        "reanalysis.iterations": 10,
        "reanalysis.intra_per_iteration": 200,
        "reanalysis.inter_per_iteration": 200,
        "reanalysis.value_steps": 500,
        "reanalysis.discriminator_steps": 500,
        "reanalysis.generator_steps": 500,
        "reanalysis.segment_length": 10,
        "reanalysis.mix_fraction": 0.5,
        "reanalysis.strict": False,
        "reanalysis.policy_only": False,
        "reanalysis.capacity_transitions": 50_000,
        "eval.episodes": 100,
        "eval.gamma": 0.98,
        "eval.policy": "gan",
        "eval.checkpoints": "auto",
        "eval.ood_split": False,
        "eval.split_boundary": 0.5,
        "appendix_a.n_transitions": 5_000,
        "appendix_a.noise_std": 0.05,
        "appendix_a.steps": 3_000,
        "appendix_a.samples": 1_000,
        "appendix_a.delta": 0.15,
    }


def _parse_value(key: str, raw: str, default: Any) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(
            f"{key}: cannot parse {raw!r} as {type(default).__name__}"
        ) from None
    return raw


class RunConfig:
    """Flat ``key=value`` run settings over ``get_settings_defaults()``.

    Keys may be given as ``"planner.kappa"`` or ``["planner.kappa"]``, the
    latter matching the settings API the rest of the code reads through.
    """

    def __init__(self, overrides: dict[str, Any] | None = None) -> None:
        self._log = logging.getLogger("goplan.cli.RunConfig")
        self._defaults = get_settings_defaults()
        self._values = dict(self._defaults)
        for key, value in (overrides or {}).items():
            self.set(key, value)
        self.validate()

    @classmethod
    def parse_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        defaults = get_settings_defaults()
        overrides: dict[str, Any] = {}
        for line_number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{source}:{line_number}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in defaults:
                raise ConfigurationError(f"{source}:{line_number}: unknown key {key!r}")
            overrides[key] = _parse_value(key, raw, defaults[key])
        return cls(overrides)

    @classmethod
    def from_file(cls, path: Path | str) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {path} does not exist")
        return cls.parse_text(path.read_text(encoding="utf-8"), source=str(path))

    @staticmethod
    def _key(key: str | list[str] | tuple[str, ...]) -> str:
        if isinstance(key, (list, tuple)):
            key = ".".join(key)
        return key

    def set(self, key, value):
        key = self._key(key)
        if key not in self._defaults:
            raise ConfigurationError(f"unknown config key {key!r}")
        default = self._defaults[key]
        if isinstance(value, str) and not isinstance(default, str):
            value = _parse_value(key, value, default)
        self._values[key] = value

    def get(self, key):
        key = self._key(key)
        if key not in self._values:
            raise ConfigurationError(f"unknown config key {key!r}")
        return self._values[key]

    def get_int(self, key) -> int:
        return int(self.get(key))

    def get_float(self, key) -> float:
        return float(self.get(key))

    def get_boolean(self, key) -> bool:
        return bool(self.get(key))

    def validate(self):
        preset = self.get("dataset.preset")
        if preset not in PRESETS:
            raise ConfigurationError(f"dataset.preset must be one of {PRESETS}, got {preset!r}")
        if self.get("eval.policy") not in EVAL_POLICIES:
            raise ConfigurationError(f"eval.policy must be one of {EVAL_POLICIES}")
        if self.get("eval.checkpoints") not in EVAL_CHECKPOINTS:
            raise ConfigurationError(f"eval.checkpoints must be one of {EVAL_CHECKPOINTS}")
        if not self.get("network.hidden"):
            raise ConfigurationError("network.hidden needs at least one layer width")
        for key in ("dataset.random_action_prob", "train.future_ratio", "reanalysis.mix_fraction"):
            if not 0.0 <= self.get_float(key) <= 1.0:
                raise ConfigurationError(f"{key} must lie in [0, 1]")

    @property
    def n_transitions(self) -> int:
        preset = self.get("dataset.preset")
        if preset == "custom":
            return self.get_int("dataset.n_transitions")
        return PRESET_TRANSITIONS[preset]

    def env_spec(self) -> EnvSpec:
        name = self.get("env.name")
        if name == "two_corridor_reach":
            return EnvSpec.two_corridor_reach(
                success_radius=self.get_float("env.success_radius"),
                horizon=self.get_int("env.horizon"),
                action_bound=self.get_float("env.action_bound"),
            )
        return EnvSpec.from_name(name)

    def to_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def as_text(self) -> str:
        lines = []
        for key, value in self._values.items():
            if isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.as_text().encode("utf-8")).hexdigest()
