from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

from goplan.errors import ConfigurationError

TWO_CORRIDOR_REACH = "two_corridor_reach"
LINE_BANDIT = "line_bandit"
ENV_NAMES = (TWO_CORRIDOR_REACH, LINE_BANDIT)


@dataclass(frozen=True)
class BanditMode:
    center: float
    frequency: float
    reward: float


# sparse high-reward mode, dense low-reward modes
DEFAULT_BANDIT_MODES = (
    BanditMode(center=-0.6, frequency=0.425, reward=0.1),
    BanditMode(center=0.0, frequency=0.425, reward=0.1),
    BanditMode(center=0.6, frequency=0.15, reward=1.0),
)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    goal_dim: int
    horizon: int
    success_radius: float
    action_bound: float
    dt: float = 1.0
    bandit_modes: tuple[BanditMode, ...] = ()
    mode_radius: float = 0.0

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise ConfigurationError(
                f"unknown environment {self.name!r}, expected one of {ENV_NAMES}"
            )
        if min(self.state_dim, self.action_dim, self.goal_dim) < 1:
            raise ConfigurationError(f"{self.name}: dimensions must be >= 1")
        if self.horizon < 1:
            raise ConfigurationError(f"{self.name}: horizon must be >= 1")
        if not self.success_radius > 0:
            raise ConfigurationError(f"{self.name}: success radius must be > 0")
        if not self.action_bound > 0 or not self.dt > 0:
            raise ConfigurationError(f"{self.name}: action bound and dt must be > 0")
        if self.name == LINE_BANDIT:
            if not self.bandit_modes:
                raise ConfigurationError("line_bandit needs at least one mode")
            total = sum(mode.frequency for mode in self.bandit_modes)
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(
                    f"line_bandit mode frequencies must sum to 1, got {total}"
                )

    @classmethod
    def two_corridor_reach(
        cls,
        success_radius: float = 0.05,
        horizon: int = 50,
        action_bound: float = 0.05,
        dt: float = 1.0,
    ) -> "EnvSpec":
        return cls(
            name=TWO_CORRIDOR_REACH,
            state_dim=4,
            action_dim=2,
            goal_dim=2,
            horizon=horizon,
            success_radius=success_radius,
            action_bound=action_bound,
            dt=dt,
        )

    @classmethod
    def line_bandit(
        cls,
        modes: tuple[BanditMode, ...] = DEFAULT_BANDIT_MODES,
        mode_radius: float = 0.15,
        success_radius: float = 0.05,
    ) -> "EnvSpec":
        return cls(
            name=LINE_BANDIT,
            state_dim=1,
            action_dim=1,
            goal_dim=1,
            horizon=1,
            success_radius=success_radius,
            action_bound=1.0,
            bandit_modes=tuple(modes),
            mode_radius=mode_radius,
        )

    @classmethod
    def from_name(cls, name: str, **overrides) -> "EnvSpec":
        if name == TWO_CORRIDOR_REACH:
            spec = cls.two_corridor_reach()
        elif name == LINE_BANDIT:
            spec = cls.line_bandit()
        else:
            raise ConfigurationError(
                f"unknown environment {name!r}, expected one of {ENV_NAMES}"
            )
        return replace(spec, **overrides) if overrides else spec

    @property
    def highest_reward_mode(self) -> BanditMode:
        return max(self.bandit_modes, key=lambda mode: mode.reward)

    def to_dict(self):
        return asdict(self)

    @property
    def spec_hash(self) -> str:
        encoded = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(encoded).hexdigest()
