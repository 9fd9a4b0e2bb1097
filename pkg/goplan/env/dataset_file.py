from __future__ import annotations

import json
import logging
from pathlib import Path

from goplan.buffer.trajectory import Trajectory
from goplan.env.env_spec import EnvSpec
from goplan.errors import ConfigurationError, MalformedTrajectoryError

DATASET_VERSION = 1

_log = logging.getLogger("goplan.env.dataset_file")


def dataset_header(spec: EnvSpec) -> dict:
    return {
        "env": spec.name,
        "version": DATASET_VERSION,
        "state_dim": spec.state_dim,
        "action_dim": spec.action_dim,
        "goal_dim": spec.goal_dim,
        "spec_hash": spec.spec_hash,
    }


def write_dataset(path: Path | str, spec: EnvSpec, trajectories: list[Trajectory]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(dataset_header(spec)) + "\n")
        for trajectory in trajectories:
            f.write(json.dumps(trajectory.to_dict(spec.name, DATASET_VERSION)) + "\n")
    _log.info(f"wrote {len(trajectories)} trajectories to {path}")
    return path


def read_dataset(
    path: Path | str, spec: EnvSpec | None = None
) -> tuple[dict, list[Trajectory]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ConfigurationError(f"{path}: empty dataset file")

    header = json.loads(lines[0])
    if header.get("version") != DATASET_VERSION:
        raise ConfigurationError(
            f"{path}: unsupported dataset version {header.get('version')!r}"
        )
    if spec is not None and header.get("spec_hash") != spec.spec_hash:
        raise ConfigurationError(
            f"{path}: dataset was generated for a different {header.get('env')} spec"
        )

    trajectories = []
    for line_number, line in enumerate(lines[1:], start=2):
        record = json.loads(line)
        if record.get("env") != header["env"]:
            raise MalformedTrajectoryError(
                f"{path}:{line_number}: record env {record.get('env')!r} "
                f"does not match header {header['env']!r}"
            )
        trajectory = Trajectory.from_dict(record, header["action_dim"])
        if spec is not None:
            trajectory.validate(spec)
        else:
            trajectory.validate()
        trajectories.append(trajectory)
    _log.debug(f"read {len(trajectories)} trajectories from {path}")
    return header, trajectories


def dataset_manifest(
    spec: EnvSpec, trajectories: list[Trajectory], seed: int, **params
) -> dict:
    return {
        "env": spec.name,
        "spec_hash": spec.spec_hash,
        "seed": seed,
        "trajectories": len(trajectories),
        "transitions": sum(t.length for t in trajectories),
        **params,
    }
