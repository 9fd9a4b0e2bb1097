from __future__ import annotations

from typing import Sequence

import numpy as np

from goplan.env.env_spec import BanditMode
from goplan.errors import ConfigurationError


def mode_separation_metrics(
    samples, dataset_modes: Sequence[BanditMode], delta: float
) -> tuple[float, float]:
    """Returns ``(ood_fraction, high_reward_mass)`` of 1-D action samples.

    A sample is out of distribution when it lies farther than ``delta`` from
    every mode center; the high-reward mass counts samples within ``delta``
    of the mode with the largest reward.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0 or len(dataset_modes) == 0:
        raise ConfigurationError("mode separation metrics need samples and modes")

    centers = np.array([mode.center for mode in dataset_modes])
    distance = np.abs(samples[:, None] - centers[None, :])
    ood_fraction = float(np.mean(np.all(distance > delta, axis=1)))
    best = int(np.argmax([mode.reward for mode in dataset_modes]))
    high_reward_mass = float(np.mean(distance[:, best] <= delta))
    return ood_fraction, high_reward_mass
