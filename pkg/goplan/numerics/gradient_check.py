from __future__ import annotations

from typing import Callable

import numpy as np

from goplan.numerics.param_tensor import ParamTensor
from goplan.numerics.rng_stream import RngStream


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale == 0.0:
        return 0.0
    return abs(analytic - numeric) / scale


def gradient_check(
    loss_fn: Callable[[], float],
    params: list[ParamTensor],
    rng: RngStream,
    n_checks: int = 100,
    h: float = 1e-3,
) -> list[tuple[str, tuple[int, ...], float, float]]:
    """Compare stored ``grad`` entries against central differences of ``loss_fn``.

    ``params`` must already hold the analytic gradient of ``loss_fn`` at
    their current values. Returns ``(name, index, analytic, numeric)`` for
    each randomly chosen coordinate.
    """
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat_choices = rng.integers(int(offsets[-1]), size=n_checks)

    results = []
    for flat in flat_choices:
        owner = int(np.searchsorted(offsets, flat, side="right") - 1)
        param = params[owner]
        index = np.unravel_index(int(flat - offsets[owner]), param.shape)
        original = param.values[index]
        param.values[index] = original + h
        upper = loss_fn()
        param.values[index] = original - h
        lower = loss_fn()
        param.values[index] = original
        numeric = (upper - lower) / (2 * h)
        results.append(
            (param.name, tuple(int(i) for i in index), float(param.grad[index]), numeric)
        )
    return results


def gradient_check_passes(
    results, rel_tol: float = 1e-4, abs_tol: float = 1e-7
) -> bool:
    return all(
        abs(a - n) <= rel_tol * max(abs(a), abs(n)) + abs_tol for _, _, a, n in results
    )
