import logging
from dataclasses import dataclass, field
from typing import Mapping, Iterable

import numpy as np

from .exceptions import ShapeException
from .logger import logger


@dataclass
class AdamState:
    """
    Adam moments keyed by parameter name.

    Moments are created lazily on the first step that sees a name, so the same state
    serves network tensors and the centroid block (``'centroids'``).
    """
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def zero(self, names: Iterable[str]) -> list[str]:
        """Zeros first and second moments of ``names``; returns the names that existed."""
        touched = []
        for name in names:
            if name in self.m:
                self.m[name] = np.zeros_like(self.m[name])
                self.v[name] = np.zeros_like(self.v[name])
                touched.append(name)
        return touched


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: Mapping[str, np.ndarray], max_l2: float) -> dict[str, np.ndarray]:
    """Rescales all gradients jointly so their global l2 norm is at most ``max_l2``."""
    if max_l2 <= 0:
        raise ShapeException("max_l2 must be > 0", detail={'max_l2': max_l2})
    norm = global_norm(grads)
    if norm <= max_l2:
        return dict(grads)
    scale = max_l2 / norm
    return {name: g * scale for name, g in grads.items()}


def adam_step(params: Mapping[str, np.ndarray],
              grads: Mapping[str, np.ndarray],
              state: AdamState,
              max_l2: float | None = None) -> tuple[Mapping[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update, applied in place to the arrays in ``params``.

    Names present in ``params`` but missing from ``grads`` are left untouched.

    :param max_l2: optional global gradient-norm clip applied before the update
    """
    if max_l2 is not None:
        grads = clip_gradients(grads, max_l2)
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ShapeException("Gradient shape mismatch",
                                 detail={'name': name, 'param': p.shape, 'grad': g.shape})
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug("Adam step t=%d on %d tensors", state.t, len(grads))
    return params, state
