"""Bias-corrected adaptive-moment optimizer over named parameter dicts."""

from dataclasses import dataclass

import numpy as np

from . import kernels

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: dict
    v: dict
    t: int = 0


def init_adam_state(params):
    return AdamState(
        m={name: np.zeros_like(p) for name, p in params.items()},
        v={name: np.zeros_like(p) for name, p in params.items()},
    )


def adam_step(params, grads, state, lr, betas=DEFAULT_BETAS, eps=DEFAULT_EPS,
              weight_decay=0.0):
    """Apply one update to every named parameter, in place.

    Parameters absent from ``grads`` are left untouched (their moments do
    not decay either, matching a sparse-update reading). Returns the same
    (params, state) objects for call-chaining.
    """
    state.t += 1
    beta1, beta2 = betas
    for name, grad in grads.items():
        kernels.adam_update(
            params[name], grad, state.m[name], state.v[name],
            state.t, lr, beta1, beta2, eps, weight_decay,
        )
    return params, state
