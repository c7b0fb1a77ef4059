"""Pure-numpy kernels.

These are the reference implementations of the per-pair / per-batch inner
loops that dominate training time. A compiled twin lives in ``_core.pyx``;
both expose the same signatures and the package picks one at import time
(see ``cips.kernels``). Encoder matrix products are left to numpy's BLAS in
both backends and are not part of this kernel set.

All kernels expect float64 arrays. ``scatter_add_rows`` and ``adam_update``
mutate their first arguments in place.
"""

import numpy as np

BACKEND = "python"


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    """log(1 + exp(z)) without overflow for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def bce_terms_and_grad(z, alpha, beta):
    """Per-pair generalized cross-entropy terms and their score gradients.

    For logits z with per-pair coefficients (alpha, beta) returns

        term_i = alpha_i * (-log sigmoid(z_i)) + beta_i * (-log(1 - sigmoid(z_i)))
        dz_i   = (alpha_i + beta_i) * sigmoid(z_i) - alpha_i

    Plain weighted BCE uses alpha = w*o, beta = w*(1-o); the
    relevance-corrected variant uses alpha = w*o/p, beta = w*(1 - o/p).
    """
    terms = alpha * softplus(-z) + beta * softplus(z)
    dz = (alpha + beta) * sigmoid(z) - alpha
    return terms, dz


def dot_rows(a, b):
    """Row-wise dot products of two (n, d) arrays."""
    return np.einsum("ij,ij->i", a, b)


def scatter_add_rows(out, idx, rows):
    """out[idx[i]] += rows[i], accumulating duplicate indices. In place."""
    np.add.at(out, idx, rows)


def pairwise_distances(h, centers):
    """Euclidean distances between every row of h and every center: (B, K)."""
    diff = h[:, None, :] - centers[None, :, :]
    return np.sqrt(np.einsum("bkd,bkd->bk", diff, diff))


def soft_assign_from_distances(dist, squared):
    """Normalized inverse-distance cluster affinities, rows summing to 1.

    q = (1 + D)^-1 by default; the squared variant uses (1 + D^2)^-1.
    """
    if squared:
        q = 1.0 / (1.0 + dist * dist)
    else:
        q = 1.0 / (1.0 + dist)
    return q / q.sum(axis=1, keepdims=True)


def kl_grads(h, centers, dist, soft, target, squared):
    """Gradients of sum_u KL(target_u || soft_u) w.r.t. embeddings and centers.

    Treats `target` as a constant. Returns (loss, grad_h, grad_centers).
    """
    if squared:
        q = 1.0 / (1.0 + dist * dist)
    else:
        q = 1.0 / (1.0 + dist)
    s = q.sum(axis=1, keepdims=True)
    # d loss / d q, via the normalization a = q / s
    dq = (1.0 - target / soft) / s
    if squared:
        coef = dq * (-q * q) * 2.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(dist > 0.0, dq * (-q * q) / dist, 0.0)
    diff = h[:, None, :] - centers[None, :, :]
    grad_h = np.einsum("bk,bkd->bd", coef, diff)
    grad_centers = -np.einsum("bk,bkd->kd", coef, diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(target > 0.0, target / soft, 1.0)
    loss = float(np.sum(np.where(target > 0.0, target * np.log(ratio), 0.0)))
    return loss, grad_h, grad_centers


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """One bias-corrected adaptive-moment step, in place on param, m, v."""
    if weight_decay != 0.0:
        grad = grad + weight_decay * param
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
