"""Gaussian/Bernoulli likelihoods, the diagonal-Gaussian KL, and reparameterised sampling.

Conventions: batches are [B, d]; every function here returns one value per
sample, shape [B]. ``logvar`` is clamped to [-10, 10] before exponentiation
and Bernoulli probabilities to [1e-6, 1 - 1e-6]; both clamps are numeric
guards, nothing more.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from .autodiff import Tensor
from .rng import Rng

LOGVAR_LO, LOGVAR_HI = -10.0, 10.0
PROB_EPS = 1e-6

# fixed decoder standard deviation; 2 pi sigma^2 collapses to pi
DEFAULT_SIGMA = 1.0 / np.sqrt(2.0)

LOG_2PI = float(np.log(2.0 * np.pi))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def reparameterize(mu: Tensor, logvar: Tensor, rng: Rng | None = None,
                   eps: np.ndarray | None = None) -> Tensor:
    """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I).

    Differentiable in mu and logvar; pass ``eps`` explicitly to share
    randomness across estimators.
    """
    mu, logvar = _as_tensor(mu), _as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise DimensionError(f"mu shape {mu.shape} != logvar shape {logvar.shape}")
    if eps is None:
        if rng is None:
            raise ContractError("reparameterize needs an rng or an explicit eps")
        eps = rng.normal(mu.shape)
    std = (logvar.clip(LOGVAR_LO, LOGVAR_HI) * 0.5).exp()
    return mu + std * np.asarray(eps, dtype=np.float64)


def kl_diag_gaussian_to_standard(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)) per sample; always >= 0.

    The closed form can dip an ulp below zero when exp(logvar) rounds to 1
    for denormal-scale logvar, so the per-sample value is floored at 0 (the
    gradient there is the exact one: the KL minimum sits at that point).
    """
    mu, logvar = _as_tensor(mu), _as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise DimensionError(f"mu shape {mu.shape} != logvar shape {logvar.shape}")
    lv = logvar.clip(LOGVAR_LO, LOGVAR_HI)
    inner = lv.exp() + mu.square() - 1.0 - lv
    return (inner.sum(axis=1) * 0.5).clip(0.0, np.inf)


def gaussian_log_likelihood(x, mu: Tensor, sigma: float = DEFAULT_SIGMA) -> Tensor:
    """log N(x; mu, sigma^2 I) per sample, sigma fixed."""
    if sigma <= 0.0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    mu = _as_tensor(mu)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != mu.shape:
        raise DimensionError(f"x shape {x.shape} != mu shape {mu.shape}")
    d = x.shape[1]
    sq = (mu - x).square().sum(axis=1)
    const = 0.5 * d * float(np.log(2.0 * np.pi * sigma * sigma))
    return sq * (-0.5 / (sigma * sigma)) - const


def bernoulli_log_likelihood(x, probs: Tensor) -> Tensor:
    """Binary cross-entropy per sample, negated; always <= 0."""
    probs = _as_tensor(probs)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != probs.shape:
        raise DimensionError(f"x shape {x.shape} != probs shape {probs.shape}")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ContractError("targets must lie in [0, 1]")
    if probs.data.min() < 0.0 or probs.data.max() > 1.0:
        raise ContractError("probabilities must lie in [0, 1]")
    p = probs.clip(PROB_EPS, 1.0 - PROB_EPS)
    ll = p.log() * x + (1.0 - p).log() * (1.0 - x)
    return ll.sum(axis=1)


def diag_gaussian_logpdf(z: Tensor, mu: Tensor, logvar: Tensor) -> Tensor:
    """log N(z; mu, diag exp(logvar)) per sample, differentiable in all three."""
    z, mu, logvar = _as_tensor(z), _as_tensor(mu), _as_tensor(logvar)
    lv = logvar.clip(LOGVAR_LO, LOGVAR_HI)
    diff_sq = (z - mu).square() * (-lv).exp()
    inner = diff_sq + lv + LOG_2PI
    return inner.sum(axis=1) * (-0.5)


def logmeanexp(values: list[Tensor]) -> Tensor:
    """log((1/K) sum exp(v_i)) over a list of same-shape per-sample tensors.

    Max-shifted for stability; the shift is treated as constant, which leaves
    the gradient (softmax-weighted) exact.
    """
    if not values:
        raise ContractError("logmeanexp needs at least one value")
    if len(values) == 1:
        return values[0]
    m = np.maximum.reduce([v.data for v in values])
    acc = (values[0] - m).exp()
    for v in values[1:]:
        acc = acc + (v - m).exp()
    return acc.log() + (m - float(np.log(len(values))))
