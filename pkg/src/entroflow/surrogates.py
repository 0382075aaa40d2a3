"""Noisy representations, batch-entropy surrogates, and Gaussian information bounds.

Three differentiable proxies for the entropy of a representation batch
``Z (B x p)``:

* ``logdet``   -- 0.5 * log det(Cov(Z) + eps*I), geometry-aware.
* ``variance`` -- tr(Cov(Z)) / p, cheap isotropic proxy.
* ``softmax``  -- batch-averaged Shannon entropy of row-wise softmax;
  deliberately scale-squashing (rows are normalized before measuring),
  which is what makes entropy/loss gradient collapse observable.

Plus non-differentiable diagnostics: the Gaussian maximum-entropy bound and
the induced upper estimate of the representation information content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, UndefinedInformationError
from .rng import make_rng

SURROGATE_KINDS = ("softmax", "variance", "logdet")


@dataclass(frozen=True)
class SurrogateConfig:
    """Which entropy surrogate to use and its numerical parameters."""

    kind: str = "logdet"
    epsilon: float = 1e-4  # jitter inside the log-determinant
    sigma_xi: float = 0.1  # std of the additive representation noise

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ConfigError(
                f"unknown surrogate kind {self.kind!r}; expected one of {SURROGATE_KINDS}"
            )
        if not self.epsilon > 0:
            raise ConfigError(f"surrogate epsilon must be > 0, got {self.epsilon}")
        if self.sigma_xi < 0:
            raise ConfigError(f"sigma_xi must be >= 0, got {self.sigma_xi}")


def noisy_rep(z, sigma_xi: float, seed: int):
    """Add i.i.d. Gaussian noise to a representation batch.

    The noise is drawn from a Philox stream keyed by ``seed`` and added as a
    constant, i.e. outside the differentiation tape: gradients flow through
    the noisy value, never through the noise law.  Accepts a ``Tensor`` or a
    plain array and returns the same flavor.
    """
    if sigma_xi < 0:
        raise ConfigError(f"sigma_xi must be >= 0, got {sigma_xi}")
    data = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    if sigma_xi == 0.0:
        return z
    xi = sigma_xi * make_rng(seed).standard_normal(data.shape)
    if isinstance(z, Tensor):
        return ad.add(z, xi)
    return data + xi


def entropy_logdet(z: Tensor, epsilon: float) -> Tensor:
    """0.5 * log det(Cov(Z) + eps*I); differentiable; needs B >= 2."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    p = z.data.shape[1]
    sigma = ad.covariance(z)
    return 0.5 * ad.log_det_psd(sigma + epsilon * np.eye(p))


def entropy_variance(z: Tensor) -> Tensor:
    """tr(Cov(Z)) / p; differentiable; needs B >= 2."""
    p = z.data.shape[1]
    sigma = ad.covariance(z)
    # trace via elementwise mask keeps everything on the tape
    return (sigma * np.eye(p)).sum() / p


def entropy_softmax(z: Tensor) -> Tensor:
    """Batch-averaged Shannon entropy of row-wise softmax; value in [0, log p]."""
    if z.data.shape[1] < 2:
        raise ConfigError(f"entropy_softmax needs p >= 2, got p={z.data.shape[1]}")
    shift = z.data.max(axis=1, keepdims=True)  # constant: softmax is shift-invariant
    e = ad.exp(z - shift)
    total = e.sum(axis=1, keepdims=True)
    q = ad.div(e, total)
    lse = ad.log(total) + shift
    h_rows = (q * (lse - z)).sum(axis=1)  # sum_j q_j (lse - z_j) = H(softmax(row))
    return h_rows.mean()


def surrogate_entropy(z: Tensor, cfg: SurrogateConfig) -> Tensor:
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == "logdet":
        return entropy_logdet(z, cfg.epsilon)
    if cfg.kind == "variance":
        return entropy_variance(z)
    if cfg.kind == "softmax":
        return entropy_softmax(z)
    raise ConfigError(f"unknown surrogate kind {cfg.kind!r}")


def gaussian_entropy_bound(sigma: np.ndarray) -> float:
    """Entropy of the maximum-entropy (Gaussian) law with covariance ``sigma``.

    0.5 * log det(2*pi*e * sigma).  Raises ``FactorizationError`` when sigma
    is not positive definite.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    logdet = ad.log_det_psd(sigma).item()
    return 0.5 * (p * np.log(2.0 * np.pi * np.e) + logdet)


def mutual_info_upper(z_noisy: np.ndarray, sigma_xi: float) -> float:
    """Upper estimate of the information carried by a noisy representation batch.

    Gaussian bound on the entropy of the noisy batch minus the exact entropy
    of the additive noise, clipped below at 0 (the difference can dip
    slightly negative under sampling noise).
    """
    if sigma_xi == 0.0:
        raise UndefinedInformationError(
            "mutual_info_upper is undefined for sigma_xi = 0 (noiseless channel)"
        )
    if sigma_xi < 0:
        raise ConfigError(f"sigma_xi must be >= 0, got {sigma_xi}")
    z_noisy = np.asarray(z_noisy, dtype=np.float64)
    p = z_noisy.shape[1]
    sigma_hat = ad.covariance(Tensor(z_noisy)).data
    bound = gaussian_entropy_bound(sigma_hat)
    noise_entropy = 0.5 * p * np.log(2.0 * np.pi * np.e * sigma_xi**2)
    return max(0.0, bound - noise_entropy)
