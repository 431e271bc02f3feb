"""Loss terms and sampling for the auto-encoder family.

Squared errors are summed over components and averaged over the batch. All
functions accept a single sample (1-D) or a batch (2-D, one row per sample).
"""

import numpy as np


def _rows(a):
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def _sq(a, b):
    return np.sum((_rows(a) - _rows(b)) ** 2, axis=1)


def ae_loss(x, x_hat):
    x, x_hat = _rows(x), _rows(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.mean(_sq(x, x_hat)))


def kl_std_normal(mu, logvar):
    """Closed-form KL(N(mu, exp(logvar)) || N(0, I)), batch-averaged."""
    mu, logvar = _rows(mu), _rows(logvar)
    per_sample = 0.5 * np.sum(-1.0 - logvar + mu**2 + np.exp(logvar), axis=1)
    return float(np.mean(per_sample))


def reparameterize_vae(mu, sigma, rng):
    """``z = mu + sigma * eps`` with ``eps ~ N(0, I)``."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    return mu + sigma * rng.standard_normal(mu.shape)


def class_noise(labels, priors, rng):
    """Draw ``eps ~ N(mu_hat[c], diag(sigma[c]^2))`` for each label."""
    labels = np.asarray(labels, dtype=np.int64)
    centers = priors.targets(labels)
    return centers + priors.sigma[labels] * rng.standard_normal(centers.shape)


def reparameterize_ctvae(mu, sigma, labels, priors, rng):
    """``z = mu + sigma * eps`` with ``eps`` drawn around the class target ``mu_hat[c]``."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    single = mu.ndim == 1
    labels = np.atleast_1d(labels)
    eps = class_noise(labels, priors, rng)
    z = _rows(mu) + _rows(sigma) * eps
    return z[0] if single else z


def tvae_loss(x, x_hat, z, z_hat, mu, logvar, beta1=1.0, beta2=1.0):
    per_sample = (
        _sq(x, x_hat)
        + beta1 * _sq(z, z_hat)
        + 0.5 * beta2 * np.sum(-1.0 - _rows(logvar) + _rows(mu) ** 2 + np.exp(_rows(logvar)), axis=1)
    )
    return float(np.mean(per_sample))


def ctvae_loss(x, x_hat, z, z_hat, mu, logvar, labels, priors, betas=(1.0, 1.0, 1.0, 1.0)):
    """TVAE loss plus pulls of ``z`` and ``z_hat`` toward their class target."""
    b1, b2, b3, b4 = betas
    targets = priors.targets(np.atleast_1d(labels))
    per_sample = (
        _sq(x, x_hat)
        + b1 * _sq(z, z_hat)
        + 0.5 * b2 * np.sum(-1.0 - _rows(logvar) + _rows(mu) ** 2 + np.exp(_rows(logvar)), axis=1)
        + b3 * _sq(z, targets)
        + b4 * _sq(z_hat, targets)
    )
    return float(np.mean(per_sample))
