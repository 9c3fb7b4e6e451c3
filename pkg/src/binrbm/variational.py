"""Factorized symmetric Bernoulli posterior over binary synapses.

Each synapse ``w[mu,i]`` in {-1, +1} has ``q(w = +1) = (1 + eta) / 2``. The
family is exponential with sufficient statistic ``w``, natural parameter
``lam = atanh(eta)`` and log-partition ``A(lam) = log(2 cosh lam)``, so the
Fisher information is diagonal with entries ``1 - tanh(lam)**2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from ._common import DomainError
from .model import (DEFAULT_MAX_SYNAPSES, DEFAULT_MAX_VISIBLE, Dataset,
                    all_log_likelihoods)


def nat_to_mean(lam):
    return np.tanh(lam)


def mean_to_nat(eta):
    """``0.5 * log((1 + eta) / (1 - eta))``, evaluated as ``atanh``.

    Raises :class:`DomainError` when any ``|eta| >= 1``.
    """
    eta = np.asarray(eta, dtype=float)
    if np.any(np.abs(eta) >= 1.0) or np.any(np.isnan(eta)):
        raise DomainError("expectation parameters must lie strictly inside (-1, 1)")
    out = np.arctanh(eta)
    return float(out) if out.ndim == 0 else out


@dataclass
class VariationalState:
    """Natural parameters ``lam`` with the cached mean view ``eta = tanh(lam)``.

    ``lam`` is authoritative; ``eta`` is recomputed whenever a new state is
    built, so never mutate ``lam`` in place.
    """

    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.atleast_2d(np.array(self.lam, dtype=float))
        self.eta = np.tanh(self.lam)

    @classmethod
    def zeros(cls, m: int, n: int) -> "VariationalState":
        return cls(np.zeros((m, n)))

    @classmethod
    def from_mean(cls, eta) -> "VariationalState":
        return cls(mean_to_nat(eta))

    @property
    def shape(self) -> tuple[int, int]:
        return self.lam.shape

    def copy(self) -> "VariationalState":
        return VariationalState(self.lam.copy())


@dataclass
class PriorSpec:
    """Factorized prior with means ``mean`` and natural parameters ``nat``."""

    mean: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_2d(np.array(self.mean, dtype=float))
        if np.any(np.abs(self.mean) >= 1.0):
            raise DomainError("prior means must lie strictly inside (-1, 1)")
        self.nat = np.arctanh(self.mean)

    @classmethod
    def uniform(cls, m: int, n: int) -> "PriorSpec":
        return cls(np.zeros((m, n)))

    @classmethod
    def from_nat(cls, nat) -> "PriorSpec":
        return cls(np.tanh(nat))


def kl_to_prior(eta, prior: PriorSpec) -> float:
    """``KL(q_eta || p0)``; +inf when q puts mass where the prior has none."""
    eta = np.asarray(eta, dtype=float)
    if np.any(np.abs(eta) > 1.0):
        raise DomainError("expectation parameters must lie in [-1, 1]")
    m = prior.mean
    total = 0.0
    for x in (1.0, -1.0):
        q = (1.0 + x * eta) / 2.0
        p = (1.0 + x * m) / 2.0
        with np.errstate(divide="ignore"):
            total += np.sum(xlogy(q, q) - xlogy(q, p))
    return float(total)


def kl_grad_terms(eta, prior_mean):
    """Gradient of the KL term written out over both spin values.

    Evaluates ``-sum_{x=±1} (x/2) (log((1 + x m) / (1 + x eta)) - 1)``
    literally; the ``-1`` parts cancel between the two values of x.
    """
    eta = np.asarray(eta, dtype=float)
    m = np.asarray(prior_mean, dtype=float)
    out = 0.0
    for x in (1.0, -1.0):
        out = out - (x / 2.0) * (np.log((1.0 + x * m) / (1.0 + x * eta)) - 1.0)
    return out


def kl_grad(eta, prior: PriorSpec):
    """``d KL / d eta = atanh(eta) - atanh(m)`` elementwise."""
    eta = np.asarray(eta, dtype=float)
    if np.any(np.abs(eta) >= 1.0):
        raise DomainError("kl_grad needs expectation parameters strictly inside (-1, 1)")
    return np.arctanh(eta) - prior.nat


def nat_gap(state: VariationalState, prior: PriorSpec):
    """``lam0 - lam``: the prior pull used by the natural-parameter update."""
    return prior.nat - state.lam


def fisher_diag(lam):
    """Diagonal Fisher information ``1 - tanh(lam)**2 = sech(lam)**2``."""
    return 1.0 / np.cosh(np.asarray(lam, dtype=float)) ** 2


def _q_factors(configs, eta):
    # (B, M*N) per-synapse probabilities q(w_k) of each configuration
    b = configs.shape[0]
    return ((1.0 + configs * eta) / 2.0).reshape(b, -1)


def _check_shapes(eta, dataset, prior):
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    if eta.shape != prior.mean.shape:
        raise ValueError(f"eta shape {eta.shape} does not match prior shape {prior.mean.shape}")
    if dataset.size and dataset.n_visible != eta.shape[1]:
        raise ValueError(f"dataset has N={dataset.n_visible}, eta has N={eta.shape[1]}")
    if np.any(np.abs(eta) > 1.0):
        raise DomainError("expectation parameters must lie in [-1, 1]")
    return eta


def expected_log_likelihood(eta, dataset: Dataset, beta: float, *,
                            max_synapses: int = DEFAULT_MAX_SYNAPSES,
                            max_visible: int = DEFAULT_MAX_VISIBLE) -> float:
    """``E_q[log p(D | W)]`` by summing over all 2^(MN) weight matrices."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    m, n = eta.shape
    configs, loglik = all_log_likelihoods(m, n, dataset.samples, beta,
                                          max_synapses=max_synapses, max_visible=max_visible)
    q = np.prod(_q_factors(configs, eta), axis=1)
    return float(q @ loglik)


def exact_elbo(eta, dataset: Dataset, prior: PriorSpec, beta: float, **caps) -> float:
    eta = _check_shapes(eta, dataset, prior)
    return expected_log_likelihood(eta, dataset, beta, **caps) - kl_to_prior(eta, prior)


def expected_log_likelihood_grad(eta, dataset: Dataset, beta: float, *,
                                 max_synapses: int = DEFAULT_MAX_SYNAPSES,
                                 max_visible: int = DEFAULT_MAX_VISIBLE) -> np.ndarray:
    """Exact ``d/d eta E_q[log p(D | W)]`` by enumeration.

    For synapse k the derivative is ``1/2 * E_{q without k}[L(w_k=+1) - L(w_k=-1)]``
    which equals ``sum_W L(W) (w_k / 2) prod_{j != k} q_j(w_j)``.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    m, n = eta.shape
    configs, loglik = all_log_likelihoods(m, n, dataset.samples, beta,
                                          max_synapses=max_synapses, max_visible=max_visible)
    f = _q_factors(configs, eta)
    # leave-one-out products without dividing (q_k may be 0)
    ones = np.ones((f.shape[0], 1))
    prefix = np.cumprod(np.hstack([ones, f[:, :-1]]), axis=1)
    suffix = np.cumprod(np.hstack([ones, f[:, :0:-1]]), axis=1)[:, ::-1]
    others = prefix * suffix
    grad = (configs.reshape(configs.shape[0], -1) / 2.0 * others).T @ loglik
    return grad.reshape(m, n)


def exact_elbo_grad(eta, dataset: Dataset, prior: PriorSpec, beta: float, **caps) -> np.ndarray:
    eta = _check_shapes(eta, dataset, prior)
    return expected_log_likelihood_grad(eta, dataset, beta, **caps) - kl_grad(eta, prior)
