"""Binary-synapse RBM, exact enumeration oracles and synthetic data.

The model is an RBM over ±1 visible units ``v`` (length N) and ±1 hidden
units ``h`` (length M) with energy

    E(v, h) = -(1/sqrt(N)) * sum_{mu,i} w[mu,i] h[mu] v[i] - b.v - c.h

and Gibbs weight ``exp(-beta * E)``. With zero biases the hidden layer sums
out to ``p(v) ∝ prod_mu cosh(beta * X_mu)`` where
``X_mu = w[mu].v / sqrt(N)``.

All partition sums are taken in log-space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._common import STREAM_GIBBS, STREAM_TEACHER, CapacityError, logcosh, rng_stream

DEFAULT_MAX_VISIBLE = 20
DEFAULT_MAX_SYNAPSES = 16
DEFAULT_BURN_IN = 1000
DEFAULT_THIN = 10

# visible states enumerated per block in exact_log_partition
_STATE_BLOCK = 1 << 14


@dataclass
class RbmModel:
    """RBM with couplings ``weights`` (M x N) at inverse temperature ``beta``.

    ``weights`` may be real-valued so that the same type describes the
    equivalent RBM whose couplings are variational means. Use
    :meth:`binary` to build (and validate) a true ±1 model.
    """

    weights: np.ndarray
    beta: float = 1.0
    hidden_bias: np.ndarray | None = None
    visible_bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if self.weights.ndim != 2 or 0 in self.weights.shape:
            raise ValueError(f"weights must be a non-empty M x N matrix, got shape {self.weights.shape}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        self.beta = float(self.beta)
        m, n = self.weights.shape
        self.hidden_bias = _bias(self.hidden_bias, m, "hidden_bias")
        self.visible_bias = _bias(self.visible_bias, n, "visible_bias")

    @classmethod
    def binary(cls, weights, beta: float = 1.0) -> "RbmModel":
        w = np.asarray(weights, dtype=float)
        if not np.all(np.abs(w) == 1.0):
            raise ValueError("binary RBM weights must all be -1 or +1")
        return cls(w, beta)

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[0]

    @property
    def n_visible(self) -> int:
        return self.weights.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.all(np.abs(self.weights) == 1.0))


def _bias(b, size, name):
    if b is None:
        return np.zeros(size)
    b = np.asarray(b, dtype=float)
    if b.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {b.shape}")
    return b


@dataclass
class Dataset:
    """D samples of N ±1 visible units, stored as a D x N float matrix."""

    samples: np.ndarray
    n_visible: int = field(default=-1)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.size == 0:
            n = self.n_visible if self.n_visible >= 0 else (s.shape[-1] if s.ndim == 2 else 0)
            s = s.reshape(0, n)
        if s.ndim != 2:
            raise ValueError(f"samples must be a D x N matrix, got shape {s.shape}")
        if not np.all(np.abs(s) == 1.0):
            raise ValueError("dataset entries must all be -1 or +1")
        if self.n_visible >= 0 and s.shape[1] != self.n_visible:
            raise ValueError(f"samples have {s.shape[1]} columns, expected {self.n_visible}")
        self.samples = s
        self.n_visible = s.shape[1]

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.size


def _check_vec(x, size, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {x.shape}")
    return x


def energy(model: RbmModel, v, h) -> float:
    n = model.n_visible
    v = _check_vec(v, n, "v")
    h = _check_vec(h, model.n_hidden, "h")
    coupling = h @ model.weights @ v / np.sqrt(n)
    return float(-coupling - model.visible_bias @ v - model.hidden_bias @ h)


def unnormalized_log_marginal(model: RbmModel, v, beta: float | None = None) -> float:
    """``sum_mu log cosh(beta * X_mu)`` for one visible configuration.

    ``beta`` overrides ``model.beta``; it may be 0 (high-temperature limit),
    which the model type itself does not admit.
    """
    n = model.n_visible
    v = _check_vec(v, n, "v")
    beta = model.beta if beta is None else float(beta)
    x = model.weights @ v / np.sqrt(n)
    return float(np.sum(logcosh(beta * x)))


def visible_states(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start..stop`` of the 2^n x n table of ±1 configurations.

    Row k is the binary expansion of k (most significant bit first) mapped
    0 -> -1, 1 -> +1.
    """
    stop = (1 << n) if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n - 1, -1, -1, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(float)


def exact_log_partition(weights, hidden_fields=None, beta: float = 1.0, *,
                        max_visible: int = DEFAULT_MAX_VISIBLE):
    """``log sum_v prod_mu cosh(beta * (w[mu].v / sqrt(N) + H[mu]))`` by enumeration.

    ``hidden_fields`` may be a length-M vector (scalar result) or a K x M
    stack of field vectors (length-K result, one visible sweep shared by all
    K). Cost is 2^N * M * N * K.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    m, n = w.shape
    if n > max_visible:
        raise CapacityError(f"N={n} exceeds the visible enumeration cap {max_visible}")
    if hidden_fields is None:
        hidden_fields = np.zeros(m)
    fields = np.asarray(hidden_fields, dtype=float)
    single = fields.ndim == 1
    fields = np.atleast_2d(fields)
    if fields.shape[1] != m:
        raise ValueError(f"hidden_fields must have trailing size {m}, got {fields.shape}")

    total = 1 << n
    blocks = []
    for start in range(0, total, _STATE_BLOCK):
        states = visible_states(n, start, min(total, start + _STATE_BLOCK))
        x = states @ w.T / np.sqrt(n)  # (S, M)
        # (K, S) log-weights for each field vector
        logw = logcosh(beta * (x[None, :, :] + fields[:, None, :])).sum(axis=2)
        blocks.append(logsumexp(logw, axis=1))
    out = logsumexp(np.stack(blocks, axis=1), axis=1)
    return float(out[0]) if single else out


def weight_configs(m: int, n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Binary weight matrices (B x M x N) in row-major bit order."""
    return visible_states(m * n, start, stop).reshape(-1, m, n)


def batch_log_partition(weight_batch: np.ndarray, beta: float, *,
                        max_visible: int = DEFAULT_MAX_VISIBLE) -> np.ndarray:
    """Zero-field log partition for each matrix in a B x M x N stack."""
    _, m, n = weight_batch.shape
    if n > max_visible:
        raise CapacityError(f"N={n} exceeds the visible enumeration cap {max_visible}")
    states = visible_states(n)
    x = np.einsum("sn,bmn->bsm", states, weight_batch) / np.sqrt(n)
    return logsumexp(logcosh(beta * x).sum(axis=2), axis=1)


def batch_log_likelihood(weight_batch: np.ndarray, data: np.ndarray, beta: float, *,
                         max_visible: int = DEFAULT_MAX_VISIBLE) -> np.ndarray:
    """``log p(data | W)`` for each matrix in a B x M x N stack."""
    n = weight_batch.shape[2]
    d = data.shape[0]
    if d == 0:
        return np.zeros(weight_batch.shape[0])
    x = np.einsum("an,bmn->bam", data, weight_batch) / np.sqrt(n)
    fit = logcosh(beta * x).sum(axis=(1, 2))
    return fit - d * batch_log_partition(weight_batch, beta, max_visible=max_visible)


def _synapse_cap(m, n, max_synapses):
    if m * n > max_synapses:
        raise CapacityError(f"M*N={m * n} exceeds the weight enumeration cap {max_synapses}")


def all_log_likelihoods(m: int, n: int, data: np.ndarray, beta: float, *,
                        max_synapses: int = DEFAULT_MAX_SYNAPSES,
                        max_visible: int = DEFAULT_MAX_VISIBLE) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate every binary W; return ``(configs, log p(data | W))``."""
    _synapse_cap(m, n, max_synapses)
    if n > max_visible:
        raise CapacityError(f"N={n} exceeds the visible enumeration cap {max_visible}")
    total = 1 << (m * n)
    # keep the B x 2^N x M intermediate near 2^22 entries
    block = max(1, (1 << 22) // ((1 << n) * m))
    configs = weight_configs(m, n)
    loglik = np.concatenate([
        batch_log_likelihood(configs[s:s + block], data, beta, max_visible=max_visible)
        for s in range(0, total, block)
    ])
    return configs, loglik


def exact_log_evidence(dataset: Dataset, prior_mean, beta: float, *,
                       max_synapses: int = DEFAULT_MAX_SYNAPSES,
                       max_visible: int = DEFAULT_MAX_VISIBLE) -> float:
    """``log p(D) = log sum_W p(D | W) p0(W)`` over all 2^(MN) binary W."""
    prior_mean = np.atleast_2d(np.asarray(prior_mean, dtype=float))
    m, n = prior_mean.shape
    data = dataset.samples
    if dataset.size and data.shape[1] != n:
        raise ValueError(f"dataset has N={data.shape[1]}, prior has N={n}")
    configs, loglik = all_log_likelihoods(m, n, data, beta,
                                          max_synapses=max_synapses, max_visible=max_visible)
    with np.errstate(divide="ignore"):
        log_prior = np.log((1.0 + configs * prior_mean) / 2.0).sum(axis=(1, 2))
    return float(logsumexp(loglik + log_prior))


def _gibbs_chains(model: RbmModel, n_samples: int, burn_in: int, thin: int,
                  rng: np.random.Generator, n_chains: int | None) -> np.ndarray:
    m, n = model.n_hidden, model.n_visible
    if n_samples == 0:
        return np.zeros((0, n))
    chains = min(n_samples, 256) if n_chains is None else max(1, int(n_chains))
    w = model.weights / np.sqrt(n)
    beta = model.beta
    v = rng.choice([-1.0, 1.0], size=(chains, n))

    def sweep(v):
        p_h = 0.5 * (1.0 + np.tanh(beta * v @ w.T))
        h = np.where(rng.random((chains, m)) < p_h, 1.0, -1.0)
        p_v = 0.5 * (1.0 + np.tanh(beta * h @ w))
        return np.where(rng.random((chains, n)) < p_v, 1.0, -1.0)

    for _ in range(burn_in):
        v = sweep(v)
    rounds = -(-n_samples // chains)
    out = np.empty((rounds, chains, n))
    for r in range(rounds):
        for _ in range(thin):
            v = sweep(v)
        out[r] = v
    return out.reshape(-1, n)[:n_samples]


def gibbs_sample(model: RbmModel, n_samples: int, burn_in_sweeps: int = DEFAULT_BURN_IN,
                 thin: int = DEFAULT_THIN, seed: int = 0, *, n_chains: int | None = None) -> Dataset:
    """Draw visibles from ``model`` by block Gibbs sampling.

    ``n_chains`` independent chains (default ``min(n_samples, 256)``) are run
    side by side; each is burnt in for ``burn_in_sweeps`` sweeps and then
    read every ``thin`` sweeps. Samples are ordered round-major, chain-minor.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    rng = rng_stream(seed, STREAM_GIBBS)
    return Dataset(_gibbs_chains(model, n_samples, burn_in_sweeps, thin, rng, n_chains),
                   n_visible=model.n_visible)


def generate_teacher_student(n: int, m: int, d: int, beta: float, seed: int, *,
                             burn_in_sweeps: int = DEFAULT_BURN_IN,
                             thin: int = DEFAULT_THIN) -> tuple[RbmModel, Dataset]:
    """Random ±1 teacher and ``d`` visible samples drawn from it."""
    if min(n, m, d) < 1:
        raise ValueError("N, M and D must all be at least 1")
    rng = rng_stream(seed, STREAM_TEACHER)
    teacher = RbmModel.binary(rng.choice([-1.0, 1.0], size=(m, n)), beta)
    data = gibbs_sample(teacher, d, burn_in_sweeps, thin, seed)
    return teacher, data
