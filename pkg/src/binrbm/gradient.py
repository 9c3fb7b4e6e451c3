"""Gaussian receptive-field estimator of the expected log-likelihood.

Under q, each receptive field ``X_mu^a = w[mu].v^a / sqrt(N)`` is replaced by
a Gaussian with mean ``G[a,mu]`` and variance ``Xi[mu]**2``. The expected
log-likelihood becomes a Monte-Carlo average over standard-normal draws
``z1`` (data term) and ``z2`` (partition term); the partition term is the log
partition of an equivalent RBM with couplings ``eta / sqrt(N)`` and hidden
fields ``Xi * z2[s]``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._common import STREAM_NOISE, logcosh, rng_stream, thread_count
from .model import DEFAULT_MAX_VISIBLE, Dataset, exact_log_partition
from .msgpass import (DEFAULT_DAMPING, DEFAULT_MAX_ITERS, DEFAULT_TOL, EquivalentRbm,
                      Magnetizations, MessageState, QuadratureSpec, bethe_log_partition,
                      magnetizations, mp_fixed_point)
from .variational import PriorSpec, kl_to_prior

DEFAULT_XI_FLOOR = 1e-6
DEFAULT_FD_STEP = 1e-5


@dataclass
class ReceptiveFieldStats:
    G: np.ndarray    # (D, M) field means
    Xi: np.ndarray   # (M,) field standard deviations
    Xi2: np.ndarray  # (M,) field variances


@dataclass
class NoiseDraws:
    z1: np.ndarray  # (S1, M)
    z2: np.ndarray  # (S2, M)
    seed: int


@dataclass
class GradientEstimate:
    """Estimated gradient of ``E_q[log p(D | W)]`` with respect to eta.

    ``total = term_data - term_variance - term_partition``.
    ``xi_clamped`` counts hidden rows whose Xi was raised to the floor.
    """

    total: np.ndarray
    term_data: np.ndarray
    term_variance: np.ndarray
    term_partition: np.ndarray
    xi_clamped: int = 0


class PartitionSolve(NamedTuple):
    rbm: EquivalentRbm
    state: MessageState
    mags: Magnetizations


def receptive_stats(eta, dataset: Dataset) -> ReceptiveFieldStats:
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    n = eta.shape[1]
    if dataset.n_visible != n:
        raise ValueError(f"dataset has N={dataset.n_visible}, eta has N={n}")
    G = dataset.samples @ eta.T / np.sqrt(n)
    xi2 = np.clip((1.0 - eta ** 2).sum(axis=1) / n, 0.0, None)
    return ReceptiveFieldStats(G=G, Xi=np.sqrt(xi2), Xi2=xi2)


def draw_noise(s1: int, s2: int, m: int, seed: int, *keys: int) -> NoiseDraws:
    """Independent standard-normal streams for the two Monte-Carlo terms.

    ``keys`` (e.g. the epoch) select a fresh, reproducible pair of draws.
    """
    z1 = rng_stream(seed, STREAM_NOISE, *keys, 0).standard_normal((s1, m))
    z2 = rng_stream(seed, STREAM_NOISE, *keys, 1).standard_normal((s2, m))
    return NoiseDraws(z1=z1, z2=z2, seed=seed)


def solve_equivalent(eta, stats: ReceptiveFieldStats, z2, beta: float, *,
                     damping: float = DEFAULT_DAMPING, tol: float = DEFAULT_TOL,
                     max_iters: int = DEFAULT_MAX_ITERS, quad: QuadratureSpec = QuadratureSpec(),
                     inits: list[MessageState | None] | None = None,
                     threads: int | None = None) -> list[PartitionSolve]:
    """One message-passing solve per row of ``z2`` (hidden fields ``Xi * z2[s]``).

    Solves are independent and may run on ``threads`` workers; results come
    back in draw order, so the outcome does not depend on the worker count.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    z2 = np.atleast_2d(z2)
    inits = [None] * len(z2) if inits is None else inits

    def one(s):
        rbm = EquivalentRbm(eta, stats.Xi * z2[s], beta)
        state = mp_fixed_point(rbm, damping, max_iters, tol, inits[s])
        return PartitionSolve(rbm, state, magnetizations(rbm, state, quad))

    workers = min(thread_count(threads), len(z2))
    if workers <= 1:
        return [one(s) for s in range(len(z2))]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, range(len(z2))))


def _data_args(stats: ReceptiveFieldStats, z1, beta):
    # (D, S1, M) arguments beta * (G + Xi z1)
    return beta * (stats.G[:, None, :] + stats.Xi[None, None, :] * z1[None, :, :])


def elbo_estimate(eta, dataset: Dataset, draws: NoiseDraws, logz_backend: str,
                  prior: PriorSpec, beta: float, *, solves: list[PartitionSolve] | None = None,
                  max_visible: int = DEFAULT_MAX_VISIBLE, **mp_options) -> float:
    """Monte-Carlo ELBO: data fit minus D times the mean log partition, minus KL.

    With ``logz_backend="bethe"`` the log partitions come from message passing
    (reusing ``solves`` when given); ``"exact"`` enumerates visible states.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    kl = kl_to_prior(eta, prior)
    d = dataset.size
    if d == 0:
        return -kl
    stats = receptive_stats(eta, dataset)
    s1, s2 = len(draws.z1), len(draws.z2)
    fit = logcosh(_data_args(stats, draws.z1, beta)).sum() / s1
    if logz_backend == "exact":
        logz = exact_log_partition(eta, stats.Xi[None, :] * draws.z2, beta, max_visible=max_visible)
    elif logz_backend == "bethe":
        if solves is None:
            solves = solve_equivalent(eta, stats, draws.z2, beta, **mp_options)
        logz = np.array([bethe_log_partition(p.rbm, p.state, p.mags) for p in solves])
    else:
        raise ValueError(f"unknown log-partition backend {logz_backend!r}")
    return float(fit - d * logz.sum() / s2 - kl)


def _exact_partition_grad(eta, z2, d, beta, step, max_visible):
    # central differences of (D/S2) sum_s log Z(eta, Xi(eta) * z2[s]) over every eta entry
    m, n = eta.shape
    s2 = len(z2)

    def objective(e):
        xi = np.sqrt(np.clip((1.0 - e ** 2).sum(axis=1) / n, 0.0, None))
        return d * exact_log_partition(e, xi[None, :] * z2, beta, max_visible=max_visible).sum() / s2

    grad = np.zeros_like(eta)
    for idx in np.ndindex(m, n):
        up = eta.copy()
        up[idx] += step
        down = eta.copy()
        down[idx] -= step
        grad[idx] = (objective(up) - objective(down)) / (2.0 * step)
    return grad


def loglik_grad(eta, dataset: Dataset, draws: NoiseDraws, mags_per_s: list[Magnetizations] | None,
                stats: ReceptiveFieldStats, beta: float, mode: str = "mp", *,
                xi_floor: float = DEFAULT_XI_FLOOR, fd_step: float = DEFAULT_FD_STEP,
                max_visible: int = DEFAULT_MAX_VISIBLE) -> GradientEstimate:
    """Estimate of ``d/d eta E_q[log p(D | W)]``.

    In ``"mp"`` mode the partition term uses the message-passing statistics
    ``mags_per_s[s]`` of the equivalent RBM with fields ``Xi * z2[s]``; in
    ``"exact"`` mode it is the finite-difference derivative of the enumerated
    Monte-Carlo log partition, including the path through Xi.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    m, n = eta.shape
    v = dataset.samples
    d = dataset.size
    z1, z2 = draws.z1, draws.z2
    s1, s2 = len(z1), len(z2)
    sq = np.sqrt(n)

    t = np.tanh(_data_args(stats, z1, beta))  # (D, S1, M)
    term_data = beta / (s1 * sq) * (v.T @ t.sum(axis=1)).T
    term_variance = beta ** 2 * eta / (s1 * n) * (1.0 - t ** 2).sum(axis=(0, 1))[:, None]

    clamped = 0
    if d == 0:
        term_partition = np.zeros_like(eta)
    elif mode == "exact":
        term_partition = _exact_partition_grad(eta, z2, d, beta, fd_step, max_visible)
    elif mode == "mp":
        if mags_per_s is None or len(mags_per_s) != s2:
            raise ValueError(f"mp mode needs {s2} magnetization records, one per partition draw")
        xi = np.maximum(stats.Xi, xi_floor)
        clamped = int(np.sum(stats.Xi < xi_floor))
        acc = np.zeros_like(eta)
        for s, mg in enumerate(mags_per_s):
            acc += mg.C - eta * (z2[s] * mg.m_hat / (sq * xi))[:, None]
        term_partition = d * beta / (s2 * sq) * acc
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")

    total = term_data - term_variance - term_partition
    return GradientEstimate(total, term_data, term_variance, term_partition, clamped)
