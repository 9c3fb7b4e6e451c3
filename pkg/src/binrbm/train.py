"""Optimizers for the variational synapse posterior and the training loop.

Three update rules share one gradient estimator:

* ``huang`` -- gradient ascent on the expectation parameters, followed by
  clipping into ``[-clip_bound, clip_bound]``;
* ``bayes`` -- the Bayesian learning rule on the natural parameters (no
  clipping; ``eta = tanh(lam)`` stays inside (-1, 1));
* ``bayes_first_order`` -- the Bayesian rule with ``tanh(lam) ≈ lam``, which
  is the ``huang`` rule with the roles of ``lam`` and ``eta`` exchanged.
"""
from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .gradient import (DEFAULT_XI_FLOOR, draw_noise, elbo_estimate, loglik_grad,
                       receptive_stats, solve_equivalent)
from ._common import CapacityError
from .model import Dataset, RbmModel
from .msgpass import DEFAULT_DAMPING, DEFAULT_MAX_ITERS, DEFAULT_NODES, DEFAULT_TOL, QuadratureSpec
from .variational import PriorSpec, VariationalState, kl_grad_terms, nat_gap

VARIANTS = ("huang", "bayes", "bayes_first_order")
BACKENDS = ("bethe", "exact")
MAX_OVERLAP_HIDDEN = 8
# the KL pull in the clipped rules is evaluated at |eta| <= 1 - KL_EDGE
KL_EDGE = 1e-6
# draws for the optional independent ELBO evaluation use this extra stream key
_EVAL_KEY = 1


@dataclass
class TrainerConfig:
    variant: str = "bayes"
    alpha: float = 0.01
    s1: int = 10
    s2: int = 10
    beta: float = 1.0
    epochs: int = 200
    seed: int = 0
    damping: float = DEFAULT_DAMPING
    mp_tol: float = DEFAULT_TOL
    mp_max_iters: int = DEFAULT_MAX_ITERS
    clip_bound: float = 1.0
    xi_floor: float = DEFAULT_XI_FLOOR
    logz_backend: str = "bethe"
    quad_nodes: int = DEFAULT_NODES
    kl_edge: float = KL_EDGE
    independent_elbo: bool = False
    warm_start: bool = True
    threads: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.logz_backend not in BACKENDS:
            raise ValueError(f"logz_backend must be one of {BACKENDS}, got {self.logz_backend!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.s1 < 1 or self.s2 < 1:
            raise ValueError("s1 and s2 must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.clip_bound > 0:
            raise ValueError("clip_bound must be positive")


@dataclass
class TraceRecord:
    epoch: int
    elbo: float
    overlap: float
    clip_events: int
    max_abs_lambda: float
    max_abs_eta: float
    mp_failures: int
    wall_ms: float
    xi_clamps: int = 0


CSV_HEADER = ["epoch", "elbo", "overlap", "clip_events", "max_abs_lambda",
              "max_abs_eta", "mp_failures", "wall_ms"]


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        lines = [",".join(CSV_HEADER)]
        for r in self.records:
            row = []
            for name in CSV_HEADER:
                val = getattr(r, name)
                row.append(str(val) if isinstance(val, int) else _fmt(val))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainTrace":
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        kinds = {f.name: f.type for f in fields(TraceRecord)}
        records = []
        for row in reader:
            records.append(TraceRecord(**{
                k: int(v) if kinds[k] in (int, "int") else float(v) for k, v in row.items()
            }))
        return cls(records)


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


def _clip(x, bound):
    clipped = np.clip(x, -bound, bound)
    return clipped, int(np.count_nonzero(clipped != x))


def huang_step(eta, grad_loglik, prior: PriorSpec, alpha: float, *,
               clip_bound: float = 1.0, kl_edge: float = KL_EDGE):
    """Clipped gradient ascent on the expectation parameters.

    Returns ``(eta_new, clip_events)``. The KL pull is evaluated with eta held
    ``kl_edge`` inside the boundary, where it would otherwise be infinite.
    """
    eta = np.asarray(eta, dtype=float)
    at = np.clip(eta, -(1.0 - kl_edge), 1.0 - kl_edge)
    pull = -kl_grad_terms(at, prior.mean)
    return _clip(eta + alpha * pull + alpha * np.asarray(grad_loglik), clip_bound)


def first_order_step(lam, grad_loglik_at_lambda, prior: PriorSpec, alpha: float, *,
                     clip_bound: float = 1.0, kl_edge: float = KL_EDGE):
    """Natural-parameter update with ``tanh(lam)`` linearized to ``lam``.

    The gradient must be evaluated at ``eta := lam``; the result is clipped to
    ``[-clip_bound, clip_bound]``. Returns ``(lam_new, clip_events)``.
    """
    lam = np.asarray(lam, dtype=float)
    at = np.clip(lam, -(1.0 - kl_edge), 1.0 - kl_edge)
    pull = 0.0
    for x in (1.0, -1.0):
        pull = pull + (x / 2.0) * (np.log((1.0 + x * prior.mean) / (1.0 + x * at)) - 1.0)
    return _clip(lam + alpha * pull + alpha * np.asarray(grad_loglik_at_lambda), clip_bound)


def bayes_step(state: VariationalState, grad_loglik_wrt_eta, prior: PriorSpec,
               alpha: float) -> VariationalState:
    """Bayesian learning rule: ``lam + alpha (lam0 - lam) + alpha * grad``."""
    lam = state.lam + alpha * nat_gap(state, prior) + alpha * np.asarray(grad_loglik_wrt_eta)
    return VariationalState(lam)


def overlap(eta, teacher: RbmModel) -> float:
    """Fraction of synapse signs matching the teacher, maximized over symmetries.

    Hidden units may be permuted and each hidden row negated without changing
    ``p(v)``; the best row sign is chosen per row for each permutation.
    ``sign(0)`` counts as +1.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    w = teacher.weights
    if eta.shape != w.shape:
        raise ValueError(f"eta shape {eta.shape} does not match teacher shape {w.shape}")
    m, n = w.shape
    if m > MAX_OVERLAP_HIDDEN:
        raise CapacityError(f"overlap search over {m}! permutations exceeds M <= {MAX_OVERLAP_HIDDEN}")
    signs = np.where(eta >= 0, 1.0, -1.0)
    dots = np.abs(signs @ w.T)  # dots[a, b] = |sign(eta_a) . w_b|
    best = max(sum(dots[p[mu], mu] for mu in range(m)) for p in itertools.permutations(range(m)))
    return float(best / (m * n))


class _Params:
    """Working parameter of one variant and its mean view used by the gradient."""

    def __init__(self, variant, init: VariationalState):
        self.variant = variant
        if variant == "huang":
            self.value = init.eta.copy()
        else:
            self.value = init.lam.copy()

    @property
    def mean(self):
        return np.tanh(self.value) if self.variant == "bayes" else self.value

    def state(self) -> VariationalState:
        if self.variant == "huang":
            with np.errstate(divide="ignore"):
                st = VariationalState(np.arctanh(self.value))
            st.eta = self.value.copy()
            return st
        return VariationalState(self.value.copy())

    def max_abs(self):
        st = self.state()
        return float(np.max(np.abs(st.lam))), float(np.max(np.abs(self.mean)))


def train(config: TrainerConfig, dataset: Dataset, prior: PriorSpec,
          init: VariationalState | None = None,
          teacher: RbmModel | None = None) -> tuple[VariationalState, TrainTrace]:
    """Run ``config.epochs`` full-batch updates; trace has ``epochs + 1`` records.

    Record ``t`` describes the parameters after ``t`` updates. Its ELBO is
    estimated from the same draws used for the gradient at that point (fresh
    draws when ``config.independent_elbo``) and its ``clip_events`` counts
    clipped entries in the update that produced it.
    """
    m, n = prior.mean.shape
    if dataset.n_visible != n:
        raise ValueError(f"dataset has N={dataset.n_visible}, prior has N={n}")
    init = VariationalState.zeros(m, n) if init is None else init
    if init.shape != (m, n):
        raise ValueError(f"init shape {init.shape} does not match prior shape {(m, n)}")
    if teacher is not None and teacher.weights.shape != (m, n):
        raise ValueError("teacher shape does not match the variational parameters")

    cfg = config
    params = _Params(cfg.variant, init)
    quad = QuadratureSpec(cfg.quad_nodes)
    mode = "exact" if cfg.logz_backend == "exact" else "mp"
    mp_options = dict(damping=cfg.damping, tol=cfg.mp_tol, max_iters=cfg.mp_max_iters,
                      quad=quad, threads=cfg.threads)
    warm = [None] * cfg.s2
    trace = TrainTrace()
    clips = 0
    for epoch in range(cfg.epochs + 1):
        t0 = time.perf_counter()
        eta = params.mean
        draws = draw_noise(cfg.s1, cfg.s2, m, cfg.seed, epoch)
        stats = receptive_stats(eta, dataset)
        solves, failures = None, 0
        if mode == "mp":
            solves = solve_equivalent(eta, stats, draws.z2, cfg.beta,
                                      inits=warm if cfg.warm_start else None, **mp_options)
            warm = [p.state for p in solves]
            failures = sum(not p.state.converged for p in solves)

        if cfg.independent_elbo:
            eval_draws = draw_noise(cfg.s1, cfg.s2, m, cfg.seed, epoch, _EVAL_KEY)
            elbo = elbo_estimate(eta, dataset, eval_draws, cfg.logz_backend, prior, cfg.beta,
                                 **mp_options)
        else:
            elbo = elbo_estimate(eta, dataset, draws, cfg.logz_backend, prior, cfg.beta,
                                 solves=solves, **mp_options)

        xi_clamps = 0
        if epoch < cfg.epochs:
            mags = None if solves is None else [p.mags for p in solves]
            grad = loglik_grad(eta, dataset, draws, mags, stats, cfg.beta, mode,
                               xi_floor=cfg.xi_floor)
            xi_clamps = grad.xi_clamped

        max_lam, max_eta = params.max_abs()
        wall = (time.perf_counter() - t0) * 1e3
        trace.records.append(TraceRecord(
            epoch=epoch, elbo=elbo,
            overlap=float("nan") if teacher is None else overlap(eta, teacher),
            clip_events=clips, max_abs_lambda=max_lam, max_abs_eta=max_eta,
            mp_failures=failures, wall_ms=wall, xi_clamps=xi_clamps))

        if epoch == cfg.epochs:
            break
        if cfg.variant == "huang":
            params.value, clips = huang_step(params.value, grad.total, prior, cfg.alpha,
                                             clip_bound=cfg.clip_bound, kl_edge=cfg.kl_edge)
        elif cfg.variant == "bayes_first_order":
            params.value, clips = first_order_step(params.value, grad.total, prior, cfg.alpha,
                                                   clip_bound=cfg.clip_bound, kl_edge=cfg.kl_edge)
        else:
            params.value = bayes_step(VariationalState(params.value), grad.total, prior,
                                      cfg.alpha).lam
            clips = 0
    return params.state(), trace
