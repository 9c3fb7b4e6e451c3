"""Belief propagation on the equivalent RBM and its Bethe free energy.

The equivalent RBM has couplings ``eta[mu,i] / sqrt(N)`` and hidden fields
``H[mu]``; its partition function is

    Z = sum_v prod_mu cosh(beta * (eta[mu].v / sqrt(N) + H[mu])).

Messages live on the M x N edges of the complete bipartite graph:
``m_v2h[mu,i]`` is the cavity magnetization of visible i without hidden mu,
and ``u_h2v[mu,i]`` is the cavity field sent from hidden mu to visible i.
Hidden-side sums over the N visibles are closed with a Gaussian whose mean
and variance come from the incoming cavity magnetizations.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from ._common import LOG2, logcosh

DEFAULT_DAMPING = 0.5
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 500
DEFAULT_NODES = 32


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite rule for standard-normal expectations."""

    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if self.nodes < 8:
            raise ValueError("Gauss-Hermite quadrature needs at least 8 nodes")

    def rule(self) -> tuple[np.ndarray, np.ndarray]:
        return _probabilists_rule(self.nodes)


@lru_cache(maxsize=None)
def _probabilists_rule(n):
    z, w = hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def gauss_hermite_expect(a, b, which: str = "tanh", quad: QuadratureSpec = QuadratureSpec()):
    """``∫ Dz f(a + b z)`` for ``f`` in {"tanh", "tanh2"}; broadcasts over a, b.

    ``b == 0`` returns ``f(a)`` exactly rather than the rounded quadrature sum.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("the Gaussian scale b must be non-negative")
    if which == "tanh":
        f = np.tanh
    elif which in ("tanh2", "tanh²"):
        def f(x):
            return np.tanh(x) ** 2
    else:
        raise ValueError(f"unknown integrand {which!r}")
    z, w = quad.rule()
    vals = f(a[..., None] + b[..., None] * z) @ w
    out = np.where(b == 0, f(a), vals)
    return float(out) if out.ndim == 0 else out


@dataclass
class EquivalentRbm:
    eta: np.ndarray
    fields_H: np.ndarray
    beta: float

    def __post_init__(self):
        self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        self.fields_H = np.asarray(self.fields_H, dtype=float).reshape(-1)
        if self.fields_H.shape != (self.eta.shape[0],):
            raise ValueError(f"fields_H must have length {self.eta.shape[0]}")
        if np.any(np.abs(self.eta) > 1.0):
            raise ValueError("equivalent-RBM couplings need |eta| <= 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.eta.shape


@dataclass
class MessageState:
    m_v2h: np.ndarray
    u_h2v: np.ndarray
    converged: bool = False
    iterations: int = 0
    residual: float = float("inf")

    @classmethod
    def zeros(cls, m: int, n: int) -> "MessageState":
        return cls(np.zeros((m, n)), np.zeros((m, n)))

    def copy(self) -> "MessageState":
        return MessageState(self.m_v2h.copy(), self.u_h2v.copy(),
                            self.converged, self.iterations, self.residual)


@dataclass
class Magnetizations:
    m_i: np.ndarray
    m_hat: np.ndarray
    B: np.ndarray
    chi_tilde: np.ndarray
    lambda_tilde: np.ndarray
    C: np.ndarray


def _h2v(rbm: EquivalentRbm, m_v2h: np.ndarray) -> np.ndarray:
    m, n = rbm.shape
    sq = np.sqrt(n)
    full = (rbm.eta * m_v2h).sum(axis=1, keepdims=True)
    chi = (full - rbm.eta * m_v2h) / sq
    arg = np.tanh(rbm.beta * (chi + rbm.fields_H[:, None])) * np.tanh(rbm.beta * rbm.eta / sq)
    assert np.all(np.abs(arg) < 1.0), "message update left the atanh domain"
    return np.arctanh(arg)


def _v2h(u_h2v: np.ndarray) -> np.ndarray:
    total = u_h2v.sum(axis=0, keepdims=True)
    return np.tanh(total - u_h2v)


def mp_fixed_point(rbm: EquivalentRbm, damping: float = DEFAULT_DAMPING,
                   max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
                   init: MessageState | None = None) -> MessageState:
    """Iterate the BP equations to a fixed point.

    One sweep recomputes every visible-to-hidden message from the current
    hidden-to-visible ones, then every hidden-to-visible candidate from those;
    the hidden-to-visible messages are damped as
    ``u <- (1 - damping) * candidate + damping * u``. Stops once the largest
    change of either message family in a sweep is at most ``tol``.
    Non-convergence is reported via ``converged=False``, never raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    m, n = rbm.shape
    state = MessageState.zeros(m, n) if init is None else init.copy()
    mv, u = state.m_v2h, state.u_h2v
    residual = float("inf")
    it = 0
    while it < max_iters:
        it += 1
        mv_new = _v2h(u)
        u_new = (1.0 - damping) * _h2v(rbm, mv_new) + damping * u
        residual = max(float(np.max(np.abs(mv_new - mv))), float(np.max(np.abs(u_new - u))))
        mv, u = mv_new, u_new
        if residual <= tol:
            break
    return MessageState(mv, u, residual <= tol, it, residual)


def magnetizations(rbm: EquivalentRbm, state: MessageState,
                   quad: QuadratureSpec = QuadratureSpec()) -> Magnetizations:
    """Single-site and hidden-unit statistics at a BP fixed point.

    ``C[mu,i]`` approximates the correlation ``<h_mu v_i>`` and ``m_hat`` the
    hidden magnetization; the Gaussian over the visible field uses the
    standard deviation ``sqrt(lambda_tilde)``.
    """
    m, n = rbm.shape
    beta = rbm.beta
    sq = np.sqrt(n)
    m_i = np.tanh(state.u_h2v.sum(axis=0))
    chi = rbm.eta @ m_i / sq
    lam = (rbm.eta ** 2) @ (1.0 - m_i ** 2) / n
    a = beta * (chi + rbm.fields_H)
    b = beta * np.sqrt(lam)
    m_hat = np.atleast_1d(gauss_hermite_expect(a, b, "tanh", quad))
    B = 1.0 - np.atleast_1d(gauss_hermite_expect(a, b, "tanh2", quad))
    C = np.outer(m_hat, m_i) + beta * rbm.eta / sq * (1.0 - m_i ** 2)[None, :] * B[:, None]
    return Magnetizations(m_i=m_i, m_hat=m_hat, B=B, chi_tilde=chi, lambda_tilde=lam, C=C)


def bethe_log_partition(rbm: EquivalentRbm, state: MessageState,
                        mags: Magnetizations | None = None, *, closure: str = "gaussian") -> float:
    """Bethe estimate of ``log Z`` from converged messages.

    Combines ``sum_mu log Z_mu + sum_i log Z_i - sum_edges log Z_mu,i`` with
    normalized edge beliefs. The hidden factor term is the cavity average of
    ``cosh(beta * (eta[mu].v / sqrt(N) + H[mu]))``: under ``closure="gaussian"``
    it is ``beta^2 Lambda / 2 + log cosh(beta (chi + H))`` (from
    ``∫Dz cosh(a + bz) = exp(b^2/2) cosh a``); ``closure="product"`` evaluates the
    same average exactly for independent cavity spins.

    ``mags`` is accepted for interface symmetry; the estimate uses messages only.
    """
    if not state.converged:
        warnings.warn(f"Bethe estimate from an unconverged message state "
                      f"(residual {state.residual:.3g})", ConvergenceWarning, stacklevel=2)
    m, n = rbm.shape
    beta = rbm.beta
    sq = np.sqrt(n)
    mv, u = state.m_v2h, state.u_h2v
    H = rbm.fields_H

    if closure == "gaussian":
        chi = (rbm.eta * mv).sum(axis=1) / sq
        lam = (rbm.eta ** 2 * (1.0 - mv ** 2)).sum(axis=1) / n
        factor = beta ** 2 * lam / 2.0 + logcosh(beta * (chi + H))
    elif closure == "product":
        c = beta * rbm.eta / sq
        # E[exp(±(c.v))] for independent v with means mv
        plus = np.log(np.cosh(c) + mv * np.sinh(c)).sum(axis=1)
        minus = np.log(np.cosh(c) - mv * np.sinh(c)).sum(axis=1)
        factor = np.logaddexp(beta * H + plus, -beta * H + minus) - np.log(2.0)
    else:
        raise ValueError(f"unknown closure {closure!r}")

    # site: log 2cosh(sum_mu u) - sum_mu log 2cosh(u); edge: log((1 + m tanh u) / 2).
    # The log 2 constants of both combine to a single N log 2.
    site = logcosh(u.sum(axis=0)) - logcosh(u).sum(axis=0)
    edge = np.log1p(mv * np.tanh(u))
    return float(factor.sum() + site.sum() + n * LOG2 - edge.sum())


def dump_message_state(state: MessageState) -> str:
    """Plain-text dump: header line, then M rows of m_v2h and M rows of u_h2v."""
    m, n = state.m_v2h.shape
    lines = [f"# binrbm-msgstate M={m} N={n} iterations={state.iterations} "
             f"converged={int(state.converged)} residual={state.residual:.17g}"]
    for mat in (state.m_v2h, state.u_h2v):
        lines.extend(" ".join(f"{x:.17g}" for x in row) for row in mat)
    return "\n".join(lines) + "\n"
