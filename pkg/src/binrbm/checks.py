"""Desk-scale verification suites comparing implementations with oracles.

Each suite returns a list of :class:`CheckResult`; a check passes when its
measured error is at most its tolerance. ``tol`` overrides every tolerance in
a suite (``tol=0`` forces failure of any check with nonzero error).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ._common import STREAM_CHECKS, rng_stream
from .model import Dataset, exact_log_partition, visible_states
from ._common import logcosh
from .msgpass import EquivalentRbm, bethe_log_partition, magnetizations, mp_fixed_point
from .train import first_order_step, huang_step
from .variational import (PriorSpec, exact_elbo, exact_elbo_grad, fisher_diag, kl_grad,
                          kl_grad_terms, kl_to_prior, mean_to_nat, nat_gap, nat_to_mean,
                          VariationalState)

SUITES = ("identities", "gradcheck", "mpcheck")


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<40s} error={self.error:.3e}  tol={self.tol:.1e}  ({self.seconds:.2f}s)"


def _fd(f, x, step=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up = x.copy()
        up[idx] += step
        dn = x.copy()
        dn[idx] -= step
        g[idx] = (f(up) - f(dn)) / (2.0 * step)
    return g


def _timed(name, tol, fn):
    t = time.perf_counter()
    err = float(fn())
    return CheckResult(name, err, tol, time.perf_counter() - t)


def identities(seed: int = 0) -> list[CheckResult]:
    rng = rng_stream(seed, STREAM_CHECKS, 0)

    def prior_pull():
        m = rng.uniform(-0.95, 0.95, 1000)
        eta = rng.uniform(-0.95, 0.95, 1000)
        gap = nat_gap(VariationalState.from_mean(eta), PriorSpec(m))
        rhs = -kl_grad_terms(eta, m)
        return np.max(np.abs(gap - rhs))

    def round_trip():
        lam = np.linspace(-7.5, 7.5, 1501)
        return np.max(np.abs(mean_to_nat(nat_to_mean(lam)) - lam))

    def round_trip_conditioned():
        # storing eta in float64 costs up to ulp(eta) / (1 - eta^2) in lambda;
        # report the error in units of that floor
        lam = np.linspace(-15.0, 15.0, 3001)
        eta = nat_to_mean(lam)
        floor = np.spacing(np.abs(eta)) / (1.0 - eta ** 2)
        return np.max(np.abs(mean_to_nat(eta) - lam) / (floor + 1e-10))

    def first_order():
        m = rng.uniform(-0.9, 0.9, (1000,))
        x = rng.uniform(-1.0, 1.0, (1000,))
        g = rng.normal(0.0, 2.0, (1000,))
        alpha = rng.uniform(0.001, 0.5, (1000,))
        prior = PriorSpec(m)
        a, _ = huang_step(x, g, prior, alpha)
        b, _ = first_order_step(x, g, prior, alpha)
        return np.max(np.abs(a - b))

    def kl_forms():
        m = rng.uniform(-0.95, 0.95, 1000)
        eta = rng.uniform(-0.95, 0.95, 1000)
        return np.max(np.abs(kl_grad_terms(eta, m) - kl_grad(eta, PriorSpec(m))))

    return [
        _timed("prior pull equals KL-gradient expression", 1e-12, prior_pull),
        _timed("lambda <-> eta round trip |lambda|<=7.5", 1e-10, round_trip),
        _timed("round trip |lambda|<=15 / float64 floor", 1.0, round_trip_conditioned),
        _timed("first-order rule equals clipped ascent", 1e-12, first_order),
        _timed("KL gradient verbatim vs atanh form", 1e-12, kl_forms),
    ]


def gradcheck(seed: int = 0) -> list[CheckResult]:
    rng = rng_stream(seed, STREAM_CHECKS, 1)

    def kl():
        m = rng.uniform(-0.9, 0.9, (3, 4))
        eta = rng.uniform(-0.95, 0.95, (3, 4))
        prior = PriorSpec(m)
        return np.max(np.abs(kl_grad(eta, prior) - _fd(lambda e: kl_to_prior(e, prior), eta)))

    def elbo():
        worst = 0.0
        for _ in range(3):
            eta = rng.uniform(-0.95, 0.95, (2, 5))
            data = Dataset(rng.choice([-1.0, 1.0], (4, 5)))
            prior = PriorSpec(rng.uniform(-0.5, 0.5, (2, 5)))
            beta = rng.uniform(0.3, 1.5)
            fd = _fd(lambda e: exact_elbo(e, data, prior, beta), eta)
            worst = max(worst, np.max(np.abs(exact_elbo_grad(eta, data, prior, beta) - fd)))
        return worst

    def fisher():
        worst = 0.0
        for _ in range(5):
            k = 6
            A = rng.normal(size=(k, k))
            b = rng.normal(size=k)

            def L(eta):
                return eta @ A @ eta + b @ eta + np.sum(np.sin(eta))

            lam = rng.uniform(-2.0, 2.0, k)
            nat = _fd(lambda l: L(np.tanh(l)), lam) / fisher_diag(lam)
            mean = _fd(L, np.tanh(lam))
            worst = max(worst, np.max(np.abs(nat - mean)))
        return worst

    return [
        _timed("KL gradient vs finite differences", 1e-6, kl),
        _timed("exact ELBO gradient vs finite differences", 1e-6, elbo),
        _timed("inverse Fisher x lambda-grad = eta-grad", 1e-5, fisher),
    ]


def exact_site_magnetizations(eta, H, beta) -> np.ndarray:
    """``<v_i>`` of the equivalent RBM by enumeration."""
    eta = np.atleast_2d(eta)
    n = eta.shape[1]
    states = visible_states(n)
    logw = logcosh(beta * (states @ eta.T / np.sqrt(n) + H)).sum(axis=1)
    p = np.exp(logw - logw.max())
    return (p / p.sum()) @ states


def bethe_vs_enumeration(n_instances: int = 20, seed: int = 0) -> dict[str, np.ndarray]:
    """Per-site free-energy and magnetization errors on random instances.

    Instances have N in [4, 12], M in [1, 3], beta in (0, 0.5], |eta| <= 0.5
    and standard-normal hidden fields.
    """
    rng = rng_stream(seed, STREAM_CHECKS, 2)
    fe, mag, sizes = [], [], []
    for _ in range(n_instances):
        n = int(rng.integers(4, 13))
        m = int(rng.integers(1, 4))
        beta = float(rng.uniform(0.05, 0.5))
        eta = rng.uniform(-0.5, 0.5, (m, n))
        H = rng.normal(size=m)
        rbm = EquivalentRbm(eta, H, beta)
        state = mp_fixed_point(rbm)
        mags = magnetizations(rbm, state)
        fe.append(abs(bethe_log_partition(rbm, state, mags) - exact_log_partition(eta, H, beta)) / n)
        mag.append(np.max(np.abs(mags.m_i - exact_site_magnetizations(eta, H, beta))))
        sizes.append((n, m, beta))
    return {"free_energy": np.array(fe), "magnetization": np.array(mag), "instances": sizes}


def mpcheck(seed: int = 0) -> list[CheckResult]:
    out = {}

    def run():
        out.update(bethe_vs_enumeration(20, seed))
        return out["free_energy"].max()

    first = _timed("Bethe log Z per site vs enumeration", 0.02, run)
    second = CheckResult("BP site magnetizations vs enumeration", float(out["magnetization"].max()), 0.05)

    def high_temp():
        rng = rng_stream(seed, STREAM_CHECKS, 3)
        n, m, beta = 9, 3, 1e-4
        eta = rng.uniform(-1.0, 1.0, (m, n))
        H = rng.normal(0.0, 3.0, m)
        rbm = EquivalentRbm(eta, H, beta)
        state = mp_fixed_point(rbm)
        expansion = n * np.log(2.0) + np.sum(logcosh(beta * H))
        return abs(bethe_log_partition(rbm, state) - expansion) / n

    return [first, second, _timed("Bethe high-temperature expansion", 1e-6, high_temp)]


_RUNNERS = {"identities": identities, "gradcheck": gradcheck, "mpcheck": mpcheck}


def run_suite(name: str, seed: int = 0, tol: float | None = None) -> list[CheckResult]:
    if name not in _RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    results = _RUNNERS[name](seed)
    if tol is not None:
        for r in results:
            r.tol = float(tol)
    return results
