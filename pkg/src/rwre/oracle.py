"""Independent exact oracles for crossing and hitting moments.

The boundary-value route: on a finite interval [a, n] with absorbing ends,
the expected hitting time e(x) of the right end and its variance v(x)
satisfy one-step tridiagonal systems

    h_k = p_k h_{k+1} + q_k h_{k-1} + f_k,     h_a = h_n = 0,

with f = 1 for the expectation and, for the variance,
f(x) = p_x (e(x+1) - e(x) + 1)^2 + q_x (e(x-1) - e(x) + 1)^2 built directly
from the solved e.  The interior increments e(k) - e(k+1) and v(k) - v(k+1)
converge (as a -> -infinity) to the per-site crossing mean and variance, so
they serve as desk-scale ground truth for the series in ``analytics``.

A note on the variance forcing term: rewriting f in terms of crossing means
gives p_k (1 - mean_k)^2 + q_k (mean_{k-1} + 1)^2, but a commonly seen
transcription swaps the two arguments.  Both symbolic variants are evaluated
by ``forcing_terms`` and compared to the e-derived forcing; only the
unswapped variant matches, and the oracle always builds f from the solved e.

The dynamic-programming route gives the exact position law at small times;
the Monte Carlo route estimates single-edge crossing moments with standard
errors.  Together they adjudicate every formula discrepancy flagged upstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import EnvironmentWindow
from .errors import (
    LeftGuardBreachError,
    ModelError,
    StepBudgetExceededError,
    WindowTooSmallError,
)

__all__ = [
    "FiniteChainSolution",
    "ExactPmf",
    "MomentEstimate",
    "solve_finite_chain",
    "expected_hitting_times",
    "hitting_time_variances",
    "exact_position_distribution",
    "mc_crossing_moments",
    "forcing_terms",
]


@dataclass(frozen=True)
class FiniteChainSolution:
    """Solution of the absorbing-boundary one-step system on [a, n].

    ``h[k - a]`` is the solution at site k, with h(a) = h(n) = 0 imposed.
    The forward-sweep auxiliaries phi (all in [0, 1)) and d_tilde are kept
    for the boundary-limit diagnostics; ``residual`` is the largest
    violation of the defining equation over interior sites.
    """

    a: int
    n: int
    h: np.ndarray
    phi: np.ndarray
    d_tilde: np.ndarray
    residual: float

    def value(self, k: int) -> float:
        if not self.a <= k <= self.n:
            raise ModelError(f"site {k} outside [{self.a}, {self.n}]")
        return float(self.h[k - self.a])

    def increments(self) -> np.ndarray:
        """h(k) - h(k+1) for k = a..n-1 (per-edge contributions)."""
        return -np.diff(self.h)


def solve_finite_chain(
    window: EnvironmentWindow, a: int, n: int, f_values
) -> FiniteChainSolution:
    """Exact solve of the two-sided absorbing system by sweep and substitution.

    The forward sweep writes h_k = phi_k h_{k+1} + d_tilde_k with

        phi_k = p_k / (1 - q_k phi_{k-1}),
        d_tilde_k = (q_k d_tilde_{k-1} + f_k) / (1 - q_k phi_{k-1}),

    seeded phi_a = d_tilde_a = 0; back substitution from h_n = 0 finishes.
    ``f_values`` holds the interior forcing f_k for k = a+1..n-1.
    """
    if not a < n:
        raise ModelError(f"solve_finite_chain: need a < n, got a={a}, n={n}")
    if a < window.lo or n > window.hi:
        raise WindowTooSmallError(
            f"window [{window.lo}, {window.hi}] does not cover [{a}, {n}]"
        )
    f = np.asarray(f_values, dtype=np.float64)
    if f.shape != (n - a - 1,):
        raise ModelError(
            f"f_values must have length n - a - 1 = {n - a - 1}, got {f.shape}"
        )
    size = n - a + 1
    p = window.p[a - window.lo : n - window.lo + 1]
    q = 1.0 - p
    phi = np.zeros(size)
    d_tilde = np.zeros(size)
    for idx in range(1, size - 1):  # interior sites a+1..n-1
        den = 1.0 - q[idx] * phi[idx - 1]
        phi[idx] = p[idx] / den
        d_tilde[idx] = (q[idx] * d_tilde[idx - 1] + f[idx - 1]) / den
    h = np.zeros(size)
    for idx in range(size - 2, 0, -1):
        h[idx] = phi[idx] * h[idx + 1] + d_tilde[idx]
    interior = slice(1, size - 1)
    residual = float(
        np.max(np.abs(h[interior] - (p[interior] * h[2:] + q[interior] * h[:-2] + f)))
    ) if size > 2 else 0.0
    return FiniteChainSolution(a=a, n=n, h=h, phi=phi, d_tilde=d_tilde, residual=residual)


def expected_hitting_times(window: EnvironmentWindow, a: int, n: int) -> FiniteChainSolution:
    """e(x) = expected time to hit n from x, absorbing at both a and n."""
    return solve_finite_chain(window, a, n, np.ones(n - a - 1))


def forcing_terms(window: EnvironmentWindow, e: FiniteChainSolution) -> dict:
    """The variance forcing f on interior sites, three ways.

    ``derived`` builds f from the solved expectations (authoritative);
    ``mean_form`` is the rewrite p_k (1-mean_k)^2 + q_k (mean_{k-1}+1)^2;
    ``mean_form_swapped`` is the transcription with the arguments exchanged.
    The maximum interior gaps against ``derived`` expose the swap.
    """
    a, n = e.a, e.n
    p = window.p[a - window.lo : n - window.lo + 1]
    q = 1.0 - p
    h = e.h
    derived = p[1:-1] * (h[2:] - h[1:-1] + 1.0) ** 2 + q[1:-1] * (h[:-2] - h[1:-1] + 1.0) ** 2
    mu = e.increments()  # mu[k-a] approximates the crossing mean at site k
    mean_form = p[1:-1] * (1.0 - mu[1:]) ** 2 + q[1:-1] * (mu[:-1] + 1.0) ** 2
    swapped = p[1:-1] * (mu[1:] + 1.0) ** 2 + q[1:-1] * (1.0 - mu[:-1]) ** 2
    return {
        "derived": derived,
        "mean_form": mean_form,
        "mean_form_swapped": swapped,
        "max_gap_mean_form": float(np.max(np.abs(mean_form - derived))),
        "max_gap_swapped": float(np.max(np.abs(swapped - derived))),
    }


def hitting_time_variances(window: EnvironmentWindow, a: int, n: int) -> FiniteChainSolution:
    """v(x) = variance of the time to hit n from x, forcing built from e."""
    e = expected_hitting_times(window, a, n)
    f = forcing_terms(window, e)["derived"]
    return solve_finite_chain(window, a, n, f)


@dataclass(frozen=True)
class ExactPmf:
    """Exact position law after t steps: support positions and probabilities."""

    t: int
    start: int
    support: np.ndarray
    probabilities: np.ndarray

    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    def total_variation(self, positions, counts) -> float:
        """TV distance to an empirical distribution given as positions/counts."""
        counts = np.asarray(counts, dtype=np.float64)
        emp = dict(zip(np.asarray(positions).tolist(), (counts / counts.sum()).tolist()))
        exact = dict(zip(self.support.tolist(), self.probabilities.tolist()))
        keys = set(emp) | set(exact)
        return 0.5 * sum(abs(emp.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def exact_position_distribution(window: EnvironmentWindow, z0: int, t: int) -> ExactPmf:
    """Forward probability propagation for t steps (cost O(t^2)).

    Mass at x splits p_x to the right and 1 - p_x to the left each step.
    The window must cover [z0 - t, z0 + t].
    """
    if t < 0:
        raise ModelError(f"exact_position_distribution: t must be >= 0, got {t}")
    if z0 - t < window.lo or z0 + t > window.hi:
        raise WindowTooSmallError(
            f"window [{window.lo}, {window.hi}] must cover [{z0 - t}, {z0 + t}]"
        )
    size = 2 * t + 1
    probs = np.zeros(size)
    probs[t] = 1.0  # index i <-> position z0 - t + i
    p = window.p[z0 - t - window.lo : z0 + t - window.lo + 1]
    for _ in range(t):
        nxt = np.zeros(size)
        nxt[1:] += probs[:-1] * p[:-1]
        nxt[:-1] += probs[1:] * (1.0 - p[1:])
        probs = nxt
    idx = np.arange(size)
    keep = (idx - t) % 2 == t % 2  # offsets share the parity of t
    support = z0 - t + idx[keep]
    return ExactPmf(t=t, start=z0, support=support, probabilities=probs[keep])


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo crossing-time moments with standard errors."""

    mean: float
    mean_se: float
    variance: float
    variance_se: float
    n_samples: int


def mc_crossing_moments(
    window: EnvironmentWindow,
    k: int,
    n_samples: int,
    seed: int,
    *,
    max_rounds: int = 10_000_000,
) -> MomentEstimate:
    """Direct simulation of n_samples crossings of edge k -> k+1.

    All replicas start at k and run until first reaching k+1; active
    replicas are compacted each round so the cost is proportional to the
    total number of steps.  The variance standard error uses the fourth
    central moment.
    """
    if k < window.lo + 1 or k + 1 > window.hi:
        raise WindowTooSmallError(f"edge {k} -> {k + 1} not inside window")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
    p = window.p
    lo = window.lo
    steps = np.zeros(n_samples, dtype=np.int64)
    idx = np.arange(n_samples)
    x = np.full(n_samples, k, dtype=np.int64)
    target = k + 1
    for _ in range(max_rounds):
        u = rng.random(len(idx))
        x += np.where(u < p[x - lo], 1, -1)
        if x.min() <= lo:
            raise LeftGuardBreachError(
                f"a crossing replica reached the window edge {lo}; extend the window left"
            )
        steps[idx] += 1
        done = x == target
        if done.any():
            idx = idx[~done]
            x = x[~done]
            if len(idx) == 0:
                break
    else:
        raise StepBudgetExceededError(f"crossings did not finish within {max_rounds} rounds")
    if len(idx):
        raise StepBudgetExceededError(f"{len(idx)} crossings unfinished after {max_rounds} rounds")
    mean = float(steps.mean())
    var = float(steps.var(ddof=1))
    centered = steps - mean
    m4 = float(np.mean(centered**4))
    return MomentEstimate(
        mean=mean,
        mean_se=float(steps.std(ddof=1) / math.sqrt(n_samples)),
        variance=var,
        variance_se=math.sqrt(max(m4 - var**2, 0.0) / n_samples),
        n_samples=n_samples,
    )
