"""Statistical experiment harness.

Every experiment follows the quenched protocol: one environment window is
realized from the environment seed and frozen; all randomness after that is
the walkers'.  Seeds are split into (env_seed, walk_seed) children of the
master seed, replicas fan out in fixed-width chunks, and every report is a
pure function of its configuration: worker count and scheduling never change
a reported number.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import analytics, walk
from .analytics import MomentProfile, SummaryStatistics
from .environment import (
    EnvironmentModel,
    EnvironmentWindow,
    mean_log_odds,
    realize,
    suggested_burn_in,
    suggested_left_guard,
)
from .errors import ConfigError, ModelError, NotCltEligibleError
from .walk import SimulationBudget

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "DiagnosticReport",
    "LlnReport",
    "VarianceRatioReport",
    "ErgodicityReport",
    "CouplingReport",
    "ks_distance",
    "normal_cdf",
    "default_ks_threshold",
    "clt_hitting",
    "clt_position",
    "lln_check",
    "variance_ratio_check",
    "fluctuation_diagnostics",
    "uniform_ergodicity_estimate",
    "coupling_identity_check",
]

normal_cdf = ndtr


def default_ks_threshold(n_replicas: int) -> float:
    """max(0.03, three times the 95% Kolmogorov critical value)."""
    return max(0.03, 3.0 * 1.36 / math.sqrt(n_replicas))


def ks_distance(samples, reference_cdf=normal_cdf) -> float:
    """Sup distance between the sample ECDF and a continuous reference CDF."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    m = len(xs)
    if m == 0:
        raise ModelError("ks_distance: empty sample set")
    f = np.asarray(reference_cdf(xs), dtype=np.float64)
    i = np.arange(1, m + 1, dtype=np.float64)
    return float(max(np.max(np.abs(f - i / m)), np.max(np.abs(f - (i - 1.0) / m))))


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run.

    Grids must be sorted, the replica count is at least 100, and the
    diagnostic exponent is positive.  Seeds not given explicitly are derived
    as children of the master seed.
    """

    model: EnvironmentModel
    kind: str = "clt_hitting"
    n: int = 2000
    t: int = 4000
    replicas: int = 1000
    centering: str = "explicit"
    x_grid: tuple[float, ...] = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
    t_grid: tuple[int, ...] = ()
    n_grid: tuple[int, ...] = ()
    diag_c: float = 0.2
    ks_threshold: float | None = None
    lln_rel_tol: float = 0.02
    master_seed: int = 0xC0FFEE
    env_seed: int | None = None
    walk_seed: int | None = None
    env_replicates: int = 1
    left_guard: int | None = None
    max_steps: int | None = None
    workers: int = 1
    tol: float = 1e-12
    summary_budget: int = 200_000

    def __post_init__(self) -> None:
        if self.replicas < 100:
            raise ConfigError(f"experiment.replicas: must be >= 100, got {self.replicas}")
        if self.centering not in ("explicit", "implicit"):
            raise ConfigError(
                f"experiment.centering: must be 'explicit' or 'implicit', got {self.centering!r}"
            )
        for name in ("x_grid", "t_grid", "n_grid"):
            grid = tuple(getattr(self, name))
            object.__setattr__(self, name, grid)
            if list(grid) != sorted(grid):
                raise ConfigError(f"experiment.{name}: grid must be sorted")
        if not self.diag_c > 0:
            raise ConfigError(f"experiment.diag_c: must be positive, got {self.diag_c}")
        if self.kind not in (
            "clt_hitting",
            "clt_position",
            "lln",
            "diagnostics",
            "simulate",
        ):
            raise ConfigError(f"experiment.kind: unknown kind {self.kind!r}")
        if self.env_replicates < 1:
            raise ConfigError("experiment.env_replicates: must be >= 1")
        if self.workers < 1:
            raise ConfigError("experiment.workers: must be >= 1")

    def resolved_env_seed(self, replicate: int = 0) -> int:
        base = self.env_seed if self.env_seed is not None else _child_seed(self.master_seed, 1)
        if replicate == 0:
            return base
        return _child_seed(base, 100 + replicate)

    def resolved_walk_seed(self) -> int:
        return self.walk_seed if self.walk_seed is not None else _child_seed(self.master_seed, 2)


def _child_seed(seed: int, key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(key,)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentReport:
    """Outcome of one CLT experiment: standardized samples and the verdict."""

    kind: str
    scale: int                       # n for hitting, t for position
    replicas: int
    centering: str | None
    ks_distance: float
    threshold: float
    verdict: bool
    raw_samples: np.ndarray
    standardized: np.ndarray
    centering_value: float
    scale_value: float               # sqrt(n) sigma or sqrt(t) sigma*
    summary: SummaryStatistics
    window_sigma2: float
    window_mu: float
    cdf_errors: tuple[tuple[float, float, float], ...]  # (x, ecdf, reference)
    env_seed: int
    walk_seed: int
    ks_distribution: tuple[float, ...] = ()
    wall_clock: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.ks_distance <= 1.0:
            raise ModelError("report: KS distance must lie in [0, 1]")
        if self.verdict != (self.ks_distance <= self.threshold):
            raise ModelError("report: verdict inconsistent with threshold")


def _cdf_errors(z: np.ndarray, x_grid) -> tuple:
    zs = np.sort(z)
    out = []
    for x in x_grid:
        ecdf = float(np.searchsorted(zs, x, side="right")) / len(zs)
        out.append((float(x), ecdf, float(normal_cdf(x))))
    return tuple(out)


def _budget_for(config: ExperimentConfig, mu_hint: float, scale: int) -> SimulationBudget:
    guard = config.left_guard if config.left_guard is not None else suggested_left_guard(config.model)
    max_steps = config.max_steps if config.max_steps is not None else walk.default_max_steps(scale, mu_hint)
    return SimulationBudget(left_guard=guard, max_steps=max_steps, t_max=0, n_max=scale)


def _experiment_window(config: ExperimentConfig, right: int, env_seed: int,
                       guard: int) -> EnvironmentWindow:
    margin = max(guard + 2, suggested_burn_in(config.model))
    return realize(config.model, -margin, right, env_seed)


def clt_hitting(config: ExperimentConfig) -> ExperimentReport:
    """Hitting-time fluctuation experiment under one quenched environment.

    Standardizes T(n) by the window's own expected hitting time and by the
    window-averaged crossing variance (the self-consistent quenched scale),
    then measures the KS distance to the standard normal CDF.
    """
    t0 = time.perf_counter()
    summ = analytics.summary(config.model, budget=config.summary_budget, tol=config.tol)
    n = config.n
    budget = _budget_for(config, summ.mu, n)
    ks_list = []
    primary = None
    for rep in range(config.env_replicates):
        env_seed = config.resolved_env_seed(rep)
        window = _experiment_window(config, n + 1, env_seed, budget.left_guard)
        profile = MomentProfile(window, tol=config.tol)
        centering = profile.hitting_centering(n)
        window_sigma2 = float(profile.sigma2_array(n).mean())
        window_mu = centering / n
        scale_value = math.sqrt(n * window_sigma2)
        samples = walk.batch_hitting_times(
            window, n, config.resolved_walk_seed(), config.replicas, budget,
            workers=config.workers,
        )
        z = (samples - centering) / scale_value
        ks = ks_distance(z)
        ks_list.append(ks)
        if rep == 0:
            primary = (samples, z, ks, centering, scale_value, window_sigma2, window_mu, env_seed)
    samples, z, ks, centering, scale_value, window_sigma2, window_mu, env_seed = primary
    threshold = config.ks_threshold if config.ks_threshold is not None else default_ks_threshold(config.replicas)
    return ExperimentReport(
        kind="clt_hitting",
        scale=n,
        replicas=config.replicas,
        centering=None,
        ks_distance=ks,
        threshold=threshold,
        verdict=ks <= threshold,
        raw_samples=samples,
        standardized=z,
        centering_value=centering,
        scale_value=scale_value,
        summary=summ,
        window_sigma2=window_sigma2,
        window_mu=window_mu,
        cdf_errors=_cdf_errors(z, config.x_grid),
        env_seed=env_seed,
        walk_seed=config.resolved_walk_seed(),
        ks_distribution=tuple(ks_list),
        wall_clock=time.perf_counter() - t0,
    )


def clt_position(config: ExperimentConfig) -> ExperimentReport:
    """Position fluctuation experiment with the configured centering.

    The centering is the explicit closed form or the implicit bracket from
    the same window the walkers run in; the scale is sqrt(t) times the
    window's self-consistent position scale.
    """
    t0 = time.perf_counter()
    summ = analytics.summary(config.model, budget=config.summary_budget, tol=config.tol)
    t = config.t
    budget = _budget_for(config, summ.mu, t)
    ks_list = []
    primary = None
    for rep in range(config.env_replicates):
        env_seed = config.resolved_env_seed(rep)
        window = _experiment_window(config, t + 1, env_seed, budget.left_guard)
        profile = MomentProfile(window, tol=config.tol)
        if config.centering == "explicit":
            centering = profile.explicit_center(t, summ.mu)
        else:
            centering = float(profile.implicit_center(t).implicit)
        k_used = max(64, int(t / summ.mu))
        window_mu = profile.hitting_centering(k_used) / k_used
        window_sigma2 = float(profile.sigma2_array(k_used).mean())
        sigma_star = math.sqrt(window_mu**-3 * window_sigma2)
        scale_value = math.sqrt(t) * sigma_star
        samples = walk.batch_positions(
            window, t, config.resolved_walk_seed(), config.replicas, budget,
            workers=config.workers,
        )
        z = (samples - centering) / scale_value
        ks = ks_distance(z)
        ks_list.append(ks)
        if rep == 0:
            primary = (samples, z, ks, centering, scale_value, window_sigma2, window_mu, env_seed)
    samples, z, ks, centering, scale_value, window_sigma2, window_mu, env_seed = primary
    threshold = config.ks_threshold if config.ks_threshold is not None else default_ks_threshold(config.replicas)
    return ExperimentReport(
        kind="clt_position",
        scale=t,
        replicas=config.replicas,
        centering=config.centering,
        ks_distance=ks,
        threshold=threshold,
        verdict=ks <= threshold,
        raw_samples=samples,
        standardized=z,
        centering_value=centering,
        scale_value=scale_value,
        summary=summ,
        window_sigma2=window_sigma2,
        window_mu=window_mu,
        cdf_errors=_cdf_errors(z, config.x_grid),
        env_seed=env_seed,
        walk_seed=config.resolved_walk_seed(),
        ks_distribution=tuple(ks_list),
        wall_clock=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class LlnReport:
    """Long-trajectory averages T(n)/n and X(t)/t over geometric grids."""

    n_grid: tuple[int, ...]
    hitting_ratios: tuple[float, ...]
    t_grid: tuple[int, ...]
    position_ratios: tuple[float, ...]
    mu: float | None
    hitting_rel_error: float | None
    position_rel_error: float | None
    verdict: bool
    env_seed: int
    walk_seed: int


def lln_check(config: ExperimentConfig, *, rel_tol: float | None = None) -> LlnReport:
    """Law-of-large-numbers check on one long joint trajectory.

    For positive-speed laws the verdict compares T(n)/n and X(t)/t to the
    law mean at the largest grid scale, within config.lln_rel_tol relative
    error.  Zero-speed transient laws (order-1 growth rate >= 1) get trend
    reporting only: X(t)/t should fall.
    """
    if rel_tol is None:
        rel_tol = config.lln_rel_tol
    lam = mean_log_odds(config.model)
    if lam.value >= 0:
        raise NotCltEligibleError("LLN experiment requires a transient-right law")
    from .environment import odds_growth_rate

    r1 = odds_growth_rate(config.model, 1.0)
    positive_speed = r1.value < 1.0
    mu = (1.0 + r1.value) / (1.0 - r1.value) if positive_speed else None

    n_max = config.n
    t_max = config.t
    n_grid = config.n_grid or _geometric_grid(n_max)
    t_grid = config.t_grid or _geometric_grid(t_max)
    guard = config.left_guard if config.left_guard is not None else suggested_left_guard(config.model)
    mu_hint = mu if mu is not None else 10.0
    max_steps = config.max_steps or (walk.default_max_steps(n_max, mu_hint) + 2 * t_max)
    budget = SimulationBudget(left_guard=guard, max_steps=max_steps, t_max=t_max, n_max=n_max)
    env_seed = config.resolved_env_seed()
    window = _experiment_window(config, max(n_max, t_max) + 1, env_seed, guard)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.resolved_walk_seed()))
    # zero-speed walks may never reach a fixed site within any sane budget,
    # so the hitting goal is only imposed in the positive-speed regime
    obs = walk.sample_position(
        window, 0, t_grid, rng, budget, record_hitting=True,
        n_goal=n_max if positive_speed else None,
    )
    hit = obs.hit
    hitting_ratios = tuple(
        float(hit[m]) / m if m < len(hit) else float("nan") for m in n_grid
    )
    pos = dict(obs.snapshots)
    position_ratios = tuple(pos[t] / t for t in t_grid)
    if positive_speed:
        h_err = abs(hitting_ratios[-1] - mu) / mu
        p_err = abs(position_ratios[-1] - 1.0 / mu) * mu
        verdict = h_err <= rel_tol and p_err <= rel_tol
    else:
        h_err = p_err = None
        verdict = position_ratios[-1] < position_ratios[0]
    return LlnReport(
        n_grid=tuple(n_grid),
        hitting_ratios=hitting_ratios,
        t_grid=tuple(t_grid),
        position_ratios=position_ratios,
        mu=mu,
        hitting_rel_error=h_err,
        position_rel_error=p_err,
        verdict=verdict,
        env_seed=env_seed,
        walk_seed=config.resolved_walk_seed(),
    )


def _geometric_grid(top: int, points: int = 5) -> tuple[int, ...]:
    grid = sorted({max(1, int(round(top ** (i / (points - 1))))) for i in range(points)})
    return tuple(grid)


@dataclass(frozen=True)
class VarianceRatioReport:
    """Quenched variance accumulation against the law-level scale."""

    n_grid: tuple[int, ...]
    ratio: tuple[float, ...]        # sum_k var_k / (n sigma2)
    max_share: tuple[float, ...]    # max_k var_k / sum_k var_k
    ratio_converges: bool
    share_vanishes: bool


def variance_ratio_check(config: ExperimentConfig, *, ratio_tol: float = 0.05) -> VarianceRatioReport:
    """Checks sum_{k<n} var_k ~ n sigma2 and that no single site dominates."""
    summ = analytics.summary(config.model, budget=config.summary_budget, tol=config.tol)
    n_grid = config.n_grid or _geometric_grid(config.n)
    env_seed = config.resolved_env_seed()
    window = _experiment_window(config, max(n_grid) + 1, env_seed, 8)
    profile = MomentProfile(window, tol=config.tol)
    sig = profile.sigma2_array(max(n_grid))
    csum = np.cumsum(sig)
    cmax = np.maximum.accumulate(sig)
    ratio = tuple(float(csum[n - 1] / (n * summ.sigma2)) for n in n_grid)
    share = tuple(float(cmax[n - 1] / csum[n - 1]) for n in n_grid)
    return VarianceRatioReport(
        n_grid=tuple(n_grid),
        ratio=ratio,
        max_share=share,
        ratio_converges=abs(ratio[-1] - 1.0) <= ratio_tol,
        share_vanishes=share[-1] <= max(10.0 / n_grid[-1], 0.05),
    )


@dataclass(frozen=True)
class DiagnosticReport:
    """Centered-sum diagnostics behind the position-centering conditions.

    ``explicit_window_sums[t][x]`` is the scaled centered sum between t/mu
    and the shifted explicit center (median over environment replicates);
    ``implicit_window_sums`` is the analogue anchored at the implicit
    center.  ``shifted`` variants move the upper limit down by one index
    (both conventions are reported).  ``scaled_range`` is the local maximal
    fluctuation statistic at the configured exponent.
    """

    t_grid: tuple[int, ...]
    x_grid: tuple[float, ...]
    explicit_window_sums: np.ndarray        # median over env replicates, shape (t, x)
    explicit_window_sums_shifted: np.ndarray
    implicit_window_sums: np.ndarray
    n_grid: tuple[int, ...]
    scaled_range: np.ndarray                # median over env replicates, per n
    max_abs_over_sqrt: np.ndarray           # H*(n)/sqrt(n), median
    max_abs_over_n: np.ndarray              # H*(n)/n, median
    centered_sum_scaled: np.ndarray         # n^{-(1+c)/2} H(n), median
    diag_c: float
    explicit_decreasing: bool
    env_seeds: tuple[int, ...]
    per_seed_explicit: np.ndarray           # shape (seeds, t, x)


def fluctuation_diagnostics(config: ExperimentConfig) -> DiagnosticReport:
    """Environment-side diagnostics over env_replicates quenched windows.

    Purely analytic in the environment: no walkers are run.  Verdicts are
    qualitative trends (medians decreasing with scale), as no convergence
    rate is available in general.
    """
    summ = analytics.summary(config.model, budget=config.summary_budget, tol=config.tol)
    t_grid = config.t_grid or (1000, 10_000, 100_000)
    n_grid = config.n_grid or (100, 1000, 10_000)
    x_grid = config.x_grid
    c = config.diag_c
    t_max = max(t_grid)
    n_max = max(n_grid)
    x_span = max(abs(x) for x in x_grid) if x_grid else 1.0

    k_needed = int(t_max / summ.mu + 8.0 * summ.sigma_star * math.sqrt(t_max) * (1 + x_span))
    k_needed = max(k_needed, n_max + int(n_max ** ((1 + c) / 2)) + 2, 256) + 64

    per_seed_explicit = []
    per_seed_explicit_shift = []
    per_seed_implicit = []
    per_seed_range = []
    per_seed_hstar_sqrt = []
    per_seed_hstar_n = []
    per_seed_hscaled = []
    env_seeds = []
    for rep in range(config.env_replicates):
        env_seed = config.resolved_env_seed(rep)
        env_seeds.append(env_seed)
        window = _experiment_window(config, k_needed + 1, env_seed, 8)
        profile = MomentProfile(window, tol=config.tol)
        centered = profile.mu_array(k_needed) - summ.mu
        prefix = np.concatenate([[0.0], np.cumsum(centered)])

        def seg(a: float, b: float) -> float:
            fa, fb = math.floor(a), math.floor(b)
            lo, hi, sign = (fa, fb, 1.0) if fa <= fb else (fb, fa, -1.0)
            return sign * float(prefix[hi + 1] - prefix[lo])

        exp_sums = np.empty((len(t_grid), len(x_grid)))
        exp_sums_shift = np.empty_like(exp_sums)
        imp_sums = np.empty_like(exp_sums)
        for i, t in enumerate(t_grid):
            b_exp = profile.explicit_center(t, summ.mu)
            b_imp = profile.implicit_center(t).implicit
            for j, x in enumerate(x_grid):
                shift = math.sqrt(t) * summ.sigma_star * x
                exp_sums[i, j] = seg(t / summ.mu, b_exp + shift) / math.sqrt(t)
                exp_sums_shift[i, j] = seg(t / summ.mu, b_exp + shift - 1.0) / math.sqrt(t)
                imp_sums[i, j] = seg(b_imp, b_imp + shift) / math.sqrt(t)
        per_seed_explicit.append(exp_sums)
        per_seed_explicit_shift.append(exp_sums_shift)
        per_seed_implicit.append(imp_sums)

        rng_stat = []
        hs_sqrt = []
        hs_n = []
        h_scaled = []
        for n in n_grid:
            s_max = int(n ** ((1 + c) / 2.0))
            right = np.abs(prefix[n + 1 : n + s_max + 2] - prefix[n])
            left = np.abs(prefix[n + 1] - prefix[max(0, n - s_max) : n + 1])
            rng_stat.append(max(right.max(), left.max()) / math.sqrt(n))
            running = np.abs(prefix[1 : n + 1]).max()
            hs_sqrt.append(running / math.sqrt(n))
            hs_n.append(running / n)
            h_scaled.append(abs(prefix[n]) / n ** ((1 + c) / 2.0))
        per_seed_range.append(rng_stat)
        per_seed_hstar_sqrt.append(hs_sqrt)
        per_seed_hstar_n.append(hs_n)
        per_seed_hscaled.append(h_scaled)

    exp_med = np.median(np.abs(np.array(per_seed_explicit)), axis=0)
    exp_shift_med = np.median(np.abs(np.array(per_seed_explicit_shift)), axis=0)
    imp_med = np.median(np.abs(np.array(per_seed_implicit)), axis=0)
    range_med = np.median(np.array(per_seed_range), axis=0)
    hstar_sqrt_med = np.median(np.array(per_seed_hstar_sqrt), axis=0)
    hstar_n_med = np.median(np.array(per_seed_hstar_n), axis=0)
    hscaled_med = np.median(np.array(per_seed_hscaled), axis=0)

    decreasing = True
    for j, x in enumerate(x_grid):
        if x == 0:
            continue
        decreasing &= bool(np.all(np.diff(exp_med[:, j]) <= 1e-12))
    return DiagnosticReport(
        t_grid=tuple(t_grid),
        x_grid=tuple(x_grid),
        explicit_window_sums=exp_med,
        explicit_window_sums_shifted=exp_shift_med,
        implicit_window_sums=imp_med,
        n_grid=tuple(n_grid),
        scaled_range=range_med,
        max_abs_over_sqrt=hstar_sqrt_med,
        max_abs_over_n=hstar_n_med,
        centered_sum_scaled=hscaled_med,
        diag_c=c,
        explicit_decreasing=decreasing,
        env_seeds=tuple(env_seeds),
        per_seed_explicit=np.array(per_seed_explicit),
    )


@dataclass(frozen=True)
class ErgodicityReport:
    """Worst-start window averages of centered crossing means."""

    n_grid: tuple[int, ...]
    epsilon: tuple[float, ...]
    reference_mean: float
    decreasing: bool
    uniformly_ergodic: bool


def uniform_ergodicity_estimate(
    model: EnvironmentModel,
    n_grid,
    starts: int = 2000,
    *,
    seed: int = 0,
    tol: float = 1e-12,
    plateau_tol: float = 1e-3,
) -> ErgodicityReport:
    """eps_n = max over starts k of |(1/n) sum_{j=k+1..k+n} (mu_j - mu_ref)|.

    mu_ref is the law-level mean (circle average for quasi-periodic laws),
    so a rotation locked to a short rational orbit plateaus above zero and
    is flagged as not uniformly ergodic.
    """
    n_grid = tuple(int(n) for n in n_grid)
    mu_ref = analytics.reference_crossing_mean(model, tol=tol, seed=seed)
    margin = suggested_burn_in(model)
    window = realize(model, -margin, starts + max(n_grid) + 2, seed)
    profile = MomentProfile(window, tol=tol)
    centered = profile.mu_array(starts + max(n_grid) + 1) - mu_ref
    prefix = np.concatenate([[0.0], np.cumsum(centered)])
    eps = []
    for n in n_grid:
        # window sums over j in [k+1, k+n] for k in [0, starts)
        sums = prefix[n + 1 : n + starts + 1] - prefix[1 : starts + 1]
        eps.append(float(np.max(np.abs(sums)) / n))
    decreasing = all(b < a for a, b in zip(eps, eps[1:]))
    return ErgodicityReport(
        n_grid=n_grid,
        epsilon=tuple(eps),
        reference_mean=mu_ref,
        decreasing=decreasing,
        uniformly_ergodic=decreasing and eps[-1] < max(plateau_tol, eps[0] / 4.0),
    )


@dataclass(frozen=True)
class CouplingReport:
    """Exhaustive per-trajectory identity checks.

    Counts violations of the event identity {n_t <= y} = {T(y+1) > t} and of
    the bound |X(t) - n_t| <= t - T(n_t) < tau_{n_t}, plus the parity and
    odd-crossing-time invariants, over trajectory x (t, y) grids.
    """

    trajectories: int
    checks: int
    event_identity_violations: int
    approximation_violations: int
    parity_violations: int
    odd_tau_violations: int

    @property
    def clean(self) -> bool:
        return (
            self.event_identity_violations == 0
            and self.approximation_violations == 0
            and self.parity_violations == 0
            and self.odd_tau_violations == 0
        )


def coupling_identity_check(
    config: ExperimentConfig,
    *,
    t_points: int = 25,
    y_per_t: int = 4,
) -> CouplingReport:
    """Joint-mode trajectories checked exhaustively on (t, y) grids.

    The t grid includes exact hitting times T(k) (the adversarial boundary
    case of the left-closed bracket).
    """
    n_goal = config.n
    summ_mu_hint = analytics.summary(config.model, budget=50_000, tol=config.tol).mu
    guard = config.left_guard if config.left_guard is not None else suggested_left_guard(config.model)
    budget = SimulationBudget(
        left_guard=guard,
        max_steps=walk.default_max_steps(n_goal, summ_mu_hint),
        n_max=n_goal,
    )
    env_seed = config.resolved_env_seed()
    window = _experiment_window(config, n_goal + 1, env_seed, guard)
    checks = 0
    event_bad = 0
    approx_bad = 0
    parity_bad = 0
    odd_bad = 0
    for r in range(config.replicas):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.resolved_walk_seed(), spawn_key=(7, r))
        )
        obs = walk.sample_position(
            window, 0, (), rng, budget,
            record_hitting=True, n_goal=n_goal, record_path=True,
        )
        hit = obs.hit
        path = obs.path
        t_end = int(hit[-1]) - 1
        if np.any(obs.tau % 2 != 1):
            odd_bad += 1
        if np.any((path + np.arange(len(path))) % 2 != 0):
            parity_bad += 1
        base = np.unique(np.linspace(0, t_end, t_points, dtype=np.int64))
        boundary = hit[hit <= t_end][:: max(1, len(hit) // 8)]
        t_values = np.unique(np.concatenate([base, boundary]))
        for t in t_values:
            t = int(t)
            n_t = int(np.searchsorted(hit, t, side="right")) - 1
            x_t = int(path[t])
            # approximation bound
            if not (abs(x_t - n_t) <= t - int(hit[n_t]) < int(obs.tau[n_t])):
                approx_bad += 1
            ys = {n_t - 1, n_t, n_t + 1, n_t + y_per_t}
            for y in ys:
                if y < 0 or y + 1 >= len(hit):
                    continue
                checks += 1
                if (n_t <= y) != (int(hit[y + 1]) > t):
                    event_bad += 1
    return CouplingReport(
        trajectories=config.replicas,
        checks=checks,
        event_identity_violations=event_bad,
        approximation_violations=approx_bad,
        parity_violations=parity_bad,
        odd_tau_violations=odd_bad,
    )
