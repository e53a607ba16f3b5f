"""Environment laws and quenched realizations.

An environment is a two-sided sequence ``p_k`` of right-jump probabilities.
Four law families are supported: a degenerate constant law, finitely
supported i.i.d. laws, parametric i.i.d. laws with mandatory support bounds
inside (0, 1), and quasi-periodic laws driven by a circle rotation.

Realization is a pure function of ``(model, seed, k)``: the value at a site
never depends on the window bounds, so windows can be extended in either
direction without disturbing already-realized sites.  For i.i.d. laws this
is achieved with a counter-based hash of ``(seed, k)``; quasi-periodic laws
are deterministic by construction.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import betainc, betaincinv

from .errors import (
    ModelError,
    MomentDivergenceError,
    QuadratureError,
)

__all__ = [
    "Constant",
    "IidDiscrete",
    "IidParametric",
    "QuasiPeriodic",
    "EnvironmentModel",
    "EnvironmentWindow",
    "Estimate",
    "Regime",
    "Classification",
    "ConditionReport",
    "realize",
    "odds_ratio",
    "mean_log_odds",
    "classify",
    "odds_growth_rate",
    "finite_window_growth_rate",
    "check_conditions",
    "model_to_dict",
    "model_from_dict",
    "model_id",
    "suggested_left_guard",
    "suggested_burn_in",
]

_PHASE_GRID = 8192  # density of the validation grid for quasi-periodic p(.)


# ---------------------------------------------------------------------------
# model declarations


@dataclass(frozen=True)
class Constant:
    """Every site has the same right-jump probability ``p``."""

    p: float

    def __post_init__(self) -> None:
        _check_prob("model.p", self.p)


@dataclass(frozen=True)
class IidDiscrete:
    """I.i.d. sites drawn from finitely many atoms ``(p_i, w_i)``."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        atoms = tuple((float(p), float(w)) for p, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ModelError("model.atoms: at least one atom is required")
        for i, (p, w) in enumerate(atoms):
            _check_prob(f"model.atoms[{i}].p", p)
            if not w > 0.0:
                raise ModelError(f"model.atoms[{i}].w: weight must be positive, got {w}")
        total = math.fsum(w for _, w in atoms)
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"model.atoms: weights must sum to 1 within 1e-12, got {total!r}")


@dataclass(frozen=True)
class IidParametric:
    """I.i.d. sites from a named distribution truncated to ``[p_lo, p_hi]``.

    Supported families: ``uniform`` (no parameters) and ``beta`` (shape
    parameters ``a``, ``b``).  The support bounds are mandatory and must sit
    strictly inside (0, 1) so that all negative moments of ``p`` and ``1-p``
    are finite by construction.
    """

    family: str
    p_lo: float
    p_hi: float
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.family not in ("uniform", "beta"):
            raise ModelError(f"model.family: unknown family {self.family!r}")
        _check_prob("model.p_lo", self.p_lo)
        _check_prob("model.p_hi", self.p_hi)
        if not self.p_lo < self.p_hi:
            raise ModelError("model.p_lo: support bounds must satisfy p_lo < p_hi")
        params = tuple(sorted((str(k), float(v)) for k, v in self.params))
        object.__setattr__(self, "params", params)
        if self.family == "beta":
            d = dict(params)
            if "a" not in d or "b" not in d:
                raise ModelError("model.params: beta family needs shape parameters a and b")
            if d["a"] <= 0 or d["b"] <= 0:
                raise ModelError("model.params: beta shapes must be positive")

    def param(self, name: str) -> float:
        return dict(self.params)[name]


@dataclass(frozen=True)
class QuasiPeriodic:
    """Sites read off an irrational rotation: ``p_k = p((omega0 + k*alpha) mod 1)``.

    ``coeffs = (c0, c1, ...)`` defines the cosine series
    ``p(w) = c0 + sum_m c_m cos(2 pi m w)``.  Rational-looking ``alpha``
    values are accepted (tests use them deliberately) but draw a warning,
    since orbit averages then stop converging to circle averages.
    """

    alpha: float
    omega0: float
    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not 0.0 < self.alpha < 1.0:
            raise ModelError(f"model.alpha: rotation number must lie in (0,1), got {self.alpha}")
        if not 0.0 <= self.omega0 < 1.0:
            raise ModelError(f"model.omega0: initial phase must lie in [0,1), got {self.omega0}")
        if not self.coeffs:
            raise ModelError("model.coeffs: at least the constant coefficient is required")
        grid = np.arange(_PHASE_GRID) / _PHASE_GRID
        values = self.p_of_phase(grid)
        if values.min() <= 0.0 or values.max() >= 1.0:
            raise ModelError(
                "model.coeffs: p(.) must stay strictly inside (0,1); "
                f"grid range is [{values.min()!r}, {values.max()!r}]"
            )
        q = _small_denominator(self.alpha)
        if q is not None:
            warnings.warn(
                f"alpha={self.alpha} is within 1e-9 of a rational with denominator {q}; "
                "orbit averages will not converge uniformly to circle averages",
                stacklevel=2,
            )

    def p_of_phase(self, omega: np.ndarray | float) -> np.ndarray:
        omega = np.asarray(omega, dtype=np.float64)
        out = np.full_like(omega, self.coeffs[0])
        for m, c in enumerate(self.coeffs[1:], start=1):
            out = out + c * np.cos(2.0 * np.pi * m * omega)
        return out


EnvironmentModel = Union[Constant, IidDiscrete, IidParametric, QuasiPeriodic]


def _check_prob(field: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and 0.0 < float(value) < 1.0):
        raise ModelError(f"{field}: probability must lie strictly in (0,1), got {value!r}")


def _small_denominator(alpha: float, max_q: int = 64, tol: float = 1e-9) -> int | None:
    """Smallest denominator q <= max_q with |alpha - h/q| < tol, else None."""
    for q in range(1, max_q + 1):
        h = round(alpha * q)
        if abs(alpha - h / q) < tol:
            return q
    return None


# ---------------------------------------------------------------------------
# serialization (tagged JSON objects used by the CLI config format)


def model_to_dict(model: EnvironmentModel) -> dict:
    if isinstance(model, Constant):
        return {"type": "constant", "p": model.p}
    if isinstance(model, IidDiscrete):
        return {"type": "iid_discrete", "atoms": [[p, w] for p, w in model.atoms]}
    if isinstance(model, IidParametric):
        return {
            "type": "iid_parametric",
            "family": model.family,
            "p_lo": model.p_lo,
            "p_hi": model.p_hi,
            "params": dict(model.params),
        }
    if isinstance(model, QuasiPeriodic):
        return {
            "type": "quasi_periodic",
            "alpha": model.alpha,
            "omega0": model.omega0,
            "coeffs": list(model.coeffs),
        }
    raise ModelError(f"model: unsupported model object {model!r}")


def model_from_dict(data: dict) -> EnvironmentModel:
    if not isinstance(data, dict) or "type" not in data:
        raise ModelError("model: expected a tagged object with a 'type' field")
    tag = data["type"]
    fields = {k: v for k, v in data.items() if k != "type"}
    try:
        if tag == "constant":
            return Constant(**fields)
        if tag == "iid_discrete":
            return IidDiscrete(atoms=tuple(tuple(a) for a in fields.pop("atoms")))
        if tag == "iid_parametric":
            params = tuple(fields.pop("params", {}).items())
            return IidParametric(params=params, **fields)
        if tag == "quasi_periodic":
            return QuasiPeriodic(coeffs=tuple(fields.pop("coeffs")), **fields)
    except TypeError as exc:
        raise ModelError(f"model: bad fields for type {tag!r}: {exc}") from exc
    raise ModelError(f"model.type: unknown model type {tag!r}")


def model_id(model: EnvironmentModel) -> str:
    blob = json.dumps(model_to_dict(model), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------------------
# counter-based per-site randomness

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2^64 by design
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


def _site_uniforms(seed: int, lo: int, hi: int) -> np.ndarray:
    """One uniform in [0,1) per site k in [lo, hi], a pure hash of (seed, k)."""
    k = np.arange(lo, hi + 1, dtype=np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        state = _mix64(np.asarray(seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64) + _GOLDEN) + k * _GOLDEN
        return (_mix64(state) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _sample_parametric(model: IidParametric, u: np.ndarray) -> np.ndarray:
    if model.family == "uniform":
        return model.p_lo + u * (model.p_hi - model.p_lo)
    a, b = model.param("a"), model.param("b")
    f_lo = betainc(a, b, model.p_lo)
    f_hi = betainc(a, b, model.p_hi)
    return betaincinv(a, b, f_lo + u * (f_hi - f_lo))


# ---------------------------------------------------------------------------
# quenched windows


@dataclass(frozen=True)
class EnvironmentWindow:
    """A realized environment ``p_k`` on the integer interval [lo, hi]."""

    lo: int
    hi: int
    p: np.ndarray
    model_id: str
    seed: int

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ModelError(f"window: lo={self.lo} must not exceed hi={self.hi}")
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (self.hi - self.lo + 1,):
            raise ModelError("window: p array length must equal hi - lo + 1")
        if p.min() <= 0.0 or p.max() >= 1.0:
            raise ModelError("window: every p_k must lie strictly in (0,1)")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __contains__(self, k: int) -> bool:
        return self.lo <= k <= self.hi

    def site(self, k: int) -> float:
        if k not in self:
            raise ModelError(f"window: index {k} outside [{self.lo}, {self.hi}]")
        return float(self.p[k - self.lo])

    def odds(self, k: int) -> float:
        pk = self.site(k)
        return (1.0 - pk) / pk

    def odds_array(self) -> np.ndarray:
        return (1.0 - self.p) / self.p

    @classmethod
    def from_values(cls, p, lo: int = 0, seed: int = 0, tag: str = "explicit") -> "EnvironmentWindow":
        p = np.asarray(p, dtype=np.float64)
        return cls(lo=lo, hi=lo + len(p) - 1, p=p, model_id=tag, seed=seed)


def realize(model: EnvironmentModel, lo: int, hi: int, seed: int) -> EnvironmentWindow:
    """Realize the quenched environment on [lo, hi] from a 64-bit seed.

    Site values depend only on (model, seed, k): overlapping windows agree
    exactly on their intersection.
    """
    if lo > hi:
        raise ModelError(f"realize: lo={lo} must not exceed hi={hi}")
    if isinstance(model, Constant):
        p = np.full(hi - lo + 1, model.p, dtype=np.float64)
    elif isinstance(model, IidDiscrete):
        u = _site_uniforms(seed, lo, hi)
        values = np.array([a for a, _ in model.atoms])
        weights = np.array([w for _, w in model.atoms])
        cum = np.cumsum(weights / weights.sum())
        p = values[np.searchsorted(cum, u, side="right")]
    elif isinstance(model, IidParametric):
        p = _sample_parametric(model, _site_uniforms(seed, lo, hi))
    elif isinstance(model, QuasiPeriodic):
        k = np.arange(lo, hi + 1, dtype=np.float64)
        p = model.p_of_phase(np.mod(model.omega0 + k * model.alpha, 1.0))
    else:
        raise ModelError(f"realize: unsupported model {model!r}")
    return EnvironmentWindow(lo=lo, hi=hi, p=p, model_id=model_id(model), seed=seed)


def odds_ratio(window: EnvironmentWindow, k: int) -> float:
    """Odds against a right jump at site k: (1 - p_k) / p_k."""
    return window.odds(k)


# ---------------------------------------------------------------------------
# law-level functionals


@dataclass(frozen=True)
class Estimate:
    """A numeric value with a standard error and the method that produced it."""

    value: float
    se: float
    method: str

    def is_exact(self) -> bool:
        return self.se == 0.0


def _law_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(9,)))


def _sample_p_law(model: IidParametric, n: int, seed: int) -> np.ndarray:
    return _sample_parametric(model, _law_rng(seed).random(n))


def _qp_lambda(model: QuasiPeriodic) -> float:
    """Circle average of ln A via midpoint quadrature with grid doubling.

    The integrand is smooth and periodic, so the midpoint rule converges
    geometrically; failure to converge by 2^20 points is reported.
    """
    prev = None
    n = 4096
    while n <= 1 << 20:
        grid = (np.arange(n) + 0.5) / n
        p = model.p_of_phase(grid)
        cur = float(np.mean(np.log((1.0 - p) / p)))
        if prev is not None and abs(cur - prev) < 1e-12:
            return cur
        prev = cur
        n *= 2
    raise QuadratureError("circle average of ln A did not stabilize at 2^20 grid points")


def mean_log_odds(model: EnvironmentModel, *, mc_samples: int = 200_000, seed: int = 0) -> Estimate:
    """The drift functional: the expected log odds ratio E ln((1-p)/p).

    Its sign decides the transience direction.  Exact for constant and
    finitely supported laws, quadrature for quasi-periodic laws, Monte Carlo
    with a reported standard error for parametric laws.
    """
    if isinstance(model, Constant):
        return Estimate(math.log((1.0 - model.p) / model.p), 0.0, "closed-form")
    if isinstance(model, IidDiscrete):
        value = math.fsum(w * math.log((1.0 - p) / p) for p, w in model.atoms)
        return Estimate(value, 0.0, "closed-form")
    if isinstance(model, QuasiPeriodic):
        return Estimate(_qp_lambda(model), 0.0, "quadrature")
    p = _sample_p_law(model, mc_samples, seed)
    values = np.log((1.0 - p) / p)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values))), "monte-carlo")


class Regime(Enum):
    TRANSIENT_RIGHT = "transient_right"
    TRANSIENT_LEFT = "transient_left"
    RECURRENT = "recurrent"


@dataclass(frozen=True)
class Classification:
    regime: Regime
    log_odds_mean: Estimate
    tolerance: float
    within_tolerance: bool


def classify(model: EnvironmentModel, tol: float | None = None, **kwargs) -> Classification:
    """Transience classification by the sign of the mean log odds.

    ``|value| <= tol`` is reported as recurrent with a within-tolerance flag.
    The default tolerance is 1e-9 for exact values and three standard errors
    for estimated ones.
    """
    est = mean_log_odds(model, **kwargs)
    if tol is None:
        tol = 1e-9 if est.is_exact() else 3.0 * est.se
    if abs(est.value) <= tol:
        return Classification(Regime.RECURRENT, est, tol, True)
    regime = Regime.TRANSIENT_RIGHT if est.value < 0 else Regime.TRANSIENT_LEFT
    return Classification(regime, est, tol, False)


def odds_growth_rate(
    model: EnvironmentModel,
    kappa: float,
    *,
    gamma: float | None = None,
    mc_samples: int = 200_000,
    seed: int = 0,
) -> Estimate:
    """Growth rate of the expected kappa-th power of odds-ratio products.

    For i.i.d. laws this is the kappa-th moment of a single odds ratio; for
    uniquely ergodic laws with continuous p it equals exp(kappa * drift).
    The value at kappa=1 controls the speed and at kappa=2 the variance.
    """
    if kappa < 0:
        raise ModelError(f"kappa: must be non-negative, got {kappa}")
    if gamma is not None and kappa > gamma:
        raise ModelError(f"kappa: must not exceed gamma={gamma}, got {kappa}")
    if kappa == 0:
        return Estimate(1.0, 0.0, "closed-form")
    if isinstance(model, Constant):
        return Estimate(((1.0 - model.p) / model.p) ** kappa, 0.0, "closed-form")
    if isinstance(model, IidDiscrete):
        value = math.fsum(w * ((1.0 - p) / p) ** kappa for p, w in model.atoms)
        return Estimate(value, 0.0, "closed-form")
    if isinstance(model, QuasiPeriodic):
        return Estimate(math.exp(kappa * _qp_lambda(model)), 0.0, "quadrature")
    p = _sample_p_law(model, mc_samples, seed)
    terms = ((1.0 - p) / p) ** kappa
    total = float(terms.sum())
    if total > 0 and float(terms.max()) > 0.1 * total:
        raise MomentDivergenceError(
            f"kappa={kappa} moment estimate dominated by a single sample; not stabilizing"
        )
    return Estimate(float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(len(terms))), "monte-carlo")


def finite_window_growth_rate(
    model: EnvironmentModel,
    kappa: float,
    n: int,
    *,
    replicates: int = 256,
    seed: int = 0,
) -> Estimate:
    """Plug-in finite-n estimate (E prod_{j<=n} A_j^kappa)^(1/n).

    This is a labeled finite-n surrogate, not the limit itself: no general
    recipe exists for estimating the limiting growth rate of an arbitrary
    ergodic law from finite data.  Averaging is done in log space for
    stability.
    """
    if kappa < 0:
        raise ModelError(f"kappa: must be non-negative, got {kappa}")
    if n < 1 or replicates < 1:
        raise ModelError("finite_window_growth_rate: n and replicates must be positive")
    log_products = np.empty(replicates)
    for r in range(replicates):
        child = int(
            np.random.SeedSequence(entropy=seed, spawn_key=(r,)).generate_state(1, np.uint64)[0]
        )
        window = realize(model, 1, n, child)
        log_products[r] = kappa * float(np.log(window.odds_array()).sum())
    m = log_products.max()
    log_mean = m + math.log(np.exp(log_products - m).mean())
    return Estimate(math.exp(log_mean / n), float("nan"), f"finite-n estimate (n={n})")


# ---------------------------------------------------------------------------
# condition checks


@dataclass(frozen=True)
class ConditionReport:
    """Verdicts for the moment and ergodicity conditions at an exponent gamma > 2.

    ``estimated`` marks laws where the verdicts rest on Monte Carlo evidence
    rather than exact computation; ``evidence`` carries the numbers either way.
    """

    gamma: float
    holds_c1: bool
    holds_c2: bool
    holds_c3: bool
    holds_c4: bool
    estimated: bool
    r1: float
    r2: float
    log_odds_mean: float
    regime: str
    speed: str
    clt_eligible: bool
    evidence: dict

    def all_hold(self) -> bool:
        return self.holds_c1 and self.holds_c2 and self.holds_c3 and self.holds_c4


def check_conditions(model: EnvironmentModel, gamma: float, *, seed: int = 0) -> ConditionReport:
    """Evaluate the standing conditions: ergodicity, log moments, gamma-th
    negative moments of p and 1-p, and boundedness of the gamma growth rate.

    Verdicts are exact for constant, finitely supported, and quasi-periodic
    laws (their support is bounded away from {0,1} by construction); for
    parametric laws they are marked as estimated with numeric evidence.
    """
    if not gamma > 2:
        raise ModelError(f"gamma: must exceed 2, got {gamma}")
    lam = mean_log_odds(model, seed=seed)
    r1 = odds_growth_rate(model, 1.0, seed=seed)
    r2 = odds_growth_rate(model, 2.0, seed=seed)
    evidence: dict = {"lambda": lam.value, "lambda_se": lam.se}
    estimated = False
    holds_c1 = True
    if isinstance(model, Constant):
        evidence["E_p_neg_gamma"] = model.p**-gamma
        evidence["E_q_neg_gamma"] = (1.0 - model.p) ** -gamma
        evidence["r_gamma"] = ((1.0 - model.p) / model.p) ** gamma
    elif isinstance(model, IidDiscrete):
        evidence["E_p_neg_gamma"] = math.fsum(w * p**-gamma for p, w in model.atoms)
        evidence["E_q_neg_gamma"] = math.fsum(w * (1.0 - p) ** -gamma for p, w in model.atoms)
        evidence["r_gamma"] = odds_growth_rate(model, gamma).value
    elif isinstance(model, QuasiPeriodic):
        q = _small_denominator(model.alpha)
        holds_c1 = q is None
        if q is not None:
            evidence["rational_denominator"] = q
        grid = model.p_of_phase(np.arange(_PHASE_GRID) / _PHASE_GRID)
        evidence["p_min"] = float(grid.min())
        evidence["p_max"] = float(grid.max())
        evidence["r_gamma"] = math.exp(gamma * lam.value)
    else:
        estimated = True
        p = _sample_p_law(model, 200_000, seed)
        evidence["E_p_neg_gamma"] = float(np.mean(p**-gamma))
        evidence["E_q_neg_gamma"] = float(np.mean((1.0 - p) ** -gamma))
        evidence["r_gamma"] = float(np.mean(((1.0 - p) / p) ** gamma))
        evidence["support"] = [model.p_lo, model.p_hi]
    evidence["r1"] = r1.value
    evidence["r2"] = r2.value

    tol = 1e-9 if lam.is_exact() else 3.0 * lam.se
    if abs(lam.value) <= tol:
        regime = Regime.RECURRENT.value
        speed = "zero"
    elif lam.value < 0:
        regime = Regime.TRANSIENT_RIGHT.value
        speed = "positive" if r1.value < 1.0 else "zero"
    else:
        regime = Regime.TRANSIENT_LEFT.value
        speed = "zero"
    clt_eligible = lam.value < -tol and r2.value < 1.0
    return ConditionReport(
        gamma=gamma,
        holds_c1=holds_c1,
        holds_c2=True,
        holds_c3=True,
        holds_c4=math.isfinite(evidence["r_gamma"]),
        estimated=estimated,
        r1=r1.value,
        r2=r2.value,
        log_odds_mean=lam.value,
        regime=regime,
        speed=speed,
        clt_eligible=clt_eligible,
        evidence=evidence,
    )


# ---------------------------------------------------------------------------
# sizing helpers used by simulation and analytics callers


def suggested_left_guard(model: EnvironmentModel) -> int:
    """Default left guard 50 + 10*ceil(1/|drift|) for transient-right walks."""
    lam = mean_log_odds(model).value
    if lam >= 0:
        raise ModelError("suggested_left_guard: model is not transient to the right")
    return 50 + 10 * math.ceil(1.0 / abs(lam))


def suggested_burn_in(model: EnvironmentModel) -> int:
    """Sites to the left of 0 needed to attenuate recursion seeding below ~1e-20."""
    lam = mean_log_odds(model).value
    if lam >= 0:
        raise ModelError("suggested_burn_in: model is not transient to the right")
    return min(100_000, math.ceil(46.0 / abs(lam)) + 64)
