from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, field_validator
from scipy import integrate, optimize, stats

from whoeffding.errors import ArgumentError, CapExceededError, UnsupportedError
from whoeffding.services.markov_core import Functional, ModelSpec, State, TimeDomain
from whoeffding.services.markov_models import FlowModel
from whoeffding.services.series import dyadic_sum, integrate_to_infinity
from whoeffding.services.subordination import (
    DiscreteIID,
    PoissonProcess,
    SubordinatedModel,
    integrated_rate_series,
    renewal_weights,
)
from whoeffding.services.wasserstein import w1
from whoeffding.utils import format_real

logger = logging.getLogger(__name__)

DEFAULT_TRUNC = 60
FLOAT_ALLOWANCE = 1e-9
ENUMERATION_CAP = 1 << 14


# -- the bound -----------------------------------------------------------------------------


class Regime(str, Enum):
    INFORMATIVE = "informative"
    VACUOUS = "vacuous"
    DEGENERATE = "degenerate"


class BoundInput(BaseModel):
    lip: float
    sup_f: float
    gamma: float
    eps: float
    t: float
    domain: TimeDomain = TimeDomain.DISCRETE
    gamma_source: str = "explicit"

    @field_validator("lip", "sup_f", "gamma")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if not math.isfinite(v) or v < 0:
            raise ValueError("must be finite and >= 0")
        return v

    @field_validator("eps", "t")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not math.isfinite(v) or v <= 0:
            raise ValueError("must be finite and > 0")
        return v

    @property
    def lip_gamma(self) -> float:
        return self.lip * self.gamma

    @property
    def horizon_factor(self) -> float:
        return self.domain.horizon_factor(self.t)


class BoundReport(BaseModel):
    bound: float
    theta_star: float
    regime: Regime
    exponent: Optional[float] = None
    horizon_factor: float
    one_sided: bool = False


def bound_exponent(inp: BoundInput, theta: float) -> float:
    """Exponent before optimizing over theta."""
    lg = inp.lip_gamma
    return -theta * inp.eps * inp.t + 2.0 * theta * lg + 2.0 * theta * theta * (lg + inp.sup_f) * inp.horizon_factor


def hoeffding_bound(inp: BoundInput, one_sided: bool = False) -> BoundReport:
    lg = inp.lip_gamma
    horizon = inp.horizon_factor
    spread = lg + inp.sup_f
    if spread == 0.0:
        return BoundReport(
            bound=0.0, theta_star=0.0, regime=Regime.DEGENERATE, exponent=None, horizon_factor=horizon, one_sided=one_sided
        )
    gap = inp.eps * inp.t - 2.0 * lg
    if gap <= 0.0:
        return BoundReport(
            bound=1.0, theta_star=0.0, regime=Regime.VACUOUS, exponent=0.0, horizon_factor=horizon, one_sided=one_sided
        )
    exponent = -gap * gap / (8.0 * spread * horizon)
    factor = 1.0 if one_sided else 2.0
    return BoundReport(
        bound=min(1.0, factor * math.exp(exponent)),
        theta_star=gap / (4.0 * spread * horizon),
        regime=Regime.INFORMATIVE,
        exponent=exponent,
        horizon_factor=horizon,
        one_sided=one_sided,
    )


def iid_hoeffding_bound(sup_f: float, eps: float, t: float) -> float:
    """Classical two-sided Hoeffding bound for t i.i.d. terms in [-sup_f, sup_f]."""
    if sup_f < 0 or eps <= 0 or t <= 0:
        raise ArgumentError("need sup_f >= 0, eps > 0 and t > 0")
    if sup_f == 0:
        return 0.0
    return min(1.0, 2.0 * math.exp(-eps * eps * t / (2.0 * sup_f * sup_f)))


# -- gamma ---------------------------------------------------------------------------------


@dataclass
class GammaReport:
    model: str
    value: float
    argmax: float
    horizon: float
    tail: float
    strategy: str
    certified: bool
    divergent: bool = False
    lipschitz_correction: float = 0.0
    closed_form: Optional[float] = None
    rate_propagation: Optional[float] = None
    series: List[float] = field(default_factory=list)
    per_state: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "value": self.value,
            "argmax": self.argmax,
            "horizon": self.horizon,
            "tail": self.tail,
            "strategy": self.strategy,
            "certified": self.certified,
            "divergent": self.divergent,
            "lipschitz_correction": self.lipschitz_correction,
            "closed_form": self.closed_form,
            "rate_propagation": self.rate_propagation,
            "series": list(self.series),
            "per_state": dict(self.per_state),
        }


def _grid_gap(model: ModelSpec, grid: Sequence[float]) -> float:
    """Largest distance from a point of the space to its nearest grid point."""
    pts = np.sort(np.asarray(grid, dtype=float))
    if model.space.is_circle:
        gaps = np.append(np.diff(pts), pts[0] + model.space.circumference - pts[-1])
        return float(gaps.max()) / 2.0
    inner = np.diff(pts) / 2.0 if pts.size > 1 else np.zeros(0)
    edges = [pts[0] - model.space.lo, model.space.hi - pts[-1]]
    return float(max([*inner.tolist(), *edges]))


def _shows_no_decay(series: Sequence[float]) -> bool:
    """Term test on a truncated series: the mean term stops shrinking over its last three dyadic blocks."""
    values = np.abs(np.asarray(series, dtype=float))
    means: List[float] = []
    lo, hi = 0, 1
    while lo < values.size:
        means.append(float(values[lo:hi].mean()))
        lo, hi = hi, 2 * hi
    if len(means) < 4:
        return False
    return means[-1] >= means[-2] >= means[-3]


def _per_state_series(model: ModelSpec, x: float, horizon: int) -> List[float]:
    return [float(model.w_to_invariant(x, s)) for s in range(horizon + 1)]


def _gamma_renewal(
    model: SubordinatedModel, grid: Sequence[float], horizon: Optional[int], analytic_tail: Optional[float]
) -> GammaReport:
    base = model.base
    h = int(horizon) if horizon is not None else int(base.gamma_horizon)
    weights = renewal_weights(model.spec, h)
    weight_sup = 1.0 / model.spec.lam if isinstance(model.spec, PoissonProcess) else 1.0

    best: Tuple[float, float, List[float], float] = (-math.inf, 0.0, [], 0.0)
    per_state: Dict[str, float] = {}
    certified = True
    for x in grid:
        series = _per_state_series(base, x, h)
        partial = float(np.dot(weights, series))
        if analytic_tail is not None:
            tail = float(analytic_tail)
        else:
            base_tail = base.discrete_w_tail(x, h + 1)
            if base_tail is None:
                certified = False
                tail = 0.0
            else:
                tail = weight_sup * float(base_tail)
        value = partial + tail
        per_state[format_real(x)] = value
        if value > best[0]:
            best = (value, float(x), [float(w * s) for w, s in zip(weights, series)], tail)

    correction = 0.0
    if base.gamma_strategy == "lipschitz-grid" and base.contraction_factor is not None:
        correction = weight_sup * _grid_gap(base, grid) / (1.0 - base.contraction_factor)
    elif base.gamma_strategy == "monotone-abs":
        certified = certified and max(abs(float(x)) for x in grid) >= base.space.hi
    elif base.gamma_strategy == "rotation-invariant":
        certified = False

    rate = base.rate_function()
    propagation: Optional[float] = None
    if rate is not None:
        result = integrated_rate_series(model.spec, rate, model.time_domain)
        if result.converged:
            c_sup = max(float(base.rate_constant(x) or 0.0) for x in grid)
            propagation = c_sup * result.value

    value, argmax, series, tail = best
    report = GammaReport(
        model=model.model_id,
        value=value + correction,
        argmax=argmax,
        horizon=float(h),
        tail=tail,
        strategy="renewal/" + base.gamma_strategy,
        certified=certified,
        divergent=_shows_no_decay(series) if not certified else False,
        lipschitz_correction=correction,
        rate_propagation=propagation,
        series=series,
        per_state=per_state,
    )
    return report


def gamma_bound(
    model: ModelSpec,
    x_grid: Optional[Sequence[Union[State, float]]] = None,
    horizon: Optional[float] = None,
    analytic_tail: Optional[float] = None,
) -> GammaReport:
    """Upper bound on sup_x of the time-integrated distance to the invariant law."""
    raw = list(x_grid) if x_grid is not None else model.gamma_grid()
    if not raw:
        raise ArgumentError("x_grid must not be empty")
    grid = [model.state(x).value for x in raw]
    if horizon is not None and horizon < 0:
        raise ArgumentError("horizon must be >= 0")

    if isinstance(model, SubordinatedModel):
        return _gamma_renewal(model, grid, None if horizon is None else int(horizon), analytic_tail)

    h = float(horizon) if horizon is not None else float(model.gamma_horizon)
    best: Tuple[float, float, List[float], float] = (-math.inf, 0.0, [], 0.0)
    per_state: Dict[str, float] = {}
    certified = True
    for x in grid:
        if model.time_domain is TimeDomain.DISCRETE:
            n = int(h)
            if model.exact_cap is not None and n > model.exact_cap:
                raise CapExceededError(f"horizon {n} exceeds the exact-law cap {model.exact_cap}")
            series = _per_state_series(model, x, n)
            partial = float(sum(series))
            tail_start = n + 1
        else:
            partial, _ = integrate.quad(lambda s: model.w_to_invariant(x, s), 0.0, h, epsabs=1e-12, epsrel=1e-12, limit=400)
            series = [float(model.w_to_invariant(x, s)) for s in range(int(h) + 1)]
            tail_start = h
        if analytic_tail is not None:
            tail = float(analytic_tail)
        else:
            model_tail = model.w_tail(x, tail_start)
            if model_tail is None:
                certified = False
                tail = 0.0
            else:
                tail = float(model_tail)
        value = float(partial) + tail
        per_state[format_real(x)] = value
        if value > best[0]:
            best = (value, float(x), series, tail)

    correction = 0.0
    if model.gamma_strategy == "lipschitz-grid" and model.contraction_factor is not None:
        correction = _grid_gap(model, grid) / (1.0 - model.contraction_factor)
    elif model.gamma_strategy == "monotone-abs":
        certified = certified and max(abs(x) for x in grid) >= model.space.hi
    elif model.gamma_strategy == "rotation-invariant":
        certified = False

    value, argmax, series, tail = best
    closed = model.gamma_closed_form() if isinstance(model, FlowModel) else None
    divergent = _shows_no_decay(series) if not certified else False
    if not certified:
        logger.warning("gamma for %s is an uncertified truncated sum (%s)", model.model_id, format_real(value))
    return GammaReport(
        model=model.model_id,
        value=value + correction,
        argmax=argmax,
        horizon=h,
        tail=tail,
        strategy=model.gamma_strategy,
        certified=certified,
        divergent=divergent,
        lipschitz_correction=correction,
        closed_form=closed,
        series=series,
        per_state=per_state,
    )


# -- Poisson equation ----------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonSolution:
    value: float
    tail_bound: float
    horizon: float


def _has_closed_form(model: ModelSpec, f: Functional, x: float) -> bool:
    return model.closed_form_expectation(f, x, 0) is not None


def _effective_trunc(model: ModelSpec, f: Functional, x: float, trunc: float) -> float:
    if model.time_domain is TimeDomain.CONTINUOUS or model.exact_cap is None or _has_closed_form(model, f, x):
        return float(trunc)
    # exact laws stop at the cap, the rest goes into the tail bound
    return float(min(int(trunc), model.exact_cap + 1))


def integrated_centered(model: ModelSpec, f: Functional, x: Union[State, float], t: float) -> float:
    """Integral over [0, t) of E_x f(X_s) - pi(f)."""
    xv = model.state(x).value
    t = model.check_time(t)
    pi_f = model.invariant.mean(f)
    if t == 0:
        return 0.0
    if isinstance(model, SubordinatedModel):
        weights = model.occupation_weights(t)
        levels = np.flatnonzero(weights > 0)
        total = 0.0
        for n in levels:
            total += float(weights[n]) * (model.base.expected_functional(f, xv, int(n)) - pi_f)
        return total
    if model.time_domain is TimeDomain.DISCRETE:
        return float(sum(model.expected_functional(f, xv, s) - pi_f for s in range(int(t))))
    if isinstance(model, FlowModel):
        return model.path_integral(f, xv, t) - pi_f * t
    value, _ = integrate.quad(lambda s: model.expected_functional(f, xv, s) - pi_f, 0.0, t, epsabs=1e-12, limit=200)
    return float(value)


def _w_tail_bound(model: ModelSpec, x: float, start: float) -> float:
    if isinstance(model, SubordinatedModel):
        base = model.base
        if isinstance(model.spec, DiscreteIID):
            # S_k >= k, so every level visited after time `start` is >= start
            tail = base.discrete_w_tail(x, int(start))
            return math.inf if tail is None else float(tail)
        lam = model.spec.lam
        cut = int(min(base.exact_cap or 60, 16))
        head = sum(
            float(base.w_to_invariant(x, n)) * float(stats.poisson.cdf(n, lam * start)) for n in range(cut)
        )
        tail = base.discrete_w_tail(x, cut)
        return math.inf if tail is None else (head + float(tail)) / lam
    tail = model.w_tail(x, start)
    return math.inf if tail is None else float(tail)


def poisson_solution(
    model: ModelSpec, f: Functional, x: Union[State, float], trunc: Optional[float] = None
) -> PoissonSolution:
    """Truncated solution of the Poisson equation, with a bound on the discarded tail."""
    xv = model.state(x).value
    if f.lip == 0.0:
        return PoissonSolution(0.0, 0.0, 0.0)
    requested = float(trunc) if trunc is not None else float(DEFAULT_TRUNC)
    if requested <= 0:
        raise ArgumentError("trunc must be > 0")
    horizon = _effective_trunc(model, f, xv, requested)
    if horizon < requested:
        logger.debug("poisson solution for %s truncated at the exact-law cap %s", model.model_id, format_real(horizon))
    value = integrated_centered(model, f, xv, horizon)
    tail_bound = f.lip * _w_tail_bound(model, xv, horizon)
    functional_tail = model.functional_tail(f, xv, horizon)
    if functional_tail is not None:
        tail_bound = min(tail_bound, float(functional_tail))
    return PoissonSolution(value=value, tail_bound=tail_bound, horizon=horizon)


def poisson_residual(
    model: ModelSpec, f: Functional, x: Union[State, float], t: float, trunc: Optional[float] = None
) -> float:
    """|E_x f_hat(X_t) - f_hat(x) + integral over [0, t) of E_x f(X_s) - pi(f)|."""
    xv = model.state(x).value
    t = model.check_time(t)
    solution = poisson_solution(model, f, xv, trunc)
    law = model.exact_law(xv, t)
    moved = sum(
        float(w) * poisson_solution(model, f, float(a), solution.horizon).value for a, w in zip(law.atoms, law.weights)
    )
    return abs(moved - solution.value + integrated_centered(model, f, xv, t))


def residual_tolerance(
    model: ModelSpec, f: Functional, x: Union[State, float], t: float, trunc: Optional[float] = None
) -> float:
    """lip times the Wasserstein mass of the window [trunc, trunc + t) plus a float allowance."""
    xv = model.state(x).value
    horizon = _effective_trunc(model, f, xv, float(trunc) if trunc is not None else float(DEFAULT_TRUNC))
    if f.lip == 0.0:
        return FLOAT_ALLOWANCE
    window = math.inf
    discrete = model.time_domain is TimeDomain.DISCRETE and not isinstance(model, SubordinatedModel)
    if discrete and (model.exact_cap is None or horizon + t - 1 <= model.exact_cap):
        window = sum(float(model.w_to_invariant(xv, s)) for s in range(int(horizon), int(horizon + t)))
    bound = f.lip * min(window, _w_tail_bound(model, xv, horizon))
    functional_tail = model.functional_tail(f, xv, horizon)
    if functional_tail is not None:
        bound = min(bound, float(functional_tail))
    if not math.isfinite(bound):
        raise UnsupportedError(f"no finite truncation tolerance for {f.name} on {model.model_id}")
    return bound + FLOAT_ALLOWANCE


def _enumerate_states(model: ModelSpec, x: float, steps: int) -> List[float]:
    frontier: Dict[float, float] = {x: 1.0}
    paths = 1
    for _ in range(steps):
        nxt: Dict[float, float] = {}
        branching = 0
        for y, p in frontier.items():
            law = model.exact_law(y, 1)
            branching = max(branching, len(law))
            for a, w in zip(law.atoms, law.weights):
                key = float(a)
                nxt[key] = nxt.get(key, 0.0) + p * float(w)
        paths *= max(branching, 1)
        if paths > ENUMERATION_CAP:
            raise UnsupportedError(f"path enumeration exceeds {ENUMERATION_CAP} paths")
        frontier = nxt
    return list(frontier)


def martingale_residual(
    model: ModelSpec,
    f: Functional,
    x: Union[State, float],
    s: int,
    t: int,
    trunc: Optional[float] = None,
) -> float:
    """max over time-s prefixes of |E[M_t | F_s] - M_s| by exhaustive path enumeration."""
    if model.time_domain is not TimeDomain.DISCRETE:
        raise UnsupportedError("martingale enumeration needs a discrete-time model")
    if not (0 <= int(s) < int(t)):
        raise ArgumentError("need 0 <= s < t")
    xv = model.state(x).value
    pi_f = model.invariant.mean(f)
    horizon = _effective_trunc(model, f, xv, float(trunc) if trunc is not None else float(DEFAULT_TRUNC))

    branching = len(model.exact_law(xv, 1))
    if branching ** int(t) > ENUMERATION_CAP:
        raise UnsupportedError(f"path enumeration exceeds {ENUMERATION_CAP} paths")

    f_hat: Dict[float, float] = {}

    def solve(y: float) -> float:
        if y not in f_hat:
            f_hat[y] = poisson_solution(model, f, y, horizon).value
        return f_hat[y]

    def forward(y: float, steps: int) -> float:
        # E_y[f_hat(X_steps) + sum_{k < steps} (f(X_k) - pi(f))]
        if steps == 0:
            return solve(y)
        law = model.exact_law(y, 1)
        return float(f(y)) - pi_f + sum(float(w) * forward(float(a), steps - 1) for a, w in zip(law.atoms, law.weights))

    worst = 0.0
    for y in _enumerate_states(model, xv, int(s)):
        # E[M_t | F_s] - M_s only depends on the prefix through X_s
        worst = max(worst, abs(forward(y, int(t) - int(s)) - solve(y)))
    return worst


def martingale_tolerance(
    model: ModelSpec, f: Functional, x: Union[State, float], s: int, t: int, trunc: Optional[float] = None
) -> float:
    xv = model.state(x).value
    return max(residual_tolerance(model, f, y, int(t) - int(s), trunc) for y in _enumerate_states(model, xv, int(s)))


# -- conditions (i)-(iv) -------------------------------------------------------------------


@dataclass(frozen=True)
class DriftSpec:
    V: Callable[[Any], Any]
    phi: Callable[[Any], Any]
    kappa: float
    Phi: Optional[Callable[[float], float]] = None
    Phi_inverse: Optional[Callable[[float], float]] = None
    name: str = "custom"
    # log of phi(Phi^{-1}(t)), for levels past the float range
    log_level: Optional[Callable[[float], float]] = None

    def __post_init__(self) -> None:
        grid = np.linspace(0.0, 64.0, 513)
        values = np.asarray(self.phi(grid), dtype=float)
        if abs(values[0]) > 1e-12:
            raise ArgumentError("drift phi must vanish at 0")
        first = np.diff(values)
        if np.any(first <= 0):
            raise ArgumentError("drift phi must be increasing")
        if np.any(np.diff(first) > 1e-9 * max(1.0, float(np.abs(first).max()))):
            raise ArgumentError("drift phi must be concave")

    def big_phi(self, u: float) -> float:
        """Integral of 1/phi over [1, u]."""
        if self.Phi is not None:
            return float(self.Phi(u))
        if u <= 0:
            raise ArgumentError("Phi is defined for u > 0")
        upper = math.log(u)
        value, _ = integrate.quad(lambda w: math.exp(w) / float(self.phi(math.exp(w))), 0.0, upper, epsabs=1e-13, epsrel=1e-13, limit=200)
        return float(value)

    def big_phi_inverse(self, t: float) -> float:
        if self.Phi_inverse is not None:
            return float(self.Phi_inverse(t))
        if t <= 0:
            return 1.0
        hi = 1.0
        while self.big_phi(math.exp(hi)) < t:
            hi *= 2.0
            if hi > 700.0:
                return math.inf
        w = optimize.bisect(lambda v: self.big_phi(math.exp(v)) - t, 0.0, hi, xtol=1e-12, maxiter=200)
        return math.exp(w)


def _unit(x: Any) -> Any:
    return np.ones_like(np.asarray(x, dtype=float))


def _exp_or_inf(t: float) -> float:
    return math.exp(t) if t < 700.0 else math.inf


def named_drift(kind: str, kappa: float = 1.0) -> DriftSpec:
    """V = 1 with phi(v) = v (`linear`) or phi(v) = sqrt(v) (`sqrt`), closed-form Phi included."""
    key = (kind or "").strip().lower()
    if key == "linear":
        return DriftSpec(V=_unit, phi=lambda v: v, kappa=kappa, Phi=math.log, Phi_inverse=_exp_or_inf, name="linear", log_level=float)
    if key == "sqrt":
        return DriftSpec(
            V=_unit,
            phi=np.sqrt,
            kappa=kappa,
            Phi=lambda u: 2.0 * (math.sqrt(u) - 1.0),
            Phi_inverse=lambda t: (1.0 + t / 2.0) ** 2,
            name="sqrt",
            log_level=lambda t: math.log1p(t / 2.0),
        )
    raise ArgumentError(f"unknown drift {kind!r}; expected linear or sqrt")


@dataclass
class ConditionResult:
    name: str
    passed: bool
    value: float
    detail: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ConditionReport:
    model: str
    results: List[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def get(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "passed": self.passed,
            "conditions": [{"name": r.name, "passed": r.passed, "value": r.value, "detail": r.detail} for r in self.results],
        }


def _probe_grid(model: ModelSpec) -> List[float]:
    if model.space.is_circle:
        c = model.space.circumference
        return [0.0, 0.2, 1.0, c / 4.0, c / 2.0]
    return list(np.linspace(model.space.lo, model.space.hi, 5))


def check_condition_iv(drift: DriftSpec, eps: float, discrete: bool = False) -> ConditionResult:
    if not (0.0 < eps < 1.0):
        raise ArgumentError("epsilon for condition (iv) must lie in (0, 1)")

    def integrand(t: float) -> float:
        if drift.log_level is not None:
            return math.exp((eps - 1.0) * drift.log_level(t))
        u = drift.big_phi_inverse(t)
        level = float(drift.phi(u)) if math.isfinite(u) else math.inf
        return 0.0 if level == math.inf else level ** (eps - 1.0)

    integral = integrate_to_infinity(integrand, start=1.0)
    detail: Dict[str, Any] = {"eps": eps, "integral": integral.value, "divergent": integral.divergent}
    passed = integral.converged
    if discrete:
        counting = dyadic_sum(lambda lo, hi: sum(integrand(float(k)) for k in range(int(lo), int(hi))), start=1.0, max_blocks=24)
        detail.update({"counting_sum": counting.value, "counting_divergent": counting.divergent})
    return ConditionResult(name="iv", passed=passed, value=integral.value, detail=detail)


def check_conditions(
    model: ModelSpec,
    drift: DriftSpec,
    rho_probe: float = 0.5,
    epsilon_iv: float = 0.5,
    x_grid: Optional[Sequence[float]] = None,
    t_max: int = 6,
    t_min: int = 1,
) -> ConditionReport:
    if not (0.0 < rho_probe < 1.0):
        raise ArgumentError("rho_probe must lie in (0, 1)")
    grid = [model.state(x).value for x in (x_grid if x_grid is not None else _probe_grid(model))]
    times = list(range(1, int(t_max) + 1))
    results: List[ConditionResult] = []

    diameter = model.space.diameter
    results.append(ConditionResult(name="i", passed=math.isfinite(diameter), value=diameter))

    ratios: Dict[str, float] = {}
    skipped = False
    for t in times:
        worst = 0.0
        try:
            laws = {x: model.exact_law(x, t) for x in grid}
        except CapExceededError:
            skipped = True
            break
        for i, x in enumerate(grid):
            for y in grid[i + 1 :]:
                d = float(model.space.distance(x, y))
                if d > 0:
                    worst = max(worst, w1(laws[x], laws[y]) / d)
        ratios[str(t)] = worst
    probed = [r for t, r in ratios.items() if int(t) >= t_min]
    contraction_ok = bool(probed) and all(r <= 1.0 - rho_probe + 1e-12 for r in probed)
    results.append(
        ConditionResult(
            name="ii",
            passed=contraction_ok,
            value=max(probed) if probed else math.nan,
            detail={"max_ratio_by_t": ratios, "rho_probe": rho_probe, "skipped": skipped},
        )
    )

    violation = -math.inf
    for x in grid:
        v_x = float(np.asarray(drift.V(x), dtype=float))
        for t in times:
            try:
                lhs = model.exact_law(x, t).expect(drift.V) - v_x
            except CapExceededError:
                skipped = True
                continue
            if model.time_domain is TimeDomain.DISCRETE:
                drag = sum(model.exact_law(x, s).expect(lambda z: drift.phi(drift.V(z))) for s in range(t))
            else:
                drag, _ = integrate.quad(
                    lambda s: model.exact_law(x, s).expect(lambda z: drift.phi(drift.V(z))), 0.0, t, epsabs=1e-12, limit=200
                )
            violation = max(violation, lhs - (drift.kappa * t - float(drag)))
    results.append(
        ConditionResult(
            name="iii",
            passed=violation <= 1e-12,
            value=violation,
            detail={"kappa": drift.kappa, "drift": drift.name},
        )
    )

    results.append(check_condition_iv(drift, epsilon_iv, discrete=model.time_domain is TimeDomain.DISCRETE))
    return ConditionReport(model=model.model_id, results=results)
