from __future__ import annotations

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from whoeffding.errors import ArgumentError, CapExceededError, UnsupportedError
from whoeffding.services.markov_core import Functional, ModelSpec, PathKind, TimeDomain, Trajectory
from whoeffding.services.series import SeriesResult, closed_series, integrate_to_infinity, require_convergent
from whoeffding.services.wasserstein import DiscreteMeasure
from whoeffding.utils import format_real, make_rng, parse_float

logger = logging.getLogger(__name__)

POISSON_TAIL_MASS = 1e-16
RATE_SERIES_TERMS = 1 << 16
MIXTURE_MAX_STEPS = 16


# -- rate functions ------------------------------------------------------------------------


class RateFunction(ABC):
    @abstractmethod
    def __call__(self, t: Any) -> Any:
        ...

    @abstractmethod
    def tail_integral(self, start: float) -> float:
        """Integral of r over [start, inf)."""

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...


@dataclass(frozen=True)
class ExpDecay(RateFunction):
    c: float

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ArgumentError("decay rate c must be > 0")

    def __call__(self, t: Any) -> Any:
        out = np.exp(-self.c * np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def tail_integral(self, start: float) -> float:
        return math.exp(-self.c * start) / self.c

    def describe(self) -> Dict[str, Any]:
        return {"kind": "exp-decay", "c": self.c}


@dataclass(frozen=True)
class PolyDecay(RateFunction):
    """r(t) = ((alpha - 1) t + 1)^(-1 / (alpha - 1)), the flow's decay for alpha in (1, 2)."""

    alpha: float

    def __post_init__(self) -> None:
        if not (1.0 < self.alpha < 2.0):
            raise ArgumentError("PolyDecay needs alpha in (1, 2)")

    def __call__(self, t: Any) -> Any:
        k = self.alpha - 1.0
        out = (k * np.asarray(t, dtype=float) + 1.0) ** (-1.0 / k)
        return float(out) if np.ndim(out) == 0 else out

    def tail_integral(self, start: float) -> float:
        k = self.alpha - 1.0
        return (k * start + 1.0) ** (-(2.0 - self.alpha) / k) / (2.0 - self.alpha)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "poly-decay", "alpha": self.alpha}


# -- Bernstein functions -------------------------------------------------------------------


class BernsteinFunction(ABC):
    """Laplace exponent psi(u) = b*u + integral of (1 - exp(-u*y)) nu(dy)."""

    @abstractmethod
    def __call__(self, u: Any) -> Any:
        ...

    @abstractmethod
    def inverse(self, v: float) -> float:
        """psi^{-1}(v); inf when v is beyond the range of psi."""

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...


def _scalar(out: Any) -> Any:
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StablePower(BernsteinFunction):
    gamma_exp: float

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma_exp < 1.0):
            raise ArgumentError("stable exponent must lie in (0, 1)")

    def __call__(self, u: Any) -> Any:
        return _scalar(np.asarray(u, dtype=float) ** self.gamma_exp)

    def inverse(self, v: float) -> float:
        return float(v) ** (1.0 / self.gamma_exp)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "stable-power", "gamma": self.gamma_exp}


@dataclass(frozen=True)
class GeometricStable(BernsteinFunction):
    def __call__(self, u: Any) -> Any:
        return _scalar(np.log1p(np.asarray(u, dtype=float)))

    def inverse(self, v: float) -> float:
        return math.expm1(v) if v < 700.0 else math.inf

    def describe(self) -> Dict[str, Any]:
        return {"kind": "geometric-stable"}


@dataclass(frozen=True)
class PoissonExponent(BernsteinFunction):
    lam: float

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ArgumentError("lambda must be finite and > 0")

    def __call__(self, u: Any) -> Any:
        return _scalar(-self.lam * np.expm1(-np.asarray(u, dtype=float)))

    def inverse(self, v: float) -> float:
        if v >= self.lam:
            return math.inf
        return -math.log1p(-float(v) / self.lam)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "poisson", "lambda": self.lam}


@dataclass(frozen=True)
class DriftPlusLevy(BernsteinFunction):
    b: float = 0.0
    jumps: Tuple[float, ...] = ()
    masses: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.b < 0:
            raise ArgumentError("drift b must be >= 0")
        if len(self.jumps) != len(self.masses):
            raise ArgumentError("Levy jumps and masses must have equal length")
        if any(y <= 0 for y in self.jumps) or any(m < 0 for m in self.masses):
            raise ArgumentError("Levy atoms must sit on (0, inf) with non-negative mass")
        if self.b == 0 and not any(m > 0 for m in self.masses):
            raise ArgumentError("a Bernstein function needs drift or Levy mass")

    def __call__(self, u: Any) -> Any:
        u = np.asarray(u, dtype=float)
        out = self.b * u
        for y, m in zip(self.jumps, self.masses):
            out = out - m * np.expm1(-u * y)
        return _scalar(out)

    def inverse(self, v: float) -> float:
        v = float(v)
        if v <= 0:
            return 0.0
        if self.b == 0 and v >= sum(self.masses):
            return math.inf
        hi = 1.0
        while self(hi) < v:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        return float(optimize.brentq(lambda u: self(u) - v, 0.0, hi, xtol=1e-14, rtol=1e-14))

    def describe(self) -> Dict[str, Any]:
        return {"kind": "drift-plus-levy", "b": self.b, "jumps": list(self.jumps), "masses": list(self.masses)}


# -- subordinators -------------------------------------------------------------------------


class SubordinatorSpec(ABC):
    label: str = ""
    integer_valued: bool = True
    time_domain: TimeDomain = TimeDomain.DISCRETE

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...


@dataclass(frozen=True, eq=False)
class DiscreteIID(SubordinatorSpec):
    """S_t = S_{t-1} + xi_t with i.i.d. positive integer steps."""

    steps: np.ndarray
    probs: np.ndarray
    label: str = "iid"

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps)
        probs = np.asarray(self.probs, dtype=float)
        if steps.size == 0 or steps.shape != probs.shape:
            raise ArgumentError("step law needs matching steps and probabilities")
        if np.any(steps != np.round(steps)):
            raise ArgumentError("subordinator steps must be integers")
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ArgumentError("step probabilities must be non-negative and sum to 1")
        if np.any(steps <= 0):
            raise ArgumentError("steps must be positive integers (no mass at 0)")
        object.__setattr__(self, "steps", steps.astype(np.int64))
        object.__setattr__(self, "probs", probs)

    @classmethod
    def unit(cls) -> DiscreteIID:
        return cls(np.array([1]), np.array([1.0]), label="unit")

    @property
    def pmf(self) -> np.ndarray:
        out = np.zeros(int(self.steps.max()) + 1)
        np.add.at(out, self.steps, self.probs)
        return out

    @property
    def mean_step(self) -> float:
        return float(np.dot(self.steps, self.probs))

    def step_laplace(self, c: float) -> float:
        return float(np.dot(self.probs, np.exp(-c * self.steps)))

    def law(self, t: int) -> np.ndarray:
        """pmf of S_t on 0..t*max_step."""
        out = np.array([1.0])
        step = self.pmf
        for _ in range(int(t)):
            out = np.convolve(out, step)
        return out

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.label, "steps": self.steps.tolist(), "probs": self.probs.tolist()}


@dataclass(frozen=True)
class PoissonProcess(SubordinatorSpec):
    lam: float
    label: str = "poisson"
    integer_valued: bool = True
    time_domain: TimeDomain = TimeDomain.CONTINUOUS

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ArgumentError("Poisson rate must be finite and > 0")

    @property
    def exponent(self) -> PoissonExponent:
        return PoissonExponent(self.lam)

    def support_limit(self, t: float) -> int:
        mean = self.lam * t
        n = int(math.ceil(mean + 12.0 * math.sqrt(mean) + 20.0))
        while stats.poisson.sf(n, mean) > POISSON_TAIL_MASS:
            n *= 2
        return n

    def law(self, t: float) -> np.ndarray:
        """pmf of N_t truncated where the remaining mass is below 1e-16 (folded into the last atom)."""
        n = self.support_limit(t)
        pmf = stats.poisson.pmf(np.arange(n + 1), self.lam * t)
        pmf[-1] += max(0.0, 1.0 - float(pmf.sum()))
        return pmf

    def describe(self) -> Dict[str, Any]:
        return {"kind": "poisson", "lambda": self.lam}


@dataclass(frozen=True)
class BernsteinDescribed(SubordinatorSpec):
    psi: BernsteinFunction
    label: str = "bernstein"
    integer_valued: bool = False
    time_domain: TimeDomain = TimeDomain.CONTINUOUS

    def describe(self) -> Dict[str, Any]:
        return {"kind": "bernstein", "psi": self.psi.describe()}


def parse_subordinator(text: str) -> SubordinatorSpec:
    """`poisson:LAMBDA`, `iid:FILE.json`, `iid:k:p,k:p,...` or `unit`."""
    raw = (text or "").strip()
    kind, _, arg = raw.partition(":")
    kind = kind.strip().lower()
    if kind == "unit" and not arg:
        return DiscreteIID.unit()
    if kind == "poisson":
        try:
            return PoissonProcess(parse_float(arg))
        except ValueError as exc:
            raise ArgumentError(f"invalid Poisson rate in {raw!r}") from exc
    if kind == "iid" and arg:
        if arg.strip().lower().endswith(".json"):
            path = Path(arg.strip())
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ArgumentError(f"cannot read step law from {path}: {exc}") from exc
            steps = data.get("steps", data.get("atoms"))
            probs = data.get("probs", data.get("weights"))
            if steps is None or probs is None:
                raise ArgumentError("step law JSON needs 'steps' and 'probs'")
            return DiscreteIID(np.asarray(steps), np.asarray(probs, dtype=float))
        steps: List[int] = []
        probs: List[float] = []
        for part in [p.strip() for p in arg.split(",") if p.strip()]:
            k, sep, p = part.partition(":")
            if not sep:
                raise ArgumentError(f"expected k:p pairs in {raw!r}")
            try:
                steps.append(int(k))
                probs.append(parse_float(p))
            except ValueError as exc:
                raise ArgumentError(f"invalid step or probability in {part!r}") from exc
        return DiscreteIID(np.asarray(steps), np.asarray(probs))
    raise ArgumentError(f"unknown subordinator {raw!r}; expected poisson:LAMBDA, iid:FILE.json or unit")


def _require_samplable(spec: SubordinatorSpec) -> None:
    if isinstance(spec, BernsteinDescribed):
        raise UnsupportedError("Bernstein-described subordinators support exponent analysis only")


def sample_subordinator(spec: SubordinatorSpec, t: float, seed: int) -> int:
    _require_samplable(spec)
    if t < 0:
        raise ArgumentError("t must be >= 0")
    rng = make_rng(seed)
    if isinstance(spec, DiscreteIID):
        if float(t) != int(t):
            raise ArgumentError("an i.i.d. step subordinator runs on integer time")
        if int(t) == 0:
            return 0
        return int(rng.choice(spec.steps, size=int(t), p=spec.probs).sum())
    assert isinstance(spec, PoissonProcess)
    if t == 0:
        return 0
    return int(rng.poisson(spec.lam * t))


def sample_subordinator_path(spec: SubordinatorSpec, times: Sequence[float], seed: int) -> np.ndarray:
    """S at the given increasing times from one seed stream (non-decreasing pathwise)."""
    _require_samplable(spec)
    grid = np.asarray(times, dtype=float)
    if np.any(np.diff(grid) < 0) or (grid.size and grid[0] < 0):
        raise ArgumentError("times must be non-negative and increasing")
    rng = make_rng(seed)
    gaps = np.diff(np.concatenate(([0.0], grid)))
    if isinstance(spec, DiscreteIID):
        if np.any(grid != np.round(grid)):
            raise ArgumentError("an i.i.d. step subordinator runs on integer time")
        counts = gaps.astype(np.int64)
        draws = rng.choice(spec.steps, size=int(counts.sum()), p=spec.probs)
        totals = np.concatenate(([0], np.cumsum(draws)))
        return totals[np.cumsum(counts)]
    assert isinstance(spec, PoissonProcess)
    return np.cumsum(rng.poisson(spec.lam * gaps))


# -- rates ---------------------------------------------------------------------------------


def expected_rate(spec: SubordinatorSpec, r: RateFunction, t: float) -> float:
    """E[r(S_t)]."""
    if t < 0:
        raise ArgumentError("t must be >= 0")
    if isinstance(spec, DiscreteIID):
        if float(t) != int(t):
            raise ArgumentError("an i.i.d. step subordinator runs on integer time")
        if isinstance(r, ExpDecay):
            return spec.step_laplace(r.c) ** int(t)
        law = spec.law(int(t))
        return float(np.dot(law, r(np.arange(law.size))))
    if isinstance(spec, PoissonProcess):
        if isinstance(r, ExpDecay):
            return math.exp(-spec.lam * t * -math.expm1(-r.c))
        law = spec.law(t)
        return float(np.dot(law, r(np.arange(law.size))))
    assert isinstance(spec, BernsteinDescribed)
    if isinstance(r, ExpDecay):
        return math.exp(-t * float(spec.psi(r.c)))
    raise UnsupportedError("only exponential rates can be propagated through a general Bernstein exponent")


def renewal_weights(spec: SubordinatorSpec, smax: int) -> np.ndarray:
    """G(s) for s = 0..smax: expected time the clock spends at level s."""
    if smax < 0:
        raise ArgumentError("smax must be >= 0")
    if isinstance(spec, PoissonProcess):
        return np.full(smax + 1, 1.0 / spec.lam)
    if not isinstance(spec, DiscreteIID):
        raise UnsupportedError("renewal weights need an integer-valued subordinator")
    pmf = spec.pmf
    k = np.arange(1, pmf.size)
    p = pmf[1:]
    u = np.zeros(smax + 1)
    u[0] = 1.0
    for s in range(1, smax + 1):
        live = k <= s
        u[s] = float(np.dot(p[live], u[s - k[live]]))
    return u


def _sum_rate_series(r: RateFunction, weights: np.ndarray, weight_limit: float, weight_sup: float) -> SeriesResult:
    """Sum r(n) * weights[n] and close the series with the integral tail of r."""
    n = weights.size
    partial = float(np.dot(r(np.arange(n)), weights))
    head = float(r(n))
    integral = r.tail_integral(float(n))
    estimate = weight_limit * (integral + 0.5 * head)
    bound = weight_sup * (integral + head)
    return SeriesResult(value=partial + estimate, tail=bound, converged=True, blocks=[partial])


def _exp_rate_closed_form(spec: SubordinatorSpec, r: ExpDecay, domain: TimeDomain, start: float) -> SeriesResult:
    """Geometric sums and exponential integrals of E[exp(-c S_t)] from `start` on."""
    if isinstance(spec, DiscreteIID):
        ratio = spec.step_laplace(r.c)
        if ratio >= 1.0:
            return closed_series(math.inf)
        return closed_series(ratio ** int(start) / (1.0 - ratio))
    if isinstance(spec, PoissonProcess):
        speed = -spec.lam * math.expm1(-r.c)
    else:
        assert isinstance(spec, BernsteinDescribed)
        speed = float(spec.psi(r.c))
    if speed <= 0.0:
        return closed_series(math.inf)
    if domain is TimeDomain.DISCRETE:
        return closed_series(math.exp(-speed * start) / -math.expm1(-speed))
    return closed_series(math.exp(-speed * start) / speed)


def integrated_rate_series(
    spec: SubordinatorSpec,
    r: RateFunction,
    domain: TimeDomain,
    start: float = 0.0,
) -> SeriesResult:
    if start < 0:
        raise ArgumentError("start must be >= 0")
    if domain is TimeDomain.DISCRETE:
        if isinstance(spec, PoissonProcess):
            raise ArgumentError("a Poisson clock runs in continuous time")
        if float(start) != int(start):
            raise ArgumentError("discrete sums start at an integer")
    elif isinstance(spec, DiscreteIID):
        raise ArgumentError("an i.i.d. step subordinator runs on integer time")
    if isinstance(r, ExpDecay):
        return _exp_rate_closed_form(spec, r, domain, start)
    if isinstance(spec, BernsteinDescribed):
        raise UnsupportedError("only exponential rates can be propagated through a general Bernstein exponent")

    if domain is TimeDomain.DISCRETE:
        assert isinstance(spec, DiscreteIID)
        first = int(start)
        # sum_t E r(S_t) = sum_n r(n) * (expected visits to n from time `first` on)
        visits = renewal_weights(spec, RATE_SERIES_TERMS)
        if first:
            visits = np.convolve(spec.law(first), visits)[: RATE_SERIES_TERMS + 1]
        return _sum_rate_series(r, visits, 1.0 / spec.mean_step, 1.0)

    if isinstance(spec, PoissonProcess) and isinstance(r, PolyDecay):
        # integral over [start, inf) of P(N_s = n) ds = P(N_start <= n) / lambda
        levels = np.arange(RATE_SERIES_TERMS + 1)
        weights = stats.poisson.cdf(levels, spec.lam * start) / spec.lam
        return _sum_rate_series(r, weights, 1.0 / spec.lam, 1.0 / spec.lam)
    return integrate_to_infinity(lambda s: expected_rate(spec, r, s), start=float(start), epsabs=1e-12)


def integrated_rate(spec: SubordinatorSpec, r: RateFunction, domain: TimeDomain, start: float = 0.0) -> float:
    result = integrated_rate_series(spec, r, domain, start)
    require_convergent(result, "integrated rate")
    logger.debug("integrated rate %s after %d blocks", format_real(result.value), len(result.blocks))
    return float(result.value)


# -- condition checks ----------------------------------------------------------------------


@dataclass(frozen=True)
class R2Diagnostic:
    passed: bool
    log_ratio_liminf: float
    scale_ratio_liminf: float
    log_margin: float
    scale_margin: float
    saturated: bool
    rho: float
    liminf_estimates: Dict[str, List[float]] = field(default_factory=dict)


def check_R2(psi: BernsteinFunction, rho: float) -> R2Diagnostic:
    """Probe liminf psi(u)/log u > 0 as u -> inf and liminf psi(rho*u)/psi(u) > 1 as u -> 0."""
    if not rho > 1:
        raise ArgumentError("rho must be > 1")
    large = np.geomspace(1e2, 1e300, 61)
    small = np.geomspace(1e-12, 1e-2, 41)
    values_large = np.asarray(psi(large), dtype=float)
    values_small = np.asarray(psi(small), dtype=float)
    values_scaled = np.asarray(psi(rho * small), dtype=float)
    if np.any(values_large <= 0) or np.any(values_small <= 0) or not np.all(np.isfinite(values_large)):
        raise ArgumentError("Bernstein function must be positive and finite on (0, inf)")

    log_ratio = values_large / np.log(large)
    scale_ratio = values_scaled / values_small
    tail = log_ratio[-len(log_ratio) // 4 :]
    head = scale_ratio[: len(scale_ratio) // 4]
    # psi bounded at infinity forces psi(u)/log u -> 0 whatever the finite grid shows
    mid = values_large[len(values_large) // 2]
    saturated = bool(values_large[-1] - mid <= 1e-9 * abs(values_large[-1]))
    log_liminf = 0.0 if saturated else float(tail.min())
    scale_liminf = float(head.min())
    passed = log_liminf > 0.0 and scale_liminf > 1.0 + 1e-9
    return R2Diagnostic(
        passed=passed,
        log_ratio_liminf=log_liminf,
        scale_ratio_liminf=scale_liminf,
        log_margin=log_liminf,
        scale_margin=scale_liminf - 1.0,
        saturated=saturated,
        rho=float(rho),
        liminf_estimates={"log_ratio": tail.tolist(), "scale_ratio": head.tolist()},
    )


def check_R_integral(psi: BernsteinFunction, alpha: float) -> SeriesResult:
    """Integral over u in (0, inf) of min(1, psi^{-1}(1/u))^(1/(alpha-1))."""
    if not (1.0 < alpha < 2.0):
        raise ArgumentError("alpha must lie in (1, 2)")
    power = 1.0 / (alpha - 1.0)

    def integrand(u: float) -> float:
        if u <= 0:
            return 1.0
        return min(1.0, psi.inverse(1.0 / u)) ** power

    return integrate_to_infinity(integrand, start=0.0)


# -- subordinated model --------------------------------------------------------------------


class SubordinatedModel(ModelSpec):
    gamma_strategy = "renewal"

    def __init__(self, base: ModelSpec, spec: SubordinatorSpec):
        self.base = base
        self.spec = spec
        self.space = base.space
        self.time_domain = spec.time_domain
        self.model_id = f"{base.model_id}+{spec.label}"
        self.exact_cap = None

    @property
    def invariant(self) -> Any:
        return self.base.invariant

    @property
    def params(self) -> Dict[str, Any]:
        return {**self.base.params, "subordinator": self.spec.describe()}

    def clock_law(self, t: float) -> np.ndarray:
        if isinstance(self.spec, DiscreteIID):
            return self.spec.law(int(t))
        assert isinstance(self.spec, PoissonProcess)
        return self.spec.law(t)

    def occupation_weights(self, t: float) -> np.ndarray:
        """Expected time spent at clock level n during [0, t), n = 0, 1, ..."""
        if isinstance(self.spec, DiscreteIID):
            total = np.zeros(int(t) * int(self.spec.steps.max()) + 1)
            law = np.array([1.0])
            for _ in range(int(t)):
                total[: law.size] += law
                law = np.convolve(law, self.spec.pmf)
            return total
        assert isinstance(self.spec, PoissonProcess)
        if t == 0:
            return np.zeros(1)
        n = self.spec.support_limit(t)
        return stats.poisson.sf(np.arange(n + 1), self.spec.lam * t) / self.spec.lam

    def _arrivals(self, rng: np.random.Generator, size: int, horizon: float) -> np.ndarray:
        assert isinstance(self.spec, PoissonProcess)
        mean = self.spec.lam * horizon
        kmax = int(mean + 10.0 * math.sqrt(mean) + 10.0)
        tau = np.cumsum(rng.exponential(1.0 / self.spec.lam, size=(size, kmax)), axis=1)
        while np.any(tau[:, -1] < horizon):
            more = np.cumsum(rng.exponential(1.0 / self.spec.lam, size=(size, kmax)), axis=1) + tau[:, -1:]
            tau = np.concatenate([tau, more], axis=1)
        return tau

    def simulate(self, x0: float, horizon: float, rng: np.random.Generator, seed: int) -> Trajectory:
        if isinstance(self.spec, DiscreteIID):
            steps = int(horizon)
            clock = np.concatenate(([0], np.cumsum(rng.choice(self.spec.steps, size=steps, p=self.spec.probs))))
            path = self.base.sample_paths(x0, int(clock[-1]), rng, 1)[0]
            return Trajectory(
                times=np.arange(steps + 1, dtype=float),
                values=path[clock],
                model_id=self.model_id,
                seed=seed,
                kind=PathKind.GRID,
                space=self.space,
                horizon=float(steps),
            )
        tau = self._arrivals(rng, 1, horizon)[0]
        jumps = tau[tau <= horizon]
        path = self.base.sample_paths(x0, int(jumps.size), rng, 1)[0]
        grid = np.arange(0.0, math.floor(horizon) + 1.0)
        times = np.unique(np.concatenate([grid, jumps]))
        level = np.searchsorted(jumps, times, side="right")
        return Trajectory(
            times=times,
            values=path[level],
            model_id=self.model_id,
            seed=seed,
            kind=PathKind.STEP,
            space=self.space,
            horizon=float(horizon),
        )

    def sample_statistic(self, f: Functional, x0: float, t: float, rng: np.random.Generator, size: int) -> np.ndarray:
        if t <= 0:
            return np.zeros(size)
        if isinstance(self.spec, DiscreteIID):
            n = int(t)
            clock = np.zeros((size, n), dtype=np.int64)
            if n > 1:
                draws = rng.choice(self.spec.steps, size=(size, n - 1), p=self.spec.probs)
                clock[:, 1:] = np.cumsum(draws, axis=1)
            paths = self.base.sample_paths(x0, int(clock.max()), rng, size)
            visited = np.take_along_axis(paths, clock, axis=1)
            return np.sum(np.asarray(f(visited), dtype=float), axis=1)
        tau = self._arrivals(rng, size, t)
        starts = np.minimum(np.concatenate([np.zeros((size, 1)), tau[:, :-1]], axis=1), t)
        durations = np.minimum(tau, t) - starts
        paths = self.base.sample_paths(x0, tau.shape[1] - 1, rng, size)
        return np.sum(np.asarray(f(paths), dtype=float) * durations, axis=1)

    def exact_law(self, x: float, t: float) -> DiscreteMeasure:
        t = self.check_time(t)
        law = self.clock_law(t)
        levels = np.flatnonzero(law > 0)
        top = int(levels.max())
        limit = min(self.base.exact_cap, MIXTURE_MAX_STEPS) if self.base.exact_cap is not None else None
        if limit is not None and top > limit:
            raise CapExceededError(f"subordinated law needs {top} base steps; exact mixtures stop at {limit}")
        atoms: List[np.ndarray] = []
        weights: List[np.ndarray] = []
        for n in levels:
            component = self.base.exact_law(x, int(n))
            atoms.append(component.atoms)
            weights.append(law[n] * component.weights)
        return DiscreteMeasure.build(np.concatenate(atoms), np.concatenate(weights), self.space, normalize=True)

    def closed_form_expectation(self, f: Functional, x: Any, t: float) -> Optional[Any]:
        if self.base.closed_form_expectation(f, x, 0) is None:
            return None
        law = self.clock_law(t)
        total = 0.0
        for n in np.flatnonzero(law > 0):
            total = total + law[n] * np.asarray(self.base.closed_form_expectation(f, x, int(n)), dtype=float)
        return total


def subordinate_model(base: ModelSpec, spec: SubordinatorSpec) -> SubordinatedModel:
    _require_samplable(spec)
    if not spec.integer_valued:
        raise ArgumentError("subordinating a chain needs an integer-valued subordinator")
    if isinstance(base, SubordinatedModel):
        raise UnsupportedError("nested subordination is not supported")
    return SubordinatedModel(base, spec)
