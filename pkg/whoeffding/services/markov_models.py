from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy import integrate, stats

from whoeffding.errors import ArgumentError, DomainError, UnsupportedError
from whoeffding.services.markov_core import (
    Functional,
    ModelSpec,
    PathKind,
    SpaceTag,
    State,
    TimeDomain,
    Trajectory,
)
from whoeffding.services.subordination import ExpDecay, PolyDecay, RateFunction
from whoeffding.services.wasserstein import DiscreteMeasure, UniformMeasure, w1

logger = logging.getLogger(__name__)

AR1_EXACT_CAP = 24
TORUS_EXACT_CAP = 30


class InvariantKind(str, Enum):
    DIRAC_AT_ZERO = "dirac-at-zero"
    UNIFORM_INTERVAL = "uniform-interval"
    UNIFORM_CIRCLE = "uniform-circle"


@dataclass(frozen=True)
class InvariantMeasure:
    kind: InvariantKind
    space: SpaceTag

    @property
    def target(self) -> Union[DiscreteMeasure, UniformMeasure]:
        if self.kind is InvariantKind.DIRAC_AT_ZERO:
            return DiscreteMeasure.dirac(0.0, self.space)
        return UniformMeasure(self.space)

    def distance(self, mu: DiscreteMeasure) -> float:
        return w1(mu, self.target)

    def mean(self, f: Functional) -> float:
        """pi(f): closed form for the named functionals, quadrature otherwise."""
        if self.kind is InvariantKind.DIRAC_AT_ZERO:
            return float(f(0.0))
        name, scale = f.base_name, f.scale
        if name == "constant":
            return float(f(self.space.lo))
        if name == "identity" and not self.space.is_circle:
            return scale * 0.5 * (self.space.lo + self.space.hi)
        if self.space.is_circle and name == "cosine" and math.isclose(self.space.circumference, 2.0 * math.pi):
            return 0.0
        if self.space.is_circle and name == "clipped-distance":
            clip = float(f.params["clip"])
            return scale * (clip - clip * clip / self.space.circumference)
        return UniformMeasure(self.space).expect(f.fn)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (1.0 <= alpha < 2.0):
        raise ArgumentError("alpha must lie in [1, 2)")
    return alpha


def flow_state(x: Any, t: Any, alpha: float = 1.0) -> Any:
    """Solution of dX = -sign(X)|X|^alpha dt started at x."""
    alpha = _check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise DomainError("flow states live in [-1, 1]")
    if np.any(t < 0):
        raise ArgumentError("t must be >= 0")
    if alpha == 1.0:
        out = x * np.exp(-t)
    else:
        k = alpha - 1.0
        out = x / (k * np.abs(x) ** k * t + 1.0) ** (1.0 / k)
    return float(out) if np.ndim(out) == 0 else out


def flow_identity_integral(x: float, t: float, alpha: float) -> float:
    """Closed form of the integral of X_s over [0, t) for the flow started at x."""
    if x == 0.0 or t == 0.0:
        return 0.0
    if alpha == 1.0:
        return x * -math.expm1(-t)
    k = alpha - 1.0
    c = k * abs(x) ** k
    return x * (1.0 - (c * t + 1.0) ** (-(2.0 - alpha) / k)) / ((2.0 - alpha) * abs(x) ** k)


class FlowModel(ModelSpec):
    time_domain = TimeDomain.CONTINUOUS
    gamma_strategy = "monotone-abs"
    gamma_horizon = 20.0

    def __init__(self, alpha: float = 1.0):
        self.alpha = _check_alpha(alpha)
        self.space = SpaceTag.interval(-1.0, 1.0)
        self.model_id = "flow"
        self._invariant = InvariantMeasure(InvariantKind.DIRAC_AT_ZERO, self.space)

    @property
    def invariant(self) -> InvariantMeasure:
        return self._invariant

    @property
    def params(self) -> Dict[str, Any]:
        return {"alpha": self.alpha}

    def path_integral(self, f: Functional, x: float, t: float) -> float:
        if f.base_name == "identity":
            return f.scale * flow_identity_integral(x, t, self.alpha)
        if f.base_name == "constant":
            return float(f(x)) * t
        if t == 0.0:
            return 0.0
        value, _ = integrate.quad(lambda s: float(f(flow_state(x, s, self.alpha))), 0.0, t, epsabs=1e-12, limit=200)
        return float(value)

    def simulate(self, x0: float, horizon: float, rng: np.random.Generator, seed: int) -> Trajectory:
        grid = np.arange(0.0, math.floor(horizon) + 1.0)
        if grid[-1] < horizon:
            grid = np.append(grid, horizon)
        return Trajectory(
            times=grid,
            values=np.asarray(flow_state(np.full(grid.shape, x0), grid, self.alpha), dtype=float),
            model_id=self.model_id,
            seed=seed,
            kind=PathKind.FLOW,
            space=self.space,
            horizon=horizon,
            integral=lambda f, t: self.path_integral(f, x0, t),
        )

    def sample_paths(self, x0: float, steps: int, rng: np.random.Generator, size: int) -> np.ndarray:
        row = np.asarray(flow_state(np.full(steps + 1, x0), np.arange(steps + 1, dtype=float), self.alpha))
        return np.broadcast_to(row, (size, steps + 1)).copy()

    def sample_statistic(self, f: Functional, x0: float, t: float, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.path_integral(f, x0, t))

    def exact_law(self, x: float, t: float) -> DiscreteMeasure:
        return DiscreteMeasure.dirac(flow_state(x, t, self.alpha), self.space)

    def closed_form_expectation(self, f: Functional, x: Any, t: float) -> Optional[Any]:
        return f(flow_state(x, t, self.alpha))

    def w_to_invariant(self, x: float, t: float) -> float:
        return abs(flow_state(x, t, self.alpha))

    def w_tail(self, x: float, start: float) -> Optional[float]:
        ax = abs(float(x))
        if ax == 0.0:
            return 0.0
        if self.alpha == 1.0:
            return ax * math.exp(-start)
        k = self.alpha - 1.0
        c = k * ax**k
        return ax ** (2.0 - self.alpha) / (2.0 - self.alpha) * (c * start + 1.0) ** (-(2.0 - self.alpha) / k)

    def discrete_w_tail(self, x: float, start: int) -> Optional[float]:
        if self.alpha == 1.0:
            return abs(float(x)) * math.exp(-start) / -math.expm1(-1.0)
        # decreasing terms: sum from `start` <= first term + integral from `start`
        return abs(flow_state(x, float(start), self.alpha)) + float(self.w_tail(x, float(start)))

    def rate_function(self) -> Optional[RateFunction]:
        return ExpDecay(1.0) if self.alpha == 1.0 else PolyDecay(self.alpha)

    def rate_constant(self, x: float) -> Optional[float]:
        return 1.0

    def gamma_closed_form(self) -> float:
        return 1.0 / (2.0 - self.alpha)

    def gamma_grid(self, points: int = 17) -> List[float]:
        return [self.space.lo, self.space.hi]


class Ar1BinaryModel(ModelSpec):
    """X_{t+1} = X_t / 2 + xi with xi uniform on {0, 1/2}; invariant law Leb[0, 1]."""

    time_domain = TimeDomain.DISCRETE
    exact_cap = AR1_EXACT_CAP
    gamma_strategy = "lipschitz-grid"
    gamma_horizon = 16.0
    contraction_factor = 0.5

    def __init__(self) -> None:
        self.space = SpaceTag.interval(0.0, 1.0)
        self.model_id = "ar1"
        self._invariant = InvariantMeasure(InvariantKind.UNIFORM_INTERVAL, self.space)

    @property
    def invariant(self) -> InvariantMeasure:
        return self._invariant

    def sample_paths(self, x0: float, steps: int, rng: np.random.Generator, size: int) -> np.ndarray:
        noise = 0.5 * rng.integers(0, 2, size=(size, steps))
        paths = np.empty((size, steps + 1), dtype=float)
        paths[:, 0] = x0
        for k in range(steps):
            paths[:, k + 1] = 0.5 * paths[:, k] + noise[:, k]
        return paths

    def simulate(self, x0: float, horizon: float, rng: np.random.Generator, seed: int) -> Trajectory:
        steps = int(horizon)
        values = self.sample_paths(x0, steps, rng, 1)[0]
        return Trajectory(
            times=np.arange(steps + 1, dtype=float),
            values=values,
            model_id=self.model_id,
            seed=seed,
            kind=PathKind.GRID,
            space=self.space,
            horizon=float(steps),
        )

    def sample_statistic(self, f: Functional, x0: float, t: float, rng: np.random.Generator, size: int) -> np.ndarray:
        return _grid_statistic(self, f, x0, int(t), rng, size)

    def exact_law(self, x: float, t: float) -> DiscreteMeasure:
        t = int(self.check_time(t))
        self.check_cap(t)
        n = 1 << t
        return DiscreteMeasure.build((x + np.arange(n, dtype=float)) / n, np.full(n, 1.0 / n), self.space)

    def closed_form_expectation(self, f: Functional, x: Any, t: float) -> Optional[Any]:
        if f.base_name == "identity":
            return f.scale * ((np.asarray(x, dtype=float) - 0.5) * 2.0 ** (-float(t)) + 0.5)
        if f.base_name == "constant":
            return f(x)
        return None

    def functional_tail(self, f: Functional, x: float, start: float) -> Optional[float]:
        if f.base_name != "identity":
            return None
        return abs(f.scale) * abs(float(x) - 0.5) * 2.0 ** (1.0 - float(start))

    def w_tail(self, x: float, start: float) -> Optional[float]:
        return 2.0 * 2.0 ** (-float(start)) * self.rate_constant(x)

    def rate_function(self) -> Optional[RateFunction]:
        return ExpDecay(math.log(2.0))

    def rate_constant(self, x: float) -> float:
        """W(delta_x, Leb[0, 1])."""
        x = float(x)
        return 0.5 * (x * x + (1.0 - x) * (1.0 - x))


class TorusWalkModel(ModelSpec):
    """Y_{t+1} = Y_t + xi with xi uniform on {-1, +1}, on the circle of length 2*pi."""

    time_domain = TimeDomain.DISCRETE
    exact_cap = TORUS_EXACT_CAP
    gamma_strategy = "rotation-invariant"
    gamma_horizon = 30.0

    def __init__(self) -> None:
        self.space = SpaceTag.circle()
        self.model_id = "torus"
        self._invariant = InvariantMeasure(InvariantKind.UNIFORM_CIRCLE, self.space)

    @property
    def invariant(self) -> InvariantMeasure:
        return self._invariant

    def sample_paths(self, x0: float, steps: int, rng: np.random.Generator, size: int) -> np.ndarray:
        offsets = np.zeros((size, steps + 1), dtype=np.int64)
        if steps:
            offsets[:, 1:] = np.cumsum(2 * rng.integers(0, 2, size=(size, steps)) - 1, axis=1)
        return np.asarray(self.space.canonical(x0 + offsets.astype(float)), dtype=float).reshape(size, steps + 1)

    def simulate(self, x0: float, horizon: float, rng: np.random.Generator, seed: int) -> Trajectory:
        steps = int(horizon)
        return Trajectory(
            times=np.arange(steps + 1, dtype=float),
            values=self.sample_paths(x0, steps, rng, 1)[0],
            model_id=self.model_id,
            seed=seed,
            kind=PathKind.GRID,
            space=self.space,
            horizon=float(steps),
        )

    def sample_statistic(self, f: Functional, x0: float, t: float, rng: np.random.Generator, size: int) -> np.ndarray:
        return _grid_statistic(self, f, x0, int(t), rng, size)

    def exact_law(self, x: float, t: float) -> DiscreteMeasure:
        t = int(self.check_time(t))
        self.check_cap(t)
        k = np.arange(t + 1)
        return DiscreteMeasure.build(x + 2.0 * k - t, stats.binom.pmf(k, t, 0.5), self.space, normalize=True)

    def closed_form_expectation(self, f: Functional, x: Any, t: float) -> Optional[Any]:
        if f.base_name == "cosine":
            return f.scale * np.cos(np.asarray(x, dtype=float)) * math.cos(1.0) ** int(t)
        if f.base_name == "constant":
            return f(x)
        return None

    def functional_tail(self, f: Functional, x: float, start: float) -> Optional[float]:
        if f.base_name != "cosine":
            return None
        c1 = math.cos(1.0)
        return abs(f.scale) * abs(math.cos(float(x))) * c1 ** int(start) / (1.0 - c1)

    def gamma_grid(self, points: int = 17) -> List[float]:
        return [0.0]


def _grid_statistic(
    model: ModelSpec, f: Functional, x0: float, t: int, rng: np.random.Generator, size: int
) -> np.ndarray:
    if t <= 0:
        return np.zeros(size)
    paths = model.sample_paths(x0, t - 1, rng, size)
    return np.sum(np.asarray(f(paths), dtype=float), axis=1)


MODEL_NAMES = ("flow", "ar1", "torus")


def build_model(name: str, alpha: float = 1.0) -> ModelSpec:
    key = (name or "").strip().lower()
    if key == "flow":
        return FlowModel(alpha)
    if key == "ar1":
        return Ar1BinaryModel()
    if key == "torus":
        return TorusWalkModel()
    raise ArgumentError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")


def ar1_t_step_law(x: float, t: int) -> DiscreteMeasure:
    model = Ar1BinaryModel()
    return model.exact_law(model.state(x).value, t)


def torus_t_step_law(x: float, t: int) -> DiscreteMeasure:
    model = TorusWalkModel()
    return model.exact_law(model.state(x).value, t)


def exact_w_to_invariant(model: ModelSpec, x: Union[State, float], t: float) -> float:
    state = model.state(x)
    return float(model.w_to_invariant(state.value, model.check_time(t)))


def one_step_contraction(model: ModelSpec, x: Union[State, float], y: Union[State, float]) -> float:
    if model.time_domain is not TimeDomain.DISCRETE:
        raise UnsupportedError(f"{model.model_id} is a continuous-time model")
    sx, sy = model.state(x), model.state(y)
    return w1(model.exact_law(sx.value, 1), model.exact_law(sy.value, 1))


def push_forward(model: ModelSpec, mu: DiscreteMeasure, t: float = 1) -> DiscreteMeasure:
    """Exact law after t steps of the chain started from mu."""
    if mu.space != model.space:
        raise ArgumentError("measure and model live on different spaces")
    atoms: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    for a, w in zip(mu.atoms, mu.weights):
        law = model.exact_law(float(a), t)
        atoms.append(law.atoms)
        weights.append(w * law.weights)
    return DiscreteMeasure.build(np.concatenate(atoms), np.concatenate(weights), model.space, normalize=True)
