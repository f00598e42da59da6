from __future__ import annotations

import csv
import io
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, TextIO, Union

import numpy as np

from whoeffding.errors import ArgumentError, CapExceededError, DomainError, UnsupportedError
from whoeffding.utils import format_real, make_rng

if TYPE_CHECKING:
    from whoeffding.services.markov_models import InvariantMeasure
    from whoeffding.services.subordination import RateFunction
    from whoeffding.services.wasserstein import DiscreteMeasure

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_EDGE_TOL = 1e-12


class TimeDomain(str, Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"

    def horizon_factor(self, t: float) -> float:
        """T in the bound: t for counting measure, t+1 for Lebesgue measure."""
        return float(t) if self is TimeDomain.DISCRETE else float(t) + 1.0


class SpaceKind(str, Enum):
    INTERVAL = "interval"
    CIRCLE = "circle"


@dataclass(frozen=True)
class SpaceTag:
    kind: SpaceKind
    lo: float = 0.0
    hi: float = 1.0

    @classmethod
    def interval(cls, lo: float, hi: float) -> SpaceTag:
        if not hi > lo:
            raise ArgumentError("interval requires lo < hi")
        return cls(SpaceKind.INTERVAL, float(lo), float(hi))

    @classmethod
    def circle(cls, circumference: float = TWO_PI) -> SpaceTag:
        if not circumference > 0:
            raise ArgumentError("circumference must be > 0")
        return cls(SpaceKind.CIRCLE, 0.0, float(circumference))

    @property
    def is_circle(self) -> bool:
        return self.kind is SpaceKind.CIRCLE

    @property
    def circumference(self) -> float:
        return self.hi - self.lo

    @property
    def diameter(self) -> float:
        return self.circumference / 2.0 if self.is_circle else self.hi - self.lo

    def distance(self, a: Any, b: Any) -> Any:
        diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if self.is_circle:
            diff = np.mod(diff, self.circumference)
            diff = np.minimum(diff, self.circumference - diff)
        return float(diff) if np.ndim(diff) == 0 else diff

    def canonical(self, value: Any) -> Any:
        v = np.asarray(value, dtype=float)
        if self.is_circle:
            c = self.circumference
            v = np.mod(v, c)
            v = np.where(v >= c, v - c, v)
        else:
            v = np.clip(v, self.lo, self.hi)
        return float(v) if np.ndim(v) == 0 else v

    def contains(self, value: Any) -> bool:
        v = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(v)):
            return False
        if self.is_circle:
            return True
        return bool(np.all((v >= self.lo - _EDGE_TOL) & (v <= self.hi + _EDGE_TOL)))

    def validate(self, value: Any) -> Any:
        if not self.contains(value):
            raise DomainError(f"state {value!r} outside {self.describe()}")
        return self.canonical(value)

    def describe(self) -> str:
        if self.is_circle:
            return f"circle({format_real(self.circumference)})"
        return f"interval({format_real(self.lo)}, {format_real(self.hi)})"

    def to_json(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> SpaceTag:
        kind = SpaceKind(str(data.get("kind", "")))
        if kind is SpaceKind.CIRCLE:
            return cls.circle(float(data.get("hi", TWO_PI)) - float(data.get("lo", 0.0)))
        return cls.interval(float(data["lo"]), float(data["hi"]))


@dataclass(frozen=True)
class State:
    value: float
    space: SpaceTag

    @classmethod
    def of(cls, value: float, space: SpaceTag) -> State:
        return cls(float(space.validate(value)), space)


class PathKind(str, Enum):
    GRID = "grid"  # states at 0, 1, ..., horizon
    STEP = "step"  # piecewise constant, jump times recorded
    FLOW = "flow"  # deterministic closed form between grid points


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    model_id: str
    seed: int
    kind: PathKind
    space: SpaceTag
    horizon: float
    integral: Optional[Callable[["Functional", float], float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ArgumentError("trajectory times must start at 0")
        if times.size != np.asarray(self.values).size:
            raise ArgumentError("times and states must have the same length")
        if np.any(np.diff(times) <= 0):
            raise ArgumentError("trajectory times must be strictly increasing")
        if self.kind is PathKind.GRID and not np.array_equal(times, np.arange(times.size, dtype=float)):
            raise ArgumentError("discrete trajectories must be sampled at 0, 1, ..., horizon")

    @property
    def states(self) -> List[State]:
        return [State(float(v), self.space) for v in np.asarray(self.values, dtype=float)]

    def __len__(self) -> int:
        return int(np.asarray(self.times).size)


@dataclass(frozen=True)
class Functional:
    """Bounded Lipschitz functional f with its exact (Lip(f), sup|f|) constants."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    lip: float
    sup_norm: float
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lip < 0 or self.sup_norm < 0:
            raise ArgumentError("lip and sup_norm must be >= 0")

    def __call__(self, x: Any) -> Any:
        out = self.fn(np.asarray(x, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def scaled(self, c: float) -> Functional:
        c = float(c)
        return Functional(
            name=f"{self.name}*{format_real(c)}" if c != 1.0 else self.name,
            fn=lambda x, _fn=self.fn: c * _fn(x),
            lip=abs(c) * self.lip,
            sup_norm=abs(c) * self.sup_norm,
            params={**self.params, "scale": c * self.params.get("scale", 1.0)},
        )

    @property
    def scale(self) -> float:
        return float(self.params.get("scale", 1.0))

    @property
    def base_name(self) -> str:
        return self.name.split("*", 1)[0]


FUNCTIONAL_NAMES = ("identity", "clipped-distance", "cosine", "constant")


def named_functional(
    name: str,
    space: SpaceTag,
    clip: Optional[float] = None,
    value: Optional[float] = None,
) -> Functional:
    key = (name or "").strip().lower().replace("_", "-")
    if key == "identity":
        if space.is_circle:
            raise ArgumentError("identity is not continuous on the circle; use cosine or clipped-distance")
        return Functional("identity", lambda x: x, 1.0, max(abs(space.lo), abs(space.hi)))
    if key == "clipped-distance":
        c = float(clip) if clip is not None else 1.0
        if c <= 0:
            raise ArgumentError("clip must be > 0")
        c = min(c, space.diameter)
        anchor = space.lo
        return Functional(
            "clipped-distance",
            lambda x: np.minimum(space.distance(x, anchor), c),
            1.0,
            c,
            params={"clip": c},
        )
    if key == "cosine":
        if not space.is_circle:
            raise ArgumentError("cosine is defined on the circle")
        return Functional("cosine", np.cos, 1.0, 1.0)
    if key == "constant":
        c = float(value) if value is not None else 1.0
        return Functional("constant", lambda x: np.full(np.shape(x), c, dtype=float), 0.0, abs(c), params={"value": c})
    raise ArgumentError(f"unknown functional {name!r}; expected one of {', '.join(FUNCTIONAL_NAMES)}")


class ModelSpec(ABC):
    """A Markov model with an exact sampler, exact t-step laws where enumerable and an invariant law."""

    model_id: str = ""
    time_domain: TimeDomain = TimeDomain.DISCRETE
    space: SpaceTag
    exact_cap: Optional[int] = None
    gamma_strategy: str = "grid"
    gamma_horizon: float = 16.0
    contraction_factor: Optional[float] = None

    @property
    @abstractmethod
    def invariant(self) -> "InvariantMeasure":
        ...

    @property
    def params(self) -> Dict[str, Any]:
        return {}

    def describe(self) -> Dict[str, Any]:
        return {"model": self.model_id, "domain": self.time_domain.value, "space": self.space.describe(), **self.params}

    def state(self, x: Union[State, float]) -> State:
        if isinstance(x, State):
            if x.space != self.space:
                raise DomainError(f"state lives on {x.space.describe()}, model on {self.space.describe()}")
            return x
        return State.of(float(x), self.space)

    def check_time(self, t: float, name: str = "t") -> float:
        if t is None or not math.isfinite(float(t)) or float(t) < 0:
            raise ArgumentError(f"{name} must be >= 0")
        if self.time_domain is TimeDomain.DISCRETE and float(t) != int(t):
            raise ArgumentError(f"{name} must be an integer for a discrete-time model")
        return float(t)

    def check_cap(self, t: float) -> None:
        if self.exact_cap is not None and t > self.exact_cap:
            raise CapExceededError(f"exact law of {self.model_id} capped at t <= {self.exact_cap}; use sampling")

    @abstractmethod
    def simulate(self, x0: float, horizon: float, rng: np.random.Generator, seed: int) -> Trajectory:
        ...

    def sample_paths(self, x0: float, steps: int, rng: np.random.Generator, size: int) -> np.ndarray:
        """States at integer times 0..steps for `size` replicas, shape (size, steps + 1)."""
        raise UnsupportedError(f"{self.model_id} has no integer-time path sampler")

    @abstractmethod
    def sample_statistic(self, f: Functional, x0: float, t: float, rng: np.random.Generator, size: int) -> np.ndarray:
        """S_{t-1} for `size` independent replicas started at x0."""

    @abstractmethod
    def exact_law(self, x: float, t: float) -> "DiscreteMeasure":
        ...

    def closed_form_expectation(self, f: Functional, x: Any, t: float) -> Optional[Any]:
        return None

    def expected_functional(self, f: Functional, x: float, t: float) -> float:
        closed = self.closed_form_expectation(f, x, t)
        if closed is not None:
            return float(closed)
        return float(self.exact_law(x, t).expect(f))

    def w_to_invariant(self, x: float, t: float) -> float:
        return self.invariant.distance(self.exact_law(x, t))

    def functional_tail(self, f: Functional, x: float, start: float) -> Optional[float]:
        """Bound on |sum or integral from `start` on of E_x f(X_s) - pi(f)| when f admits one in closed form."""
        return None

    def w_tail(self, x: float, start: float) -> Optional[float]:
        """Analytic upper bound on the Wasserstein series/integral from `start` on, if one is known."""
        return None

    def discrete_w_tail(self, x: float, start: int) -> Optional[float]:
        """Same bound for the integer-time sum, used by renewal (subordinated) estimates."""
        if self.time_domain is TimeDomain.DISCRETE:
            return self.w_tail(x, start)
        return None

    def rate_function(self) -> Optional["RateFunction"]:
        return None

    def rate_constant(self, x: float) -> Optional[float]:
        return None

    def gamma_grid(self, points: int = 17) -> List[float]:
        if self.space.is_circle:
            return list(np.linspace(0.0, self.space.circumference, points, endpoint=False))
        return list(np.linspace(self.space.lo, self.space.hi, points))


def simulate_path(model: ModelSpec, x0: Union[State, float], horizon: float, seed: int) -> Trajectory:
    start = model.state(x0)
    if horizon is None or float(horizon) < 0:
        raise ArgumentError("horizon must be >= 0")
    horizon = model.check_time(horizon, "horizon")
    rng = make_rng(seed)
    traj = model.simulate(start.value, horizon, rng, int(seed))
    logger.debug("simulated %s path with %d states", model.model_id, len(traj))
    return traj


def time_average_statistic(traj: Trajectory, f: Functional, t: float, domain: TimeDomain) -> float:
    """S_{t-1}: the sum (discrete) or integral (continuous) of f along the path over [0, t)."""
    t = float(t)
    if t < 0:
        raise ArgumentError("t must be >= 0")
    if t > traj.horizon + 1e-12:
        raise ArgumentError(f"trajectory covers [0, {format_real(traj.horizon)}], shorter than t={format_real(t)}")
    values = np.asarray(traj.values, dtype=float)
    times = np.asarray(traj.times, dtype=float)

    if domain is TimeDomain.DISCRETE:
        if traj.kind is not PathKind.GRID:
            raise ArgumentError("discrete statistic needs a path sampled on the integer grid")
        if t != int(t):
            raise ArgumentError("t must be an integer in discrete time")
        n = int(t)
        if n == 0:
            return 0.0
        return float(np.sum(np.asarray(f(values[:n]), dtype=float)))

    if traj.kind is PathKind.FLOW:
        if traj.integral is None:
            raise UnsupportedError("flow trajectory carries no path integral")
        return float(traj.integral(f, t))
    if traj.kind is PathKind.GRID:
        raise ArgumentError("continuous statistic needs a piecewise-constant or flow path")
    if t == 0.0:
        return 0.0
    ends = np.minimum(np.append(times[1:], np.inf), t)
    widths = np.clip(ends - times, 0.0, None)
    mask = times < t
    return float(np.sum(np.asarray(f(values[mask]), dtype=float) * widths[mask]))


def write_trajectory_csv(traj: Trajectory, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["time", "state"])
    for time, value in zip(np.asarray(traj.times, dtype=float), np.asarray(traj.values, dtype=float)):
        writer.writerow([format_real(time), format_real(value)])


def export_trajectory_csv(traj: Trajectory, path: Optional[Union[str, Path]] = None) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
