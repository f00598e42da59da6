from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from whoeffding.errors import ArgumentError, DomainError, WhoeffdingError
from whoeffding.services.markov_core import SpaceTag

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12
ORACLE_MAX_ATOMS = 64


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on an interval or a circle.

    Atoms are sorted, canonical and pairwise more than MERGE_TOL apart.
    """

    atoms: np.ndarray
    weights: np.ndarray
    space: SpaceTag

    @classmethod
    def build(
        cls,
        atoms: Sequence[float],
        weights: Sequence[float],
        space: SpaceTag,
        normalize: bool = False,
    ) -> DiscreteMeasure:
        a = np.asarray(atoms, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if a.size == 0 or a.shape != w.shape:
            raise ArgumentError("atoms and weights must be non-empty and of equal length")
        if np.any(w < -WEIGHT_TOL) or not np.all(np.isfinite(w)):
            raise ArgumentError("weights must be finite and non-negative")
        if not space.contains(a):
            raise DomainError(f"atoms outside {space.describe()}")
        w = np.clip(w, 0.0, None)
        total = float(w.sum())
        if normalize:
            if total <= 0:
                raise ArgumentError("weights sum to zero")
            w = w / total
        elif abs(total - 1.0) > WEIGHT_TOL:
            raise ArgumentError(f"weights sum to {total!r}, expected 1")

        a = np.asarray(space.canonical(a), dtype=float).reshape(-1)
        order = np.argsort(a, kind="mergesort")
        a, w = a[order], w[order]
        keep = np.concatenate(([True], np.diff(a) > MERGE_TOL))
        group = np.cumsum(keep) - 1
        w = np.bincount(group, weights=w)
        a = a[keep]
        if space.is_circle and a.size > 1 and (space.circumference - a[-1] + a[0]) <= MERGE_TOL:
            w[0] += w[-1]
            a, w = a[:-1], w[:-1]
        nonzero = w > 0.0
        if np.any(nonzero):
            a, w = a[nonzero], w[nonzero]
        return cls(a, w, space)

    @classmethod
    def dirac(cls, x: float, space: SpaceTag) -> DiscreteMeasure:
        return cls.build([x], [1.0], space)

    @classmethod
    def uniform_grid(cls, n: int, space: SpaceTag) -> DiscreteMeasure:
        """n equally spaced atoms at cell midpoints (an atomized uniform law)."""
        if n < 1:
            raise ArgumentError("n must be >= 1")
        cells = (np.arange(n) + 0.5) / n
        return cls.build(space.lo + cells * (space.hi - space.lo), np.full(n, 1.0 / n), space, normalize=True)

    def __len__(self) -> int:
        return int(self.atoms.size)

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.weights))

    def expect(self, fn: Callable[[np.ndarray], Any]) -> float:
        return float(np.dot(np.asarray(fn(self.atoms), dtype=float), self.weights))

    def mixture(self, other: DiscreteMeasure, p: float) -> DiscreteMeasure:
        """(1 - p) * self + p * other."""
        _require_same_space(self.space, other.space)
        return DiscreteMeasure.build(
            np.concatenate([self.atoms, other.atoms]),
            np.concatenate([(1.0 - p) * self.weights, p * other.weights]),
            self.space,
            normalize=True,
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "space": self.space.to_json(),
            "atoms": [float(v) for v in self.atoms],
            "weights": [float(v) for v in self.weights],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: Union[str, Dict[str, Any]]) -> DiscreteMeasure:
        payload = json.loads(data) if isinstance(data, str) else data
        try:
            space = SpaceTag.from_json(payload["space"])
            return cls.build(payload["atoms"], payload["weights"], space)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, WhoeffdingError):
                raise
            raise ArgumentError(f"invalid measure payload: {exc}") from exc


@dataclass(frozen=True)
class UniformMeasure:
    space: SpaceTag

    def expect(self, fn: Callable[[np.ndarray], Any]) -> float:
        value, _ = integrate.quad(
            lambda u: float(fn(np.asarray(u))), self.space.lo, self.space.hi, epsabs=1e-12, epsrel=1e-12, limit=400
        )
        return float(value) / (self.space.hi - self.space.lo)


def _require_same_space(a: SpaceTag, b: SpaceTag) -> None:
    if a != b:
        raise ArgumentError(f"measures live on different spaces: {a.describe()} vs {b.describe()}")


def _abs_linear_integral(g_a: np.ndarray, g_b: np.ndarray, width: np.ndarray) -> np.ndarray:
    """Exact integral of |g| for g linear from g_a to g_b over `width`."""
    g_a = np.asarray(g_a, dtype=float)
    g_b = np.asarray(g_b, dtype=float)
    abs_a, abs_b = np.abs(g_a), np.abs(g_b)
    same_sign = g_a * g_b >= 0.0
    denom = np.where(same_sign, 1.0, abs_a + abs_b)
    crossing = width * (g_a * g_a + g_b * g_b) / (2.0 * denom)
    return np.where(same_sign, 0.5 * (abs_a + abs_b) * width, crossing)


def _cdf_difference(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    points = np.concatenate([mu.atoms, nu.atoms])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(points, kind="mergesort")
    return points[order], np.cumsum(signed[order])


def _weighted_median(levels: np.ndarray, lengths: np.ndarray) -> float:
    order = np.argsort(levels, kind="mergesort")
    cum = np.cumsum(lengths[order])
    idx = int(np.searchsorted(cum, 0.5 * cum[-1]))
    return float(levels[order][min(idx, levels.size - 1)])


def w1_line(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    _require_same_space(mu.space, nu.space)
    if mu.space.is_circle:
        raise ArgumentError("w1_line needs interval measures; use w1_circle")
    points, diff = _cdf_difference(mu, nu)
    return float(np.sum(np.abs(diff[:-1]) * np.diff(points)))


def w1_circle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Circular W1: min over the cut level c of the integral of |F_mu - F_nu - c|."""
    _require_same_space(mu.space, nu.space)
    if not mu.space.is_circle:
        raise ArgumentError("w1_circle needs circle measures; use w1_line")
    points, diff = _cdf_difference(mu, nu)
    circumference = mu.space.circumference
    levels = np.append(diff[:-1], 0.0)
    lengths = np.append(np.diff(points), points[0] + circumference - points[-1])
    c_star = _weighted_median(levels, lengths)
    return float(np.sum(np.abs(levels - c_star) * lengths))


def w1_vs_uniform(mu: DiscreteMeasure, uniform: UniformMeasure) -> float:
    space = mu.space
    _require_same_space(space, uniform.space)
    length = space.hi - space.lo
    cum = np.cumsum(mu.weights)

    if not space.is_circle:
        edges = np.concatenate(([space.lo], mu.atoms, [space.hi]))
        heights = np.concatenate(([0.0], cum))
        rel = (edges - space.lo) / length
        g_a = heights - rel[:-1]
        g_b = heights - rel[1:]
        return float(np.sum(_abs_linear_integral(g_a, g_b, np.diff(edges))))

    # circle: G(theta) = F_mu(theta) - theta / C on [0, C), minimized over a cut level
    edges = np.concatenate(([0.0], mu.atoms, [length]))
    heights = np.concatenate(([0.0], cum))
    rel = edges / length
    g_a = heights - rel[:-1]
    g_b = heights - rel[1:]
    widths = np.diff(edges)
    live = widths > 0.0
    g_a, g_b, widths = g_a[live], g_b[live], widths[live]

    def below(c: float) -> float:
        frac = np.clip((c - g_b) / (g_a - g_b), 0.0, 1.0)
        return float(np.sum(widths * frac)) - 0.5 * length

    lo, hi = float(g_b.min()) - 1.0, float(g_a.max()) + 1.0
    c_star = optimize.brentq(below, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(np.sum(_abs_linear_integral(g_a - c_star, g_b - c_star, widths)))


def w1_oracle_lp(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Brute-force transport LP over the full coupling polytope (reference values only)."""
    _require_same_space(mu.space, nu.space)
    m, n = len(mu), len(nu)
    if m > ORACLE_MAX_ATOMS or n > ORACLE_MAX_ATOMS:
        raise ArgumentError(f"oracle is limited to {ORACLE_MAX_ATOMS} atoms per measure")
    cost = np.asarray(mu.space.distance(mu.atoms[:, None], nu.atoms[None, :]), dtype=float).reshape(m, n)
    rows = np.kron(np.eye(m), np.ones((1, n)))
    cols = np.kron(np.ones((1, m)), np.eye(n))
    result = optimize.linprog(
        cost.ravel(),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([mu.weights, nu.weights]),
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if result.status != 0:
        raise WhoeffdingError(f"transport LP failed: {result.message}")
    return float(result.fun)


def w1(mu: DiscreteMeasure, nu: Union[DiscreteMeasure, UniformMeasure]) -> float:
    if isinstance(nu, UniformMeasure):
        return w1_vs_uniform(mu, nu)
    return w1_circle(mu, nu) if mu.space.is_circle else w1_line(mu, nu)
