from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from scipy import integrate

from whoeffding.errors import DivergenceError

logger = logging.getLogger(__name__)

DEFAULT_PARTIAL_SUM_CAP = 1e12
ACCELERATION = 1.25


@dataclass(frozen=True)
class SeriesResult:
    """Outcome of a dyadic-block summation (series or improper integral)."""

    value: float
    tail: float
    converged: bool
    blocks: List[float] = field(default_factory=list)

    @property
    def divergent(self) -> bool:
        return not self.converged


def closed_series(value: float, cap: float = DEFAULT_PARTIAL_SUM_CAP) -> SeriesResult:
    """Wrap a closed-form sum; values past `cap` count as divergent like summed ones."""
    if not math.isfinite(value) or abs(value) > cap:
        return SeriesResult(value=math.inf, tail=math.inf, converged=False, blocks=[])
    return SeriesResult(value=float(value), tail=0.0, converged=True, blocks=[float(value)])


def _block_edges(start: float, k: int) -> tuple[float, float]:
    # [start, start+1), [start+1, start+2), [start+2, start+4), [start+4, start+8), ...
    if k == 0:
        return start, start + 1.0
    return start + 2.0 ** (k - 1), start + 2.0 ** k


def _log_decay(previous: Optional[float], current: float) -> Optional[float]:
    """log of the drop in mean term between two neighbouring blocks."""
    if previous is None:
        return None
    if current == 0.0:
        return math.inf
    if previous == 0.0:
        return -math.inf
    return math.log(previous / current)


def _accelerating(previous: Optional[float], current: Optional[float]) -> bool:
    # geometric terms: the log-drop doubles with the block length; power laws keep it flat
    if current is None or current <= 0.0:
        return False
    if current == math.inf or previous is None or previous <= 0.0:
        return True
    return current >= ACCELERATION * previous


def dyadic_sum(
    block: Callable[[float, float], float],
    start: float = 0.0,
    max_blocks: int = 64,
    rtol: float = 1e-15,
    cap: float = DEFAULT_PARTIAL_SUM_CAP,
    stall_blocks: int = 3,
) -> SeriesResult:
    """Sum `block(lo, hi)` over dyadic blocks until it is negligible.

    Divergence is reported when the partial sum passes `cap`, or when block values stop
    shrinking for `stall_blocks` consecutive blocks while the mean term per block decays at a
    steady log-rate. Block values of a slow geometric series grow until the block length
    reaches the decay scale, but their log-rate keeps doubling, so that phase is not a stall.
    Hitting `max_blocks` with a contracting block ratio closes the series with a geometric
    tail estimate.
    """
    total = 0.0
    blocks: List[float] = []
    stalls = 0
    mean: Optional[float] = None
    rate: Optional[float] = None
    for k in range(max_blocks):
        lo, hi = _block_edges(start, k)
        b = float(block(lo, hi))
        if not math.isfinite(b):
            return SeriesResult(value=math.inf, tail=math.inf, converged=False, blocks=blocks + [b])
        blocks.append(b)
        total += b
        if abs(total) > cap:
            logger.debug("partial sum %.3g exceeded cap after %d blocks", total, k + 1)
            return SeriesResult(value=total, tail=math.inf, converged=False, blocks=blocks)
        if k >= 2 and abs(b) <= rtol * max(abs(total), 1e-300):
            return SeriesResult(value=total, tail=0.0, converged=True, blocks=blocks)
        if k >= 2 and b == 0.0:
            return SeriesResult(value=total, tail=0.0, converged=True, blocks=blocks)
        next_mean = abs(b) / (hi - lo)
        next_rate = _log_decay(mean, next_mean)
        if k >= 2 and abs(b) >= abs(blocks[-2]) and not _accelerating(rate, next_rate):
            stalls += 1
            if stalls >= stall_blocks:
                logger.debug("block sums stopped decaying after %d blocks", k + 1)
                return SeriesResult(value=total, tail=math.inf, converged=False, blocks=blocks)
        else:
            stalls = 0
        mean, rate = next_mean, next_rate

    ratio = abs(blocks[-1]) / abs(blocks[-2]) if blocks[-2] != 0.0 else 0.0
    if ratio >= 1.0:
        return SeriesResult(value=total, tail=math.inf, converged=False, blocks=blocks)
    tail = abs(blocks[-1]) * ratio / (1.0 - ratio)
    return SeriesResult(value=total + math.copysign(tail, blocks[-1]), tail=tail, converged=True, blocks=blocks)


def integrate_to_infinity(
    fn: Callable[[float], float],
    start: float = 0.0,
    epsabs: float = 1e-13,
    cap: float = DEFAULT_PARTIAL_SUM_CAP,
) -> SeriesResult:
    def block(lo: float, hi: float) -> float:
        value, _ = integrate.quad(fn, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=200)
        return value

    return dyadic_sum(block, start=start, cap=cap)


def require_convergent(result: SeriesResult, what: str) -> SeriesResult:
    if result.divergent:
        raise DivergenceError(f"{what} does not converge", partial_sum=result.value)
    return result
