from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy import stats
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session

from whoeffding.audit import log_event
from whoeffding.config import ExperimentConfig, load_experiment_config
from whoeffding.errors import ArgumentError, ConfigError, WhoeffdingError
from whoeffding.orm import ExperimentRun
from whoeffding.repositories.run_repository import RunRepository
from whoeffding.services.concentration import BoundInput, GammaReport, Regime, gamma_bound, hoeffding_bound
from whoeffding.services.markov_core import Functional, ModelSpec, State, named_functional
from whoeffding.services.markov_models import build_model
from whoeffding.services.subordination import (
    PoissonProcess,
    SubordinatedModel,
    integrated_rate_series,
    parse_subordinator,
    subordinate_model,
)
from whoeffding.utils import derive_seed, format_real, make_rng

logger = logging.getLogger(__name__)

CONFIDENCE = 0.99
MIN_SAMPLES = 100
BLOCK_SIZE = 4096

CSV_COLUMNS = (
    "model",
    "x0",
    "t",
    "eps",
    "lip",
    "sup_f",
    "gamma",
    "domain",
    "bound",
    "regime",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "n",
    "seed",
    "passed",
    "slack",
)


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    ci_lo: float
    ci_hi: float
    n: int
    seed: int
    t: float
    eps: float
    exceedances: int = 0
    one_sided: bool = False

    def to_json(self) -> Dict[str, Any]:
        return {
            "p_hat": self.p_hat,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "n": self.n,
            "seed": self.seed,
            "t": self.t,
            "eps": self.eps,
            "exceedances": self.exceedances,
            "one_sided": self.one_sided,
        }


def clopper_pearson(k: int, n: int, confidence: float = CONFIDENCE) -> Tuple[float, float]:
    """Exact binomial interval for k successes out of n."""
    if n <= 0 or not (0 <= k <= n):
        raise ArgumentError("need 0 <= k <= n and n > 0")
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


def invariant_mean(model: ModelSpec, f: Functional) -> float:
    try:
        value = float(model.invariant.mean(f))
    except (WhoeffdingError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"pi(f) is unavailable for {f.name} on {model.model_id}: {exc}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"pi(f) is not finite for {f.name} on {model.model_id}")
    return value


def simulate_statistics(model: ModelSpec, f: Functional, x0: float, t: float, n: int, seed: int) -> np.ndarray:
    """S_{t-1} for n replicas; block b of BLOCK_SIZE replicas draws from derive_seed(seed, b)."""
    out: List[np.ndarray] = []
    for b in range(int(math.ceil(n / BLOCK_SIZE))):
        size = min(BLOCK_SIZE, n - b * BLOCK_SIZE)
        rng = make_rng(derive_seed(seed, b))
        out.append(np.asarray(model.sample_statistic(f, x0, t, rng, size), dtype=float))
    logger.debug("simulated %d replicas of %s at t=%s in %d blocks", n, model.model_id, format_real(t), len(out))
    return np.concatenate(out) if out else np.zeros(0)


def tail_from_statistics(
    values: np.ndarray, pi_f: float, t: float, eps: float, seed: int, one_sided: bool = False
) -> TailEstimate:
    deviation = values - pi_f * t
    hits = deviation > t * eps if one_sided else np.abs(deviation) > t * eps
    k = int(np.count_nonzero(hits))
    n = int(values.size)
    lo, hi = clopper_pearson(k, n)
    return TailEstimate(
        p_hat=k / n, ci_lo=lo, ci_hi=hi, n=n, seed=int(seed), t=float(t), eps=float(eps), exceedances=k, one_sided=one_sided
    )


def estimate_tail(
    model: ModelSpec,
    f: Functional,
    x0: Union[State, float],
    t: float,
    eps: float,
    n: int,
    seed: int,
    one_sided: bool = False,
) -> TailEstimate:
    """Monte Carlo estimate of P_x(|S_{t-1} - pi(f) t| > t eps) with a 99% Clopper-Pearson interval."""
    if int(n) < MIN_SAMPLES:
        raise ArgumentError(f"need at least {MIN_SAMPLES} samples")
    if not (eps > 0 and t > 0):
        raise ArgumentError("t and eps must be > 0")
    if seed < 0:
        raise ArgumentError("seed must be >= 0")
    start = model.state(x0).value
    t = model.check_time(t)
    pi_f = invariant_mean(model, f)
    values = simulate_statistics(model, f, start, t, int(n), int(seed))
    return tail_from_statistics(values, pi_f, t, eps, seed, one_sided)


# -- certification -------------------------------------------------------------------------


@dataclass(frozen=True)
class CertificationRow:
    model: str
    x0: float
    t: float
    eps: float
    lip: float
    sup_f: float
    gamma: float
    domain: str
    bound: float
    regime: str
    p_hat: float
    ci_lo: float
    ci_hi: float
    n: int
    seed: int
    passed: bool
    slack: Optional[float]

    def csv_cells(self) -> List[str]:
        return [
            self.model,
            format_real(self.x0),
            format_real(self.t),
            format_real(self.eps),
            format_real(self.lip),
            format_real(self.sup_f),
            format_real(self.gamma),
            self.domain,
            format_real(self.bound),
            self.regime,
            format_real(self.p_hat),
            format_real(self.ci_lo),
            format_real(self.ci_hi),
            str(self.n),
            str(self.seed),
            "true" if self.passed else "false",
            "inf" if self.slack is None else format_real(self.slack),
        ]

    def to_json(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


@dataclass
class CertificationResult:
    model: ModelSpec
    functional: Functional
    gamma: float
    gamma_report: Optional[GammaReport]
    rows: List[CertificationRow] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.error is None

    @property
    def passed(self) -> bool:
        return self.complete and all(r.passed for r in self.rows)

    @property
    def status(self) -> str:
        if not self.complete:
            return "partial"
        return "certified" if self.passed else "violated"


def build_experiment_model(config: ExperimentConfig) -> ModelSpec:
    model = build_model(config.model, config.alpha)
    if config.subordinator:
        model = subordinate_model(model, parse_subordinator(config.subordinator))
    return model


def build_experiment_functional(config: ExperimentConfig, model: ModelSpec) -> Functional:
    try:
        return named_functional(config.functional, model.space, config.functional_clip, config.functional_value)
    except ArgumentError as exc:
        raise ConfigError(str(exc.detail)) from exc


def resolve_gamma(config: ExperimentConfig, model: ModelSpec) -> Tuple[float, Optional[GammaReport]]:
    if config.gamma.value is not None:
        return float(config.gamma.value), None
    report = gamma_bound(model, x_grid=config.gamma.grid, horizon=config.gamma.horizon)
    if report.divergent:
        logger.warning("gamma series for %s shows no decay; the bound is not meaningful", model.model_id)
    return report.value, report


def certify(config: ExperimentConfig) -> CertificationResult:
    """Compare the bound with Monte Carlo tails over the (t, eps) grid.

    One simulation per t is shared by every eps. A row passes when ci_lo <= bound. An estimator
    failure stops the sweep and the rows computed so far are returned flagged as partial.
    """
    model = build_experiment_model(config)
    f = build_experiment_functional(config, model)
    x0 = model.state(config.x0).value
    gamma, report = resolve_gamma(config, model)
    result = CertificationResult(model=model, functional=f, gamma=gamma, gamma_report=report)
    if not config.t or not config.eps:
        return result

    pi_f = invariant_mean(model, f)
    for index, t in enumerate(config.t):
        seed = derive_seed(config.seed, index)
        try:
            values = simulate_statistics(model, f, x0, model.check_time(t), config.samples, seed)
        except (WhoeffdingError, FloatingPointError, MemoryError) as exc:
            detail = exc.detail if isinstance(exc, WhoeffdingError) else str(exc)
            result.error = f"estimation failed at t={format_real(t)}: {detail}"
            logger.error("%s", result.error)
            break
        for eps in config.eps:
            inp = BoundInput(lip=f.lip, sup_f=f.sup_norm, gamma=gamma, eps=eps, t=t, domain=model.time_domain)
            bound = hoeffding_bound(inp, one_sided=config.one_sided)
            tail = tail_from_statistics(values, pi_f, t, eps, seed, config.one_sided)
            passed = tail.ci_lo <= bound.bound
            if not passed:
                logger.warning(
                    "bound violated for %s at t=%s eps=%s: ci_lo=%s > bound=%s",
                    model.model_id,
                    format_real(t),
                    format_real(eps),
                    format_real(tail.ci_lo),
                    format_real(bound.bound),
                )
            result.rows.append(
                CertificationRow(
                    model=model.model_id,
                    x0=x0,
                    t=float(t),
                    eps=float(eps),
                    lip=f.lip,
                    sup_f=f.sup_norm,
                    gamma=gamma,
                    domain=model.time_domain.value,
                    bound=bound.bound,
                    regime=bound.regime.value,
                    p_hat=tail.p_hat,
                    ci_lo=tail.ci_lo,
                    ci_hi=tail.ci_hi,
                    n=tail.n,
                    seed=seed,
                    passed=passed,
                    slack=bound.bound / tail.p_hat if tail.p_hat > 0 else None,
                )
            )
    return result


# -- reports -------------------------------------------------------------------------------


def json_safe(value: Any) -> Any:
    """Replace non-finite floats by None so reports stay strict JSON."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (Regime,)):
        return value.value
    return value


def dump_report(report: Dict[str, Any]) -> str:
    return json.dumps(json_safe(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_rows_csv(rows: Sequence[CertificationRow], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_cells())


def experiment_provenance(config: ExperimentConfig, result: CertificationResult) -> Dict[str, Any]:
    model = result.model
    provenance: Dict[str, Any] = {
        "config_hash": config.config_hash,
        "gamma_source": "explicit" if result.gamma_report is None else "gamma_bound",
        "functional": {
            "name": result.functional.name,
            "lip": result.functional.lip,
            "sup_norm": result.functional.sup_norm,
            "params": dict(result.functional.params),
        },
        "confidence": CONFIDENCE,
        "block_size": BLOCK_SIZE,
        "truncation_tails": {},
    }
    if result.gamma_report is not None:
        provenance["gamma"] = result.gamma_report.to_json()
        provenance["truncation_tails"]["gamma"] = result.gamma_report.tail
    if isinstance(model, SubordinatedModel) and isinstance(model.spec, PoissonProcess):
        rate = model.base.rate_function()
        if rate is not None:
            series = integrated_rate_series(model.spec, rate, model.time_domain)
            provenance["integrated_rate"] = series.value if series.converged else None
            provenance["rate_function"] = rate.describe()
            provenance["truncation_tails"]["integrated_rate"] = series.tail
    return provenance


def experiment_report(config: ExperimentConfig, result: CertificationResult) -> Dict[str, Any]:
    return {
        "model": result.model.model_id,
        "params": {
            **result.model.describe(),
            "x0": config.x0,
            "samples": config.samples,
            "seed": config.seed,
            "one_sided": config.one_sided,
            "subordinator": config.subordinator,
        },
        "value": result.gamma,
        "regime": result.status,
        "provenance": experiment_provenance(config, result),
        "series": list(result.gamma_report.series) if result.gamma_report is not None else [],
        "rows": [row.to_json() for row in result.rows],
        "passed": result.passed,
        "complete": result.complete,
        "error": result.error,
    }


@dataclass
class ExperimentOutcome:
    result: CertificationResult
    report: Dict[str, Any]
    paths: List[Path]
    run_id: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.result.passed


def sidecar_path(path: Path) -> Path:
    candidate = path.with_suffix(".json")
    return candidate if candidate != path else path.with_suffix(".provenance.json")


def _record_run(db: Session, config: ExperimentConfig, outcome: ExperimentOutcome) -> Optional[int]:
    repo = RunRepository(db)
    run = ExperimentRun(
        config_hash=config.config_hash,
        model=outcome.result.model.model_id,
        seed=config.seed,
        rows=len(outcome.result.rows),
        passed=outcome.passed,
        complete=outcome.result.complete,
        csv_path=str(outcome.paths[0]) if config.output.format == "csv" else None,
        json_path=str(outcome.paths[-1]),
    )
    try:
        repo.add(run)
        db.commit()
    except SQLAlchemyError:
        db.rollback()
        logger.warning("could not record run for config %s", config.config_hash)
        return None
    log_event(db, run, "certify", {"status": outcome.result.status, "gamma": outcome.result.gamma})
    if outcome.result.error:
        log_event(db, run, "estimation_failed", {"error": outcome.result.error})
    return run.id


def run_experiment(
    config: Union[ExperimentConfig, str, Path, None] = None,
    db: Optional[Session] = None,
) -> ExperimentOutcome:
    """Run `certify` and write the CSV table plus its JSON sidecar (or one JSON report)."""
    cfg = config if isinstance(config, ExperimentConfig) else load_experiment_config(config)
    result = certify(cfg)
    report = experiment_report(cfg, result)

    out = Path(cfg.output.path)
    paths: List[Path] = []
    if cfg.output.format == "csv":
        buf = io.StringIO()
        write_rows_csv(result.rows, buf)
        out.write_text(buf.getvalue(), encoding="utf-8")
        meta = sidecar_path(out)
        meta.write_text(dump_report(report), encoding="utf-8")
        paths = [out, meta]
    else:
        out.write_text(dump_report(report), encoding="utf-8")
        paths = [out]
    logger.info("wrote %s", ", ".join(str(p) for p in paths))

    outcome = ExperimentOutcome(result=result, report=report, paths=paths)
    if db is not None:
        outcome.run_id = _record_run(db, cfg, outcome)
    return outcome

