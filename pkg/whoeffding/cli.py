"""Command line: `python -m whoeffding <bound|tail|gamma|poisson|check|subordinate|certify>`."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from whoeffding import __version__
from whoeffding.config import ExperimentConfig, GammaSettings, OutputSettings, load_experiment_config
from whoeffding.db import session_for_url
from whoeffding.errors import ArgumentError, CapExceededError, WhoeffdingError
from whoeffding.services.concentration import (
    BoundInput,
    GammaReport,
    check_conditions,
    gamma_bound,
    hoeffding_bound,
    iid_hoeffding_bound,
    martingale_residual,
    martingale_tolerance,
    named_drift,
    poisson_residual,
    poisson_solution,
    residual_tolerance,
)
from whoeffding.services.harness import (
    dump_report,
    estimate_tail,
    invariant_mean,
    run_experiment,
    simulate_statistics,
    tail_from_statistics,
)
from whoeffding.services.markov_core import (
    Functional,
    ModelSpec,
    TimeDomain,
    export_trajectory_csv,
    named_functional,
    simulate_path,
)
from whoeffding.services.markov_models import MODEL_NAMES, build_model
from whoeffding.services.subordination import (
    PoissonProcess,
    SubordinatedModel,
    check_R2,
    expected_rate,
    integrated_rate_series,
    parse_subordinator,
    subordinate_model,
)
from whoeffding.utils import derive_seed, format_real, get_log_level, parse_float_list

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2


def _float_list(raw: str) -> List[float]:
    try:
        return parse_float_list(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {raw!r}") from exc


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=MODEL_NAMES, default="ar1")
    common.add_argument("--alpha", type=float, default=1.0, help="flow exponent in [1, 2)")
    common.add_argument("--sub", default=None, help="poisson:LAMBDA | iid:FILE.json | unit")
    common.add_argument("--x0", type=float, default=0.0)
    common.add_argument("--functional", default=None, help="identity | clipped-distance | cosine | constant")
    common.add_argument("--functional-clip", type=float, default=None)
    common.add_argument("--functional-value", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (stdout when omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whoeffding", description="Hoeffding bounds for Wasserstein-ergodic Markov models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    p = sub.add_parser("bound", parents=[common], help="evaluate the Hoeffding bound over a (t, eps) grid")
    p.add_argument("--t", type=_float_list, required=True)
    p.add_argument("--eps", type=_float_list, required=True)
    p.add_argument("--gamma", type=float, default=None, help="explicit gamma instead of gamma_bound")
    p.add_argument("--lip", type=float, default=None)
    p.add_argument("--sup", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None, help="gamma truncation horizon")
    p.add_argument("--one-sided", action="store_true")

    p = sub.add_parser("tail", parents=[common], help="Monte Carlo tail estimate with a 99%% interval")
    p.add_argument("--t", type=_float_list, required=True)
    p.add_argument("--eps", type=_float_list, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--one-sided", action="store_true")
    p.add_argument("--trajectory", default=None, help="also export one path to this CSV")

    p = sub.add_parser("gamma", parents=[common], help="upper bound on the ergodicity coefficient")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--grid", type=_float_list, default=None)

    p = sub.add_parser("poisson", parents=[common], help="Poisson-equation solution and residual checks")
    p.add_argument("--trunc", type=float, default=None)
    p.add_argument("--t", type=_float_list, default=None, help="residual times")
    p.add_argument("--s", type=int, default=None, help="conditioning time for the martingale check")

    p = sub.add_parser("check", parents=[common], help="conditions (i)-(iv) on a probe grid")
    p.add_argument("--drift", choices=("linear", "sqrt"), default="linear")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--eps-iv", type=float, default=0.5)
    p.add_argument("--t-max", type=int, default=6)

    p = sub.add_parser("subordinate", parents=[common], help="rate propagation through a subordinator")
    p.add_argument("--t", type=_float_list, default=[1.0])
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--trajectory", default=None)

    p = sub.add_parser("certify", parents=[common], help="bound versus Monte Carlo over an experiment grid")
    p.add_argument("--config", default=None, help="experiment file; flags below are ignored when given")
    p.add_argument("--t", type=_float_list, default=None)
    p.add_argument("--eps", type=_float_list, default=None)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--one-sided", action="store_true")
    p.add_argument("--ledger", default=None, help="SQLAlchemy URL of the run ledger")
    return parser


# -- helpers -------------------------------------------------------------------------------


def _model(args: argparse.Namespace) -> ModelSpec:
    model = build_model(args.model, args.alpha)
    if args.sub:
        model = subordinate_model(model, parse_subordinator(args.sub))
    return model


def _functional(args: argparse.Namespace, model: ModelSpec) -> Functional:
    name = args.functional or ("cosine" if model.space.is_circle else "identity")
    return named_functional(name, model.space, args.functional_clip, args.functional_value)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_real(value)
    return str(value)


def _table(columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _report(model: ModelSpec, value: Any, regime: str, provenance: Dict[str, Any], series: List[Any]) -> Dict[str, Any]:
    return {
        "model": model.model_id,
        "params": model.describe(),
        "value": value,
        "regime": regime,
        "provenance": provenance,
        "series": series,
    }


def _emit(args: argparse.Namespace, report: Dict[str, Any], columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> None:
    text = _table(columns, rows) if args.format == "csv" else dump_report(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _gamma_regime(report: GammaReport) -> str:
    if report.divergent:
        return "divergent"
    return "certified" if report.certified else "uncertified"


# -- commands ------------------------------------------------------------------------------


def cmd_bound(args: argparse.Namespace) -> int:
    model = _model(args)
    f = _functional(args, model)
    lip = f.lip if args.lip is None else args.lip
    sup_f = f.sup_norm if args.sup is None else args.sup
    provenance: Dict[str, Any] = {"functional": f.name, "gamma_source": "explicit"}
    if args.gamma is None:
        report = gamma_bound(model, horizon=args.horizon)
        gamma = report.value
        provenance.update({"gamma_source": "gamma_bound", "gamma": report.to_json()})
    else:
        gamma = args.gamma

    rows: List[Dict[str, Any]] = []
    for t in args.t:
        for eps in args.eps:
            inp = BoundInput(lip=lip, sup_f=sup_f, gamma=gamma, eps=eps, t=t, domain=model.time_domain)
            out = hoeffding_bound(inp, one_sided=args.one_sided)
            rows.append(
                {
                    "t": t,
                    "eps": eps,
                    "lip": lip,
                    "sup_f": sup_f,
                    "gamma": gamma,
                    "domain": model.time_domain.value,
                    "bound": out.bound,
                    "regime": out.regime.value,
                    "theta_star": out.theta_star,
                    "exponent": out.exponent,
                    "iid_bound": iid_hoeffding_bound(sup_f, eps, t) if sup_f > 0 else 0.0,
                }
            )
    regimes = {r["regime"] for r in rows}
    value = max(r["bound"] for r in rows) if rows else None
    report = _report(model, value, regimes.pop() if len(regimes) == 1 else "mixed", provenance, rows)
    _emit(args, report, list(rows[0]) if rows else ["t", "eps", "bound"], rows)
    return EXIT_OK


def cmd_tail(args: argparse.Namespace) -> int:
    model = _model(args)
    f = _functional(args, model)
    x0 = model.state(args.x0).value
    pi_f = invariant_mean(model, f)
    rows: List[Dict[str, Any]] = []
    for index, t in enumerate(args.t):
        seed = derive_seed(args.seed, index)
        if len(args.eps) == 1:
            estimates = [estimate_tail(model, f, x0, t, args.eps[0], args.samples, seed, args.one_sided)]
        else:
            if args.samples < 100:
                raise ArgumentError("need at least 100 samples")
            values = simulate_statistics(model, f, x0, model.check_time(t), args.samples, seed)
            estimates = [tail_from_statistics(values, pi_f, t, eps, seed, args.one_sided) for eps in args.eps]
        for est in estimates:
            rows.append({"model": model.model_id, "x0": x0, **est.to_json()})

    if args.trajectory:
        traj = simulate_path(model, x0, max(args.t), args.seed)
        export_trajectory_csv(traj, args.trajectory)

    value = max(r["p_hat"] for r in rows) if rows else None
    provenance = {"functional": f.name, "pi_f": pi_f, "confidence": 0.99}
    columns = ["model", "x0", "t", "eps", "p_hat", "ci_lo", "ci_hi", "n", "seed", "exceedances", "one_sided"]
    _emit(args, _report(model, value, "estimate", provenance, rows), columns, rows)
    return EXIT_OK


def cmd_gamma(args: argparse.Namespace) -> int:
    model = _model(args)
    report = gamma_bound(model, x_grid=args.grid, horizon=args.horizon)
    rows = [{"t": i, "term": v} for i, v in enumerate(report.series)]
    payload = report.to_json()
    series = payload.pop("series")
    _emit(args, _report(model, report.value, _gamma_regime(report), payload, series), ["t", "term"], rows)
    return EXIT_OK


def cmd_poisson(args: argparse.Namespace) -> int:
    model = _model(args)
    f = _functional(args, model)
    x0 = model.state(args.x0).value
    solution = poisson_solution(model, f, x0, args.trunc)
    rows: List[Dict[str, Any]] = []
    ok = True
    for t in args.t or []:
        residual = poisson_residual(model, f, x0, t, args.trunc)
        tolerance = residual_tolerance(model, f, x0, t, args.trunc)
        ok = ok and residual <= tolerance
        rows.append({"check": "poisson", "s": None, "t": t, "residual": residual, "tolerance": tolerance})
        if args.s is not None and model.time_domain is TimeDomain.DISCRETE:
            residual = martingale_residual(model, f, x0, args.s, int(t), args.trunc)
            tolerance = martingale_tolerance(model, f, x0, args.s, int(t), args.trunc)
            ok = ok and residual <= tolerance
            rows.append({"check": "martingale", "s": args.s, "t": t, "residual": residual, "tolerance": tolerance})
    provenance = {
        "functional": f.name,
        "tail_bound": solution.tail_bound,
        "horizon": solution.horizon,
        "pi_f": model.invariant.mean(f),
    }
    report = _report(model, solution.value, "within-tolerance" if ok else "exceeds-tolerance", provenance, rows)
    _emit(args, report, ["check", "s", "t", "residual", "tolerance"], rows)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_check(args: argparse.Namespace) -> int:
    model = _model(args)
    drift = named_drift(args.drift, args.kappa)
    report = check_conditions(model, drift, rho_probe=args.rho, epsilon_iv=args.eps_iv, t_max=args.t_max)
    payload = report.to_json()
    rows = [{"condition": r.name, "passed": r.passed, "value": r.value} for r in report.results]
    out = _report(model, report.passed, "passed" if report.passed else "failed", payload, rows)
    _emit(args, out, ["condition", "passed", "value"], rows)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_subordinate(args: argparse.Namespace) -> int:
    if not args.sub:
        raise ArgumentError("subordinate needs --sub")
    model = _model(args)
    assert isinstance(model, SubordinatedModel)
    x0 = model.state(args.x0).value
    rate = model.base.rate_function()
    gamma = gamma_bound(model, horizon=args.horizon)
    provenance: Dict[str, Any] = {"subordinator": model.spec.describe(), "gamma": gamma.to_json()}
    value: Optional[float] = gamma.value

    if rate is not None:
        provenance["rate_function"] = rate.describe()
        result = integrated_rate_series(model.spec, rate, model.time_domain)
        provenance["integrated_rate"] = result.value if result.converged else None
        provenance["integrated_rate_tail"] = result.tail
        provenance["divergent"] = result.divergent
        if result.converged:
            value = result.value
    if isinstance(model.spec, PoissonProcess):
        r2 = check_R2(model.spec.exponent, 2.0)
        provenance["R2"] = {"passed": r2.passed, "log_ratio_liminf": r2.log_ratio_liminf, "scale_ratio_liminf": r2.scale_ratio_liminf}

    rows: List[Dict[str, Any]] = []
    for t in args.t:
        row: Dict[str, Any] = {"t": t, "expected_rate": expected_rate(model.spec, rate, t) if rate is not None else None}
        try:
            row["w_to_invariant"] = model.w_to_invariant(x0, model.check_time(t))
        except CapExceededError:
            row["w_to_invariant"] = None
        rows.append(row)

    if args.trajectory:
        export_trajectory_csv(simulate_path(model, x0, max(args.t), args.seed), args.trajectory)

    regime = "divergent" if provenance.get("divergent") else _gamma_regime(gamma)
    _emit(args, _report(model, value, regime, provenance, rows), ["t", "expected_rate", "w_to_invariant"], rows)
    return EXIT_OK


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = load_experiment_config(args.config)
        updates: Dict[str, Any] = {}
        if args.out:
            updates["output"] = OutputSettings(path=args.out, format=args.format)
        return cfg.model_copy(update=updates) if updates else cfg
    try:
        return ExperimentConfig(
            model=args.model,
            alpha=args.alpha,
            functional=args.functional or ("cosine" if args.model == "torus" else "identity"),
            functional_clip=args.functional_clip,
            functional_value=args.functional_value,
            x0=args.x0,
            t=args.t or [],
            eps=args.eps or [],
            samples=args.samples,
            seed=args.seed,
            subordinator=args.sub,
            one_sided=args.one_sided,
            gamma=GammaSettings(value=args.gamma, horizon=args.horizon),
            output=OutputSettings(path=args.out or ("certify.json" if args.format == "json" else "certify.csv"), format=args.format),
        )
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err.get("loc", ()))
        raise ArgumentError(f"{where}: {err.get('msg')}") from exc


def cmd_certify(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    db = session_for_url(args.ledger) if args.ledger else None
    try:
        outcome = run_experiment(config, db=db)
    finally:
        if db is not None:
            db.close()
    result = outcome.result
    sys.stdout.write(
        f"{result.status}: {len(result.rows)} rows, "
        f"{sum(1 for r in result.rows if not r.passed)} violations -> {', '.join(str(p) for p in outcome.paths)}\n"
    )
    if not result.complete:
        sys.stderr.write(f"error: {result.error}\n")
        return EXIT_ERROR
    return EXIT_OK if result.passed else EXIT_FAILED


COMMANDS = {
    "bound": cmd_bound,
    "tail": cmd_tail,
    "gamma": cmd_gamma,
    "poisson": cmd_poisson,
    "check": cmd_check,
    "subordinate": cmd_subordinate,
    "certify": cmd_certify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=get_log_level(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except WhoeffdingError as exc:
        sys.stderr.write(f"error: {exc.detail}\n")
        return EXIT_ERROR
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
