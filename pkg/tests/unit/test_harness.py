from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
from scipy import stats
from sqlalchemy.orm import Session

from whoeffding.config import ExperimentConfig, GammaSettings, OutputSettings
from whoeffding.errors import ArgumentError, ConfigError
from whoeffding.repositories.run_repository import RunRepository
from whoeffding.services import harness
from whoeffding.services.concentration import BoundReport, Regime
from whoeffding.services.harness import (
    BLOCK_SIZE,
    CSV_COLUMNS,
    certify,
    clopper_pearson,
    dump_report,
    estimate_tail,
    run_experiment,
    sidecar_path,
    simulate_statistics,
    tail_from_statistics,
)
from whoeffding.services.markov_core import named_functional
from whoeffding.services.markov_models import Ar1BinaryModel, FlowModel, TorusWalkModel


def _config(tmp_path, **overrides) -> ExperimentConfig:
    data = {
        "model": "ar1",
        "t": [20.0, 40.0],
        "eps": [0.2, 0.3],
        "samples": 2000,
        "seed": 11,
        "output": OutputSettings(path=str(tmp_path / "certify.csv"), format="csv"),
    }
    data.update(overrides)
    return ExperimentConfig(**data)


def _ar1_exact_tail(x0: float, t: int, eps: float) -> float:
    codes = np.arange(1 << (t - 1))
    noise = 0.5 * ((codes[:, None] >> np.arange(t - 1)) & 1)
    x = np.full(codes.size, x0)
    total = x.copy()
    for k in range(t - 1):
        x = 0.5 * x + noise[:, k]
        total += x
    return float(np.mean(np.abs(total - 0.5 * t) > t * eps))


# -- intervals -----------------------------------------------------------------------------


def test_clopper_pearson_edges() -> None:
    lo, hi = clopper_pearson(0, 100)
    assert lo == 0.0
    assert hi == pytest.approx(1.0 - 0.005 ** (1 / 100), rel=1e-9)
    lo, hi = clopper_pearson(100, 100)
    assert hi == 1.0
    lo, hi = clopper_pearson(30, 100)
    assert lo < 0.3 < hi
    with pytest.raises(ArgumentError):
        clopper_pearson(5, 4)


@pytest.mark.parametrize("p", [0.01, 0.1, 0.5])
def test_clopper_pearson_exact_coverage(p: float) -> None:
    n = 500
    k = np.arange(n + 1)
    covered = np.array([lo <= p <= hi for lo, hi in (clopper_pearson(int(i), n) for i in k)])
    assert float(np.sum(stats.binom.pmf(k, n, p)[covered])) >= 0.99


@pytest.mark.parametrize("p", [0.01, 0.1, 0.5])
def test_bernoulli_stream_meta_trials(p: float) -> None:
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(1000):
        values = (rng.random(200) < p).astype(float)
        est = tail_from_statistics(values, 0.0, 1.0, 0.5, seed=0)
        hits += est.ci_lo <= p <= est.ci_hi
    assert hits >= 980


# -- tail estimates ------------------------------------------------------------------------


def test_constant_functional_never_exceeds(ar1: Ar1BinaryModel) -> None:
    f = named_functional("constant", ar1.space, value=0.7)
    est = estimate_tail(ar1, f, 0.3, 25, 0.01, 500, seed=1)
    assert est.p_hat == 0.0
    assert est.ci_lo == 0.0
    assert est.ci_lo <= est.p_hat <= est.ci_hi


@pytest.mark.parametrize("t, eps", [(1.0, 0.5), (1.0, 0.7), (3.0, 0.2), (3.0, 0.4)])
def test_flow_tail_is_an_indicator(flow: FlowModel, t: float, eps: float) -> None:
    f = named_functional("identity", flow.space)
    est = estimate_tail(flow, f, 1.0, t, eps, 200, seed=0)
    assert est.p_hat == float(abs(1.0 - math.exp(-t)) > t * eps)


def test_ar1_tail_matches_exact_enumeration(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    exact = _ar1_exact_tail(0.0, 12, 0.3)
    est = estimate_tail(ar1, f, 0.0, 12, 0.3, 20000, seed=123)
    assert 0.0 < exact < 1.0
    assert est.ci_lo <= exact <= est.ci_hi


def test_estimate_tail_is_deterministic(torus: TorusWalkModel) -> None:
    f = named_functional("cosine", torus.space)
    a = estimate_tail(torus, f, 0.0, 30, 0.1, 1000, seed=5)
    b = estimate_tail(torus, f, 0.0, 30, 0.1, 1000, seed=5)
    assert a == b


def test_block_seeding_keeps_prefixes_stable(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    short = simulate_statistics(ar1, f, 0.0, 10, BLOCK_SIZE, seed=3)
    long = simulate_statistics(ar1, f, 0.0, 10, BLOCK_SIZE + 50, seed=3)
    assert np.array_equal(short, long[:BLOCK_SIZE])
    assert long.size == BLOCK_SIZE + 50


def test_estimate_tail_rejects_bad_arguments(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    with pytest.raises(ArgumentError):
        estimate_tail(ar1, f, 0.0, 10, 0.1, 99, seed=0)
    with pytest.raises(ArgumentError):
        estimate_tail(ar1, f, 0.0, 10, 0.0, 100, seed=0)
    with pytest.raises(ArgumentError):
        estimate_tail(ar1, f, 0.0, 2.5, 0.1, 100, seed=0)


def test_one_sided_counts_upper_exceedances_only() -> None:
    values = np.array([10.0, -10.0, 0.0, 0.0])
    two = tail_from_statistics(values, 0.0, 1.0, 1.0, seed=0)
    one = tail_from_statistics(values, 0.0, 1.0, 1.0, seed=0, one_sided=True)
    assert (two.exceedances, one.exceedances) == (2, 1)


# -- certification -------------------------------------------------------------------------


def test_certify_ar1_small_grid_passes(tmp_path) -> None:
    result = certify(_config(tmp_path))
    assert result.complete
    assert result.passed
    assert result.status == "certified"
    assert [(r.t, r.eps) for r in result.rows] == [(20.0, 0.2), (20.0, 0.3), (40.0, 0.2), (40.0, 0.3)]
    assert all(r.ci_lo <= r.bound for r in result.rows)
    assert result.rows[0].seed == result.rows[1].seed != result.rows[2].seed
    assert result.gamma_report is not None and result.gamma_report.certified


def test_certify_vacuous_points_always_pass(tmp_path) -> None:
    result = certify(_config(tmp_path, t=[1.0, 2.0], eps=[0.1], samples=200))
    assert all(r.regime == "vacuous" and r.bound == 1.0 for r in result.rows)
    assert result.passed


def test_certify_empty_grid_returns_no_rows(tmp_path) -> None:
    result = certify(_config(tmp_path, t=[], eps=[]))
    assert result.rows == []
    assert result.passed


def test_certify_reports_violations(monkeypatch, tmp_path) -> None:
    def tight_bound(inp, one_sided=False):
        return BoundReport(bound=0.0, theta_star=1.0, regime=Regime.INFORMATIVE, exponent=-50.0, horizon_factor=inp.horizon_factor)

    monkeypatch.setattr(harness, "hoeffding_bound", tight_bound)
    result = certify(_config(tmp_path, model="flow", x0=1.0, t=[1.0], eps=[0.5], samples=100, gamma=GammaSettings(value=1.0)))
    assert result.status == "violated"
    row = result.rows[0]
    assert (row.p_hat, row.passed, row.slack) == (1.0, False, 0.0)


def test_certify_flags_partial_results(monkeypatch, tmp_path) -> None:
    real = harness.simulate_statistics
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise ArgumentError("sampler exploded")
        return real(*args, **kwargs)

    monkeypatch.setattr(harness, "simulate_statistics", flaky)
    result = certify(_config(tmp_path, t=[10.0, 20.0, 30.0], eps=[0.5], samples=100))
    assert result.status == "partial"
    assert len(result.rows) == 1
    assert "t=20" in result.error


def test_certify_missing_invariant_mean_is_a_config_error(monkeypatch, tmp_path) -> None:
    def broken(self, f):
        return math.nan

    monkeypatch.setattr(type(Ar1BinaryModel().invariant), "mean", broken)
    with pytest.raises(ConfigError):
        certify(_config(tmp_path))


def test_certify_rejects_functional_for_the_space(tmp_path) -> None:
    with pytest.raises(ConfigError):
        certify(_config(tmp_path, model="torus", functional="identity"))


@pytest.mark.slow
def test_certify_ar1_grid(tmp_path) -> None:
    result = certify(_config(tmp_path, t=[50.0, 100.0, 200.0], eps=[0.2, 0.3], samples=100_000))
    assert result.passed


@pytest.mark.slow
@pytest.mark.parametrize(
    "overrides",
    [
        {"model": "torus", "functional": "cosine", "t": [50.0, 100.0]},
        {"model": "flow", "x0": 1.0, "t": [5.0, 10.0]},
        {"model": "torus", "functional": "cosine", "subordinator": "poisson:1", "t": [5.0, 10.0]},
        {"model": "flow", "x0": 1.0, "subordinator": "poisson:1", "t": [5.0, 10.0]},
    ],
    ids=["torus", "flow", "torus-poisson", "flow-poisson"],
)
def test_certify_model_variants(tmp_path, overrides) -> None:
    result = certify(_config(tmp_path, eps=[0.2, 0.3], samples=100_000, **overrides))
    assert result.passed


# -- reports -------------------------------------------------------------------------------


def test_run_experiment_writes_csv_and_sidecar(tmp_path) -> None:
    cfg = _config(tmp_path)
    outcome = run_experiment(cfg)
    csv_path, json_path = outcome.paths
    assert json_path == tmp_path / "certify.json"
    with csv_path.open(encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 5
    assert rows[1][-2] in ("true", "false")
    report = json.loads(json_path.read_text(encoding="utf-8"))
    assert report["model"] == "ar1"
    assert report["regime"] == "certified"
    assert report["provenance"]["config_hash"] == cfg.config_hash
    assert report["provenance"]["truncation_tails"]["gamma"] >= 0
    assert len(report["series"]) == 17


def test_run_experiment_is_byte_identical(tmp_path) -> None:
    cfg = _config(tmp_path)
    first = [p.read_bytes() for p in run_experiment(cfg).paths]
    second = [p.read_bytes() for p in run_experiment(cfg).paths]
    assert first == second


def test_run_experiment_empty_grid_writes_header_only(tmp_path) -> None:
    outcome = run_experiment(_config(tmp_path, t=[], eps=[]))
    assert outcome.paths[0].read_text(encoding="utf-8") == ",".join(CSV_COLUMNS) + "\n"
    assert outcome.passed


def test_run_experiment_json_format(tmp_path) -> None:
    out = tmp_path / "report.json"
    outcome = run_experiment(_config(tmp_path, output=OutputSettings(path=str(out), format="json"), t=[10.0], eps=[0.5]))
    assert outcome.paths == [out]
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["rows"][0]["t"] == 10.0
    assert sidecar_path(out).name == "report.provenance.json"


def test_run_experiment_poisson_demo_reports_integrated_rate(tmp_path) -> None:
    cfg = _config(tmp_path, model="flow", x0=1.0, subordinator="poisson:1", t=[2.0], eps=[0.5], samples=500)
    report = run_experiment(cfg).report
    provenance = report["provenance"]
    assert provenance["integrated_rate"] == pytest.approx(math.e / (math.e - 1.0), rel=1e-9)
    assert provenance["rate_function"] == {"kind": "exp-decay", "c": 1.0}
    assert report["model"] == "flow+poisson"


def test_run_experiment_from_config_file(tmp_path) -> None:
    cfg_file = tmp_path / "experiment.conf"
    cfg_file.write_text(
        f"""
model = ar1
t = 10
eps = 0.5
samples = 200
output = {tmp_path / 'out.csv'}
""".strip(),
        encoding="utf-8",
    )
    outcome = run_experiment(cfg_file)
    assert outcome.paths[0] == tmp_path / "out.csv"
    assert len(outcome.result.rows) == 1


def test_run_experiment_records_ledger(db_session: Session, tmp_path) -> None:
    cfg = _config(tmp_path, t=[10.0], eps=[0.5])
    outcome = run_experiment(cfg, db=db_session)
    assert outcome.run_id is not None
    run = RunRepository(db_session).get(outcome.run_id)
    assert run is not None
    assert run.config_hash == cfg.config_hash
    assert run.passed is True
    assert run.rows == 1
    assert [e.action for e in run.events] == ["certify"]


def test_dump_report_is_strict_json() -> None:
    text = dump_report({"b": math.inf, "a": [np.float64(1.5), np.int64(2)], "r": Regime.VACUOUS})
    assert json.loads(text) == {"a": [1.5, 2], "b": None, "r": "vacuous"}
    assert text.endswith("\n")
