from __future__ import annotations

import math

import pytest

from whoeffding.errors import (
    ArgumentError,
    CapExceededError,
    ConfigError,
    DivergenceError,
    DomainError,
    UnsupportedError,
    WhoeffdingError,
)
from whoeffding.services.series import closed_series, dyadic_sum, integrate_to_infinity, require_convergent
from whoeffding.utils import (
    derive_seed,
    format_real,
    get_log_level,
    make_rng,
    parse_float,
    parse_float_list,
    stable_hash,
)


def test_derive_seed_is_deterministic_and_distinct_per_index() -> None:
    assert derive_seed(7, 0) == derive_seed(7, 0)
    seeds = {derive_seed(7, i) for i in range(64)}
    assert len(seeds) == 64
    assert derive_seed(7, 0) != derive_seed(8, 0)
    assert all(0 <= s < 2**63 for s in seeds)


def test_make_rng_reproduces_stream() -> None:
    a = make_rng(123).integers(0, 1000, size=10)
    b = make_rng(123).integers(0, 1000, size=10)
    assert a.tolist() == b.tolist()


def test_format_real_round_trips_17_digits() -> None:
    assert format_real(0.1) == "0.10000000000000001"
    assert float(format_real(1 / 3)) == 1 / 3
    assert format_real(2) == "2"


def test_parse_float_accepts_comma_decimal() -> None:
    assert parse_float("0,25") == 0.25
    assert parse_float(" 3.5 ") == 3.5


def test_parse_float_list_separators() -> None:
    assert parse_float_list("50, 100,200") == [50.0, 100.0, 200.0]
    assert parse_float_list("0,3; 0,5") == [0.3, 0.5]
    assert parse_float_list("") == []
    with pytest.raises(ValueError):
        parse_float_list("1, abc")


def test_stable_hash_ignores_key_order() -> None:
    assert stable_hash({"a": 1, "b": [1, 2]}) == stable_hash({"b": [1, 2], "a": 1})
    assert stable_hash({"a": 1}) != stable_hash({"a": 2})


def test_get_log_level_reads_env(monkeypatch) -> None:
    monkeypatch.setenv("WHOEFFDING_LOG_LEVEL", "debug")
    assert get_log_level() == "DEBUG"
    monkeypatch.delenv("WHOEFFDING_LOG_LEVEL", raising=False)
    assert get_log_level() == "WARNING"


def test_error_hierarchy_and_status_codes() -> None:
    assert issubclass(CapExceededError, ArgumentError)
    assert issubclass(DomainError, ValueError)
    assert ArgumentError("x").status_code == 422
    assert UnsupportedError("x").status_code == 409
    assert DivergenceError("x", partial_sum=3.0).partial_sum == 3.0
    err = ConfigError("bad key", line=4)
    assert err.detail == "line 4: bad key"
    assert err.line == 4
    assert isinstance(err, WhoeffdingError)


def test_dyadic_sum_geometric_series() -> None:
    result = dyadic_sum(lambda lo, hi: sum(0.5**k for k in range(int(lo), int(hi))))
    assert result.converged
    assert result.value == pytest.approx(2.0, abs=1e-12)


def test_dyadic_sum_flags_harmonic_series_as_divergent() -> None:
    result = dyadic_sum(lambda lo, hi: sum(1.0 / (k + 1) for k in range(int(lo), int(hi))), max_blocks=30)
    assert result.divergent
    with pytest.raises(DivergenceError):
        require_convergent(result, "harmonic series")


def test_integrate_to_infinity_exponential() -> None:
    result = integrate_to_infinity(lambda s: 2.0 ** (-s), start=0.0)
    assert result.converged
    assert result.value == pytest.approx(1.0 / 0.6931471805599453, rel=1e-10)


def test_dyadic_sum_slow_geometric_series() -> None:
    result = dyadic_sum(lambda lo, hi: sum(0.99**k for k in range(int(lo), int(hi))))
    assert result.converged
    assert result.value == pytest.approx(100.0, rel=1e-10)


def test_integrate_to_infinity_slow_exponential() -> None:
    result = integrate_to_infinity(lambda s: math.exp(-0.01 * s))
    assert result.converged
    assert result.value == pytest.approx(100.0, rel=1e-9)


def test_dyadic_sum_flags_a_slow_power_law_as_divergent() -> None:
    result = dyadic_sum(lambda lo, hi: sum((k + 1.0) ** -0.5 for k in range(int(lo), int(hi))), max_blocks=30)
    assert result.divergent


def test_closed_series_cap() -> None:
    assert closed_series(15.8).value == 15.8
    assert closed_series(15.8).converged
    assert closed_series(2e12).divergent
    assert closed_series(math.inf).divergent
