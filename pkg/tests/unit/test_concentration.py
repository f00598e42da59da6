from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from whoeffding.errors import ArgumentError, CapExceededError, UnsupportedError
from whoeffding.services.concentration import (
    BoundInput,
    Regime,
    bound_exponent,
    check_condition_iv,
    check_conditions,
    gamma_bound,
    hoeffding_bound,
    iid_hoeffding_bound,
    integrated_centered,
    martingale_residual,
    martingale_tolerance,
    named_drift,
    poisson_residual,
    poisson_solution,
    residual_tolerance,
)
from whoeffding.services.markov_core import TimeDomain, named_functional
from whoeffding.services.markov_models import Ar1BinaryModel, FlowModel, TorusWalkModel
from whoeffding.services.subordination import DiscreteIID, PoissonProcess, subordinate_model


def _ar1_exact_statistics(x0: float, t: int) -> np.ndarray:
    """S_{t-1} = X_0 + ... + X_{t-1} over all 2^(t-1) equally likely noise sequences."""
    steps = t - 1
    codes = np.arange(1 << steps)
    noise = 0.5 * ((codes[:, None] >> np.arange(steps)) & 1)
    x = np.full(codes.size, float(x0))
    total = x.copy()
    for k in range(steps):
        x = 0.5 * x + noise[:, k]
        total += x
    return total


# -- the bound -----------------------------------------------------------------------------


def test_hoeffding_bound_reference_values() -> None:
    inp = BoundInput(lip=1, sup_f=1, gamma=1, eps=0.5, t=100)
    out = hoeffding_bound(inp)
    assert out.regime is Regime.INFORMATIVE
    assert out.bound == pytest.approx(2.0 * math.exp(-1.44), rel=1e-12)
    assert out.theta_star == pytest.approx(48.0 / 800.0)

    cont = hoeffding_bound(inp.model_copy(update={"domain": TimeDomain.CONTINUOUS}))
    assert cont.bound == pytest.approx(2.0 * math.exp(-2304.0 / 1616.0), rel=1e-12)
    assert cont.horizon_factor == 101.0


def test_hoeffding_bound_vacuous_and_degenerate() -> None:
    vacuous = hoeffding_bound(BoundInput(lip=1, sup_f=1, gamma=1, eps=0.01, t=10))
    assert vacuous.regime is Regime.VACUOUS
    assert (vacuous.bound, vacuous.theta_star) == (1.0, 0.0)

    degenerate = hoeffding_bound(BoundInput(lip=0, sup_f=0, gamma=3, eps=0.1, t=10))
    assert degenerate.regime is Regime.DEGENERATE
    assert degenerate.bound == 0.0
    assert degenerate.exponent is None


def test_hoeffding_bound_rejects_bad_input() -> None:
    with pytest.raises(ValidationError):
        BoundInput(lip=-1, sup_f=1, gamma=1, eps=0.1, t=10)
    with pytest.raises(ValidationError):
        BoundInput(lip=1, sup_f=1, gamma=1, eps=0.0, t=10)
    with pytest.raises(ValidationError):
        BoundInput(lip=1, sup_f=1, gamma=math.inf, eps=0.1, t=10)


def test_one_sided_bound_drops_the_factor_two() -> None:
    inp = BoundInput(lip=1, sup_f=1, gamma=1, eps=0.5, t=200)
    assert hoeffding_bound(inp, one_sided=True).bound == pytest.approx(0.5 * hoeffding_bound(inp).bound)


def test_bound_is_monotone_in_t_and_eps() -> None:
    values = [hoeffding_bound(BoundInput(lip=1, sup_f=1, gamma=1, eps=0.5, t=t)).bound for t in (20, 50, 100, 400)]
    assert values == sorted(values, reverse=True)
    values = [hoeffding_bound(BoundInput(lip=1, sup_f=1, gamma=1, eps=e, t=100)).bound for e in (0.1, 0.3, 0.5, 0.9)]
    assert values == sorted(values, reverse=True)


def test_theta_star_minimizes_the_exponent() -> None:
    inp = BoundInput(lip=1.5, sup_f=0.7, gamma=2.0, eps=0.4, t=300)
    out = hoeffding_bound(inp)
    assert bound_exponent(inp, out.theta_star) == pytest.approx(out.exponent, rel=1e-12)
    for factor in (0.9, 1.1, 0.5, 2.0):
        assert bound_exponent(inp, factor * out.theta_star) >= out.exponent


def test_scale_covariance() -> None:
    base = BoundInput(lip=1, sup_f=1, gamma=1.2, eps=0.3, t=150)
    ref = hoeffding_bound(base)
    for c in (0.5, 3.0):
        scaled = hoeffding_bound(BoundInput(lip=c, sup_f=c, gamma=1.2, eps=c * 0.3, t=150))
        assert scaled.theta_star == pytest.approx(ref.theta_star, rel=1e-12)
        assert scaled.exponent == pytest.approx(c * ref.exponent, rel=1e-12)


def test_iid_hoeffding_bound() -> None:
    assert iid_hoeffding_bound(1.0, 0.5, 100) == pytest.approx(2.0 * math.exp(-12.5))
    assert iid_hoeffding_bound(0.0, 0.5, 100) == 0.0
    with pytest.raises(ArgumentError):
        iid_hoeffding_bound(1.0, 0.0, 100)


# -- gamma ---------------------------------------------------------------------------------


@pytest.mark.parametrize("alpha, expected", [(1.0, 1.0), (1.5, 2.0), (1.25, 1.0 / 0.75)])
def test_gamma_flow_closed_form(alpha: float, expected: float) -> None:
    report = gamma_bound(FlowModel(alpha))
    assert report.value == pytest.approx(expected, abs=1e-6)
    assert report.closed_form == pytest.approx(expected)
    assert report.certified
    assert report.argmax in (-1.0, 1.0)


def test_gamma_flow_needs_the_boundary_in_the_grid() -> None:
    report = gamma_bound(FlowModel(), x_grid=[0.0, 0.5])
    assert not report.certified


def test_gamma_ar1_is_finite_and_certified(ar1: Ar1BinaryModel) -> None:
    report = gamma_bound(ar1)
    exact_terms = sum(ar1.w_to_invariant(0.0, s) for s in range(17))
    assert report.certified
    assert report.lipschitz_correction == pytest.approx(1.0 / 16.0)
    assert report.value >= exact_terms
    assert report.value == pytest.approx(1.0 + 1.0 / 16.0, abs=1e-9)
    assert report.argmax == 0.0
    assert len(report.series) == 17


def test_gamma_ar1_horizon_above_cap(ar1: Ar1BinaryModel) -> None:
    with pytest.raises(CapExceededError):
        gamma_bound(ar1, horizon=40)
    with pytest.raises(ArgumentError):
        gamma_bound(ar1, x_grid=[])


def test_gamma_torus_is_uncertified(torus: TorusWalkModel) -> None:
    report = gamma_bound(torus, horizon=12)
    assert not report.certified
    assert report.series[0] == pytest.approx(math.pi / 2, abs=1e-10)
    assert report.value == pytest.approx(sum(report.series), rel=1e-12)


def test_gamma_torus_default_horizon_is_not_divergent(torus: TorusWalkModel) -> None:
    report = gamma_bound(torus)
    assert not report.certified
    assert not report.divergent
    assert len(report.series) == 31


def test_gamma_flags_a_series_without_decay(monkeypatch, torus: TorusWalkModel) -> None:
    monkeypatch.setattr(TorusWalkModel, "w_to_invariant", lambda self, x, t: 1.0)
    report = gamma_bound(torus, horizon=15)
    assert not report.certified
    assert report.divergent


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_gamma_poisson_subordinated_flow(lam: float) -> None:
    report = gamma_bound(subordinate_model(FlowModel(), PoissonProcess(lam)))
    expected = math.e / (lam * (math.e - 1.0))
    assert report.value == pytest.approx(expected, rel=1e-9)
    assert report.rate_propagation == pytest.approx(expected, rel=1e-9)
    assert report.strategy == "renewal/monotone-abs"


def test_gamma_unit_subordination_matches_base(ar1: Ar1BinaryModel) -> None:
    sub = subordinate_model(ar1, DiscreteIID.unit())
    assert gamma_bound(sub).value == pytest.approx(gamma_bound(ar1).value, rel=1e-12)


# -- exact certification on enumerable instances -------------------------------------------


@pytest.mark.parametrize("x0", [0.0, 1.0])
def test_exact_tail_never_exceeds_the_bound(ar1: Ar1BinaryModel, x0: float) -> None:
    gamma = gamma_bound(ar1).value
    for t in range(1, 13):
        stats = _ar1_exact_statistics(x0, t)
        for eps in np.round(np.arange(0.1, 1.0, 0.1), 1):
            exact = float(np.mean(np.abs(stats - 0.5 * t) > t * eps))
            bound = hoeffding_bound(BoundInput(lip=1, sup_f=1, gamma=gamma, eps=float(eps), t=t)).bound
            assert exact <= bound


def test_exact_statistics_helper_matches_closed_form_mean() -> None:
    stats = _ar1_exact_statistics(0.0, 12)
    expected = sum((0.0 - 0.5) * 2.0 ** (-s) + 0.5 for s in range(12))
    assert stats.size == 2048
    assert stats.mean() == pytest.approx(expected, abs=1e-12)


# -- Poisson equation ----------------------------------------------------------------------


def test_poisson_solution_ar1_identity(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    for x in (0.0, 0.25, 1.0):
        solution = poisson_solution(ar1, f, x, trunc=60)
        assert solution.value == pytest.approx(2.0 * x - 1.0, abs=1e-9)
        assert solution.tail_bound <= 1e-9


def test_poisson_solution_flow_and_torus(flow: FlowModel, torus: TorusWalkModel) -> None:
    identity = named_functional("identity", flow.space)
    assert poisson_solution(flow, identity, 1.0).value == pytest.approx(1.0, abs=1e-12)
    slow = FlowModel(1.5)
    solution = poisson_solution(slow, identity, 1.0, trunc=60)
    assert abs(solution.value - 2.0) <= solution.tail_bound + 1e-12
    cosine = named_functional("cosine", torus.space)
    assert poisson_solution(torus, cosine, 0.0).value == pytest.approx(1.0 / (1.0 - math.cos(1.0)), abs=1e-12)


def test_poisson_solution_sup_norm_is_bounded_by_lip_gamma(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    gamma = gamma_bound(ar1).value
    for x in np.linspace(0.0, 1.0, 9):
        assert abs(poisson_solution(ar1, f, x).value) <= f.lip * gamma + 1e-12


def test_poisson_solution_of_a_constant_is_zero(ar1: Ar1BinaryModel) -> None:
    f = named_functional("constant", ar1.space, value=4.0)
    solution = poisson_solution(ar1, f, 0.3)
    assert (solution.value, solution.tail_bound) == (0.0, 0.0)
    with pytest.raises(ArgumentError):
        poisson_solution(ar1, named_functional("identity", ar1.space), 0.3, trunc=0)


def test_poisson_solution_scales_with_the_functional(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    base = poisson_solution(ar1, f, 0.1).value
    assert poisson_solution(ar1, f.scaled(-2.0), 0.1).value == pytest.approx(-2.0 * base, abs=1e-12)


def test_poisson_residual_hand_example(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    assert poisson_residual(ar1, f, 0.0, 1) <= 1e-12
    for t in (1, 2, 5):
        for x in (0.0, 0.3, 1.0):
            assert poisson_residual(ar1, f, x, t) <= residual_tolerance(ar1, f, x, t)


def test_poisson_residual_clipped_distance_uses_the_cap() -> None:
    model = Ar1BinaryModel()
    model.exact_cap = 8
    f = named_functional("clipped-distance", model.space, clip=0.5)
    solution = poisson_solution(model, f, 0.2, trunc=60)
    assert solution.horizon == 9.0
    assert solution.tail_bound == pytest.approx(2.0 * 2.0**-9 * model.rate_constant(0.2))
    assert poisson_residual(model, f, 0.2, 2, trunc=10) <= residual_tolerance(model, f, 0.2, 2, trunc=10)


def test_poisson_residual_torus_and_flow(torus: TorusWalkModel, flow: FlowModel) -> None:
    cosine = named_functional("cosine", torus.space)
    for t in (1, 3):
        assert poisson_residual(torus, cosine, 0.5, t) <= residual_tolerance(torus, cosine, 0.5, t)
    identity = named_functional("identity", flow.space)
    assert poisson_residual(flow, identity, 0.8, 2.5) <= residual_tolerance(flow, identity, 0.8, 2.5)


def test_torus_martingale_residual_cosine(torus: TorusWalkModel) -> None:
    cosine = named_functional("cosine", torus.space)
    tolerance = martingale_tolerance(torus, cosine, 0.0, 1, 3)
    assert tolerance < 1e-6
    assert martingale_residual(torus, cosine, 0.0, 1, 3) <= tolerance


def test_torus_martingale_residual_clipped_distance(torus: TorusWalkModel) -> None:
    f = named_functional("clipped-distance", torus.space)
    tolerance = martingale_tolerance(torus, f, 0.0, 1, 3, trunc=10)
    assert math.isfinite(tolerance)
    assert martingale_residual(torus, f, 0.0, 1, 3, trunc=10) <= tolerance


def test_torus_clipped_distance_beyond_the_cap_is_unsupported(torus: TorusWalkModel) -> None:
    f = named_functional("clipped-distance", torus.space)
    solution = poisson_solution(torus, f, 0.0)
    assert solution.horizon == float(torus.exact_cap + 1)
    assert solution.tail_bound == math.inf
    with pytest.raises(UnsupportedError):
        residual_tolerance(torus, f, 0.0, 2)
    with pytest.raises(UnsupportedError):
        martingale_tolerance(torus, f, 0.0, 1, 3)


def test_integrated_centered_flow(flow: FlowModel) -> None:
    f = named_functional("identity", flow.space)
    assert integrated_centered(flow, f, 1.0, 2.0) == pytest.approx(1.0 - math.exp(-2.0))
    assert integrated_centered(flow, f, 1.0, 0.0) == 0.0


def test_martingale_residual_by_enumeration(ar1: Ar1BinaryModel) -> None:
    f = named_functional("identity", ar1.space)
    assert martingale_residual(ar1, f, 0.0, 1, 2) <= 1e-12
    for s, t in ((0, 3), (2, 5)):
        assert martingale_residual(ar1, f, 0.4, s, t) <= martingale_tolerance(ar1, f, 0.4, s, t)


def test_martingale_residual_rejects_bad_times(ar1: Ar1BinaryModel, flow: FlowModel) -> None:
    f = named_functional("identity", ar1.space)
    with pytest.raises(ArgumentError):
        martingale_residual(ar1, f, 0.0, 2, 2)
    with pytest.raises(UnsupportedError):
        martingale_residual(ar1, f, 0.0, 1, 20)
    with pytest.raises(UnsupportedError):
        martingale_residual(flow, named_functional("identity", flow.space), 0.0, 0, 1)


# -- conditions ----------------------------------------------------------------------------


def test_condition_iv_linear_drift_integral() -> None:
    result = check_condition_iv(named_drift("linear"), 0.5)
    assert result.passed
    assert result.value == pytest.approx(2.0 * math.exp(-0.5), rel=1e-9)


@pytest.mark.parametrize("eps", [0.9, 0.95, 0.99])
def test_condition_iv_linear_drift_close_to_one(eps: float) -> None:
    rate = 1.0 - eps
    result = check_condition_iv(named_drift("linear"), eps, discrete=True)
    assert result.passed
    assert not result.detail["divergent"]
    assert result.value == pytest.approx(math.exp(-rate) / rate, rel=1e-8)
    assert not result.detail["counting_divergent"]
    assert result.detail["counting_sum"] == pytest.approx(math.exp(-rate) / -math.expm1(-rate), rel=1e-8)


def test_condition_iv_sqrt_drift_diverges() -> None:
    result = check_condition_iv(named_drift("sqrt"), 0.5, discrete=True)
    assert not result.passed
    assert result.detail["divergent"]
    assert result.detail["counting_divergent"]
    with pytest.raises(ArgumentError):
        check_condition_iv(named_drift("linear"), 1.0)


def test_drift_numeric_phi_matches_closed_form() -> None:
    linear = named_drift("linear")
    numeric = type(linear)(V=linear.V, phi=linear.phi, kappa=1.0)
    assert numeric.big_phi(math.e**2) == pytest.approx(2.0, rel=1e-10)
    assert numeric.big_phi_inverse(2.0) == pytest.approx(math.e**2, rel=1e-9)
    with pytest.raises(ArgumentError):
        type(linear)(V=linear.V, phi=lambda v: np.asarray(v, dtype=float) ** 2, kappa=1.0)
    with pytest.raises(ArgumentError):
        named_drift("cubic")


def test_check_conditions_ar1_linear_drift(ar1: Ar1BinaryModel) -> None:
    report = check_conditions(ar1, named_drift("linear"))
    assert report.passed
    assert report.get("ii").value == pytest.approx(0.5)
    assert report.get("iii").value <= 1e-12
    assert report.get("iv").value == pytest.approx(2.0 * math.exp(-0.5), rel=1e-9)
    assert "counting_sum" in report.get("iv").detail
    assert report.to_json()["passed"] is True


def test_check_conditions_flow_linear_drift(flow: FlowModel) -> None:
    report = check_conditions(flow, named_drift("linear"), t_max=3)
    assert report.passed
    assert report.get("ii").value == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert "counting_sum" not in report.get("iv").detail


def test_check_conditions_sqrt_drift_fails_iv(ar1: Ar1BinaryModel) -> None:
    report = check_conditions(ar1, named_drift("sqrt"))
    assert not report.passed
    assert report.get("ii").passed
    assert not report.get("iv").passed


def test_check_conditions_torus_fails_contraction(torus: TorusWalkModel) -> None:
    report = check_conditions(torus, named_drift("linear"))
    assert report.get("i").value == pytest.approx(math.pi)
    assert not report.get("ii").passed
    assert report.get("ii").value == pytest.approx(1.0)
    assert not report.passed
    with pytest.raises(KeyError):
        report.get("v")
