"""Tests for the analyticity-failure and kinked-value-function constructions."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import erfc

from cmdual.cmcalc import check_cm_order, nfold_value
from cmdual.counterexamples import (
    AnalyticBump,
    Cex1Instance,
    _ScaledReciprocalTail,
    bump_f,
    cex1_divergence,
    cex1_verify_finite,
    cex2_build,
    cex2_gap,
)
from cmdual.duality import PowerUtility, footnote_utility
from cmdual.errors import ConstantRRA, EnvelopeViolation
from cmdual.solver import sd_equivalence_audit


@pytest.fixture(scope="module")
def small_instance():
    return Cex1Instance(order=2, n_trunc=10**4)


def test_bump_basic_properties():
    ab = AnalyticBump(10**4)
    ys = np.linspace(0.01, 50.0, 3000)
    fv = ab.f(ys)
    assert fv.min() >= 1.0 - 1e-9
    assert fv.max() <= 2.0
    # decreasing (strictly between spikes contributes below double resolution)
    assert np.all(np.diff(fv) <= 0.0)
    assert np.all(ab.fprime(np.arange(1.0, 21.0)) < 0.0)
    assert bump_f(ab, 1e-9) == pytest.approx(2.0, abs=1e-9)
    assert bump_f(ab, 1e6) >= 1.0 - 1e-12


def test_bump_spike_lower_bound():
    ab = AnalyticBump(10**4)
    i = np.arange(1.0, 21.0)
    assert np.all(-ab.fprime(i) >= i**2 / ab.C * (1.0 - 1e-12))
    # the i = 3 spike alone already forces -f'(3) >= 9/C
    assert -float(ab.fprime(np.array([3.0]))[0]) >= 9.0 / ab.C


def test_bump_running_integral_against_quadrature():
    ab = AnalyticBump(50)

    def g_direct(x):
        return float(ab.g(np.array([x]))[0])

    for y in (0.5, 1.7, 3.0, 6.2):
        pts = [v for v in range(1, 8) if v < y]
        brute, _ = integrate.quad(g_direct, 0, y, points=pts, limit=300,
                                  epsabs=1e-13, epsrel=1e-13)
        assert float(ab.running_integral(np.array([y]))[0]) == pytest.approx(
            brute, rel=1e-11, abs=1e-12)


def test_two_minus_bump_is_not_decreasing():
    ab = AnalyticBump(100)
    rep = check_cm_order(lambda x: 2.0 - bump_f(ab, x), 1, [1.0], h=1e-3)
    assert not rep.ok
    assert rep.violation[0] == 1


def test_scaled_tail_matches_spike_quadrature():
    ab = AnalyticBump(60)
    tail = _ScaledReciprocalTail(2, ab)

    def brute_sum(y, k):
        m = 2 - 1 - k
        total = 0.0
        for i in range(1, 61):
            sig = i**-4.0
            hi = i + 14 * sig
            if hi <= y:
                continue
            pts = [p for p in (i - 14 * sig, i) if y < p < hi]
            val, _ = integrate.quad(
                lambda t: (t - y) ** m / math.factorial(m) * t**-3.0
                * erfc((t - i) / (math.sqrt(2.0) * sig)),
                y, hi, points=pts, epsabs=1e-16, epsrel=1e-13, limit=400)
            total += i**-2.0 * val
        return total

    for k in (0, 1):
        for y in (0.5, 1.0, 2.5, 4.0, 7.3, 25.0):
            got = float(tail._tail_sum(np.array([y]), k)[0])
            assert got == pytest.approx(brute_sum(y, k), rel=1e-9, abs=1e-14)


def test_degenerate_conjugate_is_reciprocal(small_instance):
    ref = small_instance.degenerate_conjugate
    ys = np.array([0.3, 1.0, 5.0])
    for k in range(0, 4):
        want = (-1.0) ** k * math.factorial(k) * ys ** (-k - 1.0)
        assert np.allclose(ref.derivative(k, ys), want, rtol=1e-13)


def test_degenerate_value_function_nfold(small_instance):
    W = small_instance.value_function(degenerate=True)
    assert nfold_value(W, 4.0) == pytest.approx(0.25, rel=1e-8)


def test_value_function_fast_path_matches_generic_quadrature(small_instance):
    W = small_instance.value_function()
    fast = small_instance.conjugate
    for y in (0.7, 1.0, 3.0):
        assert nfold_value(W, y) == pytest.approx(
            float(fast.value(np.array([y]))[0]), rel=1e-6)


def test_conjugate_passes_order_check(small_instance):
    W = small_instance.value_function()
    assert check_cm_order(W, 2, [0.5, 1.0, 4.0]).ok


def test_envelope_holds_at_random_points(small_instance):
    rng = np.random.default_rng(2)
    ys = rng.uniform(0.1, 20.0, size=100)
    for k in range(0, small_instance.order + 1):
        small_instance.check_envelope(ys, k)


def test_envelope_violation_detected(small_instance):
    broken = Cex1Instance(order=2, n_trunc=10**3)
    with pytest.raises(EnvelopeViolation):
        # scaling the reference by 3 leaves the [1, 2] envelope
        got = broken.degenerate_conjugate

        class Fake:
            def derivative(self, k, ys):
                return 3.0 * got.derivative(k, ys)

        object.__setattr__(broken, "conjugate", Fake())
        broken.check_envelope(np.array([1.0]), 1)


def test_unit_mean_and_weights(small_instance):
    inst = small_instance
    assert inst.mean() == pytest.approx(1.0, abs=1e-12)
    assert 0.0 < inst.eps < 1.0
    total = inst.base_prob + float(np.sum(inst.atom_probs))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert inst.eps == pytest.approx(0.5757, abs=2e-4)


def test_finite_orders_converge(small_instance):
    lo = cex1_verify_finite(small_instance, 10**3)
    hi = cex1_verify_finite(small_instance, 10**4)
    for k in (1, 2):
        assert (-1.0) ** k * hi[k] > 0.0
        assert abs(hi[k] - lo[k]) <= 1e-6 * abs(hi[k])


def test_dual_value_itself_is_finite(small_instance):
    # order zero: the law is bounded below, so E[V(Z)] converges
    inst = small_instance
    vals = inst.conjugate.value(inst.atoms)
    v0 = (inst.base_prob * float(inst.conjugate.value(np.array([0.5]))[0])
          + float(np.dot(inst.atom_probs, vals)))
    assert math.isfinite(v0) and v0 > 0.0
    # tail of the series is negligible: V(i) ~ 1/i, weights ~ i**-3
    assert float(np.dot(inst.atom_probs[-100:], vals[-100:])) < 1e-6 * v0


def test_divergence_tracks_harmonic_oracle(small_instance):
    rep = cex1_divergence(small_instance, truncations=(10**2, 10**3, 10**4))
    assert rep.diverges
    for inc, orc in zip(rep.increments, rep.oracle_increments):
        assert inc > 0
        assert abs(inc - orc) <= 0.25 * orc


def test_order_three_envelope():
    inst = Cex1Instance(order=3, n_trunc=10**3)
    rng = np.random.default_rng(4)
    ys = rng.uniform(0.2, 15.0, size=40)
    for k in range(0, 4):
        inst.check_envelope(ys, k)


# ---- counterexample 2 ----------------------------------------------------------


@pytest.fixture(scope="module")
def market60():
    return cex2_build(n_states=60)


def test_cex2_invariants(market60):
    inst = market60
    p = np.asarray(inst.probs)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p > 0)
    assert p[0] <= 0.25
    assert p[1] >= 0.5
    foc = inst.expectation(lambda s: inst.utility.marginal(s) * (1.0 - s))
    assert abs(foc) <= 1e-12
    assert -1.0 < inst.delta_hat < 2.0
    assert abs(inst.delta_hat - 1.0) > 1e-6
    assert 1.0 < inst.mean_payoff() < 2.0


def test_cex2_one_share_is_optimal_at_unit_wealth(market60):
    from cmdual.counterexamples import _inner_max

    value, delta = _inner_max(market60, 1.0)
    assert delta == pytest.approx(1.0, abs=1e-6)
    assert value == pytest.approx(
        market60.expectation(market60.utility.value), abs=1e-12)


def test_cex2_quadratic_max_at_delta_hat(market60):
    from scipy import optimize

    res = optimize.minimize_scalar(lambda d: -market60.quadratic_form(d),
                                   bounds=(-1.0, 2.0), method="bounded",
                                   options={"xatol": 1e-12})
    assert float(res.x) == pytest.approx(market60.delta_hat, abs=1e-6)


def test_cex2_gap_straddled(market60):
    rep = cex2_gap(market60, eps_list=(1e-2, 1e-3))
    assert rep.gap > 0
    assert rep.d_plus[-1] > rep.midpoint > rep.d_minus[-1]
    # trend toward the respective bounds
    assert abs(rep.d_plus[-1] - rep.q_at_hat) < abs(rep.d_plus[0] - rep.q_at_hat)
    assert abs(rep.d_minus[-1] - rep.q_constrained) < \
        abs(rep.d_minus[0] - rep.q_constrained)


def test_cex2_envelope_integrable(market60):
    def dominating_sum(inst, eps_bar=1.0 / 3.0):
        total = 0.0
        for p, s in zip(inst.probs, inst.payoffs):
            step = 1.0 + inst.delta_hat * (s - 1.0)
            lo, hi = s, s + eps_bar * step
            lo, hi = min(lo, hi), max(lo, hi)
            grid = np.linspace(lo, hi, 40)
            total += p * abs(min(inst.utility.second(g) for g in grid))
        return total

    a = dominating_sum(market60)
    b = dominating_sum(cex2_build(n_states=90))
    assert math.isfinite(a) and math.isfinite(b)
    assert abs(a - b) <= 1e-6 * abs(a)


def test_cex2_rejects_constant_rra():
    with pytest.raises(ConstantRRA):
        cex2_build(PowerUtility(-1.0), n_states=10)


def test_inner_max_warns_on_boundary_optimum():
    from cmdual.counterexamples import Cex2Instance, _inner_max
    from cmdual.errors import OptimumAtBoundary

    # every payoff beats cash, so the best position is the admissible limit
    inst = Cex2Instance(footnote_utility(1), 1, (0.5, 0.5), (2.0, 1.5), 0.5)
    with pytest.warns(OptimumAtBoundary):
        _inner_max(inst, 1.0)


def test_cex2_market_audit_five_states():
    inst = cex2_build(n_states=4)
    fm = inst.to_finite_market()
    # the physical measure is not even a deflator: E[S1] > S0
    assert not fm.contains_deflator(np.ones(len(inst.probs)))
    report = sd_equivalence_audit(fm)
    if report.maximal_exists:
        assert report.all_agree


def test_cex2_accepts_general_footnote_exponent():
    inst = cex2_build(footnote_utility(2), n_states=40)
    assert -1.0 < inst.delta_hat < 2.0
    rep = cex2_gap(inst, eps_list=(1e-2,))
    assert rep.gap > 0
