"""Constructive failure examples for the smoothness-transfer machinery.

Two constructions live here.  The first builds an analytic conjugate
function whose n-th derivative is the reciprocal-power derivative scaled by
a slowly decreasing analytic factor f in [1, 2], together with a discrete
unit-mean law Z whose tail weights make the (n+1)-st derivative expectation
diverge logarithmically while every lower order stays finite.  The second
builds, for any utility with non-constant relative risk aversion, a
one-period market whose value function fails to be twice differentiable at
the initial wealth 1: the one-sided second-difference quotients straddle a
strictly positive gap between the unconstrained and the constrained
quadratic forms of U''.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import erf, erfc, polygamma

from .cmcalc import DnFunction
from .duality import UtilitySpec, footnote_utility
from .errors import ConstantRRA, EnvelopeViolation, OptimumAtBoundary

__all__ = [
    "AnalyticBump",
    "Cex1Instance",
    "Cex2Instance",
    "bump_f",
    "cex1_verify_finite",
    "cex1_divergence",
    "cex2_build",
    "cex2_gap",
    "DivergenceReport",
    "GapReport",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_PI_2 = math.sqrt(math.pi / 2.0)
ZETA2 = float(polygamma(1, 1))
# erf(1/sqrt(2)): left half-mass of the widest bump term
_ERF_HALF = float(erf(1.0 / math.sqrt(2.0)))


def _zeta_tail(s: int, a) -> np.ndarray:
    """sum_{i >= a} i**-s for integer s >= 2, vectorized in a."""
    a = np.asarray(a, dtype=float)
    return (-1.0) ** s * polygamma(s - 1, a) / math.factorial(s - 1)


@dataclass(frozen=True)
class AnalyticBump:
    """Analytic decreasing factor f in [1, 2] with -f'(i) >= i**2 / C.

    The generator is a series of Gaussian spikes centered at the integers,
    the i-th with height i**4 / i**2 and width i**-4, so the spike at i has
    negligible overlap with its neighbours for i >= 4 while its peak value
    grows like i**2.  f is 2 minus the normalized running integral of the
    series truncated at ``n_terms``; C is the normalizer.
    """

    n_terms: int = 10**6

    @cached_property
    def C(self) -> float:
        return SQRT_2PI * (ZETA2 - float(polygamma(1, self.n_terms + 1)))

    @cached_property
    def total_integral(self) -> float:
        # integral of g over (0, inf): the i = 1 spike loses its left tail
        inner = (1.0 + _ERF_HALF) + 2.0 * (
            ZETA2 - 1.0 - float(polygamma(1, self.n_terms + 1)))
        return SQRT_PI_2 * inner

    @cached_property
    def f_at_infinity(self) -> float:
        return 2.0 - self.total_integral / self.C

    def g(self, y):
        """Spike series; only terms with |y - i| <= 12 i**-4 contribute."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        total = np.zeros_like(y)
        for i in (1, 2, 3):
            if i > self.n_terms:
                break
            sig = float(i) ** -4
            total += i**-2.0 / sig * np.exp(-((y - i) ** 2) / (2.0 * sig**2))
        jr = np.rint(y).astype(np.int64)
        mask = (jr >= 4) & (jr <= self.n_terms)
        if np.any(mask):
            j = jr[mask].astype(float)
            sig = j**-4.0
            spike = j**-2.0 / sig * np.exp(-((y[mask] - j) ** 2)
                                           / (2.0 * sig**2))
            total[mask] += spike
        return total

    def running_integral(self, y):
        """integral of g over (0, y], exact to ~1e-15 via erf splits."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        total = np.zeros_like(y)
        for i in (1, 2, 3):
            if i > self.n_terms:
                break
            sig = float(i) ** -4
            left = float(erf(i / (math.sqrt(2.0) * sig)))
            total += i**-2.0 * (erf((y - i) / (math.sqrt(2.0) * sig)) + left)
        jr = np.rint(y).astype(np.int64)
        sig_r = np.maximum(jr, 1).astype(float) ** -4.0
        near = (jr >= 4) & (np.abs(y - jr) <= 13.0 * sig_r) & (jr <= self.n_terms)
        full_top = np.where(near, jr - 1, np.floor(y).astype(np.int64))
        full_top = np.minimum(full_top, self.n_terms)
        has_full = full_top >= 4
        if np.any(has_full):
            top = full_top[has_full].astype(float)
            total[has_full] += 2.0 * (float(polygamma(1, 4))
                                      - polygamma(1, top + 1.0))
        if np.any(near):
            j = jr[near].astype(float)
            sig = j**-4.0
            total[near] += j**-2.0 * (
                erf((y[near] - j) / (math.sqrt(2.0) * sig)) + 1.0)
        return SQRT_PI_2 * total

    def f(self, y):
        return 2.0 - self.running_integral(y) / self.C

    def fprime(self, y):
        return -self.g(y) / self.C


def bump_f(ab: AnalyticBump, y: float) -> float:
    """f(y) for a scalar argument."""
    return float(ab.f(y)[0])


class _ScaledReciprocalTail:
    """Derivatives of V defined by V^(n)(y) = f(y) * (d/dy)^n (1/y).

    Lower-order derivatives are the collapsed tail integrals

        (-1)**k V^(k)(y) = f_inf * k! y**-(k+1)
            + (n!/C) * sqrt(pi/2) * sum_i i**-2 E_i(y),

    with E_i the tail integral of (t-y)**m/m! t**-(n+1) against the
    complementary-error step of spike i (m = n-1-k).  Spikes fully below y
    vanish, spikes far above contribute an exact power-tail step, the one
    spike within its boundary layer gets a Gaussian-moment expansion, and
    the three wide low-index spikes are integrated numerically.  All parts
    are vectorized over y, so a million evaluations cost a few array ops.
    """

    def __init__(self, order: int, bump: Optional[AnalyticBump]):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.n = order
        self.bump = bump  # None means f == 1 (the degenerate instance)

    # h(t; y) = (t-y)**m t**-(n+1) / m!, H(t; y) = int_t^inf h
    def _H(self, t, y, m):
        n = self.n
        out = np.zeros_like(np.broadcast_arrays(t, y)[0], dtype=float)
        for j in range(m + 1):
            out = out + (math.comb(m, j) * (-1.0) ** (m - j) * y ** (m - j)
                         * t ** (j - n) / (n - j))
        return out / math.factorial(m)

    def _h(self, t, y, m):
        return (t - y) ** m * t ** (-self.n - 1) / math.factorial(m)

    def _hprime(self, t, y, m):
        n = self.n
        lead = m * (t - y) ** (m - 1) if m >= 1 else 0.0
        return (lead * t ** (-n - 1)
                - (n + 1) * (t - y) ** m * t ** (-n - 2)) / math.factorial(m)

    def _spike_quad(self, y: float, i: int, m: int) -> float:
        sig = float(i) ** -4
        hi = i + 13.0 * sig
        if y >= hi:
            return 0.0

        def integrand(t):
            return (self._h(t, y, m)
                    * erfc((t - i) / (math.sqrt(2.0) * sig)))

        val, _ = integrate.quad(integrand, y, hi, epsabs=1e-14, epsrel=1e-12,
                                limit=200)
        return val

    _BAND = 26  # spikes handled by the expansion before the pure power tail

    def _hsecond(self, t, y, m):
        n = self.n
        t2 = m * (m - 1) * (t - y) ** (m - 2) if m >= 2 else 0.0
        t1 = m * (t - y) ** (m - 1) if m >= 1 else 0.0
        return (t2 * t ** (-n - 1)
                - 2.0 * (n + 1) * t1 * t ** (-n - 2)
                + (n + 1) * (n + 2) * (t - y) ** m
                * t ** (-n - 3)) / math.factorial(m)

    def _band_term(self, y, i, m):
        """E_i by parts with a Gaussian-moment expansion, exact to O(sig**4).

        Uniform in the spike position: it saturates to 0 for spikes far
        below y and to the power-tail step 2(H(y) - H(i)) far above.
        """
        sig = i**-4.0
        a = (y - i) / sig
        ec = erfc(a / math.sqrt(2.0))
        gauss = np.exp(-0.5 * np.minimum(a * a, 1500.0))
        gauss = np.where(np.abs(a) > 40.0, 0.0, gauss)
        Hy = self._H(y, y, m)
        Hi = self._H(i, y, m)
        hi = self._h(i, y, m)
        hpi = self._hprime(i, y, m)
        hsi = self._hsecond(i, y, m)
        root = math.sqrt(2.0 / math.pi)
        return (ec * (Hy - Hi)
                + root * sig * hi * gauss
                + 0.5 * sig**2 * hpi * (root * a * gauss + ec)
                + root * sig**3 / 6.0 * hsi * (a * a + 2.0) * gauss)

    def _tail_sum(self, y: np.ndarray, k: int) -> np.ndarray:
        """sum_i i**-2 E_i(y) for the truncated spike family."""
        n, m = self.n, self.n - 1 - k
        n_terms = self.bump.n_terms
        out = np.zeros_like(y)

        # wide spikes i = 1..3: numeric, only where their layer reaches y
        for i in (1, 2, 3):
            if i > n_terms:
                break
            mask = y < i + 13.0 * float(i) ** -4
            if np.any(mask):
                vals = [self._spike_quad(float(yy), i, m) for yy in y[mask]]
                out[mask] += np.asarray(vals) * float(i) ** -2.0

        # a band of spikes around y via the expansion (handles the boundary
        # layer and the first fully-above spikes whose sig**2 step correction
        # still matters)
        jr = np.rint(y).astype(np.int64)
        base = np.maximum(jr - 1, 4)
        for off in range(self._BAND):
            idx = base + off
            mask = idx <= n_terms
            if not np.any(mask):
                break
            i = idx[mask].astype(float)
            out[mask] += i**-2.0 * self._band_term(y[mask], i, m)

        # spikes beyond the band: erfc == 2 exactly, a pure power-tail step
        i_start = base + self._BAND
        active = i_start <= n_terms
        if np.any(active):
            ys = y[active]
            st = i_start[active].astype(float)
            Hy = self._H(ys, ys, m)
            step = Hy * (_zeta_tail(2, st) - _zeta_tail(2, n_terms + 1.0))
            # sum_i i**-2 H(i; y) expanded over the power basis of H
            for j in range(m + 1):
                s = n + 2 - j
                coeff = (math.comb(m, j) * (-1.0) ** (m - j) * ys ** (m - j)
                         / ((n - j) * math.factorial(m)))
                step = step - coeff * (_zeta_tail(s, st)
                                       - _zeta_tail(s, n_terms + 1.0))
            out[active] += 2.0 * step
        return out

    def derivative(self, k: int, y) -> np.ndarray:
        """(d/dy)^k V at y (vectorized), for 0 <= k <= n + 1."""
        n = self.n
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if k > n + 1 or k < 0:
            raise ValueError(f"k must lie in 0..{n + 1}")
        sign = (-1.0) ** k
        base = math.factorial(k) * y ** (-k - 1.0)
        if self.bump is None:
            if k <= n:
                return sign * base
            # (d/dy)^(n+1) of 1/y
            return sign * math.factorial(n + 1) * y ** (-n - 2.0)
        if k == n:
            return sign * self.bump.f(y) * base
        if k == n + 1:
            fac_n = math.factorial(n) * y ** (-n - 1.0)
            fac_n1 = math.factorial(n + 1) * y ** (-n - 2.0)
            return sign * (self.bump.f(y) * fac_n1
                           + (-self.bump.fprime(y)) * fac_n)
        signed = (self.bump.f_at_infinity * base
                  + math.factorial(n) / self.bump.C * SQRT_PI_2
                  * self._tail_sum(y, k))
        return sign * signed

    def value(self, y) -> np.ndarray:
        return self.derivative(0, y)


@dataclass(frozen=True)
class Cex1Instance:
    """Analytic conjugate of finite smoothness order paired with a tail-heavy law.

    The law Z mixes a point mass at 1/2 with atoms at the integers weighted
    like i**-3, tuned so E[Z] = 1 holds exactly for the truncated sums.  The
    conjugate V has (d/dy)^n V = f(y) (d/dy)^n (1/y) with f the analytic
    bump factor, so all derivative expectations up to order n are finite
    while the (n+1)-st diverges like the harmonic series.
    """

    order: int = 2
    n_trunc: int = 10**6
    bump: Optional[AnalyticBump] = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.n_trunc < 10:
            raise ValueError("n_trunc too small")
        if self.bump is None:
            object.__setattr__(self, "bump", AnalyticBump(self.n_trunc))

    @cached_property
    def _atom_weights(self):
        i = np.arange(1, self.n_trunc + 1, dtype=float)
        q = i**-3.0
        s0 = float(np.sum(q))
        s1 = float(np.sum(i * q))
        eps = 0.5 / (s1 / s0 - 0.5)
        return i, eps * q / s0, s0, s1, eps

    @property
    def atoms(self) -> np.ndarray:
        return self._atom_weights[0]

    @property
    def atom_probs(self) -> np.ndarray:
        return self._atom_weights[1]

    @property
    def s0(self) -> float:
        return self._atom_weights[2]

    @property
    def s1(self) -> float:
        return self._atom_weights[3]

    @property
    def eps(self) -> float:
        return self._atom_weights[4]

    @property
    def base_prob(self) -> float:
        """P(Z = 1/2)."""
        return 1.0 - self.eps

    @cached_property
    def conjugate(self) -> _ScaledReciprocalTail:
        return _ScaledReciprocalTail(self.order, self.bump)

    @cached_property
    def degenerate_conjugate(self) -> _ScaledReciprocalTail:
        """The f == 1 reference whose derivatives sandwich the real ones."""
        return _ScaledReciprocalTail(self.order, None)

    def mean(self) -> float:
        return (0.5 * self.base_prob
                + float(np.dot(self.atoms, self.atom_probs)))

    def value_function(self, degenerate: bool = False) -> DnFunction:
        """The conjugate as a generic finite-order test function."""
        tail = self.degenerate_conjugate if degenerate else self.conjugate
        n = self.order
        v1 = float(tail.value(np.array([1.0]))[0])
        return DnFunction.from_nth_derivative(
            n, lambda t: float(tail.derivative(n, np.array([t]))[0]),
            anchor=(1.0, v1))

    def check_envelope(self, ys, k: int, tol: float = 1e-9):
        """(-1)^k V^(k) must lie between 1 and 2 times the f == 1 reference."""
        ys = np.asarray(ys, dtype=float)
        sign = (-1.0) ** k
        got = sign * self.conjugate.derivative(k, ys)
        ref = sign * self.degenerate_conjugate.derivative(k, ys)
        if np.any(got < ref * (1.0 - tol)) or np.any(got > 2.0 * ref * (1.0 + tol)):
            bad = int(np.argmax(~((got >= ref * (1 - tol))
                                  & (got <= 2 * ref * (1 + tol)))))
            raise EnvelopeViolation(
                f"order {k} at y={ys[bad]}: {got[bad]} outside "
                f"[{ref[bad]}, {2 * ref[bad]}]")


def cex1_verify_finite(inst: Cex1Instance, n_trunc: Optional[int] = None,
                       envelope_points: int = 0, seed: int = 0) -> dict:
    """Partial sums of (d/dy)^k v at y = 1 for k = 1..n.

    Each entry is E[V^(k)(Z) Z**k] truncated at ``n_trunc`` atoms (weights
    are those of the full instance, so successive truncations are partial
    sums of one fixed series).  With ``envelope_points`` > 0 the two-sided
    reference-envelope check runs first on random points in [0.1, 20].
    """
    n = inst.order
    n_trunc = inst.n_trunc if n_trunc is None else int(n_trunc)
    if n_trunc < 10**3:
        raise ValueError("truncation must be at least 1e3")
    n_trunc = min(n_trunc, inst.n_trunc)
    if envelope_points:
        rng = np.random.default_rng(seed)
        ys = rng.uniform(0.1, 20.0, size=envelope_points)
        for k in range(0, n + 1):
            inst.check_envelope(ys, k)
    i = inst.atoms[:n_trunc]
    p = inst.atom_probs[:n_trunc]
    out = {}
    for k in range(1, n + 1):
        vk = inst.conjugate.derivative(k, i)
        head = inst.base_prob * float(
            inst.conjugate.derivative(k, np.array([0.5]))[0]) * 0.5**k
        out[k] = head + float(np.dot(p, vk * i**k))
    return out


@dataclass(frozen=True)
class DivergenceReport:
    truncations: tuple[int, ...]
    partial_sums: tuple[float, ...]
    increments: tuple[float, ...]
    oracle_increments: tuple[float, ...]
    diverges: bool

    def to_dict(self):
        return {
            "truncations": list(self.truncations),
            "partial_sums": list(self.partial_sums),
            "increments": list(self.increments),
            "oracle_increments": list(self.oracle_increments),
            "diverges": self.diverges,
        }


def cex1_divergence(inst: Cex1Instance, truncations=(10**3, 10**4, 10**5, 10**6),
                    band: float = 0.25) -> DivergenceReport:
    """Partial sums of the order n+1 derivative expectation at y = 1.

    S_N = sum_{i <= N} p_i (-1)**(n+1) V^(n+1)(i) i**(n+1) must grow by a
    near-constant amount per decade: the spike heights make
    -f'(i) q_i ~ i**-1 / C, so the harmonic oracle predicts an increment
    eps n! / (s0 C) * sum 1/i over each decade.  ``diverges`` is true when
    every increment is positive and within ``band`` of the oracle.
    """
    truncations = tuple(int(t) for t in truncations)
    if any(b <= a for a, b in zip(truncations, truncations[1:])):
        raise ValueError("truncations must increase")
    if truncations[-1] > inst.n_trunc:
        raise ValueError("truncation exceeds the instance size")
    n = inst.order
    i = inst.atoms
    p = inst.atom_probs
    terms = p * ((-1.0) ** (n + 1)
                 * inst.conjugate.derivative(n + 1, i)) * i ** (n + 1)
    csum = np.cumsum(terms)
    sums = [float(csum[t - 1]) for t in truncations]
    harmonic = np.cumsum(1.0 / i)
    scale = inst.eps * math.factorial(n) / (inst.s0 * inst.bump.C)
    oracle = [
        scale * float(harmonic[b - 1] - harmonic[a - 1])
        for a, b in zip(truncations, truncations[1:])
    ]
    increments = [b - a for a, b in zip(sums, sums[1:])]
    diverges = all(
        inc > 0 and abs(inc - orc) <= band * orc
        for inc, orc in zip(increments, oracle)
    )
    return DivergenceReport(truncations, tuple(sums), tuple(increments),
                            tuple(oracle), diverges)


# -- counterexample 2: one-period market with a kink in u'' ---------------------


@dataclass(frozen=True)
class Cex2Instance:
    """One-period market tuned so the value function has no second derivative.

    States are omega_0..omega_N with stock payoffs 2, 1, 1/2, ..., 1/N and
    s0 = 1.  The weights make holding one share optimal at x = 1 exactly
    (the first-order condition cancels identically), while the non-constant
    relative risk aversion forces the optimal quadratic response
    coefficient away from the admissible limit 1.
    """

    utility: UtilitySpec
    n_states: int
    probs: tuple[float, ...]
    payoffs: tuple[float, ...]
    delta_hat: float

    def expectation(self, fn) -> float:
        return float(sum(p * fn(s) for p, s in zip(self.probs, self.payoffs)))

    def wealth(self, x: float, delta: float) -> np.ndarray:
        s = np.asarray(self.payoffs)
        return x + delta * (s - 1.0)

    def mean_payoff(self) -> float:
        return float(np.dot(self.probs, self.payoffs))

    def quadratic_form(self, delta: float) -> float:
        """Q(delta) = E[U''(S)(delta S + 1 - delta)**2]."""
        return self.expectation(
            lambda s: self.utility.second(s) * (delta * s + 1 - delta) ** 2)

    def to_finite_market(self):
        from .solver import FiniteMarket

        return FiniteMarket(self.probs, self.payoffs, 1.0)


def _min_second_derivative(utility: UtilitySpec, lo: float, hi: float) -> float:
    res = optimize.minimize_scalar(
        lambda s: utility.second(s), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12})
    end = min(utility.second(lo), utility.second(hi))
    return min(float(res.fun), end)


def cex2_build(utility: Optional[UtilitySpec] = None,
               n_states: int = 200) -> Cex2Instance:
    """Construct the market; requires non-constant relative risk aversion.

    The state weights for n >= 2 are

        p_n = 2**-(n+1) min(1, U'(2))
              / max(1, U'(1/n) - min U'' over [2/(3n), 2/3 + 2/(3n)]),

    p_0 cancels the first-order condition E[U'(S)(1-S)] = 0 identically
    and p_1 absorbs the remainder, so no renormalization is ever needed.
    """
    utility = footnote_utility(1) if utility is None else utility
    if n_states < 3:
        raise ValueError("need at least 3 states")
    # non-constancy probe on the reciprocal-integer grid
    base = utility.rra(0.5)
    for m in range(3, 40):
        if abs(utility.rra(1.0 / m) - base) > 1e-6:
            break
    else:
        raise ConstantRRA("relative risk aversion is constant on 1/m grid; "
                          "the construction needs it non-constant")
    u2 = utility.marginal(2.0)
    numer = min(1.0, u2)
    ns = np.arange(2, n_states + 1)
    p = np.zeros(n_states + 1)
    for n in ns:
        lo, hi = 2.0 / (3.0 * n), 2.0 / 3.0 + 2.0 / (3.0 * n)
        floor = _min_second_derivative(utility, lo, hi)
        p[n] = (2.0 ** -(n + 1.0) * numer
                / max(1.0, utility.marginal(1.0 / n) - floor))
    p[0] = sum(p[n] * utility.marginal(1.0 / n) * (1.0 - 1.0 / n)
               for n in ns) / u2
    p[1] = 1.0 - p[0] - float(np.sum(p[2:]))
    if p[0] > 0.25 or p[1] < 0.5 or np.any(p <= 0):
        raise ValueError("weight construction failed its own bounds")
    payoffs = (2.0,) + tuple(1.0 / n for n in range(1, n_states + 1))
    inst = Cex2Instance(utility, n_states, tuple(p), payoffs, math.nan)
    m1 = inst.expectation(lambda s: utility.second(s) * (s - 1.0))
    m2 = inst.expectation(lambda s: utility.second(s) * (s - 1.0) ** 2)
    delta_hat = -m1 / m2
    if not (-1.0 < delta_hat < 2.0) or abs(delta_hat - 1.0) < 1e-12:
        raise ValueError(f"quadratic response {delta_hat} escaped (-1, 2) or "
                         f"hit the admissible limit")
    return Cex2Instance(utility, n_states, tuple(p), payoffs, delta_hat)


def _inner_max(inst: Cex2Instance, x: float) -> tuple[float, float]:
    """max over positions of E[U(x + delta (S - 1))] on the admissible range."""
    lo, hi = -x * (1.0 - 1e-13), x

    def neg(delta):
        w = inst.wealth(x, delta)
        return -float(sum(p * inst.utility.value(wi)
                          for p, wi in zip(inst.probs, w)))

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    delta = float(res.x)
    if min(delta - lo, hi - delta) < 1e-6 * x:
        warnings.warn("inner maximization ended on the admissibility "
                      "boundary; increase the state count",
                      OptimumAtBoundary)
    return -float(res.fun), delta


@dataclass(frozen=True)
class GapReport:
    eps: tuple[float, ...]
    d_plus: tuple[float, ...]
    d_minus: tuple[float, ...]
    q_at_hat: float
    q_constrained: float
    gap: float
    delta_hat: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.q_at_hat + self.q_constrained)

    @property
    def margin(self) -> float:
        """Distance of the finest quotients from the gap midpoint."""
        return min(self.d_plus[-1] - self.midpoint,
                   self.midpoint - self.d_minus[-1])

    def to_dict(self):
        return {
            "eps": list(self.eps),
            "d_plus": list(self.d_plus),
            "d_minus": list(self.d_minus),
            "q_at_hat": self.q_at_hat,
            "q_constrained": self.q_constrained,
            "gap": self.gap,
            "margin": self.margin,
            "delta_hat": self.delta_hat,
        }


def cex2_gap(inst: Cex2Instance,
             eps_list=(1e-2, 1e-3, 1e-4)) -> GapReport:
    """One-sided second-difference quotients of the value function at 1.

    D+-(eps) = (2/eps**2) (u(1 +- eps) - u(1) -+ eps u'(1)) with
    u(x) = max_delta E[U(x + delta (S-1))].  At x = 1 the optimum is one
    share exactly, so u(1) = E[U(S)] and u'(1) = E[U'(S)].  The quotients
    straddle the strictly positive gap between Q(delta_hat) and the
    constrained supremum over delta >= 1 of Q.
    """
    eps_list = tuple(sorted((float(e) for e in eps_list), reverse=True))
    u1 = inst.expectation(inst.utility.value)
    up1 = inst.expectation(inst.utility.marginal)
    d_plus, d_minus = [], []
    for eps in eps_list:
        up, _ = _inner_max(inst, 1.0 + eps)
        dn, _ = _inner_max(inst, 1.0 - eps)
        d_plus.append(2.0 / eps**2 * (up - u1 - eps * up1))
        d_minus.append(2.0 / eps**2 * (dn - u1 + eps * up1))
    q_hat = inst.quadratic_form(inst.delta_hat)
    # Q is a concave quadratic with vertex delta_hat: on [1, inf) the
    # supremum sits at the closer endpoint
    q_constrained = inst.quadratic_form(max(1.0, inst.delta_hat))
    gap = q_hat - q_constrained
    return GapReport(eps_list, tuple(d_plus), tuple(d_minus),
                     q_hat, q_constrained, gap, inst.delta_hat)
