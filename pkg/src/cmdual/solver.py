"""Market models, value functions, optimizers, and their all-order derivatives.

The model enters only through the terminal law of the maximal deflator: the
dual value function is the expectation v(y) = E[V(y * Y)], its derivatives
are expectations of V^(n)(y Y) Y**n, the primal marginal is the inverse of
-v', and all higher primal derivatives follow from the chain-rule partition
sum applied to u'' = -1/v''(u').  A measure recovery routine inverts -v'
back to its representing measure by high-order scaled derivatives, and a
finite one-period market type supports enumerating the extreme points of
its supermartingale-deflator set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .dominance import Discrete, Distribution, Lognormal, dominates_inf, dominates_n
from .duality import UtilitySpec, invert_decreasing
from .errors import (
    DivergentMoment,
    DualInfinite,
    NoRoot,
    OrderExceeded,
    PolytopeEmpty,
)
from .partitions import faa_di_bruno_coefficient, multiplicity_partitions

__all__ = [
    "MarketModel",
    "FiniteMarket",
    "ValueFunctionPair",
    "StateTable",
    "sd_equivalence_audit",
    "EquivalenceReport",
]


def merged_law(values, probs) -> Discrete:
    """Law of a random variable on a finite space, merging equal values."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    agg: dict[float, float] = {}
    for v, p in zip(values, probs):
        key = float(round(v / 1e-12) * 1e-12) if v != 0 else 0.0
        agg[key] = agg.get(key, 0.0) + p
    xs = tuple(sorted(agg))
    ps = np.array([agg[x] for x in xs])
    return Discrete(xs, tuple(ps / ps.sum()))


@dataclass(frozen=True)
class FiniteMarket:
    """One-period market: states with probabilities, one stock, zero rate."""

    probs: tuple[float, ...]
    payoffs: tuple[float, ...]
    s0: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        s = np.asarray(self.payoffs, dtype=float)
        if p.shape != s.shape or p.ndim != 1 or p.size < 2:
            raise ValueError("need matching probabilities and payoffs, >= 2 states")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-10:
            raise ValueError("probabilities must be positive and sum to 1")
        if np.any(s < 0) or self.s0 <= 0:
            raise ValueError("payoffs must be nonnegative and s0 positive")

    def _arrays(self):
        return np.asarray(self.probs), np.asarray(self.payoffs)

    def deflator_constraints(self):
        """Rows (A, b) of the supermartingale-deflator polytope A y <= b.

        A terminal deflator value vector y >= 0 must satisfy
        E[(1 + H (S1 - S0)) Y] <= 1 for every admissible position H, which
        by linearity reduces to the extreme admissible positions (including
        the cash-only H = 0).  When one side of the position range is
        unbounded the corresponding constraint becomes E[(S1 - S0) Y] <= 0
        with the matching sign.
        """
        p, s = self._arrays()
        n = p.size
        rows = [-np.eye(n)]
        rhs = [np.zeros(n)]

        def add(weights, bound):
            rows.append(weights[None, :])
            rhs.append(np.array([bound]))

        add(p, 1.0)  # cash
        gap = s - self.s0
        smin, smax = float(np.min(s)), float(np.max(s))
        if smin < self.s0:
            h_max = 1.0 / (self.s0 - smin)
            add(p * (1.0 + h_max * gap), 1.0)
        else:
            add(p * gap, 0.0)
        if smax > self.s0:
            h_min = -1.0 / (smax - self.s0)
            add(p * (1.0 + h_min * gap), 1.0)
        else:
            add(p * -gap, 0.0)
        return np.vstack(rows), np.concatenate(rhs)

    def deflator_vertices(self, tol: float = 1e-9) -> list[np.ndarray]:
        """Extreme points of the deflator polytope by active-set enumeration."""
        A, b = self.deflator_constraints()
        n = A.shape[1]
        verts: list[np.ndarray] = []
        for idx in combinations(range(A.shape[0]), n):
            sub = A[list(idx)]
            norms = np.linalg.norm(sub, axis=1)
            if np.any(norms < 1e-14):
                continue
            # scale-invariant regularity test so tiny state probabilities
            # cannot mask a legitimate active set
            if abs(np.linalg.det(sub / norms[:, None])) < 1e-10:
                continue
            y = np.linalg.solve(sub, b[list(idx)])
            if np.all(A @ y <= b + tol):
                y = np.where(np.abs(y) < tol, 0.0, y)
                if not any(np.allclose(y, v, atol=1e-8) for v in verts):
                    verts.append(y)
        return verts

    def contains_deflator(self, y, tol: float = 1e-9) -> bool:
        A, b = self.deflator_constraints()
        return bool(np.all(A @ np.asarray(y, dtype=float) <= b + tol))

    def has_positive_deflator(self, tol: float = 1e-11) -> bool:
        """Maximize min_i y_i over the polytope; positivity means > 0."""
        A, b = self.deflator_constraints()
        n = A.shape[1]
        # variables (y, t): maximize t subject to A y <= b, y_i - t >= 0
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A, np.zeros((A.shape[0], 1))])
        extra = np.hstack([-np.eye(n), np.ones((n, 1))])
        A_ub = np.vstack([A_ub, extra])
        b_ub = np.concatenate([b, np.zeros(n)])
        res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub,
                               bounds=[(None, None)] * n + [(None, None)],
                               method="highs")
        return bool(res.success and -res.fun > tol)

    def to_dict(self):
        return {"probs": list(self.probs), "payoffs": list(self.payoffs),
                "s0": self.s0}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["probs"]), tuple(d["payoffs"]), d.get("s0", 1.0))


@dataclass(frozen=True)
class MarketModel:
    """Market specified by the terminal law of its maximal deflator."""

    deflator_law: Distribution
    finite_market: Optional[FiniteMarket] = None

    def __post_init__(self):
        law = self.deflator_law
        if isinstance(law, Discrete) and any(x <= 0 for x in law.xs):
            raise ValueError("deflator law must be supported in (0, inf)")

    @classmethod
    def degenerate(cls) -> "MarketModel":
        return cls(Discrete.point(1.0))

    @classmethod
    def lognormal(cls, kappa: float) -> "MarketModel":
        """Deflator law exp(N(-kappa/2, kappa)): unit-mean lognormal."""
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        return cls(Lognormal(-kappa / 2.0, kappa))

    @classmethod
    def from_dict(cls, d: dict) -> "MarketModel":
        if "kappa" in d:
            return cls.lognormal(d["kappa"])
        if "deflator" in d:
            return cls(Distribution.from_dict(d["deflator"]))
        return cls(Distribution.from_dict(d))

    def to_dict(self) -> dict:
        return {"deflator": self.deflator_law.to_dict()}


@dataclass(frozen=True)
class StateTable:
    """Per-outcome values of a terminal random variable.

    For a discrete deflator law the outcomes are its states; for a lognormal
    law they are the fixed quadrature nodes.  ``expectation`` integrates a
    vector of per-outcome values against the weights.
    """

    deflator: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def expectation(self, values=None) -> float:
        vals = self.values if values is None else values
        return float(np.dot(self.weights, vals))


class ValueFunctionPair:
    """Dual/primal value functions bound to a utility and a market model.

    All operations are pure; the only mutable state is a memo of Newton
    solutions for the primal marginal, keyed by exact argument, so
    concurrent reads return results identical to a sequential run.
    """

    def __init__(self, utility: UtilitySpec, model: MarketModel,
                 quad_nodes: int = 64, faa_order_cap: int = 8):
        self.utility = utility
        self.model = model
        self.faa_order_cap = faa_order_cap
        self._marginal_cache: dict[float, float] = {}
        law = model.deflator_law
        if isinstance(law, Discrete):
            self._outcomes = np.asarray(law.xs)
            self._weights = np.asarray(law.ps)
        else:
            # double the node count until the dual probe stabilizes; a
            # non-finite probe means the expectation diverges and more nodes
            # cannot help
            prev = None
            nodes = quad_nodes
            while True:
                t, w = np.polynomial.hermite.hermgauss(nodes)
                self._outcomes = np.exp(law.m + law.s * math.sqrt(2.0) * t)
                self._weights = w / math.sqrt(math.pi)
                probe = self._expect(
                    [self.utility.conjugate(y) for y in self._outcomes])
                if not math.isfinite(probe):
                    break
                if prev is not None and abs(probe - prev) <= 1e-10 * (
                        1.0 + abs(probe)):
                    break
                if nodes >= 1024:
                    break
                prev = probe
                nodes *= 2

    # -- dual side -----------------------------------------------------------

    def _expect(self, per_outcome) -> float:
        return float(np.dot(self._weights, per_outcome))

    def dual_value(self, y: float) -> float:
        """v(y) = E[V(y * Y_T)]."""
        if y <= 0:
            raise ValueError("y must be positive")
        vals = np.array([self.utility.conjugate(y * t) for t in self._outcomes])
        out = self._expect(vals)
        if not math.isfinite(out):
            raise DualInfinite(f"dual expectation diverges at y={y}")
        return out

    def dual_derivative(self, n: int, y: float) -> float:
        """v^(n)(y) = E[V^(n)(y Y_T) Y_T**n]; sign alternates with n."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if y <= 0:
            raise ValueError("y must be positive")
        if n > self.utility.max_order:
            raise OrderExceeded(f"conjugate offers order {self.utility.max_order}")
        vals = np.array([
            self.utility.conjugate_derivative(n, y * t) * t**n
            for t in self._outcomes
        ])
        out = self._expect(vals)
        if not math.isfinite(out):
            raise DivergentMoment(f"derivative expectation diverges at "
                                  f"n={n}, y={y}")
        return out

    def dual_optimizer_derivative(self, n: int, y: float) -> StateTable:
        """Derivative in y of the dual optimizer y*Y_T: Y_T at n=1, 0 beyond."""
        if n < 1:
            raise ValueError("n must be >= 1")
        vals = self._outcomes.copy() if n == 1 else np.zeros_like(self._outcomes)
        return StateTable(self._outcomes, self._weights, vals)

    # -- primal side ----------------------------------------------------------

    def primal_marginal(self, x: float) -> float:
        """y = u'(x), the root of -v'(y) = x."""
        if x <= 0:
            raise ValueError("x must be positive")
        hit = self._marginal_cache.get(x)
        if hit is not None:
            return hit
        try:
            y = invert_decreasing(
                lambda t: -self.dual_derivative(1, t),
                lambda t: -self.dual_derivative(2, t),
                x,
            )
        except NoRoot:
            raise NoRoot(f"x={x} outside the range of -v'") from None
        if len(self._marginal_cache) < 4096:
            self._marginal_cache[x] = y
        return y

    def primal_value(self, x: float) -> float:
        """u(x) = v(y) + x*y at y = u'(x)."""
        y = self.primal_marginal(x)
        return self.dual_value(y) + x * y

    def _reciprocal_derivatives(self, y: float, m: int) -> list[float]:
        """Derivatives 0..m of f = -1/v'' at y via the quotient recursion."""
        h = [-self.dual_derivative(j + 2, y) for j in range(m + 1)]
        g = [1.0 / h[0]]
        for order in range(1, m + 1):
            acc = 0.0
            for j in range(1, order + 1):
                acc += math.comb(order, j) * h[j] * g[order - j]
            g.append(-acc / h[0])
        return g

    def primal_derivatives(self, n: int, x: float) -> list[float]:
        """[u'(x), u''(x), ..., u^(n)(x)] by the partition-sum chain rule.

        Starting from u''(x) = f(u'(x)) with f = -1/v'', each next order is

            u^(r)(x) = sum over (k_1..k_{r-2}), sum i*k_i = r-2, of
                (r-2)!/prod(k_j! (j!)**k_j) f^(sum k)(u') prod u^(j+1)**k_j.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > self.faa_order_cap + 1:
            raise OrderExceeded(
                f"partition sums are capped at order {self.faa_order_cap}; "
                f"raise faa_order_cap to go higher")
        y = self.primal_marginal(x)
        derivs = [y]
        if n == 1:
            return derivs
        f = self._reciprocal_derivatives(y, max(0, n - 2))
        for r in range(2, n + 1):
            m = r - 2
            total = 0.0
            for ks in multiplicity_partitions(m):
                coeff = faa_di_bruno_coefficient(m, ks)
                order = sum(ks)
                prod = 1.0
                for j, k in enumerate(ks, start=1):
                    if k:
                        prod *= derivs[j] ** k  # derivs[j] = u^(j+1)
                total += coeff * f[order] * prod
            derivs.append(total)
        return derivs

    def primal_derivative(self, n: int, x: float) -> float:
        """u^(n)(x) for n >= 2 (use primal_marginal for n = 1)."""
        if n < 2:
            raise ValueError("n must be >= 2")
        if n > self.faa_order_cap:
            raise OrderExceeded(
                f"orders are capped at {self.faa_order_cap} by default; "
                f"raise faa_order_cap to go higher")
        return self.primal_derivatives(n, x)[-1]

    # -- optimizers ------------------------------------------------------------

    def optimizer_terminal(self, x: float) -> StateTable:
        """Optimal terminal wealth per outcome: X_T = -V'(u'(x) * Y_T)."""
        y = self.primal_marginal(x)
        vals = np.array([
            -self.utility.conjugate_derivative(1, y * t) for t in self._outcomes
        ])
        return StateTable(self._outcomes, self._weights, vals)

    def optimizer_derivative(self, n: int, x: float) -> StateTable:
        """n-th derivative in x of the optimal terminal wealth, per outcome.

        The chain rule applied outcome-wise to -V'(u'(x) * Y_T) gives

            sum over (k_1..k_n), sum i*k_i = n, of
            n!/prod(k_j! (j!)**k_j) * (-V^(1+sum k)(u'(x) Y)) *
            prod_j (u^(j+1)(x) Y)**k_j.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > self.faa_order_cap:
            raise OrderExceeded(
                f"orders are capped at {self.faa_order_cap} by default; "
                f"raise faa_order_cap to go higher")
        if n + 1 > self.utility.max_order:
            raise OrderExceeded("need V up to order n+1")
        uderivs = self.primal_derivatives(n + 1, x)
        y = uderivs[0]
        out = np.zeros_like(self._outcomes)
        for ks in multiplicity_partitions(n):
            coeff = faa_di_bruno_coefficient(n, ks)
            order = sum(ks)
            vk = np.array([
                -self.utility.conjugate_derivative(1 + order, y * t)
                for t in self._outcomes
            ])
            prod = np.ones_like(out)
            for j, k in enumerate(ks, start=1):
                if k:
                    prod = prod * (uderivs[j] * self._outcomes) ** k
            out = out + coeff * vk * prod
        return StateTable(self._outcomes, self._weights, out)

    # -- measure recovery -------------------------------------------------------

    def widder_invert(self, z: float, n: int) -> float:
        """n-th scaled-derivative approximant of the measure behind -v'.

        With -v'(y) the weighted mass of a measure nu, the classical
        inversion gives

            nu((0, z]) ~ int_(0,z] (-1)**(n+1) v^(n+1)(n/r) (n/r)**(n+1)/n! dr,

        converging to the half-open/open average at atoms.  The 1/n!
        normalization is part of the classical formula; the integrand is
        assembled in log space so large n cannot overflow.
        """
        if z < 0:
            raise ValueError("z must be >= 0")
        if n < 2:
            raise ValueError("n must be >= 2")
        if z == 0.0:
            return 0.0

        log_norm = gammaln(n + 1)

        def integrand(r):
            if r <= 0.0:
                return 0.0
            val = (-1.0) ** (n + 1) * self.dual_derivative(n + 1, n / r)
            if val <= 0.0:
                return 0.0
            return math.exp(math.log(val) + (n + 1) * (math.log(n) - math.log(r))
                            - log_norm)

        out, _ = integrate.quad(integrand, 0.0, z, epsabs=1e-11, epsrel=1e-11,
                                limit=400)
        return out


# -- finite-market equivalence audit ---------------------------------------------


@dataclass(frozen=True)
class CandidateVerdicts:
    vertex: tuple[float, ...]
    laplace_order: bool      # dominance of infinite order against every vertex
    conditional: bool        # Y_hat >= E[Y | sigma(Y_hat)] against every vertex
    second_order: bool       # dominance of order 2 against every vertex

    @property
    def agree(self) -> bool:
        return self.laplace_order == self.conditional == self.second_order

    @property
    def maximal(self) -> bool:
        return self.laplace_order and self.conditional and self.second_order


@dataclass(frozen=True)
class EquivalenceReport:
    candidates: tuple[CandidateVerdicts, ...]
    all_agree: bool
    maximal_vertex: Optional[tuple[float, ...]]

    @property
    def maximal_exists(self) -> bool:
        """Some vertex passes the conditional criterion.

        The conditional criterion is linear in the competing deflator, so its
        vertex check is equivalent to the full-polytope check; a passing
        vertex is therefore maximal against the entire deflator set, and by
        the equivalence of the three criteria plus transitivity of the
        dominance orders, all three vertex verdicts must then agree for
        every candidate.  Without such a vertex the Laplace and second-order
        checks restricted to vertices are genuinely weaker and the verdicts
        may differ.
        """
        return any(c.conditional for c in self.candidates)

    def to_dict(self):
        return {
            "all_agree": self.all_agree,
            "maximal_exists": self.maximal_exists,
            "maximal_vertex": list(self.maximal_vertex)
            if self.maximal_vertex else None,
            "candidates": [
                {
                    "vertex": list(c.vertex),
                    "laplace_order": c.laplace_order,
                    "conditional": c.conditional,
                    "second_order": c.second_order,
                }
                for c in self.candidates
            ],
        }


def _conditional_dominates(probs, y_hat, y_other, tol=1e-9) -> bool:
    """Check y_hat >= E[y_other | sigma(y_hat)] by grouping equal y_hat values."""
    groups: dict[float, list[int]] = {}
    for i, v in enumerate(y_hat):
        key = float(round(v / 1e-9) * 1e-9)
        groups.setdefault(key, []).append(i)
    for key, idx in groups.items():
        pw = sum(probs[i] for i in idx)
        cond_mean = sum(probs[i] * y_other[i] for i in idx) / pw
        if cond_mean > key + tol * (1.0 + abs(key)):
            return False
    return True


def sd_equivalence_audit(fm: FiniteMarket, candidate=None) -> EquivalenceReport:
    """Test the three maximality conditions against every deflator vertex.

    For each candidate terminal deflator (every polytope vertex, or just the
    supplied one) the audit decides whether it dominates every vertex in the
    infinite-order sense, conditionally in the sense
    Y_hat >= E[Y | sigma(Y_hat)], and in the second-order sense, and reports
    whether the three verdicts coincide candidate by candidate.
    """
    if len(fm.probs) > 10:
        raise ValueError("audit is intended for <= 10 states")
    if not fm.has_positive_deflator():
        raise PolytopeEmpty("no strictly positive deflator exists")
    vertices = fm.deflator_vertices()
    probs = np.asarray(fm.probs)
    candidates = [np.asarray(candidate, dtype=float)] if candidate is not None \
        else vertices
    results = []
    for cand in candidates:
        law_hat = merged_law(cand, probs)
        c_inf = c_cond = c_two = True
        for other in vertices:
            law_other = merged_law(other, probs)
            if c_inf and not dominates_inf(law_hat, law_other):
                c_inf = False
            if c_cond and not _conditional_dominates(probs, cand, other):
                c_cond = False
            if c_two and not dominates_n(law_hat, law_other, 2):
                c_two = False
        results.append(CandidateVerdicts(tuple(cand), c_inf, c_cond, c_two))
    all_agree = all(r.agree for r in results)
    maximal = next((r.vertex for r in results if r.maximal), None)
    return EquivalenceReport(tuple(results), all_agree, maximal)
