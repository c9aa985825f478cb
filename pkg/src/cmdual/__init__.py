"""Completely monotone calculus, stochastic dominance, and utility duality."""

__all__ = [
    "cmcalc",
    "counterexamples",
    "dominance",
    "duality",
    "errors",
    "measures",
    "solver",
]
