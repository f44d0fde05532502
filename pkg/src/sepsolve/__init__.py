"""Satisfiability solving for quantifier-free separation logic over a
parametric base theory: a bounded-quantifier translation into set/function
constraints, a counterexample-guided instantiation loop, a brute-force
small-model oracle, and benchmark generators."""

__version__ = "0.1.0"
