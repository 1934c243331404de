"""Entailment checker for separation logic with inductive definitions.

Proves entailments under the weak (any-fixpoint, possibly-infinite-heap)
semantics by a model-preserving first-order encoding discharged to an SMT
solver, and refutes them by synthesizing certified symbolic counter-models
over linear integer arithmetic.
"""

__version__ = "0.1.0"
