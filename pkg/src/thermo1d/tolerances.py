"""Numeric tolerances used across the package, collected in one record."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # interval maps
    partition: float = 1e-12
    self_map: float = 1e-12
    critical: float = 1e-12
    bisection_width: float = 1e-13
    newton_steps: int = 3
    newton_min_derivative: float = 1e-8
    preimage_residual: float = 1e-12
    preimage_merge: float = 1e-10
    branch_agreement: float = 1e-10
    monotone_samples: int = 257
    # backward trees
    node_budget: int = 2**24
    tree_verify: float = 1e-8
    base_nudge: float = 1e-9
    # pull-backs
    component_budget: int = 2**20
    surjective: float = 1e-8
    cover_samples: int = 64
    distortion_samples: int = 32
    freeness: float = 1e-9
    root_bisection: float = 1e-12
    # transfer operator
    eig_residual: float = 1e-9
    max_power_iterations: int = 100_000
    deflation_residual: float = 1e-6
    invariance_tv: float = 0.02
    # analysis
    decision_threshold: float = 0.02
    method_disagreement: float = 0.05
    kink_threshold: float = 0.1
    convexity_slack: float = 0.01


DEFAULT = Tolerances()
