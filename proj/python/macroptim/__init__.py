"""Manifold-constrained matrix optimizers: kernels, step rules, diagnostics.

The heavy lifting lives in the compiled `_core` extension; this package
re-exports its public surface.
"""

from ._core import (
    ConstrainedOptimizer,
    NumericalError,
    activation_rms,
    bisect_lambda,
    feasibility_gap,
    leading_triplet,
    lr_at,
    manifold_norm,
    msign,
    norm,
    radius_for,
    relative_lr,
    retract,
    rotation_angle_fro,
    rotation_angles_spec,
    run_toml,
    stable_rank,
    svd,
    tangent_project,
    tangent_violation,
)

__all__ = [
    "ConstrainedOptimizer",
    "NumericalError",
    "activation_rms",
    "bisect_lambda",
    "feasibility_gap",
    "leading_triplet",
    "lr_at",
    "manifold_norm",
    "msign",
    "norm",
    "radius_for",
    "relative_lr",
    "retract",
    "rotation_angle_fro",
    "rotation_angles_spec",
    "run_toml",
    "stable_rank",
    "svd",
    "tangent_project",
    "tangent_violation",
]
