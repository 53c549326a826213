"""Joint class probability over all instances of the same object.

The joint is the elementwise product of the instances' probability vectors,
renormalized to sum to one. Long lists and high class counts are accumulated
in log space to dodge underflow.
"""

from __future__ import annotations

import numpy as np

from .classify import ClassProbabilityVector

__all__ = ["DegenerateJointError", "joint_probability"]

# Switch to log-space accumulation beyond these sizes; products of softmax-like
# vectors underflow float64 quickly.
LOG_SPACE_MIN_CLASSES = 100
LOG_SPACE_MIN_VECTORS = 4

_ANNIHILATION_FLOOR = 1e-300


class DegenerateJointError(ValueError):
    """All probability mass annihilated (disjoint supports); caller falls back."""


def joint_probability(ps: list[ClassProbabilityVector]) -> ClassProbabilityVector:
    """Elementwise product of the vectors, divided by its sum.

    Exact zeros are preserved as zeros; only a fully-annihilated product (all
    classes zero) raises DegenerateJointError.
    """
    if not ps:
        raise ValueError("need at least one probability vector")
    c = ps[0].num_classes
    for p in ps[1:]:
        if p.num_classes != c:
            raise ValueError("all vectors must have the same class count")
    if len(ps) == 1:
        return ClassProbabilityVector(ps[0].probs.copy())

    stack = np.stack([p.probs for p in ps])
    if c >= LOG_SPACE_MIN_CLASSES or len(ps) >= LOG_SPACE_MIN_VECTORS:
        with np.errstate(divide="ignore"):
            logs = np.log(stack).sum(axis=0)  # -inf marks exact zeros
        peak = logs.max()
        if peak == -np.inf:
            raise DegenerateJointError("joint probability annihilated on all classes")
        weights = np.exp(logs - peak)
    else:
        weights = stack.prod(axis=0)
        if weights.sum() < _ANNIHILATION_FLOOR:
            raise DegenerateJointError("joint probability annihilated on all classes")
    return ClassProbabilityVector(weights / weights.sum())
