"""Multi-instance object discovery on RGB-D images.

Repeated local-feature patterns locate every instance of objects that occur
several times in a scene; the resulting proposals are classified and the
probabilities of same-object instances are fused jointly, with PR-curve
evaluation against a sliding-window baseline.
"""

from . import (
    baseline,
    classify,
    discovery,
    evaluation,
    fusion,
    geometry,
    pipeline,
    proposals,
    scenegen,
)

__all__ = [
    "baseline",
    "classify",
    "discovery",
    "evaluation",
    "fusion",
    "geometry",
    "pipeline",
    "proposals",
    "scenegen",
]

__version__ = "0.1.0"
