"""Joint holographic and baseband beamforming for multi-user multi-stream downlink.

The package implements three alternating optimizers over the RHS amplitude
matrix ``X`` and the per-user baseband precoders ``W``:

* ``run_mm``  -- max-min rate via convex quadratic subproblems,
* ``run_sr``  -- penalized sum-rate via closed-form updates,
* ``run_smm`` -- penalized soft max-min via closed-form updates.
"""

from .algorithms import AlgorithmConfig, RunTrace, init_point, run_mm, run_smm, run_sr
from .channel import ChannelParams, ChannelSet, sample_channel_set
from .rhs import AmplitudeBounds, RhsGeometry, init_amplitude_bounds

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig",
    "AmplitudeBounds",
    "ChannelParams",
    "ChannelSet",
    "RhsGeometry",
    "RunTrace",
    "init_amplitude_bounds",
    "init_point",
    "run_mm",
    "run_smm",
    "run_sr",
    "sample_channel_set",
]
