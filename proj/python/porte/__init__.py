"""Python surface of the porte toolkit.

Everything is implemented in the C++ core; this package re-exports the
bound operations.
"""

from porte._core import (  # noqa: F401
    CANONICAL_RATE_HZ,
    DamParams,
    PorteError,
    adaptive_fusion,
    commitment_loss,
    compute_placement,
    dam_forward,
    dual_projection,
    frame_rms,
    integrated_loudness,
    multi_scale_fusion,
    normalize_loudness,
    normalize_tokens,
    read_wav,
    resample,
    rope_apply,
    rotation_trick,
    run_selftest,
    rvq_quantize,
    sisdr,
    sisdr_improvement,
    sisdr_loss,
    speaker_loss,
    sure,
    total_loss,
    trim_leading_silence,
    wer,
    write_wav,
)

__all__ = [
    "CANONICAL_RATE_HZ",
    "DamParams",
    "PorteError",
    "adaptive_fusion",
    "commitment_loss",
    "compute_placement",
    "dam_forward",
    "dual_projection",
    "frame_rms",
    "integrated_loudness",
    "multi_scale_fusion",
    "normalize_loudness",
    "normalize_tokens",
    "read_wav",
    "resample",
    "rope_apply",
    "rotation_trick",
    "run_selftest",
    "rvq_quantize",
    "sisdr",
    "sisdr_improvement",
    "sisdr_loss",
    "speaker_loss",
    "sure",
    "total_loss",
    "trim_leading_silence",
    "wer",
    "write_wav",
]
