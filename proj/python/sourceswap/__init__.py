"""Python bindings for the sourceswap pair-construction toolkit.

Latent grids and images are float64 arrays shaped (channels, height, width);
masks are boolean arrays shaped (height, width).
"""

from ._sourceswap import (
    Error,
    boundary_region,
    ddim_invert,
    ddim_sample,
    derive_seed,
    frame_message,
    lpf_response,
    parse_frame,
    perturb,
    region_metric,
    size_filter,
    split_frequency,
    synthesize_pair,
)

__all__ = [
    "Error",
    "boundary_region",
    "ddim_invert",
    "ddim_sample",
    "derive_seed",
    "frame_message",
    "lpf_response",
    "parse_frame",
    "perturb",
    "region_metric",
    "size_filter",
    "split_frequency",
    "synthesize_pair",
]
