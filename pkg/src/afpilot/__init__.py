"""Doppler-resilient OFDM link simulation with affine-frequency pilots and learned virtual pilots."""

from .config import ExperimentConfig, load_config
from .channel import FrameGeometry, Path, PathSet, sample_paths
from .framing import RatioConfig
from .transforms import ChirpParams

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "FrameGeometry",
    "ChirpParams",
    "Path",
    "PathSet",
    "RatioConfig",
    "load_config",
    "sample_paths",
]
