"""Sensor time-series transformations and two-view generation.

All transforms take an explicit ``numpy.random.Generator`` so a run is
reproducible from its seed. Composition order is rotation, then scaling,
then time warping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Window


@dataclass
class AugmentConfig:
    rotation_enabled: bool = True
    scaling_enabled: bool = True
    warp_enabled: bool = True
    scaling_sigma: float = 0.1
    scaling_clip: tuple[float, float] = (0.7, 1.3)
    warp_knots: int = 4
    warp_sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scaling_clip
        if not 0 < lo <= 1 <= hi:
            raise ValueError(f"scaling clip must satisfy 0 < lo <= 1 <= hi, got {self.scaling_clip}")
        if self.scaling_sigma <= 0 or self.warp_sigma <= 0:
            raise ValueError("augmentation sigmas must be positive")
        if self.warp_knots < 2:
            raise ValueError("time warp needs at least two knots")


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about ``axis`` (normalised here) by ``angle`` radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def sample_rotation(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-12:
        axis = rng.normal(size=3)
    return rotation_matrix(axis, rng.uniform(0.0, 2 * np.pi))


def rotate(values: np.ndarray, rot: np.ndarray) -> np.ndarray:
    if values.shape[-1] != 3:
        raise ValueError(f"rotation needs 3 channels, got {values.shape[-1]}")
    return values @ rot.T


def random_rotation(w: Window, rng: np.random.Generator) -> Window:
    return Window(rotate(w.values, sample_rotation(rng)), w.label, w.subject_id)


def sample_scale(rng: np.random.Generator, sigma: float = 0.1, clip=(0.7, 1.3)) -> float:
    return float(np.clip(rng.normal(1.0, sigma), clip[0], clip[1]))


def random_scaling(w: Window, rng: np.random.Generator, sigma: float = 0.1, clip=(0.7, 1.3)) -> Window:
    return Window(w.values * sample_scale(rng, sigma, clip), w.label, w.subject_id)


def warp_path(length: int, displacements) -> np.ndarray:
    """Monotone map of ``[0, L-1]`` onto itself from knot speed displacements.

    Knots sit evenly over the series; the local speed at a knot is
    ``1 + displacement`` (floored at 0.1), interpolated linearly between
    knots, integrated, and rescaled so both endpoints stay fixed. Zero
    displacements give the identity.
    """
    d = np.asarray(displacements, dtype=np.float64)
    speed_knots = np.maximum(1.0 + d, 0.1)
    steps = np.interp(np.arange(length - 1) + 0.5, np.linspace(0, length - 1, len(d)), speed_knots)
    tau = np.concatenate([[0.0], np.cumsum(steps)])
    if length > 1:
        tau *= (length - 1) / tau[-1]
        tau[-1] = length - 1
    return tau


def apply_warp(values: np.ndarray, tau: np.ndarray) -> np.ndarray:
    grid = np.arange(values.shape[0], dtype=np.float64)
    return np.stack([np.interp(tau, grid, values[:, c]) for c in range(values.shape[1])], axis=1)


def time_warp(w: Window, rng: np.random.Generator, knots: int = 4, sigma: float = 0.2) -> Window:
    tau = warp_path(len(w.values), rng.normal(0.0, sigma, size=knots))
    return Window(apply_warp(w.values, tau), w.label, w.subject_id)


def augment_values(values: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    out = values
    if cfg.rotation_enabled:
        out = rotate(out, sample_rotation(rng))
    if cfg.scaling_enabled:
        out = out * sample_scale(rng, cfg.scaling_sigma, cfg.scaling_clip)
    if cfg.warp_enabled:
        out = apply_warp(out, warp_path(len(out), rng.normal(0.0, cfg.warp_sigma, size=cfg.warp_knots)))
    return out


def two_views(w: Window, cfg: AugmentConfig, rng: np.random.Generator) -> tuple[Window, Window]:
    a = augment_values(w.values, cfg, rng)
    b = augment_values(w.values, cfg, rng)
    return Window(a, w.label, w.subject_id), Window(b, w.label, w.subject_id)


def augment_batch(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Augment every window of an ``(N, T, 3)`` batch independently."""
    return np.stack([augment_values(v, cfg, rng) for v in x]) if len(x) else x.copy()


def two_view_batch(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    return augment_batch(x, cfg, rng), augment_batch(x, cfg, rng)
