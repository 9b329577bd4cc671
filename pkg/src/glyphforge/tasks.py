"""Desk-scale training tasks shared by the CLI and the acceptance suite:
a 2-D two-mode point task and an 8x8 glyph-bitmap task conditioned on the
target raster."""

from __future__ import annotations

import numpy as np

from .flow_core import (
    FlowSchedule,
    SamplerConfig,
    TrainConfig,
    VelocityModel,
    sample_ode,
    train_sft,
)
from .glyph_layout import GlyphFont
from .nft_rl import NftConfig, train_rl
from .reward_engine import toy_reward

TWOMODE_MODES = np.array([[-1.5, 0.0], [1.5, 0.0]])
BITMAP_CHARS = "ABCDEFGH"


def make_twomode_dataset(n: int = 256, seed: int = 0):
    """Points near one of two modes, conditioned on a scalar mode label."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 2, size=n)
    points = TWOMODE_MODES[picks] + 0.05 * rng.standard_normal((n, 2))
    labels = 2.0 * picks - 1.0
    return [(points[i], np.array([labels[i]])) for i in range(n)]


def twomode_model(seed: int = 0) -> VelocityModel:
    return VelocityModel([4, 32, 32, 2], seed=seed)


def train_twomode(steps: int = 2000, seed: int = 0, learning_rate: float = 0.05):
    model = twomode_model(seed)
    dataset = make_twomode_dataset(seed=seed)
    cfg = TrainConfig(steps=steps, batch_size=64, learning_rate=learning_rate,
                      seed=seed)
    return train_sft(model, dataset, FlowSchedule(), cfg)


def twomode_mode_hit_rate(model: VelocityModel, n_samples: int = 500,
                          steps: int = 50, seed: int = 100, radius: float = 0.5):
    hits = 0
    for i in range(n_samples):
        label = 1.0 if i % 2 else -1.0
        x = sample_ode(model, np.array([label]),
                       SamplerConfig(steps=steps, seed=seed + i))
        dist = np.min(np.linalg.norm(TWOMODE_MODES - x, axis=1))
        if dist <= radius:
            hits += 1
    return hits / n_samples


def glyph_rasters(chars: str = BITMAP_CHARS):
    """8x8 {0,1} rasters for a handful of bundled-font glyphs."""
    font = GlyphFont.bundled()
    out = []
    for ch in chars:
        rows = font.rows(ch)
        grid = np.array([[(r >> (7 - x)) & 1 for x in range(8)] for r in rows],
                        dtype=np.float64)
        out.append(grid.ravel())
    return out


def bitmap_model(seed: int = 0) -> VelocityModel:
    return VelocityModel([129, 128, 64], seed=seed)


def make_bitmap_dataset(seed: int = 0):
    rasters = glyph_rasters()
    return [(r, r) for r in rasters]


def train_bitmap(steps: int = 3000, seed: int = 0, learning_rate: float = 0.015):
    model = bitmap_model(seed)
    cfg = TrainConfig(steps=steps, batch_size=16, learning_rate=learning_rate,
                      seed=seed)
    return train_sft(model, make_bitmap_dataset(seed), FlowSchedule(), cfg)


def bitmap_pixel_mse(model: VelocityModel, steps: int = 30, seed: int = 500):
    """Mean per-pixel squared error of one sample per glyph vs its target."""
    errs = []
    for i, raster in enumerate(glyph_rasters()):
        x = sample_ode(model, raster, SamplerConfig(steps=steps, seed=seed + i))
        errs.append(np.mean((np.clip(x, 0.0, 1.0) - raster) ** 2))
    return float(np.mean(errs))


def bitmap_reward(candidate, cond):
    return toy_reward(np.clip(candidate, 0.0, 1.0), cond)


def train_bitmap_rl(model: VelocityModel, epochs: int = 50, k: int = 8,
                    beta: float = 0.1, seed: int = 0,
                    learning_rate: float = 0.02, sampler_steps: int = 20,
                    steps_per_group: int = 4):
    cfg = NftConfig(beta=beta, learning_rate=learning_rate,
                    steps_per_group=steps_per_group,
                    sampler=SamplerConfig(steps=sampler_steps, seed=seed))
    return train_rl(model, glyph_rasters(), bitmap_reward, cfg, epochs,
                    k=k, seed=seed)
