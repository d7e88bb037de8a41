"""Shapelet-guided Gaussian augmentation for minority classes.

An augmented instance is the original plus elementwise Gaussian noise
scaled by a mask: 1 away from the best-matching span of a same-class
shapelet, the match distance on that span, and 0 on the padded tail. A
close match therefore keeps the class-defining span nearly untouched
while the rest of the series is jittered.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Config, Dataset, LabeledSeries, SeededRng, Shapelet, ShapeletPool, STREAM_AUGMENT
from .distance import MatchResult, ShapeletLengthError, psd


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise parameters; sigma is relative to each channel's
    standard deviation over the unpadded region."""

    mu: float = 0.0
    sigma_scale: float = 0.1

    def __post_init__(self):
        if self.sigma_scale < 0:
            raise ValueError("sigma_scale must be >= 0")


def build_mask(x: LabeledSeries, s: Shapelet, clamp: bool = False,
               znorm: bool = False) -> tuple[np.ndarray, MatchResult]:
    """Noise mask for one (instance, shapelet) pair.

    Entries are 1 everywhere except the matched span on the shapelet's
    channel (the match distance, optionally clamped to 1) and the padded
    tail of every channel (0, so padding stays structurally zero).
    """
    match = psd(x, s.channel, s.values, znorm=znorm)
    mask = np.ones_like(x.values)
    scale = min(match.psd, 1.0) if clamp else match.psd
    mask[s.channel, match.offset : match.offset + len(s)] = scale
    mask[:, x.original_length:] = 0.0
    return mask, match


def augment_instance(x: LabeledSeries, pool: ShapeletPool, spec: NoiseSpec,
                     rng: SeededRng, tag: int = 0, clamp: bool = False,
                     znorm: bool = False) -> LabeledSeries:
    """One augmented copy of ``x`` guided by a sampled same-class shapelet."""
    eligible = [s for s in pool.of_class(x.label) if len(s) <= x.original_length]
    if not eligible:
        raise ShapeletLengthError(
            f"no shapelet of class {x.label} fits instance {x.id}"
        )
    gen = rng.generator()
    s = eligible[int(gen.integers(len(eligible)))]
    mask, _ = build_mask(x, s, clamp=clamp, znorm=znorm)

    sigma = spec.sigma_scale * x.values[:, : x.original_length].std(axis=1)
    noise = spec.mu + sigma[:, None] * gen.standard_normal(x.values.shape)
    return LabeledSeries(
        id=f"{x.id}#aug{tag}",
        values=x.values + noise * mask,
        label=x.label,
        original_length=x.original_length,
        channel_names=x.channel_names,
    )


def balance_dataset(dataset: Dataset, pool: ShapeletPool, config: Config,
                    rng: SeededRng | None = None) -> Dataset:
    """Append ``r_sa`` augmented copies of every minority-class instance.

    The majority class (most frequent; first in label order on ties) is
    left untouched. Each copy draws from its own (instance, replica)
    stream, so serial and parallel runs produce the same dataset.
    """
    if rng is None:
        rng = SeededRng(config.seed).derive(STREAM_AUGMENT)
    if config.r_sa <= 0:
        return dataset
    counts = dataset.class_counts
    majority = max(dataset.labels, key=lambda lab: counts[lab])
    spec = NoiseSpec(sigma_scale=config.noise_sigma_scale)

    augmented = list(dataset.instances)
    for i, x in enumerate(dataset):
        if x.label == majority:
            continue
        for j in range(config.r_sa):
            augmented.append(augment_instance(
                x, pool, spec, rng.derive(i).derive(j), tag=j,
                clamp=config.clamp_mask, znorm=config.znorm,
            ))
    return Dataset(tuple(augmented))
