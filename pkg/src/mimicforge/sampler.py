"""Training-pair construction: SSIM-banded frame-pair selection from video
sequences and pseudo pairs from segmented stills, mixed at a configurable
ratio (default 70% video / 30% still)."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .augment import AugmentConfig, apply_full_augmentation
from .metrics import ssim_downsampled

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelectionBand:
    """Keep pairs with t_low <= SSIM <= t_high: similar enough to share
    content, different enough to carry variation."""

    t_low: float = 0.3
    t_high: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.t_low < self.t_high <= 1.0:
            raise ValueError("need 0 <= t_low < t_high <= 1")

    def contains(self, score: float) -> bool:
        return self.t_low <= score <= self.t_high


@dataclass
class VideoOrigin:
    video_id: str
    idx_a: int
    idx_b: int


@dataclass
class PseudoOrigin:
    image_id: str


@dataclass
class FramePair:
    source: np.ndarray
    reference: np.ndarray
    ssim_score: float
    origin: VideoOrigin | PseudoOrigin
    object_mask: np.ndarray | None = None  # pseudo pairs carry their mask


@dataclass
class SegmentedStill:
    image: np.ndarray
    object_masks: list[np.ndarray] = field(default_factory=list)
    image_id: str = ""


def select_pairs(
    frames: list[np.ndarray],
    band: SelectionBand = SelectionBand(),
    max_pairs: int = 8,
    rng_seed: int = 0,
    video_id: str = "",
) -> list[FramePair]:
    """Sample candidate index pairs without replacement, keep those whose
    SSIM falls inside the band, stop at max_pairs or after 20*max_pairs
    attempts. Accepted pairs are sorted by candidate index before return so
    emission order is independent of scoring order."""
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    all_pairs = list(itertools.combinations(range(len(frames)), 2))
    rng = np.random.default_rng(rng_seed)
    rng.shuffle(all_pairs)
    cap = 20 * max_pairs
    accepted = []
    for attempt, (i, j) in enumerate(all_pairs):
        if attempt >= cap or len(accepted) >= max_pairs:
            break
        score = ssim_downsampled(frames[i], frames[j])
        if band.contains(score):
            accepted.append(
                FramePair(
                    source=frames[i],
                    reference=frames[j],
                    ssim_score=score,
                    origin=VideoOrigin(video_id=video_id, idx_a=i, idx_b=j),
                )
            )
    accepted.sort(key=lambda p: (p.origin.idx_a, p.origin.idx_b))
    return accepted[:max_pairs]


def make_pseudo_pair(
    still: SegmentedStill,
    rng_seed: int = 0,
    cfg: AugmentConfig | None = None,
) -> FramePair:
    """Pseudo frame: the still is the source, a strongly augmented copy is
    the reference; one object mask is chosen uniformly for masking."""
    if not still.object_masks:
        raise ValueError("still has no object masks")
    if cfg is None:
        cfg = AugmentConfig.strong()
    rng = np.random.default_rng(rng_seed)
    mask = still.object_masks[int(rng.integers(0, len(still.object_masks)))]
    reference = apply_full_augmentation(still.image, cfg, int(rng.integers(0, 2**31)))
    score = ssim_downsampled(still.image, reference)
    return FramePair(
        source=still.image,
        reference=reference,
        ssim_score=score,
        origin=PseudoOrigin(image_id=still.image_id),
        object_mask=mask,
    )


def mix_sources(
    video_pairs: Iterator[FramePair],
    pseudo_pairs: Iterator[FramePair],
    video_fraction: float = 0.7,
    rng_seed: int = 0,
) -> Iterator[FramePair]:
    """Interleave the two pair streams, drawing from the video stream with
    probability video_fraction; an exhausted stream falls back to the other."""
    if not 0.0 <= video_fraction <= 1.0:
        raise ValueError("video_fraction must be in [0,1]")
    rng = np.random.default_rng(rng_seed)
    video_it = iter(video_pairs)
    pseudo_it = iter(pseudo_pairs)
    video_done = pseudo_done = False
    while not (video_done and pseudo_done):
        take_video = rng.random() < video_fraction
        primary, fallback = (video_it, pseudo_it) if take_video else (pseudo_it, video_it)
        try:
            yield next(primary)
            continue
        except StopIteration:
            if take_video and not video_done:
                video_done = True
                logger.info("video pair stream exhausted; falling back to pseudo pairs")
            elif not take_video and not pseudo_done:
                pseudo_done = True
                logger.info("pseudo pair stream exhausted; falling back to video pairs")
        try:
            yield next(fallback)
        except StopIteration:
            if take_video:
                pseudo_done = True
            else:
                video_done = True
