"""Walk through the data-preparation stages on a synthetic video.

Builds a small moving-shape clip, picks frame pairs inside the SSIM band,
matches keypoints between them, and draws a match-biased grid mask.
Artifacts land in demos/out/.
"""

import os

import numpy as np

from mimicforge import masker, matcher, sampler
from mimicforge.imgcore import resize_bilinear, save_png
from mimicforge.synthdata import make_shape_video

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)

    video = make_shape_video(rng_seed=3, size=64, n_frames=6, video_id="demo")
    print(f"video: {len(video.frames)} frames of {video.frames[0].shape}")

    band = sampler.SelectionBand(0.3, 0.9)
    pairs = sampler.select_pairs(video.frames, band, max_pairs=3, rng_seed=0)
    print(f"pairs inside SSIM band [{band.t_low}, {band.t_high}]: "
          f"{[(p.origin.idx_a, p.origin.idx_b, round(p.ssim_score, 3)) for p in pairs]}")

    pair = pairs[0]
    big_src = resize_bilinear(pair.source, 128, 128)
    big_ref = resize_bilinear(pair.reference, 128, 128)
    feats_src = matcher.detect_and_describe(big_src)
    feats_ref = matcher.detect_and_describe(big_ref)
    matches = matcher.match_ratio_test(feats_src, feats_ref, 0.8)
    print(f"keypoints: {len(feats_src)} vs {len(feats_ref)}, matches: {len(matches)}")

    gm = masker.grid_mask(128, 128, matches, rng_seed=7)
    print(f"grid: {gm.n}x{gm.n}, masked cells: {int(gm.cell_flags.sum())}")

    save_png(os.path.join(OUT, "pair_source.png"), big_src)
    save_png(os.path.join(OUT, "pair_reference.png"), big_ref)
    save_png(os.path.join(OUT, "pair_mask.png"), gm.rendered)
    masked = masker.apply_mask(big_src, gm.rendered)
    save_png(os.path.join(OUT, "pair_source_masked.png"), masked)
    print(f"wrote pair_*.png to {OUT}")


if __name__ == "__main__":
    main()
