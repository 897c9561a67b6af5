"""Build a toy benchmark manifest, score some outputs, print the report.

Shows the full evaluation path: manifest validation, internal SSIM/PSNR
scoring on the inner-ID track, joining an external scores file for the
embedding metrics, and the markdown report.
"""

import json
import os
import tempfile

import numpy as np

from mimicforge import evalharness
from mimicforge.imgcore import save_png
from mimicforge.metrics import write_scores
from mimicforge.synthdata import make_shape_video


def main():
    root = tempfile.mkdtemp(prefix="mimicforge_demo_")
    img_dir = os.path.join(root, "img")
    out_dir = os.path.join(root, "outputs")
    os.makedirs(img_dir)
    os.makedirs(out_dir)

    video = make_shape_video(rng_seed=11, size=64, n_frames=2)
    gt, ref = video.frames
    mask = video.shape_masks[0]
    save_png(os.path.join(img_dir, "source.png"), gt)
    save_png(os.path.join(img_dir, "reference.png"), ref)
    save_png(os.path.join(img_dir, "gt.png"), gt)
    save_png(os.path.join(img_dir, "mask.png"), mask)

    records = [
        {
            "id": "inner_0", "task": "part_composition", "track": "inner_id",
            "source_path": "img/source.png", "mask_path": "img/mask.png",
            "reference_path": "img/reference.png", "ground_truth_path": "img/gt.png",
        },
        {
            "id": "inter_0", "task": "part_composition", "track": "inter_id",
            "source_path": "img/source.png", "mask_path": "img/mask.png",
            "reference_path": "img/reference.png",
            "reference_region_mask_path": "img/mask.png",
            "prompt_text": "a colored shape on a textured background",
        },
    ]
    manifest = os.path.join(root, "manifest.json")
    with open(manifest, "w") as f:
        json.dump(records, f, indent=2)

    # a perfect output for the inner record, a noisy one for the inter record
    save_png(os.path.join(out_dir, "inner_0.png"), gt)
    rng = np.random.default_rng(0)
    noisy = np.clip(gt + 0.1 * rng.standard_normal(gt.shape), 0, 1).astype(np.float32)
    save_png(os.path.join(out_dir, "inter_0.png"), noisy)

    # embedding metrics arrive from an external scorer as JSON lines
    scores = os.path.join(root, "scores.jsonl")
    write_scores(scores, [
        {"id": "inter_0", "metric": "clip_i", "value": 0.91},
        {"id": "inter_0", "metric": "dino_i", "value": 0.84},
    ])

    recs, issues = evalharness.validate_manifest(manifest)
    print(f"manifest: {len(recs)} valid records, {len(issues)} issues")
    reports = evalharness.evaluate(recs, out_dir, root, scores)
    print(evalharness.reports_to_markdown(reports))


if __name__ == "__main__":
    main()
