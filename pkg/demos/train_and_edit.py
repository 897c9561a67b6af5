"""Train the miniature dual U-Net on synthetic clips, then edit an image.

A few hundred steps on moving-shape videos is enough to see the loss drop
and the sampler produce a plausible fill. Expect a couple of minutes on a
laptop CPU; artifacts land in demos/out/.
"""

import os
import time

import numpy as np

from mimicforge.diffcore import TrainConfig, Trainer, TrainingSample, cfg_sample
from mimicforge.imgcore import save_png
from mimicforge.masker import segmentation_mask
from mimicforge.synthdata import make_shape_video

OUT = os.path.join(os.path.dirname(__file__), "out")


def video_samples(seed):
    video = make_shape_video(seed, size=32, n_frames=4, video_id=str(seed))
    samples = []
    for j, src in enumerate(video.frames):
        for i, ref in enumerate(video.frames):
            if i != j:
                mask = segmentation_mask(video.shape_masks[j], dilate_px=1)
                samples.append(TrainingSample(source=src, reference=ref, mask=mask))
    return samples


def main():
    os.makedirs(OUT, exist_ok=True)

    pool = [video_samples(seed) for seed in range(40)]
    cfg = TrainConfig(lr=2e-3, batch=4, widths=(16, 32, 64), seed=0)
    trainer = Trainer(cfg)

    steps = 400
    t0 = time.time()
    for step in range(steps):
        vids = trainer.rng.integers(0, len(pool), size=cfg.batch)
        batch = [pool[v][int(trainer.rng.integers(0, len(pool[v])))] for v in vids]
        loss = trainer.train_step(batch)
        if (step + 1) % 50 == 0:
            print(f"step {step + 1:4d}  loss {loss:.4f}  ({time.time() - t0:.0f}s)")

    held_out = video_samples(999)[0]
    trainer.model.eval()
    edited = cfg_sample(held_out.source, held_out.mask, held_out.reference,
                        None, 5.0, 20, 0, trainer.model, trainer.schedule)
    mse = float(np.mean((edited - held_out.source) ** 2))
    print(f"held-out edit MSE vs ground truth: {mse:.4f}")

    save_png(os.path.join(OUT, "edit_source.png"), held_out.source)
    save_png(os.path.join(OUT, "edit_reference.png"), held_out.reference)
    save_png(os.path.join(OUT, "edit_mask.png"), held_out.mask)
    save_png(os.path.join(OUT, "edit_result.png"), edited)
    print(f"wrote edit_*.png to {OUT}")


if __name__ == "__main__":
    main()
