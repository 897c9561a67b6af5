"""mimicforge: desk-scale reference-guided image editing.

Pipeline: video/still frame pairs -> SSIM-banded selection -> strong
augmentation -> feature-match-biased grid masking -> dual-U-Net latent
diffusion with reference key/value injection -> benchmark evaluation.
"""

__version__ = "0.1.0"
