"""foleysketch: sketch-controlled foley synthesis at desk scale.

A conditional denoising-diffusion generator over toy mel-spectrograms,
steered by a text tag, mask-modulated visual features and a hand-drawn
loudness curve, with dual classifier-free guidance and audible output
via Griffin-Lim.
"""

__version__ = "0.1.0"

from .config import ModelConfig  # noqa: F401
