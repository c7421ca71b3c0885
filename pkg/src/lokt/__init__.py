"""Label-only model inversion via GAN-based knowledge transfer.

Stage 1 distills the decision knowledge of a hard-label-only target
classifier into surrogate models by training a target-assisted
auxiliary-classifier GAN; stage 2 runs white-box latent-space attacks on
the surrogates and evaluates the reconstructions under an independent
evaluation model.
"""

__version__ = "0.1.0"
