"""bcm-infer - latent opinion inference for the bounded-confidence model."""

__version__ = "1.0.0"
