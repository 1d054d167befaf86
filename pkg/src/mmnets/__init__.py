"""Zero-pair cross-modal image translation with latent-space alignment."""

__version__ = "0.1.0"
