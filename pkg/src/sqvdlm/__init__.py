"""Dynamic linear model treating replicated search-volume downloads as noisy views of one latent process."""

__version__ = "0.1.0"
