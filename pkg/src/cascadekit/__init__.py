"""cascadekit: reconstruct image-repost cascades and measure their virality."""

__version__ = "0.1.0"
