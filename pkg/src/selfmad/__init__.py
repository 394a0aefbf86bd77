"""Self-supervised morphing-attack detection: artifact synthesis, detector, metrics."""

__version__ = "0.1.0"
