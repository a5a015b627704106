"""Neural Lyapunov functions with certified region-of-attraction estimates."""

__version__ = "0.1.0"
