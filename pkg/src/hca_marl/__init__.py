"""Self-play multi-agent PPO with hierarchical critic fusion."""

__version__ = "0.1.0"
