"""bearlab: support-constrained offline RL, from tabular backups to BEAR-style actor-critic."""

__version__ = "0.1.0"
