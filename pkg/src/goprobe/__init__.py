"""Linear probing of Go policy networks for board patterns and commentary terms."""

__version__ = "0.1.0"
