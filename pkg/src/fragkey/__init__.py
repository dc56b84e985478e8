"""Fragment-synthesis key distribution over computational ghost imaging."""

__version__ = "0.1.0"
