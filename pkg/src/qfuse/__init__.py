"""Connection-search and multi-stream temporal fusion toolkit."""

__version__ = "0.1.0"
