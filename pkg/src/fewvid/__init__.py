"""Few-shot action recognition in untrimmed videos from weak base labels."""

__version__ = "0.1.0"
