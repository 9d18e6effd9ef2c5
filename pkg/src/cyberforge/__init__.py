"""Cybersecurity data pipeline: corpus curation, deduplication, agentic
conversation augmentation, benchmark construction, and model evaluation."""

__version__ = "0.1.0"
