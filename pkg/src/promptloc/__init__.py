"""Weakly supervised object localization from generative prompt embeddings."""
