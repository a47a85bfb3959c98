"""Desk-scale lab for knowledge-injected captions, dual-encoder contrastive
training, and zero-shot evaluation over a synthetic disease/phenotype world."""

__version__ = "0.1.0"
