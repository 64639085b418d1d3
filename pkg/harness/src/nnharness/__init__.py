"""Training/inference harness for the binaural correction network."""

__version__ = "0.1.0"
