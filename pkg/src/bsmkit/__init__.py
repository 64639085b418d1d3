"""bsmkit: binaural signal matching toolkit.

Room simulation on rigid-sphere microphone arrays, BSM/MagLS binaural
filter design with head-rotation compensation, an auditory-model cue
extractor (ILD/IPD/IVS), signal-level and binaural loss metrics, and a
deterministic scene/dataset pipeline with a command-line front end.
"""

from ._backend import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
