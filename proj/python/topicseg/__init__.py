"""Topic-aware dialogue toolkit.

Thin package wrapper over the compiled extension: unsupervised topic-shift
segmentation, SIF segment embedding, autoencoder self-training clustering,
evaluation metrics, and the dual-attention matching network.
"""

from ._topicseg import *  # noqa: F401,F403
from ._topicseg import __doc__  # noqa: F401

__version__ = "0.1.0"
