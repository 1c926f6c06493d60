"""adapterlab: desk-scale adapter fine-tuning laboratory.

A numpy library plus CLI that trains small residual adapters inside two
frozen toy generative backbones (an autoregressive token transformer and a
UNet diffusion model), sizes them against parameter budgets, and scores the
generations with Frechet audio distances on a synthetic two-genre corpus.
"""

from .rng import RngState
from .tensor import ComputeGraph, Tensor, backward

__all__ = ["ComputeGraph", "RngState", "Tensor", "backward"]
__version__ = "0.1.0"
