"""Energy-frugal CNN training engine.

Three cost cuts compose: dropping mini-batches at random, skipping residual
blocks through learned gates (forward and backward), and replacing weight
gradients with signs predicted from low-bit operands. An analytic ledger
prices every multiply, add, and data move at its bit width, and a
Monte-Carlo verifier checks the sign-prediction failure bound.
"""

from . import data, energy, harness, kernels, model, optim, psg_verify, quant, slu

__version__ = "0.1.0"
__all__ = ["data", "energy", "harness", "kernels", "model", "optim",
           "psg_verify", "quant", "slu", "__version__"]
