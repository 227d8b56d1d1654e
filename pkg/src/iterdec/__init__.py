"""Block-DCT image codec with a learned recurrent iterative-refinement decoder."""

__version__ = "0.1.0"
